//! Loss families, synthetic data generation, and r-weighted partitioning.
//!
//! The global objective is the empirical risk `f(x) = (1/N) sum_j l(x, xi_j)`
//! split across agents as `f = sum_i r_i f_i` with `f_i` the average loss
//! over agent i's block of `m_i ~ r_i N` points. After largest-remainder
//! rounding the engine treats the realized fractions `m_i / N` as the
//! canonical `r`, which makes the decomposition identity exact.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm_sq, Mat};
use crate::rng::{domain, keyed_rng};
use crate::topology::StochasticVector;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("dataset needs at least one point and one feature")]
    EmptyDataset,
    #[error("gradient over an empty subset is undefined")]
    EmptySubset,
    #[error("logistic labels must be 0 or 1, found {0}")]
    BadLabel(f64),
    #[error("partition needs N >= n with every block nonempty; block {agent} is empty")]
    EmptyBlock { agent: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("batch size {batch} exceeds block size {block}")]
    BatchTooLarge { batch: usize, block: usize },
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature/label pairs. Features are row `i` of an `N x d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Mat,
    pub labels: Vec<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn n_points(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// CSV with header `f0,...,f{d-1},label`, floats at 17 significant
    /// digits so a round trip is bit-faithful.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        for j in 0..d {
            out.push_str(&format!("f{j},"));
        }
        out.push_str("label\n");
        for i in 0..self.n_points() {
            for j in 0..d {
                out.push_str(&format!("{:.16e},", self.features.get(i, j)));
            }
            out.push_str(&format!("{:.16e}\n", self.labels[i]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ObjectiveError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(ObjectiveError::EmptyDataset)?;
        let cols = header.split(',').count();
        if cols < 2 {
            return Err(ObjectiveError::CsvParse { line: 1, msg: "need features and a label".into() });
        }
        let d = cols - 1;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != cols {
                return Err(ObjectiveError::CsvParse {
                    line: idx + 1,
                    msg: format!("expected {cols} fields, got {}", parts.len()),
                });
            }
            let mut row = Vec::with_capacity(d);
            for p in &parts[..d] {
                row.push(p.parse::<f64>().map_err(|e| ObjectiveError::CsvParse {
                    line: idx + 1,
                    msg: e.to_string(),
                })?);
            }
            labels.push(parts[d].parse::<f64>().map_err(|e| ObjectiveError::CsvParse {
                line: idx + 1,
                msg: e.to_string(),
            })?);
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(ObjectiveError::EmptyDataset);
        }
        Ok(Dataset { features: Mat::from_rows(rows), labels, seed: 0 })
    }
}

/// Regression data with uniform features: entries on `(0, scale)` or, when
/// `centered`, on `(-scale, scale)` (zero-mean columns give a much better
/// conditioned Gram matrix). Label noise uniform on `(0, noise_hi)`, true
/// coefficients uniform on (-1, 1) and returned alongside the data.
pub fn gen_linreg_general(
    n_points: usize,
    dim: usize,
    noise_hi: f64,
    centered: bool,
    scale: f64,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    assert!(n_points >= 1 && dim >= 1 && scale > 0.0);
    let mut rng = keyed_rng(&[seed, domain::DATA]);
    let coeffs: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut features = Mat::zeros(n_points, dim);
    let mut labels = Vec::with_capacity(n_points);
    let lo = if centered { -scale } else { 0.0 };
    for i in 0..n_points {
        for j in 0..dim {
            features.set(i, j, rng.gen_range(lo..scale));
        }
        let noise = if noise_hi > 0.0 { rng.gen_range(0.0..noise_hi) } else { 0.0 };
        labels.push(dot(features.row(i), &coeffs) + noise);
    }
    (Dataset { features, labels, seed }, coeffs)
}

pub fn gen_linreg_with_noise(
    n_points: usize,
    dim: usize,
    noise_hi: f64,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    gen_linreg_general(n_points, dim, noise_hi, false, 1.0, seed)
}

/// Standard configuration: features uniform on (0, 1), label noise uniform
/// on (0, 0.1).
pub fn gen_linreg(n_points: usize, dim: usize, seed: u64) -> (Dataset, Vec<f64>) {
    gen_linreg_with_noise(n_points, dim, 0.1, seed)
}

/// Binary classification data for regularized logistic regression: feature
/// entries uniform on (-scale, scale), labels `1{u . w > 0}` flipped with
/// probability `label_flip`, `w` a random unit vector (also returned).
pub fn gen_logistic(
    n_points: usize,
    dim: usize,
    scale: f64,
    label_flip: f64,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    assert!(n_points >= 1 && dim >= 1 && scale > 0.0);
    let mut rng = keyed_rng(&[seed, domain::DATA]);
    let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = norm_sq(&w).sqrt();
    for v in &mut w {
        *v /= norm;
    }
    let mut features = Mat::zeros(n_points, dim);
    let mut labels = Vec::with_capacity(n_points);
    for i in 0..n_points {
        for j in 0..dim {
            features.set(i, j, rng.gen_range(-scale..scale));
        }
        let mut y = if dot(features.row(i), &w) > 0.0 { 1.0 } else { 0.0 };
        if rng.gen::<f64>() < label_flip {
            y = 1.0 - y;
        }
        labels.push(y);
    }
    (Dataset { features, labels, seed }, w)
}

/// Quadratic toy data: noiseless linear-regression data whose feature
/// columns are rescaled so the Gram matrix condition number is driven by
/// `condition` (column j scaled between 1 and sqrt(condition)).
pub fn gen_quadratic_toy(
    n_points: usize,
    dim: usize,
    condition: f64,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    assert!(condition >= 1.0);
    let (mut data, coeffs) = gen_linreg_with_noise(n_points, dim, 0.0, seed);
    let d = data.dim();
    for j in 0..d {
        let t = if d > 1 { j as f64 / (d - 1) as f64 } else { 0.0 };
        let scale = condition.sqrt().powf(t);
        for i in 0..data.n_points() {
            let v = data.features.get(i, j) * scale;
            data.features.set(i, j, v);
        }
    }
    // Labels keep v = u . coeffs under the new features.
    for i in 0..data.n_points() {
        data.labels[i] = dot(data.features.row(i), &coeffs);
    }
    (data, coeffs)
}

/// Loss family. The quadratic toy shares the squared-error form of linear
/// regression; its conditioning lives in the generated data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    LinearRegression,
    LogisticRegressionL2 { reg: f64 },
    QuadraticToy,
}

impl LossModel {
    /// Value and gradient of the mean loss over `subset` (all points when
    /// `None`).
    pub fn value_grad(
        &self,
        x: &[f64],
        data: &Dataset,
        subset: Option<&[usize]>,
    ) -> Result<(f64, Vec<f64>), ObjectiveError> {
        if x.len() != data.dim() {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "x has dimension {}, data has {}",
                x.len(),
                data.dim()
            )));
        }
        match self {
            LossModel::LinearRegression | LossModel::QuadraticToy => {
                linreg_value_grad(x, data, subset)
            }
            LossModel::LogisticRegressionL2 { reg } => logistic_value_grad(x, data, subset, *reg),
        }
    }

    /// Smoothness constant estimate: for squared error the largest
    /// eigenvalue of the Gram matrix `(1/m) sum u u^T` (power iteration to
    /// 1e-6 relative); for logistic a quarter of that plus the ridge weight.
    pub fn smoothness_estimate(&self, data: &Dataset) -> f64 {
        let gram_top = gram_top_eigenvalue(data);
        match self {
            LossModel::LinearRegression | LossModel::QuadraticToy => gram_top,
            LossModel::LogisticRegressionL2 { reg } => gram_top / 4.0 + reg,
        }
    }
}

fn subset_iter(data: &Dataset, subset: Option<&[usize]>) -> Vec<usize> {
    match subset {
        Some(s) => s.to_vec(),
        None => (0..data.n_points()).collect(),
    }
}

/// Mean squared error `1/(2m) sum (v - u.x)^2` and its exact gradient
/// `-(1/m) sum u (v - u.x)`.
pub fn linreg_value_grad(
    x: &[f64],
    data: &Dataset,
    subset: Option<&[usize]>,
) -> Result<(f64, Vec<f64>), ObjectiveError> {
    let idx = subset_iter(data, subset);
    if idx.is_empty() {
        return Err(ObjectiveError::EmptySubset);
    }
    let m = idx.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for &i in &idx {
        let u = data.features.row(i);
        let residual = data.labels[i] - dot(u, x);
        value += residual * residual;
        crate::linalg::axpy(&mut grad, -residual / m, u);
    }
    Ok((value / (2.0 * m), grad))
}

/// Cross-entropy with l2 ridge `reg/2 ||x||^2`; labels must be 0 or 1.
pub fn logistic_value_grad(
    x: &[f64],
    data: &Dataset,
    subset: Option<&[usize]>,
    reg: f64,
) -> Result<(f64, Vec<f64>), ObjectiveError> {
    let idx = subset_iter(data, subset);
    if idx.is_empty() {
        return Err(ObjectiveError::EmptySubset);
    }
    let m = idx.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for &i in &idx {
        let y = data.labels[i];
        if y != 0.0 && y != 1.0 {
            return Err(ObjectiveError::BadLabel(y));
        }
        let u = data.features.row(i);
        let z = dot(u, x);
        // ln(1 + e^z) - y z, evaluated stably on both sides.
        value += if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() } - y * z;
        let sigma = 1.0 / (1.0 + (-z).exp());
        crate::linalg::axpy(&mut grad, (sigma - y) / m, u);
    }
    value = value / m + 0.5 * reg * norm_sq(x);
    crate::linalg::axpy(&mut grad, reg, x);
    Ok((value, grad))
}

fn gram_top_eigenvalue(data: &Dataset) -> f64 {
    let d = data.dim();
    let m = data.n_points() as f64;
    // Power iteration on G v = (1/m) U^T (U v) without forming G.
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut eig = 0.0;
    for _ in 0..10_000 {
        let mut gv = vec![0.0; d];
        for i in 0..data.n_points() {
            let u = data.features.row(i);
            let uv = dot(u, &v);
            crate::linalg::axpy(&mut gv, uv / m, u);
        }
        let norm = norm_sq(&gv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, gi) in v.iter_mut().zip(&gv) {
            *vi = gi / norm;
        }
        if (norm - eig).abs() <= 1e-6 * norm.max(1e-300) {
            return norm;
        }
        eig = norm;
    }
    eig
}

/// Disjoint index blocks per agent, sized by largest-remainder rounding of
/// `r_i N` over a seeded shuffle, plus the realized fractions `m_i / N`.
#[derive(Clone, Debug)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    realized_r: StochasticVector,
}

impl Partition {
    pub fn n_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, agent: usize) -> &[usize] {
        &self.blocks[agent]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Fractions `m_i / N`; the canonical `r` for mixing and the ERM
    /// decomposition.
    pub fn realized_r(&self) -> &StochasticVector {
        &self.realized_r
    }
}

/// Shuffle the point indices and cut contiguous blocks with
/// `|m_i - r_i N| <= 1` (largest-remainder rounding). Every block must be
/// nonempty.
pub fn partition(
    data: &Dataset,
    r: &StochasticVector,
    seed: u64,
) -> Result<Partition, ObjectiveError> {
    let n_points = data.n_points();
    let n_agents = r.len();
    let sizes = largest_remainder_sizes(r, n_points);
    if let Some(agent) = sizes.iter().position(|&m| m == 0) {
        return Err(ObjectiveError::EmptyBlock { agent });
    }
    let mut indices: Vec<usize> = (0..n_points).collect();
    let mut rng = keyed_rng(&[seed, domain::PARTITION]);
    // Fisher-Yates.
    for i in (1..n_points).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let mut blocks = Vec::with_capacity(n_agents);
    let mut start = 0;
    for &m in &sizes {
        blocks.push(indices[start..start + m].to_vec());
        start += m;
    }
    let realized: Vec<f64> = sizes.iter().map(|&m| m as f64 / n_points as f64).collect();
    let realized_r = StochasticVector::from_weights(&realized)
        .expect("nonempty blocks give positive fractions");
    Ok(Partition { blocks, realized_r })
}

fn largest_remainder_sizes(r: &StochasticVector, n_points: usize) -> Vec<usize> {
    let n = r.len();
    let mut sizes: Vec<usize> = Vec::with_capacity(n);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut assigned = 0usize;
    for i in 0..n {
        let exact = r.get(i) * n_points as f64;
        let floor = exact.floor() as usize;
        sizes.push(floor);
        assigned += floor;
        remainders.push((exact - floor as f64, i));
    }
    // Ties broken toward lower agent index for determinism.
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for k in 0..(n_points - assigned) {
        sizes[remainders[k].1] += 1;
    }
    sizes
}

/// Local gradient of `f_i` at `x`: exact over the agent's block, or an
/// unbiased mini-batch estimate by uniform sampling without replacement.
pub fn local_grad(
    model: &LossModel,
    data: &Dataset,
    part: &Partition,
    agent: usize,
    x: &[f64],
    batch: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, ObjectiveError> {
    let block = part.block(agent);
    match batch {
        None => Ok(model.value_grad(x, data, Some(block))?.1),
        Some(b) => {
            if b == 0 {
                return Err(ObjectiveError::EmptySubset);
            }
            if b > block.len() {
                return Err(ObjectiveError::BatchTooLarge { batch: b, block: block.len() });
            }
            let picks: Vec<usize> =
                rand::seq::index::sample(rng, block.len(), b).iter().map(|i| block[i]).collect();
            Ok(model.value_grad(x, data, Some(&picks))?.1)
        }
    }
}

/// Empirical per-sample gradient variance at x = 0, a diagnostic stand-in
/// for the bounded-variance constant.
pub fn sigma_sq_estimate(model: &LossModel, data: &Dataset) -> f64 {
    let d = data.dim();
    let zero = vec![0.0; d];
    let (_, mean_grad) = model.value_grad(&zero, data, None).expect("full data is nonempty");
    let mut acc = 0.0;
    for i in 0..data.n_points() {
        let (_, g) = model.value_grad(&zero, data, Some(&[i])).expect("single point");
        let diff: f64 = g.iter().zip(&mean_grad).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += diff;
    }
    acc / data.n_points() as f64
}
