//! Time-varying mixing topologies.
//!
//! All weight matrices here are row-stochastic and share one strictly
//! positive stationary distribution `r` (`r^T W(t) = r^T`), with nonzero
//! entries bounded below and a `B`-step union graph that is strongly
//! connected. The module provides the three constructions used by the
//! experiments (a fixed weighted cycle, single-edge cyclic gossip, and a
//! fixed matrix derived from an Erdos-Renyi graph), transition-matrix
//! products, the weighted `r`-norm, and numeric checks for the norm and
//! contraction inequalities the convergence analysis relies on.

use std::borrow::Cow;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{norm_sq, Mat};
use crate::rng::{self, keyed_rng};
use crate::schedules::ScheduleParams;

const STOCHASTIC_TOL: f64 = 1e-12;
const ER_RESAMPLE_BUDGET: usize = 100;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("stochastic vector entries must be strictly positive (entry {index} = {value})")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("stochastic vector sums to {0}, expected 1 within 1e-12")]
    SumNotOne(f64),
    #[error("cycle topology needs at least 3 agents, got {0}")]
    CycleTooSmall(usize),
    #[error("gossip topology needs at least 2 agents, got {0}")]
    GossipTooSmall(usize),
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("negative weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1 within 1e-12")]
    RowSumNotOne { row: usize, sum: f64 },
    #[error("stationary distribution violated: |(r^T W - r^T)_{col}| = {err}")]
    StationaryMismatch { col: usize, err: f64 },
    #[error("edge probability must lie in (0, 1), got {0}")]
    EdgeProbOutOfRange(f64),
    #[error("mixing parameter c must lie in (0, 1), got {0}")]
    MixingOutOfRange(f64),
    #[error("no connected graph sampled after {0} attempts")]
    Disconnected(usize),
    #[error("beta must lie in (0, 1], got {0}")]
    BetaOutOfRange(f64),
    #[error("transition products need 1 <= s < t, got s = {s}, t = {t}")]
    BadTimeOrder { s: u64, t: u64 },
    #[error("kappa undefined: B * lambda * beta(1) = {0} >= 1")]
    KappaUndefined(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Strictly positive vector summing to one; doubles as the agents' data
/// fractions and the stationary distribution of every mixing matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticVector(Vec<f64>);

impl StochasticVector {
    pub fn new(entries: Vec<f64>) -> Result<Self, TopologyError> {
        for (i, &v) in entries.iter().enumerate() {
            if !(v > 0.0) {
                return Err(TopologyError::NonPositiveEntry { index: i, value: v });
            }
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(TopologyError::SumNotOne(sum));
        }
        Ok(Self(entries))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Normalize positive weights to sum one.
    pub fn from_weights(weights: &[f64]) -> Result<Self, TopologyError> {
        let sum: f64 = weights.iter().sum();
        let entries: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        Self::new(entries)
    }

    /// `r_i = p_i / sum(p)` with `p_i` drawn uniformly from `(low, high)`.
    pub fn random_fractions(n: usize, low: f64, high: f64, seed: u64) -> Self {
        let mut rng = keyed_rng(&[seed, rng::domain::WEIGHTS]);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(low..high)).collect();
        Self::from_weights(&weights).expect("positive draws normalize to a stochastic vector")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Row-stochastic mixing matrix with `r^T W = r^T` and every nonzero entry
/// at least `eta`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    mat: Mat,
    eta: f64,
}

impl WeightMatrix {
    /// Validate the defining invariants and record the minimum nonzero entry.
    pub fn new(mat: Mat, r: &StochasticVector) -> Result<Self, TopologyError> {
        let n = mat.rows();
        if mat.cols() != n {
            return Err(TopologyError::NotSquare { rows: n, cols: mat.cols() });
        }
        if r.len() != n {
            return Err(TopologyError::DimensionMismatch(format!(
                "matrix is {n}x{n} but r has {} entries",
                r.len()
            )));
        }
        let mut eta = f64::INFINITY;
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = mat.get(i, j);
                if v < 0.0 {
                    return Err(TopologyError::NegativeWeight { row: i, col: j, value: v });
                }
                if v > 0.0 {
                    eta = eta.min(v);
                }
                sum += v;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TopologyError::RowSumNotOne { row: i, sum });
            }
        }
        for j in 0..n {
            let mut col: f64 = 0.0;
            for i in 0..n {
                col += r.get(i) * mat.get(i, j);
            }
            let err = (col - r.get(j)).abs();
            if err > STOCHASTIC_TOL {
                return Err(TopologyError::StationaryMismatch { col: j, err });
            }
        }
        Ok(Self { mat, eta })
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    /// Lower bound on the nonzero entries of this matrix.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.mat.row(i)
    }
}

/// `A = (1 - beta) I + beta W`; row-stochastic with the same stationary
/// distribution, but its off-diagonal weights scale with `beta`.
pub fn effective_mixing(w: &WeightMatrix, beta: f64) -> Result<Mat, TopologyError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(TopologyError::BetaOutOfRange(beta));
    }
    let n = w.n();
    let mut a = w.mat().scale(beta);
    for i in 0..n {
        let v = a.get(i, i) + (1.0 - beta);
        a.set(i, i, v);
    }
    Ok(a)
}

/// Weighted row norm `sqrt(sum_i r_i ||M_i||^2)`.
pub fn r_norm(m: &Mat, r: &StochasticVector) -> f64 {
    assert_eq!(
        m.rows(),
        r.len(),
        "r-norm needs one weight per matrix row ({} rows vs {} weights)",
        m.rows(),
        r.len()
    );
    (0..m.rows()).map(|i| r.get(i) * norm_sq(m.row(i))).sum::<f64>().sqrt()
}

/// 0-based position of the 1-based cyclic index `<i> = ((i - 1) mod n) + 1`.
#[inline]
fn cyc(i: i64, n: usize) -> usize {
    (i - 1).rem_euclid(n as i64) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ScheduleKind {
    CycleFixed,
    CyclicGossip,
    ErFixed { edge_prob: f64, mixing: f64, seed: u64 },
}

/// JSON-friendly description of a schedule, enough to rebuild it.
#[derive(Clone, Debug, Serialize)]
pub struct ScheduleDescriptor {
    #[serde(flatten)]
    kind: ScheduleKind,
    pub n: usize,
    pub r: Vec<f64>,
    pub b_window: usize,
    pub eta: f64,
}

/// Deterministic map from iteration `t >= 1` to a mixing matrix, together
/// with the connectivity window `B` and the period-wide entry bound `eta`.
#[derive(Clone, Debug)]
pub struct WeightSchedule {
    kind: ScheduleKind,
    r: StochasticVector,
    b_window: usize,
    eta: f64,
    /// Materialized matrix for time-invariant kinds.
    fixed: Option<WeightMatrix>,
}

impl WeightSchedule {
    pub fn r(&self) -> &StochasticVector {
        &self.r
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    /// Connectivity window `B`.
    pub fn b_window(&self) -> usize {
        self.b_window
    }

    /// Minimum nonzero entry across one full period.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// The mixing matrix at iteration `t >= 1`.
    pub fn matrix_at(&self, t: u64) -> Cow<'_, WeightMatrix> {
        assert!(t >= 1, "schedules are defined for t >= 1");
        match (&self.kind, &self.fixed) {
            (_, Some(w)) => Cow::Borrowed(w),
            (ScheduleKind::CyclicGossip, None) => {
                Cow::Owned(gossip_matrix(&self.r, t).expect("gossip construction is total"))
            }
            _ => unreachable!("fixed kinds always materialize their matrix"),
        }
    }

    /// Contraction parameter `lambda = eta * r_min / (2 B n^2)`.
    pub fn lambda(&self) -> f64 {
        self.eta * self.r.min() / (2.0 * self.b_window as f64 * (self.n() as f64).powi(2))
    }

    /// `kappa = (1 - B lambda beta(1))^-1`; fails if the denominator is not
    /// positive (cannot happen for valid `(eta, r, B, n)` but guarded).
    pub fn kappa(&self, beta1: f64) -> Result<f64, TopologyError> {
        let x = self.b_window as f64 * self.lambda() * beta1;
        if x >= 1.0 {
            return Err(TopologyError::KappaUndefined(x));
        }
        Ok(1.0 / (1.0 - x))
    }

    pub fn descriptor(&self) -> ScheduleDescriptor {
        ScheduleDescriptor {
            kind: self.kind.clone(),
            n: self.n(),
            r: self.r.as_slice().to_vec(),
            b_window: self.b_window,
            eta: self.eta,
        }
    }
}

/// Time-invariant weighted cycle: ring neighbors `j` of `i` get
/// `r_j / (2 (r_i + r_j))`, the diagonal absorbs the rest, `B = 1`.
pub fn make_cycle_fixed(r: &StochasticVector) -> Result<WeightSchedule, TopologyError> {
    let n = r.len();
    if n < 3 {
        return Err(TopologyError::CycleTooSmall(n));
    }
    let mut m = Mat::zeros(n, n);
    for pos in 0..n {
        let i = pos as i64 + 1;
        let prev = cyc(i - 1, n);
        let next = cyc(i + 1, n);
        let ri = r.get(pos);
        m.set(pos, prev, r.get(prev) / (2.0 * (ri + r.get(prev))));
        m.set(pos, next, r.get(next) / (2.0 * (ri + r.get(next))));
        m.set(pos, pos, ri / (2.0 * (ri + r.get(next))) + ri / (2.0 * (ri + r.get(prev))));
    }
    let w = WeightMatrix::new(m, r)?;
    let eta = w.eta();
    Ok(WeightSchedule {
        kind: ScheduleKind::CycleFixed,
        r: r.clone(),
        b_window: 1,
        eta,
        fixed: Some(w),
    })
}

fn gossip_matrix(r: &StochasticVector, t: u64) -> Result<WeightMatrix, TopologyError> {
    let n = r.len();
    let a = cyc(t as i64, n);
    let b = cyc(t as i64 + 1, n);
    let mut m = Mat::identity(n);
    let pair_sum = r.get(a) + r.get(b);
    for &i in &[a, b] {
        m.set(i, a, r.get(a) / pair_sum);
        m.set(i, b, r.get(b) / pair_sum);
    }
    WeightMatrix::new(m, r)
}

/// Single-edge cyclic gossip: at time `t` only the ring pair `<t>, <t+1>`
/// mixes; every cycle edge is visited once per period, so the schedule is
/// `B`-connected with `B = n`.
pub fn make_cyclic_gossip(r: &StochasticVector) -> Result<WeightSchedule, TopologyError> {
    let n = r.len();
    if n < 2 {
        return Err(TopologyError::GossipTooSmall(n));
    }
    // eta over one full period of n distinct matrices.
    let mut eta = f64::INFINITY;
    for t in 1..=n as u64 {
        eta = eta.min(gossip_matrix(r, t)?.eta());
    }
    Ok(WeightSchedule {
        kind: ScheduleKind::CyclicGossip,
        r: r.clone(),
        b_window: n,
        eta,
        fixed: None,
    })
}

/// Sample an undirected Erdos-Renyi graph with the given edge probability,
/// resampling (up to 100 attempts) until connected. Deterministic in the
/// seed, so callers can recover the adjacency a schedule was built from.
pub fn sample_connected_er(
    n: usize,
    edge_prob: f64,
    seed: u64,
) -> Result<Vec<Vec<bool>>, TopologyError> {
    if !(edge_prob > 0.0 && edge_prob < 1.0) {
        return Err(TopologyError::EdgeProbOutOfRange(edge_prob));
    }
    let mut rng = keyed_rng(&[seed, rng::domain::TOPOLOGY]);
    for _ in 0..ER_RESAMPLE_BUDGET {
        let mut adj = vec![vec![false; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < edge_prob {
                    adj[i][j] = true;
                    adj[j][i] = true;
                }
            }
        }
        if undirected_connected(&adj) {
            return Ok(adj);
        }
    }
    Err(TopologyError::Disconnected(ER_RESAMPLE_BUDGET))
}

/// Fixed matrix from a connected Erdos-Renyi graph:
/// `A = I - (d_max + 1)^-1 L` is doubly stochastic, and
/// `W = I + c * rhat_min * diag(r)^-1 (A - I)` with
/// `rhat_min = min_i r_i / (1 - A_ii)` is row-stochastic with `r^T W = r^T`.
pub fn make_er_fixed(
    n: usize,
    edge_prob: f64,
    r: &StochasticVector,
    c: f64,
    seed: u64,
) -> Result<WeightSchedule, TopologyError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(TopologyError::MixingOutOfRange(c));
    }
    if r.len() != n {
        return Err(TopologyError::DimensionMismatch(format!(
            "n = {n} but r has {} entries",
            r.len()
        )));
    }
    if n < 2 {
        return Err(TopologyError::GossipTooSmall(n));
    }
    let adj = sample_connected_er(n, edge_prob, seed)?;

    let degrees: Vec<usize> = adj.iter().map(|row| row.iter().filter(|&&e| e).count()).collect();
    let d_max = *degrees.iter().max().unwrap();
    let inv = 1.0 / (d_max as f64 + 1.0);
    // A = I - (d_max + 1)^-1 (D - Adj)
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        a.set(i, i, 1.0 - degrees[i] as f64 * inv);
        for j in 0..n {
            if adj[i][j] {
                a.set(i, j, inv);
            }
        }
    }
    let rhat_min = (0..n)
        .map(|i| r.get(i) / (1.0 - a.get(i, i)))
        .fold(f64::INFINITY, f64::min);
    let mut w = Mat::zeros(n, n);
    for i in 0..n {
        let scale = c * rhat_min / r.get(i);
        for j in 0..n {
            let delta = a.get(i, j) - if i == j { 1.0 } else { 0.0 };
            let base = if i == j { 1.0 } else { 0.0 };
            w.set(i, j, base + scale * delta);
        }
    }
    let w = WeightMatrix::new(w, r)?;
    let eta = w.eta();
    Ok(WeightSchedule {
        kind: ScheduleKind::ErFixed { edge_prob, mixing: c, seed },
        r: r.clone(),
        b_window: 1,
        eta,
        fixed: Some(w),
    })
}

fn undirected_connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if adj[v][u] && !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Transition matrix `Phi(t:s) = A(t-1) ... A(s+1)` of the averaging
/// dynamics, with `Phi(s+1:s) = I`.
#[derive(Clone, Debug)]
pub struct TransitionProduct {
    pub matrix: Mat,
    pub s: u64,
    pub t: u64,
}

/// Accumulates `A(k) = (1 - beta(k)) I + beta(k) W(k)` left to right from
/// `A(s+1)`; requires `1 <= s < t`.
pub fn transition_product(
    schedule: &WeightSchedule,
    params: &ScheduleParams,
    s: u64,
    t: u64,
) -> Result<TransitionProduct, TopologyError> {
    if s < 1 || s >= t {
        return Err(TopologyError::BadTimeOrder { s, t });
    }
    let mut phi = Mat::identity(schedule.n());
    for k in (s + 1)..t {
        let a = effective_mixing(&schedule.matrix_at(k), params.beta_at(k))?;
        phi = a.matmul(&phi);
    }
    Ok(TransitionProduct { matrix: phi, s, t })
}

/// `M - 1 r^T` applied to the rows of `m`: subtract `r_j` from column `j`.
pub fn subtract_consensus_projector(m: &Mat, r: &StochasticVector) -> Mat {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v -= r.get(j);
        }
    }
    out
}

/// Both sides of the transition contraction bound:
/// `lhs = ||(Phi(t:s) - 1 r^T) U||_r^2` and
/// `rhs = kappa * prod_{k=s+1}^{t-1} (1 - lambda beta(k)) * ||U||_r^2`
/// with `lambda = eta r_min / (2 B n^2)` and `kappa = (1 - B lambda beta(1))^-1`.
pub fn contraction_check(
    schedule: &WeightSchedule,
    params: &ScheduleParams,
    u: &Mat,
    s: u64,
    t: u64,
) -> Result<(f64, f64), TopologyError> {
    if u.rows() != schedule.n() {
        return Err(TopologyError::DimensionMismatch(format!(
            "U has {} rows, schedule has {} agents",
            u.rows(),
            schedule.n()
        )));
    }
    let phi = transition_product(schedule, params, s, t)?;
    let lambda = schedule.lambda();
    let kappa = schedule.kappa(params.beta_at(1))?;
    let lhs = r_norm(&subtract_consensus_projector(&phi.matrix, schedule.r()).matmul(u), schedule.r())
        .powi(2);
    let mut damping = 1.0;
    for k in (s + 1)..t {
        damping *= 1.0 - lambda * params.beta_at(k);
    }
    let rhs = kappa * damping * r_norm(u, schedule.r()).powi(2);
    Ok((lhs, rhs))
}

/// Result of an exhaustive contraction sweep over `1 <= s < t <= t_max`.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionSweepReport {
    pub pairs_checked: u64,
    pub draws: u64,
    /// Largest observed `lhs / rhs`; the bound holds when this is <= 1.
    pub max_ratio: f64,
    pub worst_pair: (u64, u64),
    pub lambda: f64,
    pub kappa: f64,
}

/// Sweeps the contraction bound for every `1 <= s < t <= t_max`, drawing
/// `u_per_pair` fresh `n x d` test matrices per pair from `seed`.
///
/// The matrix source is pluggable so broken sequences (for negative
/// controls) can be driven through the same machinery.
pub fn contraction_sweep<F>(
    matrix_at: F,
    r: &StochasticVector,
    params: &ScheduleParams,
    b_window: usize,
    eta: f64,
    t_max: u64,
    u_per_pair: usize,
    d: usize,
    seed: u64,
) -> Result<ContractionSweepReport, TopologyError>
where
    F: Fn(u64) -> Mat,
{
    let n = r.len();
    let lambda = eta * r.min() / (2.0 * b_window as f64 * (n as f64).powi(2));
    let x = b_window as f64 * lambda * params.beta_at(1);
    if x >= 1.0 {
        return Err(TopologyError::KappaUndefined(x));
    }
    let kappa = 1.0 / (1.0 - x);

    let mut report = ContractionSweepReport {
        pairs_checked: 0,
        draws: 0,
        max_ratio: 0.0,
        worst_pair: (0, 0),
        lambda,
        kappa,
    };
    for s in 1..t_max {
        let mut phi = Mat::identity(n);
        let mut damping = 1.0;
        for t in (s + 1)..=t_max {
            report.pairs_checked += 1;
            let dev = subtract_consensus_projector(&phi, r);
            for draw in 0..u_per_pair {
                let mut rng = keyed_rng(&[seed, s, t, draw as u64]);
                let mut u = Mat::zeros(n, d);
                for i in 0..n {
                    for j in 0..d {
                        u.set(i, j, rng::sample_standard_normal(&mut rng));
                    }
                }
                let lhs = r_norm(&dev.matmul(&u), r).powi(2);
                let rhs = kappa * damping * r_norm(&u, r).powi(2);
                report.draws += 1;
                if rhs > 0.0 {
                    let ratio = lhs / rhs;
                    if ratio > report.max_ratio {
                        report.max_ratio = ratio;
                        report.worst_pair = (s, t);
                    }
                }
            }
            if t < t_max {
                let beta = params.beta_at(t);
                let mut a = matrix_at(t).scale(beta);
                for i in 0..n {
                    let v = a.get(i, i) + (1.0 - beta);
                    a.set(i, i, v);
                }
                phi = a.matmul(&phi);
                damping *= 1.0 - lambda * beta;
            }
        }
    }
    Ok(report)
}

/// True iff the union over `k` in `t_start+1 ..= t_start+B` of the directed
/// graphs with an edge `(j, i)` whenever `W_ij(k) > 0` is strongly connected.
pub fn check_b_connected(schedule: &WeightSchedule, t_start: u64, b: usize) -> bool {
    let n = schedule.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut present = vec![vec![false; n]; n];
    for k in (t_start + 1)..=(t_start + b as u64) {
        let w = schedule.matrix_at(k);
        for i in 0..n {
            for j in 0..n {
                if w.mat().get(i, j) > 0.0 && !present[j][i] {
                    present[j][i] = true;
                    adj[j].push(i);
                }
            }
        }
    }
    strongly_connected(&adj)
}

/// Kosaraju: a graph is strongly connected iff one DFS from node 0 reaches
/// everything in both the graph and its reverse.
fn strongly_connected(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    if n == 0 {
        return true;
    }
    let reaches_all = |edges: &dyn Fn(usize) -> Vec<usize>| -> bool {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for u in edges(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    };
    let forward = |v: usize| adj[v].clone();
    if !reaches_all(&forward) {
        return false;
    }
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, out) in adj.iter().enumerate() {
        for &u in out {
            rev[u].push(v);
        }
    }
    let backward = |v: usize| rev[v].clone();
    reaches_all(&backward)
}

/// `||u + v||^2 <= (1 + omega) ||u||^2 + (1 + 1/omega) ||v||^2`.
pub fn young_inequality_check(u: &[f64], v: &[f64], omega: f64) -> (f64, f64) {
    assert!(omega > 0.0, "omega must be positive");
    assert_eq!(u.len(), v.len(), "vector dimensions must agree");
    let sum: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    let lhs = norm_sq(&sum);
    let rhs = (1.0 + omega) * norm_sq(u) + (1.0 + 1.0 / omega) * norm_sq(v);
    (lhs, rhs)
}

/// r-norm variant of the same inequality for matrices.
pub fn young_inequality_check_r(u: &Mat, v: &Mat, omega: f64, r: &StochasticVector) -> (f64, f64) {
    assert!(omega > 0.0, "omega must be positive");
    let lhs = r_norm(&u.add(v), r).powi(2);
    let rhs = (1.0 + omega) * r_norm(u, r).powi(2) + (1.0 + 1.0 / omega) * r_norm(v, r).powi(2);
    (lhs, rhs)
}

/// `||A B||_r <= ||A||_r ||B||_F`.
pub fn mixed_norm_check(a: &Mat, b: &Mat, r: &StochasticVector) -> (f64, f64) {
    assert_eq!(a.cols(), b.rows(), "inner dimensions must agree");
    let lhs = r_norm(&a.matmul(b), r);
    let rhs = r_norm(a, r) * b.frobenius_norm();
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_r(n: usize, seed: u64) -> StochasticVector {
        StochasticVector::random_fractions(n, 0.01, 0.9, seed)
    }

    #[test]
    fn stochastic_vector_validation() {
        assert!(StochasticVector::new(vec![0.5, 0.5]).is_ok());
        assert!(StochasticVector::new(vec![0.5, 0.0, 0.5]).is_err());
        assert!(StochasticVector::new(vec![0.5, 0.6]).is_err());
        let r = random_r(20, 3);
        assert!((r.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(r.min() > 0.0);
    }

    #[test]
    fn cycle_fixed_uniform_quarters() {
        let r = StochasticVector::uniform(4);
        let sched = make_cycle_fixed(&r).unwrap();
        let w = sched.matrix_at(1);
        for i in 0..4 {
            assert!((w.mat().get(i, i) - 0.5).abs() < 1e-15);
            assert!((w.mat().get(i, (i + 1) % 4) - 0.25).abs() < 1e-15);
            assert!((w.mat().get(i, (i + 3) % 4) - 0.25).abs() < 1e-15);
        }
        assert_eq!(sched.b_window(), 1);
    }

    #[test]
    fn cycle_fixed_stationary_holds_for_random_r() {
        // r^T W = r^T verified against a direct vector-matrix product.
        let r = random_r(20, 11);
        let sched = make_cycle_fixed(&r).unwrap();
        let w = sched.matrix_at(1);
        for j in 0..20 {
            let col: f64 = (0..20).map(|i| r.get(i) * w.mat().get(i, j)).sum();
            assert!((col - r.get(j)).abs() <= 1e-12);
        }
    }

    #[test]
    fn cycle_rejects_small_n() {
        assert!(make_cycle_fixed(&StochasticVector::uniform(2)).is_err());
    }

    #[test]
    fn gossip_block_structure() {
        let r = StochasticVector::uniform(3);
        let sched = make_cyclic_gossip(&r).unwrap();
        let w = sched.matrix_at(1);
        // Active pair (agents 0, 1) mixes with 1/2s; agent 2 keeps identity.
        for &i in &[0usize, 1] {
            assert!((w.mat().get(i, 0) - 0.5).abs() < 1e-15);
            assert!((w.mat().get(i, 1) - 0.5).abs() < 1e-15);
        }
        assert_eq!(w.mat().get(2, 2), 1.0);
        assert_eq!(sched.b_window(), 3);
    }

    #[test]
    fn gossip_rows_and_stationarity() {
        let r = random_r(7, 5);
        let sched = make_cyclic_gossip(&r).unwrap();
        for t in 1..=14 {
            let w = sched.matrix_at(t);
            for i in 0..7 {
                let sum: f64 = (0..7).map(|j| w.mat().get(i, j)).sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
            for j in 0..7 {
                let col: f64 = (0..7).map(|i| r.get(i) * w.mat().get(i, j)).sum();
                assert!((col - r.get(j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gossip_period_covers_cycle() {
        // The union of one period of edge sets is the full cycle.
        let r = random_r(6, 8);
        let sched = make_cyclic_gossip(&r).unwrap();
        assert!(check_b_connected(&sched, 0, 6));
    }

    #[test]
    fn b_connected_windows() {
        let r = random_r(8, 2);
        let cycle = make_cycle_fixed(&r).unwrap();
        assert!(check_b_connected(&cycle, 0, 1));
        assert!(check_b_connected(&cycle, 17, 1));

        let gossip = make_cyclic_gossip(&r).unwrap();
        // n consecutive single edges always close the ring; n-1 leave a
        // path, which is still strongly connected since gossip edges are
        // bidirectional; n-2 split the ring into two components.
        assert!(check_b_connected(&gossip, 1, 8));
        assert!(check_b_connected(&gossip, 1, 7));
        assert!(!check_b_connected(&gossip, 1, 6));
    }

    #[test]
    fn er_two_node_closed_form() {
        let r = StochasticVector::uniform(2);
        let c = 0.4;
        let sched = make_er_fixed(2, 0.5, &r, c, 9).unwrap();
        let w = sched.matrix_at(1);
        // A = [[1/2, 1/2], [1/2, 1/2]] and rhat_min * diag(r)^-1 = 2I, so
        // W = I + 2c (A - I) = [[1-c, c], [c, 1-c]].
        assert!((w.mat().get(0, 0) - (1.0 - c)).abs() < 1e-15);
        assert!((w.mat().get(0, 1) - c).abs() < 1e-15);
        assert!((w.mat().get(1, 0) - c).abs() < 1e-15);
    }

    #[test]
    fn er_paper_scale_instance() {
        let r = random_r(20, 4);
        let sched = make_er_fixed(20, 0.3, &r, 0.95, 4).unwrap();
        assert_eq!(sched.n(), 20);
        assert!(sched.eta() > 0.0);
        assert!(check_b_connected(&sched, 0, 1));
    }

    #[test]
    fn er_nonzero_pattern_matches_graph() {
        // Off-diagonal support of W - I is exactly the sampled adjacency,
        // recovered structurally via the deterministic sampler.
        let r = StochasticVector::uniform(10);
        let sched = make_er_fixed(10, 0.25, &r, 0.9, 77).unwrap();
        let adj = sample_connected_er(10, 0.25, 77).unwrap();
        let w = sched.matrix_at(1);
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    assert_eq!(w.mat().get(i, j) > 0.0, adj[i][j], "entry ({i}, {j})");
                }
            }
            assert!(adj[i].iter().any(|&e| e), "connected graph has no isolated nodes");
        }
    }

    #[test]
    fn er_rejects_bad_params() {
        let r = StochasticVector::uniform(4);
        assert!(make_er_fixed(4, 0.0, &r, 0.5, 1).is_err());
        assert!(make_er_fixed(4, 0.3, &r, 1.0, 1).is_err());
    }

    #[test]
    fn er_exhausts_resample_budget_on_hopeless_probability() {
        // Edge probability 1e-12 over 100 attempts: every sample is
        // disconnected, so construction must give up with the budget error.
        let r = StochasticVector::uniform(10);
        match make_er_fixed(10, 1e-12, &r, 0.5, 3) {
            Err(TopologyError::Disconnected(attempts)) => assert_eq!(attempts, 100),
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn effective_mixing_limits() {
        let r = random_r(5, 6);
        let sched = make_cycle_fixed(&r).unwrap();
        let w = sched.matrix_at(1);
        let a = effective_mixing(&w, 1.0).unwrap();
        assert_eq!(&a, w.mat());
        let half = effective_mixing(&w, 0.5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = 0.5 * w.mat().get(i, j) + if i == j { 0.5 } else { 0.0 };
                assert!((half.get(i, j) - expected).abs() < 1e-15);
            }
        }
        // Stationarity preserved.
        let a = effective_mixing(&w, 0.3).unwrap();
        for j in 0..5 {
            let col: f64 = (0..5).map(|i| r.get(i) * a.get(i, j)).sum();
            assert!((col - r.get(j)).abs() <= 1e-12);
        }
        assert!(effective_mixing(&w, 0.0).is_err());
        assert!(effective_mixing(&w, 1.5).is_err());
    }

    #[test]
    fn r_norm_against_elementwise_oracle() {
        let r = random_r(5, 10);
        let mut rng = keyed_rng(&[99]);
        let mut m = Mat::zeros(5, 3);
        for i in 0..5 {
            for j in 0..3 {
                m.set(i, j, rng.gen_range(-2.0..2.0));
            }
        }
        let mut brute = 0.0;
        for i in 0..5 {
            for j in 0..3 {
                brute += r.get(i) * m.get(i, j) * m.get(i, j);
            }
        }
        assert!((r_norm(&m, &r).powi(2) - brute).abs() < 1e-14);
        assert_eq!(r_norm(&Mat::zeros(5, 3), &r), 0.0);
        // Identical rows: r-norm equals the row norm since sum r_i = 1.
        let v = [1.0, -2.0, 0.5];
        let m = Mat::from_rows(vec![v.to_vec(); 5]);
        assert!((r_norm(&m, &r) - norm_sq(&v).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn transition_product_basics() {
        let r = random_r(4, 13);
        let sched = make_cyclic_gossip(&r).unwrap();
        let params = ScheduleParams::new(0.5, 0.0, 0.8, 0.3, 0.0).unwrap();
        // Empty product.
        let phi = transition_product(&sched, &params, 3, 4).unwrap();
        assert_eq!(phi.matrix, Mat::identity(4));
        // Single factor.
        let phi = transition_product(&sched, &params, 3, 5).unwrap();
        let a = effective_mixing(&sched.matrix_at(4), params.beta_at(4)).unwrap();
        assert_eq!(phi.matrix, a);
        // Row-stochastic and r-stationary after 9 factors.
        let phi = transition_product(&sched, &params, 1, 10).unwrap();
        for i in 0..4 {
            let sum: f64 = (0..4).map(|j| phi.matrix.get(i, j)).sum();
            assert!((sum - 1.0).abs() <= 1e-10);
        }
        for j in 0..4 {
            let col: f64 = (0..4).map(|i| r.get(i) * phi.matrix.get(i, j)).sum();
            assert!((col - r.get(j)).abs() <= 1e-10);
        }
        // Consensus subspace annihilated: (Phi - 1 r^T) 1 = 0.
        let dev = subtract_consensus_projector(&phi.matrix, &r);
        let ones = Mat::from_rows(vec![vec![1.0]; 4]);
        assert!(r_norm(&dev.matmul(&ones), &r) <= 1e-12);
        assert!(transition_product(&sched, &params, 5, 5).is_err());
        assert!(transition_product(&sched, &params, 6, 5).is_err());
    }

    #[test]
    fn contraction_consensus_matrix_gives_zero_lhs() {
        let r = random_r(5, 21);
        let sched = make_cyclic_gossip(&r).unwrap();
        let params = ScheduleParams::new(0.5, 0.0, 0.8, 0.3, 0.0).unwrap();
        let u = Mat::from_rows(vec![vec![2.0, -1.0]; 5]);
        let (lhs, rhs) = contraction_check(&sched, &params, &u, 2, 9).unwrap();
        assert!(lhs <= 1e-20);
        assert!(rhs > 0.0);
    }

    #[test]
    fn contraction_immediate_window() {
        // s + 1 = t: lhs = ||(I - 1 r^T) U||_r^2 <= kappa ||U||_r^2.
        let r = random_r(5, 22);
        let sched = make_cyclic_gossip(&r).unwrap();
        let params = ScheduleParams::new(0.5, 0.0, 0.8, 0.3, 0.0).unwrap();
        let mut rng = keyed_rng(&[50]);
        let mut u = Mat::zeros(5, 3);
        for i in 0..5 {
            for j in 0..3 {
                u.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let (lhs, rhs) = contraction_check(&sched, &params, &u, 4, 5).unwrap();
        assert!(lhs <= rhs);
    }

    #[test]
    fn geometric_decay_for_fixed_topology() {
        // Constant beta and a fixed connected cycle: the deviation operator
        // norm decays geometrically, so the log-norm slope is negative.
        let r = random_r(6, 33);
        let sched = make_cycle_fixed(&r).unwrap();
        let params = ScheduleParams::new(0.5, 0.0, 0.7, 0.0, 0.0).unwrap();
        let eye = Mat::identity(6);
        let norm_at = |t: u64| {
            let phi = transition_product(&sched, &params, 1, t).unwrap();
            r_norm(&subtract_consensus_projector(&phi.matrix, &r).matmul(&eye), &r)
        };
        let (n20, n60, n120) = (norm_at(20), norm_at(60), norm_at(120));
        assert!(n60 < n20);
        assert!(n120 < n60);
        let slope = (n120 / n20).ln() / 100.0;
        assert!(slope < -1e-3, "slope {slope}");
    }

    #[test]
    fn young_equality_case() {
        let u = [1.0, -2.0, 3.0];
        let (lhs, rhs) = young_inequality_check(&u, &u, 1.0);
        assert!((lhs - rhs).abs() < 1e-12);
        let v = [0.0, 0.0, 0.0];
        let (lhs, rhs) = young_inequality_check(&u, &v, 0.7);
        assert!(lhs <= rhs);
    }

    #[test]
    fn mixed_norm_identity_case() {
        let r = random_r(4, 40);
        let mut rng = keyed_rng(&[71]);
        let mut a = Mat::zeros(4, 3);
        for i in 0..4 {
            for j in 0..3 {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let (lhs, rhs) = mixed_norm_check(&a, &Mat::identity(3), &r);
        assert!((lhs - r_norm(&a, &r)).abs() < 1e-14);
        assert!(lhs <= rhs);
        let z = Mat::zeros(4, 3);
        let (lhs, rhs) = mixed_norm_check(&z, &Mat::identity(3), &r);
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn descriptor_serializes() {
        let r = random_r(4, 1);
        let sched = make_cyclic_gossip(&r).unwrap();
        let json = serde_json::to_value(sched.descriptor()).unwrap();
        assert_eq!(json["kind"], "cyclic_gossip");
        assert_eq!(json["n"], 4);
        assert_eq!(json["b_window"], 4);
    }
}
