//! The optimizer core.
//!
//! Each agent keeps a row of the state matrix `X(t)` and, per iteration,
//! blends it with a lossy average of its neighbors' states and a local
//! gradient step:
//!
//! ```text
//! x_i(t+1) = (1 - beta(t)) x_i(t) + beta(t) xhat_i(t)
//!            - alpha(t) beta(t) grad f_i(x_i(t))
//! ```
//!
//! evaluated synchronously (all gradients and estimates use the pre-update
//! states). In matrix form this is
//! `X(t+1) = A(t) X(t) + beta(t) E(t) - alpha(t) beta(t) grad f(X(t))` with
//! `A(t) = (1 - beta(t)) I + beta(t) W(t)`; the equivalence of the two
//! forms is a tested invariant. Runs are bit-reproducible from the seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm_sq, Mat};
use crate::lossy::{neighbor_estimate, ChannelError, ChannelKind, LossyChannel};
use crate::metrics::network_variance;
use crate::objectives::{
    gen_linreg_general, gen_logistic, gen_quadratic_toy, local_grad, partition, Dataset,
    LossModel, ObjectiveError, Partition,
};
use crate::rng::{domain, keyed_rng};
use crate::schedules::{ScheduleError, ScheduleParams};
use crate::topology::{
    make_cycle_fixed, make_cyclic_gossip, make_er_fixed, ScheduleDescriptor, StochasticVector,
    TopologyError, WeightSchedule,
};

/// Abort threshold on any squared row norm; past this the trajectory is
/// useless and the quantizer's norm-cap assumption is long gone.
pub const DIVERGENCE_NORM_SQ: f64 = 1e12;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Agent states at iteration `t` (row `i` is `x_i(t)`); starts at the zero
/// matrix with `t = 1` unless an initial-state extension is used.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMatrix {
    pub mat: Mat,
    pub t: u64,
}

impl StateMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { mat: Mat::zeros(n, d), t: 1 }
    }
}

/// The per-agent update applied to one row:
/// `(1 - beta) x + beta xhat - alpha beta g`, elementwise in this exact
/// arithmetic order.
pub fn dimix_update_row(x: &[f64], x_hat: &[f64], grad: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let ab = alpha * beta;
    (0..x.len()).map(|l| (1.0 - beta) * x[l] + beta * x_hat[l] - ab * grad[l]).collect()
}

/// `xbar = r^T X`.
pub fn weighted_average(states: &Mat, r: &StochasticVector) -> Vec<f64> {
    assert_eq!(states.rows(), r.len(), "one weight per agent");
    let mut mean = vec![0.0; states.cols()];
    for i in 0..states.rows() {
        crate::linalg::axpy(&mut mean, r.get(i), states.row(i));
    }
    mean
}

/// `|| xbar(t+1) - [xbar(t) + beta r^T E - alpha beta r^T grad] ||` for one
/// recorded step; an algebraic identity of the dynamics given `r^T W = r^T`,
/// so it stays below 1e-10.
pub fn average_dynamics_residual(
    x_bar_next: &[f64],
    x_bar: &[f64],
    noise: &Mat,
    grads: &Mat,
    r: &StochasticVector,
    alpha: f64,
    beta: f64,
) -> f64 {
    let r_noise = weighted_average(noise, r);
    let r_grad = weighted_average(grads, r);
    let mut acc = 0.0;
    for j in 0..x_bar.len() {
        let predicted = x_bar[j] + beta * r_noise[j] - alpha * beta * r_grad[j];
        let delta = x_bar_next[j] - predicted;
        acc += delta * delta;
    }
    acc.sqrt()
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

fn default_horizon() -> u64 {
    10_000
}
fn default_record_every() -> u64 {
    10
}
fn default_n_points() -> usize {
    400
}
fn default_dim() -> usize {
    10
}
fn default_condition() -> f64 {
    10.0
}
fn default_noise_hi() -> f64 {
    0.1
}
fn default_feature_scale() -> f64 {
    1.0
}
fn default_label_flip() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    QuadraticToy {
        #[serde(default = "default_n_points")]
        n_points: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_condition")]
        condition: f64,
    },
    LinearRegression {
        n_points: usize,
        dim: usize,
        #[serde(default = "default_noise_hi")]
        noise_hi: f64,
        /// Zero-mean feature columns (uniform on (-scale, scale)); default
        /// keeps the one-sided (0, scale) recipe.
        #[serde(default)]
        centered: bool,
        #[serde(default = "default_feature_scale")]
        feature_scale: f64,
    },
    LogisticRegressionL2 {
        n_points: usize,
        dim: usize,
        #[serde(default)]
        reg: f64,
        #[serde(default = "default_feature_scale")]
        feature_scale: f64,
        #[serde(default = "default_label_flip")]
        label_flip: f64,
    },
}

impl LossSpec {
    pub fn dim(&self) -> usize {
        match *self {
            LossSpec::QuadraticToy { dim, .. }
            | LossSpec::LinearRegression { dim, .. }
            | LossSpec::LogisticRegressionL2 { dim, .. } => dim,
        }
    }

    pub fn n_points(&self) -> usize {
        match *self {
            LossSpec::QuadraticToy { n_points, .. }
            | LossSpec::LinearRegression { n_points, .. }
            | LossSpec::LogisticRegressionL2 { n_points, .. } => n_points,
        }
    }

    fn model(&self) -> LossModel {
        match *self {
            LossSpec::QuadraticToy { .. } => LossModel::QuadraticToy,
            LossSpec::LinearRegression { .. } => LossModel::LinearRegression,
            LossSpec::LogisticRegressionL2 { reg, .. } => LossModel::LogisticRegressionL2 { reg },
        }
    }

    fn generate(&self, seed: u64) -> Dataset {
        match *self {
            LossSpec::QuadraticToy { n_points, dim, condition } => {
                gen_quadratic_toy(n_points, dim, condition, seed).0
            }
            LossSpec::LinearRegression { n_points, dim, noise_hi, centered, feature_scale } => {
                gen_linreg_general(n_points, dim, noise_hi, centered, feature_scale, seed).0
            }
            LossSpec::LogisticRegressionL2 { n_points, dim, feature_scale, label_flip, .. } => {
                gen_logistic(n_points, dim, feature_scale, label_flip, seed).0
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    CycleFixed,
    CyclicGossip,
    ErFixed { edge_prob: f64, mixing: f64 },
}

/// Where the data fractions / stationary distribution come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightsSpec {
    #[default]
    Uniform,
    /// `r_i = p_i / sum p` with `p_i ~ U(low, high)`, seeded from the run.
    Random { low: f64, high: f64 },
    Explicit { r: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Diminishing { alpha0: f64, nu: f64, beta0: f64, mu: f64, tau: f64 },
    Fixed { alpha: f64, beta: f64 },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Diminishing { alpha0: 0.1, nu: 1.0 / 6.0, beta0: 0.5, mu: 0.5, tau: 0.0 }
    }
}

impl ScheduleSpec {
    pub fn params(&self) -> Result<ScheduleParams, ScheduleError> {
        match *self {
            ScheduleSpec::Diminishing { alpha0, nu, beta0, mu, tau } => {
                ScheduleParams::new(alpha0, nu, beta0, mu, tau)
            }
            ScheduleSpec::Fixed { alpha, beta } => ScheduleParams::fixed(alpha, beta),
        }
    }
}

fn default_channel() -> ChannelKind {
    ChannelKind::Perfect
}

/// Initial states; zero rows are the algorithm's definition, the dispersed
/// option exists for consensus-behavior studies (rate claims assume zeros).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Zeros,
    /// Entries uniform on (-scale, scale), keyed by the run seed.
    Uniform { scale: f64 },
}

/// Full description of one run; every random element derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub agents: usize,
    pub loss: LossSpec,
    pub topology: TopologySpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default = "default_channel")]
    pub channel: ChannelKind,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub batch: Option<usize>,
    /// Record `||grad f(xbar(t))||^2` at every t (needed by the mean-based
    /// rate measures), not just at recorded rows.
    #[serde(default)]
    pub dense_grad_norms: bool,
    #[serde(default)]
    pub init: InitSpec,
}

impl RunConfig {
    /// Check cross-field invariants, returning the violated constraint.
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.agents < 2 {
            return Err(EngineError::Config(format!(
                "agents: need at least 2 agents, got {}",
                self.agents
            )));
        }
        if self.horizon < 1 {
            return Err(EngineError::Config("horizon: must be >= 1".into()));
        }
        if self.record_every < 1 {
            return Err(EngineError::Config("record_every: must be >= 1".into()));
        }
        if self.loss.n_points() < self.agents {
            return Err(EngineError::Config(format!(
                "loss.n_points: need at least one point per agent ({} < {})",
                self.loss.n_points(),
                self.agents
            )));
        }
        if let WeightsSpec::Explicit { r } = &self.weights {
            if r.len() != self.agents {
                return Err(EngineError::Config(format!(
                    "weights.r: has {} entries for {} agents",
                    r.len(),
                    self.agents
                )));
            }
        }
        if let WeightsSpec::Random { low, high } = self.weights {
            if !(low > 0.0 && high > low) {
                return Err(EngineError::Config(
                    "weights: need 0 < low < high for random fractions".into(),
                ));
            }
        }
        self.schedule.params().map_err(|e| EngineError::Config(format!("schedule: {e}")))?;
        crate::lossy::gamma_for(&self.channel, self.loss.dim())
            .map_err(|e| EngineError::Config(format!("channel: {e}")))?;
        if let Some(b) = self.batch {
            if b == 0 {
                return Err(EngineError::Config("batch: must be >= 1 when given".into()));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Trajectory recording
// ---------------------------------------------------------------------------

/// One recorded row of per-iteration metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub net_variance: f64,
    pub grad_norm_sq_at_mean: f64,
    pub f_at_mean: f64,
    pub max_row_norm_sq: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceInfo {
    pub t: u64,
    pub agent: usize,
    pub row_norm_sq: f64,
}

/// Metrics collected over one run. Rows are strided (plus log-spaced
/// checkpoints and both endpoints); the dense series cover every t up to
/// where the run stopped.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub dense_net_variance: Vec<f64>,
    pub dense_grad_norm_sq: Option<Vec<f64>>,
    pub divergence: Option<DivergenceInfo>,
    /// Running max of `||x_i(t)||^2` over the whole run.
    pub max_row_norm_sq_observed: f64,
    /// Whether the channel's configured norm cap `D` was ever exceeded.
    pub norm_cap_exceeded: bool,
    pub realized_r: Vec<f64>,
    pub smoothness: f64,
    pub sigma_sq: f64,
    pub schedule_descriptor: ScheduleDescriptor,
    pub gamma_bound: f64,
}

impl TrajectoryRecord {
    pub fn final_row(&self) -> &TrajectoryRow {
        self.rows.last().expect("runs record at least t = 1")
    }
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

/// Instrumentation for one step `t -> t + 1`.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub t: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Realized noise `E(t)`: row i is `xhat_i - sum_j W_ij x_j`.
    pub noise: Mat,
    /// Local gradients at the pre-update states; row i is `grad f_i(x_i(t))`.
    pub grads: Mat,
    /// Exact mixed states `W(t) X(t)`.
    pub mixed: Mat,
}

/// Assembled run: data, partition, topology, channel, and current state.
pub struct DimixEngine {
    model: LossModel,
    data: Dataset,
    part: Partition,
    schedule: WeightSchedule,
    channel: LossyChannel,
    params: ScheduleParams,
    batch: Option<usize>,
    seed: u64,
    state: StateMatrix,
    max_row_norm_sq: f64,
}

impl DimixEngine {
    /// Build everything a run needs from its config. The stationary
    /// distribution is canonicalized to the realized data fractions
    /// `m_i / N` so the ERM decomposition is exact.
    pub fn from_config(config: &RunConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let n = config.agents;
        let data = config.loss.generate(config.seed);
        let d = data.dim();
        let requested_r = match &config.weights {
            WeightsSpec::Uniform => StochasticVector::uniform(n),
            WeightsSpec::Random { low, high } => {
                StochasticVector::random_fractions(n, *low, *high, config.seed)
            }
            WeightsSpec::Explicit { r } => StochasticVector::new(r.clone())?,
        };
        let part = partition(&data, &requested_r, config.seed)?;
        if let Some(b) = config.batch {
            let smallest = part.block_sizes().into_iter().min().unwrap_or(0);
            if b > smallest {
                return Err(EngineError::Config(format!(
                    "batch: {b} exceeds the smallest agent block ({smallest} points)"
                )));
            }
        }
        let r = part.realized_r().clone();
        let schedule = match config.topology {
            TopologySpec::CycleFixed => make_cycle_fixed(&r)?,
            TopologySpec::CyclicGossip => make_cyclic_gossip(&r)?,
            TopologySpec::ErFixed { edge_prob, mixing } => {
                make_er_fixed(n, edge_prob, &r, mixing, config.seed)?
            }
        };
        let channel = LossyChannel::new(config.channel, d)?;
        let params = config.schedule.params()?;
        let mut state = StateMatrix::zeros(n, d);
        if let InitSpec::Uniform { scale } = config.init {
            let mut rng = keyed_rng(&[config.seed, domain::INIT]);
            for i in 0..n {
                for j in 0..d {
                    state.mat.set(i, j, rand::Rng::gen_range(&mut rng, -scale..scale));
                }
            }
        }
        let max_row_norm_sq = state.mat.max_row_norm_sq();
        Ok(Self {
            model: config.loss.model(),
            data,
            part,
            schedule,
            channel,
            params,
            batch: config.batch,
            seed: config.seed,
            state,
            max_row_norm_sq,
        })
    }

    pub fn state(&self) -> &StateMatrix {
        &self.state
    }

    pub fn schedule(&self) -> &WeightSchedule {
        &self.schedule
    }

    pub fn channel(&self) -> &LossyChannel {
        &self.channel
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn model(&self) -> &LossModel {
        &self.model
    }

    pub fn partition(&self) -> &Partition {
        &self.part
    }

    pub fn r(&self) -> &StochasticVector {
        self.schedule.r()
    }

    /// Value and gradient of the global objective at `x`.
    pub fn global_value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.model.value_grad(x, &self.data, None).expect("dimensions fixed at construction")
    }

    /// Advance one synchronous iteration, returning its instrumentation.
    /// Fails (and freezes the state) if any updated row leaves the finite
    /// divergence budget.
    pub fn step(&mut self) -> Result<StepTrace, DivergenceInfo> {
        let t = self.state.t;
        let n = self.state.mat.rows();
        let d = self.state.mat.cols();
        let alpha = self.params.alpha_at(t);
        let beta = self.params.beta_at(t);
        let w = self.schedule.matrix_at(t);

        let mut next = Mat::zeros(n, d);
        let mut noise = Mat::zeros(n, d);
        let mut grads = Mat::zeros(n, d);
        let mut mixed = Mat::zeros(n, d);
        for i in 0..n {
            let w_row = w.row(i);
            // Exact weighted average, always computed for the noise record.
            let exact = {
                let mut acc = vec![0.0; d];
                for (j, &weight) in w_row.iter().enumerate() {
                    if weight != 0.0 {
                        crate::linalg::axpy(&mut acc, weight, self.state.mat.row(j));
                    }
                }
                acc
            };
            let estimate = if self.channel.is_perfect() {
                exact.clone()
            } else {
                neighbor_estimate(&self.state.mat, w_row, &self.channel, i, t, self.seed)
                    .expect("dimensions fixed at construction")
            };
            let grad = {
                let mut rng = keyed_rng(&[self.seed, domain::BATCH, t, i as u64]);
                local_grad(
                    &self.model,
                    &self.data,
                    &self.part,
                    i,
                    self.state.mat.row(i),
                    self.batch,
                    &mut rng,
                )
                .expect("batch validated at construction")
            };
            let x_i = self.state.mat.row(i);
            let updated = dimix_update_row(x_i, &estimate, &grad, alpha, beta);
            let out = next.row_mut(i);
            for l in 0..d {
                out[l] = updated[l];
                noise.set(i, l, estimate[l] - exact[l]);
                grads.set(i, l, grad[l]);
                mixed.set(i, l, exact[l]);
            }
        }

        for i in 0..n {
            let row_norm = norm_sq(next.row(i));
            if !row_norm.is_finite() || row_norm > DIVERGENCE_NORM_SQ {
                return Err(DivergenceInfo { t: t + 1, agent: i, row_norm_sq: row_norm });
            }
            self.max_row_norm_sq = self.max_row_norm_sq.max(row_norm);
        }
        self.state = StateMatrix { mat: next, t: t + 1 };
        Ok(StepTrace { t, alpha, beta, noise, grads, mixed })
    }

    fn record_row(&self, t: u64) -> TrajectoryRow {
        let x_bar = weighted_average(&self.state.mat, self.schedule.r());
        let (f_at_mean, grad) = self.global_value_grad(&x_bar);
        TrajectoryRow {
            t,
            net_variance: network_variance(&self.state.mat, self.schedule.r()),
            grad_norm_sq_at_mean: norm_sq(&grad),
            f_at_mean,
            max_row_norm_sq: self.state.mat.max_row_norm_sq(),
            alpha: self.params.alpha_at(t),
            beta: self.params.beta_at(t),
        }
    }
}

/// Execute `horizon - 1` steps from `X(1)`, recording strided rows plus
/// log-spaced checkpoints; on divergence the partial record is returned
/// with the diagnostics filled in.
pub fn run(config: &RunConfig) -> Result<TrajectoryRecord, EngineError> {
    let mut engine = DimixEngine::from_config(config)?;
    let horizon = config.horizon;
    let mut record_at: Vec<u64> = crate::metrics::log_checkpoints(1, horizon, 20);
    record_at.extend((1..=horizon).step_by(config.record_every as usize));
    record_at.push(horizon);
    record_at.sort_unstable();
    record_at.dedup();

    let smoothness = engine.model.smoothness_estimate(&engine.data);
    let sigma_sq = crate::objectives::sigma_sq_estimate(&engine.model, &engine.data);
    let mut record = TrajectoryRecord {
        rows: Vec::with_capacity(record_at.len()),
        dense_net_variance: Vec::with_capacity(horizon as usize),
        dense_grad_norm_sq: if config.dense_grad_norms {
            Some(Vec::with_capacity(horizon as usize))
        } else {
            None
        },
        divergence: None,
        max_row_norm_sq_observed: engine.max_row_norm_sq,
        norm_cap_exceeded: false,
        realized_r: engine.r().as_slice().to_vec(),
        smoothness,
        sigma_sq,
        schedule_descriptor: engine.schedule.descriptor(),
        gamma_bound: engine.channel.gamma_bound(),
    };

    let mut next_record = record_at.iter().copied().peekable();
    for t in 1..=horizon {
        record.dense_net_variance.push(network_variance(&engine.state.mat, engine.r()));
        if let Some(dense) = record.dense_grad_norm_sq.as_mut() {
            let x_bar = weighted_average(&engine.state.mat, engine.r());
            let (_, grad) = engine.global_value_grad(&x_bar);
            dense.push(norm_sq(&grad));
        }
        if next_record.peek() == Some(&t) {
            next_record.next();
            record.rows.push(engine.record_row(t));
        }
        if t == horizon {
            break;
        }
        if let Err(info) = engine.step() {
            record.divergence = Some(info);
            break;
        }
    }
    record.max_row_norm_sq_observed = engine.max_row_norm_sq;
    if let Some(cap) = engine.channel.norm_cap() {
        record.norm_cap_exceeded = engine.max_row_norm_sq > cap;
    }
    Ok(record)
}
