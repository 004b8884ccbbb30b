//! Named experiment presets.
//!
//! Three families: the variance contrast between diminishing and fixed
//! step sizes on a fixed network, the fixed-cycle versus cyclic-gossip
//! comparison for linear regression, and the multi-seed rate sweeps used
//! to measure the decay exponent of the mean gradient-norm measure in the
//! four step-size regions.

use dimix_core::engine::{InitSpec, LossSpec, RunConfig, ScheduleSpec, TopologySpec, WeightsSpec};
use dimix_core::lossy::ChannelKind;

/// A preset expands to `seeds` runs of `config` with seeds
/// `base_seed .. base_seed + seeds`; sweeps aggregate their results.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    pub seeds: u64,
    pub config: RunConfig,
    /// Window for the rate fit on sweeps, when one applies.
    pub fit_window: Option<(f64, f64)>,
}

pub const PRESET_NAMES: &[&str] = &[
    "consensus-toy",
    "variance-diminishing",
    "variance-fixed",
    "linreg-cycle",
    "linreg-gossip",
    "rate-optimal",
    "rate-region-one",
    "rate-region-two",
    "rate-region-four",
    "rate-smoke",
];

fn variance_base() -> RunConfig {
    RunConfig {
        agents: 20,
        loss: LossSpec::LogisticRegressionL2 {
            n_points: 2000,
            dim: 50,
            reg: 0.01,
            feature_scale: 22.0,
            label_flip: 0.15,
        },
        topology: TopologySpec::ErFixed { edge_prob: 0.3, mixing: 0.95 },
        weights: WeightsSpec::Uniform,
        channel: ChannelKind::StochasticQuantizer { levels: 3, norm_cap: 400.0 },
        schedule: ScheduleSpec::Diminishing {
            alpha0: 0.005,
            nu: 1.0 / 6.0,
            beta0: 0.6,
            mu: 0.5,
            tau: 2000.0,
        },
        horizon: 7500,
        seed: 0,
        record_every: 1,
        batch: None,
        dense_grad_norms: false,
        init: InitSpec::Uniform { scale: 1.0 },
    }
}

fn linreg_base() -> RunConfig {
    RunConfig {
        agents: 20,
        loss: LossSpec::LinearRegression {
            n_points: 300,
            dim: 100,
            noise_hi: 0.1,
            centered: false,
            feature_scale: 1.0,
        },
        topology: TopologySpec::CycleFixed,
        weights: WeightsSpec::Random { low: 0.01, high: 0.9 },
        channel: ChannelKind::StochasticQuantizer { levels: 6, norm_cap: 2000.0 },
        schedule: ScheduleSpec::Diminishing {
            alpha0: 6.0,
            nu: 0.25,
            beta0: 16.0,
            mu: 0.75,
            tau: 1500.0,
        },
        horizon: 20_000,
        seed: 0,
        record_every: 10,
        batch: None,
        dense_grad_norms: false,
        init: InitSpec::Zeros,
    }
}

fn rate_base(nu: f64, mu: f64, horizon: u64) -> RunConfig {
    RunConfig {
        agents: 10,
        loss: LossSpec::LinearRegression {
            n_points: 200,
            dim: 20,
            noise_hi: 0.1,
            centered: true,
            feature_scale: 3.0,
        },
        topology: TopologySpec::CyclicGossip,
        weights: WeightsSpec::Uniform,
        channel: ChannelKind::StochasticQuantizer { levels: 6, norm_cap: 400.0 },
        schedule: ScheduleSpec::Diminishing { alpha0: 0.1, nu, beta0: 0.6, mu, tau: 0.0 },
        horizon,
        seed: 0,
        record_every: 100,
        batch: None,
        dense_grad_norms: true,
        init: InitSpec::Zeros,
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    let p = match name {
        "consensus-toy" => Preset {
            name: "consensus-toy",
            about: "minimal quadratic problem on a 4-agent cycle with a perfect channel",
            seeds: 1,
            config: RunConfig {
                agents: 4,
                loss: LossSpec::QuadraticToy { n_points: 400, dim: 10, condition: 10.0 },
                topology: TopologySpec::CycleFixed,
                weights: WeightsSpec::Uniform,
                channel: ChannelKind::Perfect,
                schedule: ScheduleSpec::default(),
                horizon: 10_000,
                seed: 0,
                record_every: 10,
                batch: None,
                dense_grad_norms: false,
                init: InitSpec::Zeros,
            },
            fit_window: None,
        },
        "variance-diminishing" => Preset {
            name: "variance-diminishing",
            about: "network variance under diminishing step sizes, quantized logistic regression",
            seeds: 1,
            config: variance_base(),
            fit_window: None,
        },
        "variance-fixed" => Preset {
            name: "variance-fixed",
            about: "network variance under fixed step sizes (0.001, 0.01), same problem",
            seeds: 1,
            config: RunConfig {
                schedule: ScheduleSpec::Fixed { alpha: 0.001, beta: 0.01 },
                ..variance_base()
            },
            fit_window: None,
        },
        "linreg-cycle" => Preset {
            name: "linreg-cycle",
            about: "100-dim linear regression on the fixed weighted cycle",
            seeds: 1,
            config: linreg_base(),
            fit_window: None,
        },
        "linreg-gossip" => Preset {
            name: "linreg-gossip",
            about: "same regression on single-edge cyclic gossip",
            seeds: 1,
            config: RunConfig { topology: TopologySpec::CyclicGossip, ..linreg_base() },
            fit_window: None,
        },
        "rate-optimal" => Preset {
            name: "rate-optimal",
            about: "5-seed rate sweep at (nu, mu) = (1/6, 1/2)",
            seeds: 5,
            config: rate_base(1.0 / 6.0, 0.5, 100_000),
            fit_window: Some((1e3, 1e5)),
        },
        "rate-region-one" => Preset {
            name: "rate-region-one",
            about: "5-seed rate sweep at (nu, mu) = (0.1, 0.7)",
            seeds: 5,
            config: rate_base(0.1, 0.7, 100_000),
            fit_window: Some((1e3, 1e5)),
        },
        "rate-region-two" => Preset {
            name: "rate-region-two",
            about: "5-seed rate sweep at (nu, mu) = (0.3, 0.45)",
            seeds: 5,
            config: rate_base(0.3, 0.45, 100_000),
            fit_window: Some((1e3, 1e5)),
        },
        "rate-region-four" => Preset {
            name: "rate-region-four",
            about: "5-seed rate sweep at (nu, mu) = (0.1, 0.25)",
            seeds: 5,
            config: rate_base(0.1, 0.25, 100_000),
            fit_window: Some((1e3, 1e5)),
        },
        "rate-smoke" => Preset {
            name: "rate-smoke",
            about: "short 5-seed sweep for determinism and plumbing checks",
            seeds: 5,
            config: rate_base(1.0 / 6.0, 0.5, 2_000),
            fit_window: None,
        },
        _ => return None,
    };
    Some(p)
}

/// The run configs a preset expands to, seeds `base .. base + seeds`.
pub fn expand(p: &Preset, base_seed: u64) -> Vec<RunConfig> {
    (0..p.seeds)
        .map(|k| RunConfig { seed: base_seed + k, ..p.config.clone() })
        .collect()
}
