//! Simulation engine for two time-scale decentralized gradient descent over
//! time-varying networks with lossy (quantized, sparsified, or noisy)
//! information sharing, plus the diagnostics used to verify its contraction
//! and convergence-rate behavior numerically.

pub mod engine;
pub mod linalg;
pub mod lossy;
pub mod metrics;
pub mod objectives;
pub mod rng;
pub mod schedules;
pub mod topology;
