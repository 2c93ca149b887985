//! Simulation and analysis of cascaded phase-insensitive parametric amplifiers.
//!
//! The crate models chains of amplifiers seeded by one coherent probe, computes
//! the intensity-difference noise of any photocurrent combination of the output
//! beams relative to the shot-noise limit, and ships the tools around it:
//!
//! - [`bogoliubov`]: linear bosonic networks and Gaussian moment propagation
//! - [`photodetection`]: linearized photocurrent noise and shot-noise calibration
//! - [`cascade`]: declarative scenarios, analytic noise formulas, config files
//! - [`fit`]: loss-budget fitting against measured squeezing
//! - [`sweep`]: noise-vs-power sweeps and slope ratios
//! - [`fock`]: exact truncated number-basis reference for small chains
//! - [`timeseries`]: synthetic photocurrents and spectrum-analyzer emulation
//! - [`cli`]: the command implementations behind the `cascade-squeeze` binary

pub mod bogoliubov;
pub mod cascade;
pub mod cli;
pub mod fit;
pub mod fock;
pub mod optimize;
pub mod photodetection;
pub mod sweep;
pub mod timeseries;

pub use bogoliubov::{BogoliubovTransform, MeanField, ModeRegistry, QuadratureCovariance};
pub use cascade::{
    analytic_chain_ratio, pairwise_ratio, run_scenario, CascadeSpec, PlanSpec, ScenarioResult,
    Stage,
};
pub use photodetection::{photocurrent_noise, snl_calibration_sim, DetectionPlan, NoiseReport};
