//! First-passage-time Monte-Carlo for multivariate, correlated jump-diffusion
//! processes.
//!
//! The crate simulates the log-asset values of several firms driven by
//! correlated Brownian motion and one or more compound Poisson shocks, and
//! records the first time each firm falls to its Black-Cox default threshold.
//! Two engines are provided:
//!
//! * [`samplers::ConventionalEngine`] - a plain Euler scheme on a fixed grid.
//! * [`samplers::MunifEngine`] - the uniform-sampling engine, which evaluates
//!   the processes only at jump instants and treats every inter-jump interval
//!   as a Brownian bridge, drawing correlated crossing candidates from a
//!   sum-of-uniforms family.
//!
//! The weighted first-passage samples feed kernel density estimates with a
//! gamma plug-in bandwidth, cumulative default rates, default correlations and
//! a calibration loop against historical default tables.
//!
//! The crate is `no_std` (with `alloc`); file formats, the command line and
//! parallel execution live in the `fptmc` companion crate.
#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bridge;
pub mod calibration;
pub mod estimation;
pub mod model;
pub mod numeric;
pub mod samplers;
pub mod stochastic;

pub use bridge::BridgeSegment;
pub use estimation::{DensityEstimate, GammaFit};
pub use model::{CorrelationMatrix, FirmSpec, GapConvention, JumpLaw, MarketModel, Threshold};
pub use samplers::{FptSample, RunOutcome, SampleKind};
pub use stochastic::{JumpSchedule, RngStream};
