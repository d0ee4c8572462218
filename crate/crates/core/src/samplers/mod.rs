//! Simulation engines producing weighted first-passage samples.
//!
//! Every engine implements [`FptEngine`]: one call simulates one Monte-Carlo
//! run from its own counter-based streams, so runs can be executed in any
//! order or on any number of workers and still reproduce bit for bit.

use alloc::vec::Vec;
use thiserror::Error;

use crate::model::MarketModel;
use crate::stochastic::{merge_shock_schedules, sample_shock_instants, JumpSchedule, Purpose, RngStream, SouError};

mod conventional;
mod munif;

pub use conventional::ConventionalEngine;
pub use munif::MunifEngine;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("time step {delta} must split the horizon {horizon} into at least 2 steps")]
    StepTooLarge { delta: f64, horizon: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("bridge correlation between firms 0 and {firm}: {source}")]
    BridgeCorrelation { firm: usize, source: SouError },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Where a first-passage sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    /// Crossing inside an inter-jump interval (or on the Euler grid).
    Interior,
    /// A jump carried the firm below its threshold.
    RightBoundary,
}

/// A weighted first-passage sample.
///
/// `time` is where the kernel of the density estimate is centred and
/// `weight` its mass: an interior uniform-sampling candidate carries
/// `b_ij` times the unconditioned crossing density at `time`, which equals
/// `tau * g(time)` for the conditional density `g`. `crossing_time` is a
/// draw from the exact conditional law of the crossing obtained from the same
/// uniform, so `crossing_time <= t` indicators need no weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FptSample {
    pub firm: usize,
    pub time: f64,
    pub weight: f64,
    pub kind: SampleKind,
    pub crossing_time: f64,
}

/// The result of one Monte-Carlo run: at most one sample per firm.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: u64,
    samples: Vec<Option<FptSample>>,
}

impl RunOutcome {
    pub fn new(run: u64, samples: Vec<Option<FptSample>>) -> Self {
        Self { run, samples }
    }

    pub fn samples(&self) -> &[Option<FptSample>] {
        &self.samples
    }

    pub fn sample(&self, firm: usize) -> Option<&FptSample> {
        self.samples.get(firm).and_then(Option::as_ref)
    }

    pub fn is_default(&self, firm: usize) -> bool {
        self.sample(firm).is_some()
    }

    /// The per-firm default flags.
    pub fn default_flags(&self) -> Vec<bool> {
        self.samples.iter().map(Option::is_some).collect()
    }

    /// Whether the firm defaulted by `t`, judged by its crossing time.
    pub fn defaulted_by(&self, firm: usize, t: f64) -> bool {
        self.sample(firm).is_some_and(|s| s.crossing_time <= t)
    }
}

/// Which case applies to a live firm on one inter-jump interval, decided
/// before any uniform is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentCase {
    /// The bridge ends at or below the threshold: a crossing inside the
    /// interval is certain.
    CrossingCertain,
    /// Both bridge ends are above the threshold and so is the post-jump
    /// value: the firm defaults only if a crossing candidate is accepted.
    InteriorPossible,
    /// As [`SegmentCase::InteriorPossible`], but the jump at the right end
    /// takes the firm below the threshold, so a rejected candidate makes the
    /// jump instant the first passage time.
    RightBoundaryDefault,
    /// The crossing probability is below [`crate::bridge::EPS_REJECT`] and the
    /// post-jump value is above the threshold.
    Survived,
}

/// Classifies a segment from the distances to the threshold at the left end
/// (`start`), just before the right-end jump (`before_jump`) and just after
/// it (`after_jump`), for a bridge of duration `tau` and volatility `sigma`.
pub fn endpoint_case_classifier(start: f64, before_jump: f64, after_jump: f64, tau: f64, sigma: f64) -> SegmentCase {
    if before_jump <= 0.0 {
        return SegmentCase::CrossingCertain;
    }
    let no_crossing = tau <= 0.0 || 2.0 * start * before_jump / (tau * sigma * sigma) > -libm::log(crate::bridge::EPS_REJECT);
    match (after_jump <= 0.0, no_crossing) {
        (true, _) => SegmentCase::RightBoundaryDefault,
        (false, true) => SegmentCase::Survived,
        (false, false) => SegmentCase::InteriorPossible,
    }
}

/// One Monte-Carlo run at a time.
pub trait FptEngine: Sync {
    fn model(&self) -> &MarketModel;

    /// Simulates run `run` of the experiment seeded with `seed`.
    fn simulate_run(&self, seed: u64, run: u64) -> RunOutcome;
}

/// Runs `0..runs` in ascending order on the calling thread.
pub fn simulate_sequential<E: FptEngine + ?Sized>(engine: &E, runs: usize, seed: u64) -> Vec<RunOutcome> {
    (0..runs as u64).map(|run| engine.simulate_run(seed, run)).collect()
}

/// Euler-scheme simulation with step `delta`.
pub fn simulate_conventional(
    model: &MarketModel,
    delta: f64,
    runs: usize,
    seed: u64,
) -> Result<Vec<RunOutcome>, SamplerError> {
    let engine = ConventionalEngine::new(model.clone(), delta)?;
    Ok(simulate_sequential(&engine, runs, seed))
}

/// Uniform-sampling simulation evaluating the processes at jump instants only.
pub fn simulate_munif(model: &MarketModel, runs: usize, seed: u64) -> Result<Vec<RunOutcome>, SamplerError> {
    let engine = MunifEngine::new(model.clone())?;
    Ok(simulate_sequential(&engine, runs, seed))
}

/// Univariate uniform sampling of one firm on its own.
pub fn simulate_unif(model: &MarketModel, firm: usize, runs: usize, seed: u64) -> Result<Vec<RunOutcome>, SamplerError> {
    let marginal = model.marginal(firm).map_err(SamplerError::Model)?;
    simulate_munif(&marginal, runs, seed)
}

/// Merged shock schedule of one run; both engines draw it identically.
pub(crate) fn draw_schedule(model: &MarketModel, seed: u64, run: u64) -> JumpSchedule {
    let per_shock: Vec<Vec<f64>> = model
        .shock_intensities()
        .iter()
        .enumerate()
        .map(|(k, &intensity)| {
            let mut rng = RngStream::for_purpose(seed, run, Purpose::Schedule(k as u32));
            sample_shock_instants(intensity, model.horizon(), model.gap_convention(), &mut rng)
        })
        .collect();
    merge_shock_schedules(&per_shock)
}

/// Samples of one firm across runs, in run order.
pub fn firm_samples(outcomes: &[RunOutcome], firm: usize) -> Vec<FptSample> {
    outcomes.iter().filter_map(|o| o.sample(firm).copied()).collect()
}
