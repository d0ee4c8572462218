use alloc::vec::Vec;

use super::{draw_schedule, FptEngine, FptSample, RunOutcome, SampleKind, SamplerError};
use crate::model::MarketModel;
use crate::stochastic::{correlated_normals_into, sample_jump_sizes_into, Purpose, RngStream};

/// Euler scheme on a uniform grid. Jumps are applied at the end of the step
/// containing their instant and a firm defaults at the first grid time where
/// its log-value is at or below the threshold.
#[derive(Debug, Clone)]
pub struct ConventionalEngine {
    model: MarketModel,
    step: f64,
    steps: usize,
    rows: Vec<Vec<f64>>,
}

impl ConventionalEngine {
    pub fn new(model: MarketModel, delta: f64) -> Result<Self, SamplerError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(SamplerError::InvalidStep(delta));
        }
        let horizon = model.horizon();
        let steps = libm::ceil(horizon / delta - 1e-9) as usize;
        if steps < 2 {
            return Err(SamplerError::StepTooLarge { delta, horizon });
        }
        let rows = model.firms().iter().map(|f| f.sigma_row().to_vec()).collect();
        Ok(Self { step: horizon / steps as f64, steps, model, rows })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl FptEngine for ConventionalEngine {
    fn model(&self) -> &MarketModel {
        &self.model
    }

    fn simulate_run(&self, seed: u64, run: u64) -> RunOutcome {
        let model = &self.model;
        let firms = model.firms();
        let d = firms.len();
        let schedule = draw_schedule(model, seed, run);
        let (instants, types) = (schedule.instants(), schedule.shock_types());

        let mut diffusion = RngStream::for_purpose(seed, run, Purpose::Diffusion);
        let mut jump_rng = RngStream::for_purpose(seed, run, Purpose::JumpSizes);

        let mut x: Vec<f64> = firms.iter().map(|f| f.x0()).collect();
        let mut samples: Vec<Option<FptSample>> = alloc::vec![None; d];
        let mut live = d;
        let mut z = alloc::vec![0.0; d];
        let mut increments = alloc::vec![0.0; d];
        let mut scratch = alloc::vec![0.0; d];
        let mut jumps = alloc::vec![0.0; d];
        let mut next_jump = 0;

        for k in 1..=self.steps {
            let t = if k == self.steps { model.horizon() } else { k as f64 * self.step };
            correlated_normals_into(&self.rows, self.step, &mut diffusion, &mut z, &mut increments);
            for (xi, (firm, inc)) in x.iter_mut().zip(firms.iter().zip(&increments)) {
                *xi += firm.drift() * self.step + inc;
            }
            while next_jump < instants.len() && (instants[next_jump] <= t || k == self.steps) {
                let shock = types[next_jump];
                sample_jump_sizes_into(
                    firms.iter().map(|f| &f.jump_laws()[shock]),
                    model.jump_factor(),
                    &mut jump_rng,
                    &mut scratch,
                    &mut jumps,
                );
                for (xi, j) in x.iter_mut().zip(&jumps) {
                    *xi += j;
                }
                next_jump += 1;
            }
            for (i, firm) in firms.iter().enumerate() {
                if samples[i].is_none() && x[i] <= firm.threshold().at(t) {
                    samples[i] =
                        Some(FptSample { firm: i, time: t, weight: 1.0, kind: SampleKind::Interior, crossing_time: t });
                    live -= 1;
                }
            }
            if live == 0 {
                break;
            }
        }
        RunOutcome::new(run, samples)
    }
}
