use alloc::vec::Vec;

use super::{draw_schedule, endpoint_case_classifier, FptEngine, FptSample, RunOutcome, SampleKind, SamplerError, SegmentCase};
use crate::bridge::BridgeSegment;
use crate::model::MarketModel;
use crate::stochastic::{correlated_normals_into, sample_jump_sizes_into, Purpose, RngStream, SouFamily, SouTable};

/// Multivariate uniform-sampling engine.
///
/// Per run: draw and merge the shock schedules; on every interval between
/// consecutive events draw correlated pre-jump values, apply the jump of the
/// event's shock type, and for each live firm either accept a uniform
/// crossing candidate inside the interval, register a default at the jump,
/// or let it survive. The last interval runs to the horizon with no jump.
///
/// The crossing candidates of one interval share a sum-of-uniforms family
/// whose member `k` has correlation `bridge_correlations[0][k]` with member 0.
#[derive(Debug, Clone)]
pub struct MunifEngine {
    model: MarketModel,
    family: SouFamily,
    rows: Vec<Vec<f64>>,
}

impl MunifEngine {
    pub fn new(model: MarketModel) -> Result<Self, SamplerError> {
        Self::with_table(model, &SouTable::embedded())
    }

    pub fn with_table(model: MarketModel, table: &SouTable) -> Result<Self, SamplerError> {
        let targets: Vec<f64> = (0..model.firm_count()).map(|k| model.bridge_correlations().get(0, k)).collect();
        let family = SouFamily::new(table, &targets).map_err(|source| {
            let firm = targets.iter().position(|&r| r < 0.0).unwrap_or(0);
            SamplerError::BridgeCorrelation { firm, source }
        })?;
        let rows = model.firms().iter().map(|f| f.sigma_row().to_vec()).collect();
        Ok(Self { model, family, rows })
    }

    pub fn family(&self) -> &SouFamily {
        &self.family
    }
}

impl FptEngine for MunifEngine {
    fn model(&self) -> &MarketModel {
        &self.model
    }

    fn simulate_run(&self, seed: u64, run: u64) -> RunOutcome {
        let model = &self.model;
        let firms = model.firms();
        let d = firms.len();
        let horizon = model.horizon();
        let schedule = draw_schedule(model, seed, run);

        let mut diffusion = RngStream::for_purpose(seed, run, Purpose::Diffusion);
        let mut jump_rng = RngStream::for_purpose(seed, run, Purpose::JumpSizes);
        let mut uniform_rng = RngStream::for_purpose(seed, run, Purpose::CrossingUniforms);

        let mut x: Vec<f64> = firms.iter().map(|f| f.x0()).collect();
        let mut samples: Vec<Option<FptSample>> = alloc::vec![None; d];
        let mut live = d;
        let mut z = alloc::vec![0.0; d];
        let mut increments = alloc::vec![0.0; d];
        let mut scratch = alloc::vec![0.0; d];
        let mut jumps = alloc::vec![0.0; d];
        let mut y = alloc::vec![0.0; d];

        let events = schedule.iter().map(|(t, k)| (t, Some(k))).chain(core::iter::once((horizon, None)));
        let mut t_prev = 0.0;
        for (t, shock) in events {
            if live == 0 {
                break;
            }
            let tau = t - t_prev;
            correlated_normals_into(&self.rows, tau.max(0.0), &mut diffusion, &mut z, &mut increments);
            match shock {
                Some(k) => sample_jump_sizes_into(
                    firms.iter().map(|f| &f.jump_laws()[k]),
                    model.jump_factor(),
                    &mut jump_rng,
                    &mut scratch,
                    &mut jumps,
                ),
                None => jumps.fill(0.0),
            }
            self.family.draw_into(&mut uniform_rng, &mut y);

            for (i, firm) in firms.iter().enumerate() {
                if samples[i].is_some() {
                    continue;
                }
                let threshold = firm.threshold();
                let d_start = threshold.at(t_prev);
                let d_end = threshold.at(t);
                let before = x[i] + firm.drift() * tau + increments[i];
                let after = before + jumps[i];
                let sigma = firm.effective_sigma();
                let case = endpoint_case_classifier(x[i] - d_start, before - d_end, after - d_end, tau, sigma);

                let mut hit = None;
                if tau > 0.0 && case != SegmentCase::Survived {
                    let segment = BridgeSegment::new(t_prev, t, x[i], before, d_start, d_end, sigma)
                        .expect("live firm on a non-empty interval");
                    hit = interior_crossing(&segment, i, y[i]);
                }
                if hit.is_none() && after - d_end <= 0.0 {
                    hit = Some(FptSample { firm: i, time: t, weight: 1.0, kind: SampleKind::RightBoundary, crossing_time: t });
                }
                if hit.is_some() {
                    samples[i] = hit;
                    live -= 1;
                }
                x[i] = after;
            }
            t_prev = t;
        }
        RunOutcome::new(run, samples)
    }
}

fn interior_crossing(segment: &BridgeSegment, firm: usize, y: f64) -> Option<FptSample> {
    let candidate = segment.crossing_candidate(y).ok()?;
    if !candidate.accepted {
        return None;
    }
    let tau = segment.duration();
    let offset = candidate.time - segment.t_start();
    let weight = tau * segment.density_at_offset(offset);
    let crossing_time = segment.crossing_time_quantile(offset / tau);
    Some(FptSample { firm, time: candidate.time, weight, kind: SampleKind::Interior, crossing_time })
}
