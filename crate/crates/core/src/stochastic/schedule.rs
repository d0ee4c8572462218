use alloc::vec::Vec;

use super::RngStream;
use crate::model::GapConvention;

/// Arrival instants of a Poisson process with rate `intensity` on `(0, horizon]`.
pub fn sample_poisson_schedule(intensity: f64, horizon: f64, rng: &mut RngStream) -> Vec<f64> {
    sample_shock_instants(intensity, horizon, GapConvention::Intensity, rng)
}

/// Shock instants on `(0, horizon]` under the given gap convention.
pub fn sample_shock_instants(
    intensity: f64,
    horizon: f64,
    convention: GapConvention,
    rng: &mut RngStream,
) -> Vec<f64> {
    let mean_gap = match convention {
        GapConvention::Intensity => 1.0 / intensity,
        GapConvention::UnitMean => 1.0,
    };
    let mut instants = Vec::new();
    let mut t = 0.0;
    loop {
        t += mean_gap * rng.exp1();
        if t > horizon {
            return instants;
        }
        instants.push(t);
    }
}

/// Sorted jump instants of all shock types, with the type of each instant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpSchedule {
    instants: Vec<f64>,
    shock_types: Vec<usize>,
}

impl JumpSchedule {
    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    /// Zero-based shock index of every instant.
    pub fn shock_types(&self) -> &[usize] {
        &self.shock_types
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.instants.iter().copied().zip(self.shock_types.iter().copied())
    }
}

/// Merges per-shock ascending instant lists into one schedule. Exact ties are
/// ordered by shock index, lowest first.
pub fn merge_shock_schedules(per_shock: &[Vec<f64>]) -> JumpSchedule {
    let total = per_shock.iter().map(Vec::len).sum();
    let mut instants = Vec::with_capacity(total);
    let mut shock_types = Vec::with_capacity(total);
    let mut heads = alloc::vec![0usize; per_shock.len()];
    for _ in 0..total {
        let mut best: Option<(usize, f64)> = None;
        for (k, list) in per_shock.iter().enumerate() {
            if let Some(&t) = list.get(heads[k]) {
                if best.is_none_or(|(_, bt)| t < bt) {
                    best = Some((k, t));
                }
            }
        }
        let (k, t) = best.expect("remaining instants");
        heads[k] += 1;
        instants.push(t);
        shock_types.push(k);
    }
    JumpSchedule { instants, shock_types }
}
