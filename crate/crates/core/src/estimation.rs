//! Densities, cumulative default rates and default correlations from
//! weighted first-passage samples.

use alloc::vec::Vec;
use thiserror::Error;

use crate::numeric::{integrate, integrate_to_infinity, normal_cdf, sqrt_pi, INV_SQRT_2PI};
use crate::samplers::{FptSample, RunOutcome};

/// Tolerance on the total mass of a density estimate.
pub const EPS_MASS: f64 = 0.02;

/// Grid points of the default density grid.
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("need at least 2 samples with positive total weight, got {0}")]
    TooFewSamples(usize),
    #[error("sample weights must be finite and non-negative")]
    InvalidWeight,
    #[error("samples have zero variance, the gamma fit is degenerate")]
    DegenerateFit,
    #[error("bandwidth needs n >= 2, got {0}")]
    TooFewRuns(usize),
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("curvature integral did not converge (estimate {value}, error {abs_error})")]
    Quadrature { value: f64, abs_error: f64 },
    #[error("default probabilities {p_a} and {p_b} must lie strictly inside (0, 1)")]
    UndefinedCorrelation { p_a: f64, p_b: f64 },
    #[error("batch size must be at least 2, got {0}")]
    InvalidBatch(usize),
    #[error("{skipped} of {total} batches had degenerate marginals")]
    TooManyDegenerateBatches { skipped: usize, total: usize },
}

/// Gamma law with rate `alpha` and shape `beta`: mean `beta / alpha`,
/// variance `beta / alpha^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn variance(&self) -> f64 {
        self.beta / (self.alpha * self.alpha)
    }

    pub fn density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        libm::exp(self.log_density(t))
    }

    fn log_density(&self, t: f64) -> f64 {
        self.beta * libm::log(self.alpha) + (self.beta - 1.0) * libm::log(t) - self.alpha * t - libm::lgamma(self.beta)
    }

    /// Second derivative of the density.
    pub fn density_second_derivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.beta - 1.0;
        let slope = k / t - self.alpha;
        self.density(t) * (slope * slope - k / (t * t))
    }

    /// Whether `(f'')^2` is integrable at 0. Apart from the shapes 1 and 2,
    /// where the leading singular term cancels, this needs `beta > 2.5`.
    pub fn curvature_integrable(&self) -> bool {
        self.beta > 2.5 || self.beta == 1.0 || self.beta == 2.0
    }
}

/// Weighted method-of-moments gamma fit to the sample times.
pub fn fit_gamma_moments(samples: &[FptSample]) -> Result<GammaFit, EstimationError> {
    fit_gamma_weighted(samples.iter().map(|s| (s.time, s.weight)))
}

/// As [`fit_gamma_moments`] for plain `(time, weight)` pairs.
pub fn fit_gamma_weighted<I: IntoIterator<Item = (f64, f64)>>(samples: I) -> Result<GammaFit, EstimationError> {
    let (mut count, mut total, mut sum) = (0usize, 0.0, 0.0);
    let points: Vec<(f64, f64)> = samples.into_iter().collect();
    for &(t, w) in &points {
        if !(w >= 0.0 && w.is_finite() && t.is_finite()) {
            return Err(EstimationError::InvalidWeight);
        }
        count += 1;
        total += w;
        sum += w * t;
    }
    if count < 2 || total <= 0.0 {
        return Err(EstimationError::TooFewSamples(count));
    }
    let mean = sum / total;
    let variance = points.iter().map(|&(t, w)| w * (t - mean) * (t - mean)).sum::<f64>() / total;
    if !(variance > 0.0) || !(mean > 0.0) {
        return Err(EstimationError::DegenerateFit);
    }
    Ok(GammaFit { alpha: mean / variance, beta: mean * mean / variance })
}

/// Plug-in bandwidth and the curvature integral behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub h: f64,
    /// `∫ (f'')^2 dt` of the gamma stand-in.
    pub curvature: f64,
    /// Set when the integrand is singular at 0 and the integral was started
    /// at this time instead.
    pub truncated_at: Option<f64>,
}

/// `∫_{t0}^∞ (f'')^2 dt` for the gamma law by adaptive quadrature.
pub fn curvature_integral(fit: &GammaFit, t0: f64, rel_tol: f64) -> Result<f64, EstimationError> {
    // integrate in units of 1/alpha: ∫(f'')^2 dt = alpha^5 ∫(f_1'')^2 du
    let unit = GammaFit { alpha: 1.0, beta: fit.beta };
    let u0 = t0 * fit.alpha;
    let integrand = |u: f64| {
        let v = unit.density_second_derivative(u);
        v * v
    };
    // split at the mode region so the tail map does not swallow the peak
    let split = u0 + (fit.beta + 4.0 * libm::sqrt(fit.beta)).max(1.0);
    let head = integrate(integrand, u0, split, rel_tol, 0.0, 4000);
    let tail = integrate_to_infinity(integrand, split, rel_tol, 0.0, 4000);
    let value = head.value + tail.value;
    if !(head.converged && tail.converged) || !value.is_finite() {
        return Err(EstimationError::Quadrature { value, abs_error: head.abs_error + tail.abs_error });
    }
    Ok(libm::pow(fit.alpha, 5.0) * value)
}

/// Gaussian-kernel bandwidth `h = (2 n sqrt(pi) ∫(f'')^2)^(-1/5)` with the
/// gamma fit standing in for the unknown density.
///
/// When `(f'')^2` is not integrable at 0 the integral starts at a thousandth
/// of the fitted mean and [`Bandwidth::truncated_at`] reports it.
pub fn optimal_bandwidth(fit: &GammaFit, n: usize) -> Result<Bandwidth, EstimationError> {
    if n < 2 {
        return Err(EstimationError::TooFewRuns(n));
    }
    let truncated_at = (!fit.curvature_integrable()).then(|| 1e-3 * fit.mean());
    let curvature = curvature_integral(fit, truncated_at.unwrap_or(0.0), 1e-10)?;
    let h = libm::pow(2.0 * n as f64 * sqrt_pi() * curvature, -0.2);
    Ok(Bandwidth { h, curvature, truncated_at })
}

/// Kernel density estimate on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub n_runs: usize,
    /// Sum of the sample weights divided by `n_runs`.
    pub total_weighted_mass: f64,
}

impl DensityEstimate {
    /// Trapezoidal integral of the density over the whole grid.
    pub fn grid_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.values, f64::INFINITY)
    }
}

/// `points` equally spaced times covering `[0, horizon]`.
pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => alloc::vec![0.0],
        _ => {
            let step = horizon / (points - 1) as f64;
            (0..points).map(|k| if k == points - 1 { horizon } else { k as f64 * step }).collect()
        }
    }
}

/// `f(t) = (1/n_runs) Σ w_k K_h(t - s_k)` with a Gaussian kernel.
pub fn kde_density(samples: &[FptSample], h: f64, grid: &[f64], n_runs: usize) -> Result<DensityEstimate, EstimationError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(EstimationError::InvalidBandwidth(h));
    }
    let scale = if n_runs == 0 { 0.0 } else { 1.0 / n_runs as f64 };
    let norm = INV_SQRT_2PI / h;
    let values = grid
        .iter()
        .map(|&t| {
            let sum: f64 = samples
                .iter()
                .map(|s| {
                    let z = (t - s.time) / h;
                    s.weight * libm::exp(-0.5 * z * z)
                })
                .sum();
            sum * norm * scale
        })
        .collect();
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        values,
        bandwidth: h,
        n_runs,
        total_weighted_mass: samples.iter().map(|s| s.weight).sum::<f64>() * scale,
    })
}

/// Integral of the density from the first grid point to `t`, by the
/// trapezoidal rule with the last cell cut at `t`.
pub fn cumulative_default_rate(de: &DensityEstimate, t: f64) -> f64 {
    trapezoid(&de.grid, &de.values, t)
}

fn trapezoid(grid: &[f64], values: &[f64], upto: f64) -> f64 {
    let mut acc = 0.0;
    for (g, v) in grid.windows(2).zip(values.windows(2)) {
        let (t0, t1) = (g[0], g[1]);
        if upto <= t0 {
            break;
        }
        if upto >= t1 {
            acc += 0.5 * (v[0] + v[1]) * (t1 - t0);
        } else {
            let frac = (upto - t0) / (t1 - t0);
            let vt = v[0] + frac * (v[1] - v[0]);
            acc += 0.5 * (v[0] + vt) * (upto - t0);
            break;
        }
    }
    acc
}

/// Exact integral over `[0, t]` of the Gaussian-kernel estimate.
pub fn kernel_cdf(samples: &[FptSample], h: f64, n_runs: usize, t: f64) -> f64 {
    if n_runs == 0 {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|s| s.weight * (normal_cdf((t - s.time) / h) - normal_cdf(-s.time / h))).sum();
    sum / n_runs as f64
}

/// Fraction of runs whose crossing time is at or before `t`.
pub fn empirical_cdf(samples: &[FptSample], n_runs: usize, t: f64) -> f64 {
    if n_runs == 0 {
        return 0.0;
    }
    samples.iter().filter(|s| s.crossing_time <= t).count() as f64 / n_runs as f64
}

/// Weighted counterpart of [`empirical_cdf`] on the kernel centres.
pub fn weighted_empirical_cdf(samples: &[FptSample], n_runs: usize, t: f64) -> f64 {
    if n_runs == 0 {
        return 0.0;
    }
    samples.iter().filter(|s| s.time <= t).map(|s| s.weight).sum::<f64>() / n_runs as f64
}

fn correlation_from_counts(n: usize, a: usize, b: usize, both: usize) -> Result<f64, EstimationError> {
    let n = n as f64;
    let (p_a, p_b, p_ab) = (a as f64 / n, b as f64 / n, both as f64 / n);
    if !(p_a > 0.0 && p_a < 1.0 && p_b > 0.0 && p_b < 1.0) {
        return Err(EstimationError::UndefinedCorrelation { p_a, p_b });
    }
    let rho = (p_ab - p_a * p_b) / libm::sqrt(p_a * (1.0 - p_a) * p_b * (1.0 - p_b));
    Ok(rho.clamp(-1.0, 1.0))
}

fn count_defaults(outcomes: &[RunOutcome], pair: (usize, usize), t: f64) -> (usize, usize, usize) {
    outcomes.iter().fold((0, 0, 0), |(a, b, ab), o| {
        let da = o.defaulted_by(pair.0, t);
        let db = o.defaulted_by(pair.1, t);
        (a + da as usize, b + db as usize, ab + (da && db) as usize)
    })
}

/// Default correlation by `t` from default frequencies over all runs.
pub fn default_correlation(outcomes: &[RunOutcome], pair: (usize, usize), t: f64) -> Result<f64, EstimationError> {
    let (a, b, ab) = count_defaults(outcomes, pair, t);
    correlation_from_counts(outcomes.len(), a, b, ab)
}

/// Mean over consecutive batches of runs of the per-batch default correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchedCorrelation {
    pub value: f64,
    pub batches: usize,
    pub skipped: usize,
}

/// Splits the runs into consecutive batches of `batch` runs (a shorter final
/// batch is kept if it has at least 2 runs), computes the default correlation
/// in each and averages. Batches with a marginal of 0 or 1 are skipped; more
/// than half skipped is an error.
pub fn default_correlation_percycle(
    outcomes: &[RunOutcome],
    pair: (usize, usize),
    t: f64,
    batch: usize,
) -> Result<BatchedCorrelation, EstimationError> {
    if batch < 2 {
        return Err(EstimationError::InvalidBatch(batch));
    }
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for chunk in outcomes.chunks(batch).filter(|c| c.len() >= 2) {
        let (a, b, ab) = count_defaults(chunk, pair, t);
        match correlation_from_counts(chunk.len(), a, b, ab) {
            Ok(rho) => {
                sum += rho;
                used += 1;
            }
            Err(_) => skipped += 1,
        }
    }
    let total = used + skipped;
    if used == 0 || 2 * skipped > total {
        return Err(EstimationError::TooManyDegenerateBatches { skipped, total });
    }
    Ok(BatchedCorrelation { value: sum / used as f64, batches: used, skipped })
}
