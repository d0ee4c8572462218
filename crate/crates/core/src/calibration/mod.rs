//! Fitting per-firm diffusion and jump parameters to historical cumulative
//! default rates.
//!
//! Each firm is simulated on its own with the uniform-sampling engine under
//! a fixed seed, so the objective is a deterministic function of the
//! parameters. The curve `P(t)` is the integral of the kernel density
//! estimate, and a firm's misfit is `sqrt(sum_j ((P(t_j) - A(t_j)) / t_j)^2)`.
//! The total objective is the sum over firms; since the firms do not
//! interact it is minimised firm by firm.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

mod historical;
mod optimize;

pub use historical::{parse_historical_csv, HistoricalError, HistoricalTable, HISTORICAL_HEADER};
pub use optimize::{bfgs, nelder_mead, Minimum, OptimizerSettings};

use crate::estimation::{empirical_cdf, fit_gamma_moments, kernel_cdf, optimal_bandwidth};
use crate::model::{CorrelationMatrix, FirmSpec, GapConvention, JumpLaw, MarketModel, ModelError, Threshold};
use crate::samplers::{firm_samples, FptEngine, FptSample, MunifEngine, RunOutcome, SamplerError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("parameter {name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("runs per evaluation must be positive")]
    NoRuns,
    #[error("no historical tables to fit")]
    NoTables,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Historical(#[from] HistoricalError),
}

/// Free parameters of one firm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmParams {
    pub sigma: f64,
    pub intensity: f64,
    pub jump_mean: f64,
    pub jump_std: f64,
}

impl FirmParams {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (name, value) in [("sigma", self.sigma), ("lambda", self.intensity), ("sigma_z", self.jump_std)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CalibrationError::InvalidParameter { name, value });
            }
        }
        if !self.jump_mean.is_finite() {
            return Err(CalibrationError::InvalidParameter { name: "mu_z", value: self.jump_mean });
        }
        Ok(())
    }

    /// `(ln sigma, ln lambda, mu_z, ln sigma_z)`
    pub fn to_unconstrained(&self) -> [f64; 4] {
        [libm::log(self.sigma), libm::log(self.intensity), self.jump_mean, libm::log(self.jump_std)]
    }

    pub fn from_unconstrained(u: &[f64; 4]) -> Self {
        Self { sigma: libm::exp(u[0]), intensity: libm::exp(u[1]), jump_mean: u[2], jump_std: libm::exp(u[3]) }
    }
}

/// The fixed part of every firm: start value, threshold and drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conventions {
    pub x0: f64,
    pub log_kappa: f64,
    pub gamma: f64,
    pub drift: f64,
}

impl Default for Conventions {
    fn default() -> Self {
        Self { x0: 2.0, log_kappa: 0.0, gamma: -0.001, drift: -0.001 }
    }
}

/// One firm with one shock type, simulated to `horizon`.
pub fn single_firm_model(
    rating: &str,
    params: &FirmParams,
    conventions: &Conventions,
    horizon: f64,
    gap: GapConvention,
) -> Result<MarketModel, CalibrationError> {
    params.validate()?;
    let firm = FirmSpec::new(
        rating,
        conventions.drift,
        alloc::vec![params.sigma],
        alloc::vec![JumpLaw::new(params.jump_mean, params.jump_std)?],
        Threshold::from_log_kappa(conventions.log_kappa, conventions.gamma)?,
        conventions.x0,
    )?;
    Ok(MarketModel::new(alloc::vec![firm], alloc::vec![params.intensity], horizon, CorrelationMatrix::identity(1))?
        .with_gap_convention(gap))
}

/// Executes runs `0..runs` of an engine; implementations may parallelise but
/// must return the outcomes in run order.
pub trait RunExecutor {
    fn execute(&self, engine: &dyn FptEngine, runs: usize, seed: u64) -> Vec<RunOutcome>;
}

/// Runs on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl RunExecutor for Sequential {
    fn execute(&self, engine: &dyn FptEngine, runs: usize, seed: u64) -> Vec<RunOutcome> {
        (0..runs as u64).map(|run| engine.simulate_run(seed, run)).collect()
    }
}

/// Cumulative default rates at `times`: the integral from 0 of the kernel
/// estimate with the gamma plug-in bandwidth. The kernels sit at the exact
/// crossing times with unit weight, which keeps the fixed-seed objective far
/// less jumpy than the weighted candidates. With too few samples for a
/// bandwidth the plain default frequencies are used.
pub fn default_curve(samples: &[FptSample], n_runs: usize, times: &[f64]) -> Vec<f64> {
    let exact: Vec<FptSample> = samples.iter().map(|s| FptSample { time: s.crossing_time, weight: 1.0, ..*s }).collect();
    let samples = &exact[..];
    let bandwidth = fit_gamma_moments(samples).ok().and_then(|fit| optimal_bandwidth(&fit, samples.len()).ok());
    match bandwidth {
        Some(bw) => times.iter().map(|&t| kernel_cdf(samples, bw.h, n_runs, t)).collect(),
        None => times.iter().map(|&t| empirical_cdf(samples, n_runs, t)).collect(),
    }
}

/// Misfit of one firm's curve against its table, with `curve[j]` the model
/// rate at the table's `j`-th time.
pub fn firm_objective(curve: &[f64], table: &HistoricalTable) -> f64 {
    let sum: f64 = curve
        .iter()
        .zip(table.rows())
        .map(|(p, &(t, a))| {
            let r = (p - a) / t;
            r * r
        })
        .sum();
    libm::sqrt(sum)
}

/// Sum of the per-firm misfits.
pub fn objective(curves: &[Vec<f64>], tables: &[HistoricalTable]) -> f64 {
    curves.iter().zip(tables).map(|(c, t)| firm_objective(c, t)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    NelderMead,
    QuasiNewton,
}

/// One table to fit, the fixed part of its firm and the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTarget {
    pub table: HistoricalTable,
    pub conventions: Conventions,
    pub start: FirmParams,
}

impl CalibrationTarget {
    pub fn new(table: HistoricalTable, start: FirmParams) -> Self {
        Self { table, conventions: Conventions::default(), start }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    /// Fit the intensity on the first table only and reuse it for the rest.
    pub shared_lambda: bool,
    pub runs: usize,
    /// Used for every objective evaluation.
    pub seed: u64,
    pub method: Method,
    pub settings: OptimizerSettings,
    pub gap_convention: GapConvention,
}

impl Default for CalibrationProblem {
    fn default() -> Self {
        Self {
            shared_lambda: false,
            runs: 50_000,
            seed: 1,
            method: Method::NelderMead,
            settings: OptimizerSettings::default(),
            gap_convention: GapConvention::Intensity,
        }
    }
}

impl CalibrationProblem {
    /// Model curve of one firm at the given times, simulated to the last one.
    pub fn curve<X: RunExecutor + ?Sized>(
        &self,
        rating: &str,
        params: &FirmParams,
        conventions: &Conventions,
        times: &[f64],
        executor: &X,
    ) -> Result<Vec<f64>, CalibrationError> {
        if self.runs == 0 {
            return Err(CalibrationError::NoRuns);
        }
        let horizon = times.iter().copied().fold(0.0, f64::max);
        let model = single_firm_model(rating, params, conventions, horizon, self.gap_convention)?;
        let engine = MunifEngine::new(model)?;
        let outcomes = executor.execute(&engine, self.runs, self.seed);
        Ok(default_curve(&firm_samples(&outcomes, 0), self.runs, times))
    }

    /// Objective of one firm.
    pub fn evaluate<X: RunExecutor + ?Sized>(
        &self,
        params: &FirmParams,
        conventions: &Conventions,
        table: &HistoricalTable,
        executor: &X,
    ) -> Result<f64, CalibrationError> {
        let times: Vec<f64> = table.times().collect();
        Ok(firm_objective(&self.curve(table.rating(), params, conventions, &times, executor)?, table))
    }

    /// A table generated by the model itself.
    pub fn synthetic_table<X: RunExecutor + ?Sized>(
        &self,
        rating: &str,
        params: &FirmParams,
        conventions: &Conventions,
        times: &[f64],
        executor: &X,
    ) -> Result<HistoricalTable, CalibrationError> {
        let curve = self.curve(rating, params, conventions, times, executor)?;
        let mut running = 0.0f64;
        let rows = times
            .iter()
            .zip(curve)
            .map(|(&t, p)| {
                running = running.max(p.clamp(0.0, 1.0));
                (t, running)
            })
            .collect();
        Ok(HistoricalTable::new(rating, rows)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// 0-based over the whole calibration.
    pub evaluation: usize,
    pub rating: String,
    pub params: FirmParams,
    pub objective: f64,
    /// Whether this evaluation became an accepted iterate of the optimiser.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedFirm {
    pub rating: String,
    pub params: FirmParams,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub firms: Vec<FittedFirm>,
    pub trace: Vec<TraceEntry>,
}

impl Calibration {
    pub fn objective(&self) -> f64 {
        self.firms.iter().map(|f| f.objective).sum()
    }

    pub fn converged(&self) -> bool {
        self.firms.iter().all(|f| f.converged)
    }
}

/// Fits every target in turn. Hitting the evaluation cap is not an error: the
/// best point found is returned with `converged = false`.
pub fn calibrate<X: RunExecutor + ?Sized>(
    problem: &CalibrationProblem,
    targets: &[CalibrationTarget],
    executor: &X,
) -> Result<Calibration, CalibrationError> {
    if targets.is_empty() {
        return Err(CalibrationError::NoTables);
    }
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut firms: Vec<FittedFirm> = Vec::with_capacity(targets.len());
    for (index, target) in targets.iter().enumerate() {
        target.start.validate()?;
        let table = &target.table;
        let frozen_lambda = (problem.shared_lambda && index > 0).then(|| firms[0].params.intensity);
        let start_u = target.start.to_unconstrained();
        // free coordinates in the transformed space
        let free: Vec<usize> = (0..4).filter(|&k| !(k == 1 && frozen_lambda.is_some())).collect();
        let expand = |x: &[f64]| -> FirmParams {
            let mut u = start_u;
            for (&k, &v) in free.iter().zip(x) {
                u[k] = v;
            }
            let mut p = FirmParams::from_unconstrained(&u);
            if let Some(l) = frozen_lambda {
                p.intensity = l;
            }
            p
        };
        let x0: Vec<f64> = free.iter().map(|&k| start_u[k]).collect();
        let offset = trace.len();
        let f = |x: &[f64]| -> Result<f64, CalibrationError> {
            let params = expand(x);
            let value = problem.evaluate(&params, &target.conventions, table, executor)?;
            trace.push(TraceEntry {
                evaluation: trace.len(),
                rating: String::from(table.rating()),
                params,
                objective: value,
                accepted: false,
            });
            Ok(value)
        };
        let minimum = match problem.method {
            Method::NelderMead => nelder_mead(f, &x0, &problem.settings)?,
            Method::QuasiNewton => bfgs(f, &x0, &problem.settings)?,
        };
        for &i in &minimum.accepted {
            trace[offset + i].accepted = true;
        }
        firms.push(FittedFirm {
            rating: String::from(table.rating()),
            params: expand(&minimum.x),
            objective: minimum.value,
            evaluations: minimum.evaluations,
            converged: minimum.converged,
        });
    }
    Ok(Calibration { firms, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{cumulative_default_rate, kde_density, uniform_grid};

    fn table(rows: &[(f64, f64)]) -> HistoricalTable {
        HistoricalTable::new("A", rows.to_vec()).unwrap()
    }

    #[test]
    fn objective_reference_points() {
        let t = table(&[(1.0, 0.1), (2.0, 0.2)]);
        assert_eq!(firm_objective(&[0.1, 0.2], &t), 0.0);
        let t = table(&[(1.0, 0.1)]);
        assert!((firm_objective(&[0.13], &t) - 0.03).abs() < 1e-15);
        // doubling the times halves each term
        let t1 = table(&[(1.0, 0.1), (3.0, 0.2)]);
        let t2 = table(&[(2.0, 0.1), (6.0, 0.2)]);
        let c = [0.15, 0.1];
        assert!((firm_objective(&c, &t2) - 0.5 * firm_objective(&c, &t1)).abs() < 1e-15);
        assert_eq!(objective(&[alloc::vec![0.13], alloc::vec![0.1]], &[table(&[(1.0, 0.1)]), table(&[(1.0, 0.1)])]), firm_objective(&[0.13], &table(&[(1.0, 0.1)])));
    }

    #[test]
    fn transform_round_trip() {
        let p = FirmParams { sigma: 0.09, intensity: 0.1, jump_mean: -0.2, jump_std: 0.5 };
        let q = FirmParams::from_unconstrained(&p.to_unconstrained());
        assert!((q.sigma - p.sigma).abs() < 1e-15 && (q.jump_std - p.jump_std).abs() < 1e-15);
        assert!(FirmParams { sigma: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn kernel_curve_matches_grid_integral() {
        let problem = CalibrationProblem { runs: 4000, seed: 5, ..Default::default() };
        let params = FirmParams { sigma: 0.1587, intensity: 0.1, jump_mean: -0.5515, jump_std: 1.6412 };
        let model = single_firm_model("Ba", &params, &Conventions::default(), 10.0, GapConvention::Intensity).unwrap();
        let outcomes = crate::samplers::simulate_munif(&model, problem.runs, problem.seed).unwrap();
        let samples: Vec<FptSample> =
            firm_samples(&outcomes, 0).iter().map(|s| FptSample { time: s.crossing_time, weight: 1.0, ..*s }).collect();
        let times = [1.0, 5.0, 10.0];
        let curve = default_curve(&samples, problem.runs, &times);
        let h = optimal_bandwidth(&fit_gamma_moments(&samples).unwrap(), samples.len()).unwrap().h;
        let de = kde_density(&samples, h, &uniform_grid(10.0, 4001), problem.runs).unwrap();
        for (&t, &p) in times.iter().zip(&curve) {
            assert!((cumulative_default_rate(&de, t) - p).abs() < 1e-5, "t={t}");
        }
        assert_eq!(curve, problem.curve("Ba", &params, &Conventions::default(), &times, &Sequential).unwrap());
    }

    #[test]
    fn objective_is_deterministic_and_order_free() {
        let problem = CalibrationProblem { runs: 3000, seed: 9, ..Default::default() };
        let params = FirmParams { sigma: 0.1587, intensity: 0.1, jump_mean: -0.5515, jump_std: 1.6412 };
        let t = table(&[(1.0, 0.01), (4.0, 0.05), (10.0, 0.15)]);
        let a = problem.evaluate(&params, &Conventions::default(), &t, &Sequential).unwrap();
        let b = problem.evaluate(&params, &Conventions::default(), &t, &Sequential).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let shuffled = HistoricalTable::new("A", alloc::vec![(10.0, 0.15), (1.0, 0.01), (4.0, 0.05)]).unwrap();
        assert_eq!(a.to_bits(), problem.evaluate(&params, &Conventions::default(), &shuffled, &Sequential).unwrap().to_bits());
    }

    #[test]
    fn shared_lambda_and_trace() {
        let truth = FirmParams { sigma: 0.15, intensity: 0.2, jump_mean: -0.6, jump_std: 1.2 };
        let problem = CalibrationProblem {
            runs: 1000,
            seed: 2,
            shared_lambda: true,
            settings: OptimizerSettings { max_evaluations: 12, ..Default::default() },
            ..Default::default()
        };
        let times = [2.0, 5.0, 10.0];
        let c = Conventions::default();
        let a = problem.synthetic_table("A", &truth, &c, &times, &Sequential).unwrap();
        let b = problem.synthetic_table("B", &FirmParams { jump_mean: -1.0, ..truth }, &c, &times, &Sequential).unwrap();
        let fit = calibrate(&problem, &[CalibrationTarget::new(a, truth), CalibrationTarget::new(b, truth)], &Sequential).unwrap();
        assert_eq!(fit.firms[1].params.intensity, fit.firms[0].params.intensity);
        assert_eq!(fit.trace.len(), fit.firms.iter().map(|f| f.evaluations).sum::<usize>());
        assert!(!fit.converged());
        // accepted iterates never get worse within a firm
        for rating in ["A", "B"] {
            let acc: Vec<f64> = fit.trace.iter().filter(|e| e.accepted && e.rating == rating).map(|e| e.objective).collect();
            assert!(acc.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn stationary_start_keeps_objective() {
        let truth = FirmParams { sigma: 0.15, intensity: 0.2, jump_mean: -0.6, jump_std: 1.2 };
        let problem = CalibrationProblem { runs: 1000, seed: 4, method: Method::QuasiNewton, ..Default::default() };
        let t = problem.synthetic_table("A", &truth, &Conventions::default(), &[2.0, 5.0, 10.0], &Sequential).unwrap();
        let fit = calibrate(&problem, &[CalibrationTarget::new(t, truth)], &Sequential).unwrap();
        let p = fit.firms[0].params;
        assert!(fit.firms[0].objective < 1e-12);
        assert!((p.sigma / truth.sigma - 1.0).abs() < 1e-12 && (p.jump_std / truth.jump_std - 1.0).abs() < 1e-12);
        assert!(fit.converged());
    }
}
