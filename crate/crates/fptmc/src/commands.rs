//! The subcommands, callable without the argument parser.

use std::fmt;
use std::fs;
use std::path::Path;

use fptmc_core::calibration::{
    calibrate as fit, parse_historical_csv, CalibrationError, CalibrationProblem, CalibrationTarget, HistoricalTable,
};
use fptmc_core::estimation::{
    cumulative_default_rate, default_correlation, default_correlation_percycle, fit_gamma_moments, kde_density,
    optimal_bandwidth, uniform_grid, Bandwidth,
};
use fptmc_core::samplers::{firm_samples, ConventionalEngine, FptEngine, MunifEngine, SamplerError};
use fptmc_core::stochastic::SouTable;
use fptmc_core::{DensityEstimate, MarketModel, RunOutcome};

use crate::config::{ConfigError, EngineMethod, RunConfig};
use crate::output::{self, SAMPLES_HEADER, TRACE_HEADER};
use crate::runner::Pool;

/// Total CPU seconds an engine must use before its per-run time is trusted
/// for a speed ratio.
pub const BENCH_FLOOR_SECONDS: f64 = 0.05;

#[derive(Debug)]
pub enum AppError {
    Config(ConfigError),
    Io(String),
    Numerical(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 1,
            AppError::Io(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(e) => write!(f, "invalid configuration: {e}"),
            AppError::Io(e) => write!(f, "i/o error: {e}"),
            AppError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl std::error::Error for AppError {}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e)
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<SamplerError> for AppError {
    fn from(e: SamplerError) -> Self {
        AppError::Numerical(e.to_string())
    }
}

impl From<CalibrationError> for AppError {
    fn from(e: CalibrationError) -> Self {
        AppError::Numerical(e.to_string())
    }
}

fn pool(workers: usize) -> Result<Pool, AppError> {
    Pool::new(workers).map_err(|e| AppError::Numerical(format!("worker pool: {e}")))
}

fn prepare_dir(out: &Path) -> Result<(), AppError> {
    fs::create_dir_all(out).map_err(|e| AppError::Io(format!("{}: {e}", out.display())))
}

fn engine_for(config: &RunConfig, model: MarketModel) -> Result<Box<dyn FptEngine>, AppError> {
    Ok(match config.engine.method {
        EngineMethod::Munif => Box::new(MunifEngine::new(model)?),
        EngineMethod::Conventional => {
            let delta = config.engine.delta.ok_or_else(|| ConfigError::new("engine.delta", "missing"))?;
            Box::new(ConventionalEngine::new(model, delta)?)
        }
    })
}

fn names(model: &MarketModel) -> Vec<String> {
    model.firms().iter().map(|f| f.name().to_string()).collect()
}

#[derive(Debug, Clone)]
pub struct FirmSummary {
    pub name: String,
    pub samples: usize,
    pub bandwidth: Option<Bandwidth>,
    pub density: DensityEstimate,
    /// Cumulative default rate at each density grid point.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub runs: usize,
    pub per_run_cpu_seconds: f64,
    pub firms: Vec<FirmSummary>,
}

/// Density and default-rate curves of every firm from one set of runs.
pub fn summarize(model: &MarketModel, outcomes: &[RunOutcome], grid_points: usize) -> Vec<FirmSummary> {
    let grid = uniform_grid(model.horizon(), grid_points);
    let runs = outcomes.len();
    model
        .firms()
        .iter()
        .enumerate()
        .map(|(i, firm)| {
            let samples = firm_samples(outcomes, i);
            let bandwidth = fit_gamma_moments(&samples).ok().and_then(|fit| optimal_bandwidth(&fit, samples.len()).ok());
            let density = match bandwidth {
                Some(bw) => kde_density(&samples, bw.h, &grid, runs).expect("plug-in bandwidth is positive"),
                None => DensityEstimate {
                    grid: grid.clone(),
                    values: vec![0.0; grid.len()],
                    bandwidth: f64::NAN,
                    n_runs: runs,
                    total_weighted_mass: samples.iter().map(|s| s.weight).sum::<f64>() / runs.max(1) as f64,
                },
            };
            let rates = grid.iter().map(|&t| cumulative_default_rate(&density, t)).collect();
            FirmSummary { name: firm.name().to_string(), samples: samples.len(), bandwidth, density, rates }
        })
        .collect()
}

/// Writes `density.csv`, `default_rates.csv` and (unless disabled)
/// `samples.csv`.
pub fn simulate(config: &RunConfig, out: &Path) -> Result<SimulateReport, AppError> {
    let model = config.market_model()?;
    let engine = engine_for(config, model.clone())?;
    prepare_dir(out)?;
    let pool = pool(config.engine.workers)?;
    let runs = config.engine.runs;
    let (outcomes, cpu) = pool.timed(engine.as_ref(), runs, config.engine.seed);
    let firms = summarize(&model, &outcomes, config.output.grid_points);

    let mut density = output::create(&out.join("density.csv"), &["firm", "t", "density"])?;
    let mut rates = output::create(&out.join("default_rates.csv"), &["firm", "t", "cumulative_rate"])?;
    for f in &firms {
        output::write_density(&mut density, &f.name, &f.density)?;
        output::write_rates(&mut rates, &f.name, &f.density.grid, &f.rates)?;
    }
    output::finish(density)?;
    output::finish(rates)?;
    if config.output.samples {
        let mut w = output::create(&out.join("samples.csv"), &SAMPLES_HEADER)?;
        output::write_samples(&mut w, &names(&model), &outcomes)?;
        output::finish(w)?;
    }
    Ok(SimulateReport { runs, per_run_cpu_seconds: cpu / runs as f64, firms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub firm_a: String,
    pub firm_b: String,
    pub t: f64,
    pub aggregate: Option<f64>,
    pub percycle: Option<f64>,
}

/// Horizons for `correlate`: the configured list or every whole year.
pub fn correlation_times(config: &RunConfig) -> Vec<f64> {
    match &config.output.correlation_times {
        Some(t) => t.clone(),
        None => {
            let years = config.model.horizon.floor() as usize;
            if years == 0 {
                vec![config.model.horizon]
            } else {
                (1..=years).map(|y| y as f64).collect()
            }
        }
    }
}

/// Aggregate and batched default correlations of every firm pair.
pub fn correlation_rows(model: &MarketModel, outcomes: &[RunOutcome], times: &[f64], batch: usize) -> Vec<CorrelationRow> {
    let d = model.firm_count();
    let mut rows = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            for &t in times {
                rows.push(CorrelationRow {
                    firm_a: model.firms()[a].name().to_string(),
                    firm_b: model.firms()[b].name().to_string(),
                    t,
                    aggregate: default_correlation(outcomes, (a, b), t).ok(),
                    percycle: default_correlation_percycle(outcomes, (a, b), t, batch).ok().map(|c| c.value),
                });
            }
        }
    }
    rows
}

/// Writes `correlations.csv`.
pub fn correlate(config: &RunConfig, out: &Path) -> Result<Vec<CorrelationRow>, AppError> {
    let model = config.market_model()?;
    if model.firm_count() < 2 {
        return Err(ConfigError::new("model.firms", "correlate needs at least 2 firms").into());
    }
    let engine = engine_for(config, model.clone())?;
    prepare_dir(out)?;
    let pool = pool(config.engine.workers)?;
    let (outcomes, _) = pool.timed(engine.as_ref(), config.engine.runs, config.engine.seed);
    let rows = correlation_rows(&model, &outcomes, &correlation_times(config), config.output.batch);
    let mut w = output::create(&out.join("correlations.csv"), &["firm_a", "firm_b", "t", "rho_aggregate", "rho_percycle"])?;
    for r in &rows {
        output::write_correlation(&mut w, (&r.firm_a, &r.firm_b), r.t, r.aggregate, r.percycle)?;
    }
    output::finish(w)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub runs: usize,
    pub conventional_per_run: f64,
    pub munif_per_run: f64,
    /// Conventional over uniform-sampling per-run CPU time; absent when
    /// either measurement is below [`BENCH_FLOOR_SECONDS`].
    pub ratio: Option<f64>,
}

/// Times both engines on the configured model and writes `bench.csv`.
pub fn bench(config: &RunConfig, out: &Path) -> Result<BenchReport, AppError> {
    let model = config.market_model()?;
    let delta = config.engine.delta.ok_or_else(|| ConfigError::new("engine.delta", "bench needs the conventional step"))?;
    let conventional = ConventionalEngine::new(model.clone(), delta)?;
    let munif = MunifEngine::new(model)?;
    prepare_dir(out)?;
    let pool = pool(config.engine.workers)?;
    let runs = config.engine.bench_runs.unwrap_or(config.engine.runs);
    let seed = config.engine.seed;
    let (_, conv_cpu) = pool.timed(&conventional, runs, seed);
    let (_, munif_cpu) = pool.timed(&munif, runs, seed);
    let ratio = (conv_cpu >= BENCH_FLOOR_SECONDS && munif_cpu >= BENCH_FLOOR_SECONDS).then(|| conv_cpu / munif_cpu);
    let report = BenchReport {
        runs,
        conventional_per_run: conv_cpu / runs as f64,
        munif_per_run: munif_cpu / runs as f64,
        ratio,
    };
    let mut w = output::create(&out.join("bench.csv"), &["engine", "per_run_cpu_seconds", "ratio"])?;
    output::write_bench(&mut w, "conventional", report.conventional_per_run, ratio.map(|_| 1.0))?;
    output::write_bench(&mut w, "munif", report.munif_per_run, ratio)?;
    output::finish(w)?;
    Ok(report)
}

/// Reads and validates a historical default-rate file.
pub fn load_historical_csv(path: &Path) -> Result<Vec<HistoricalTable>, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    parse_historical_csv(&text).map_err(|e| ConfigError::new(path.display().to_string(), e).into())
}

/// Fits every firm to its rating's table; writes `fitted_params.csv` and
/// `trace.csv`.
pub fn calibrate(
    config: &RunConfig,
    historical: Option<&Path>,
    out: &Path,
) -> Result<fptmc_core::calibration::Calibration, AppError> {
    let section = config.calibration.clone().unwrap_or_default();
    let path = historical
        .map(Path::to_path_buf)
        .or_else(|| section.historical.clone())
        .ok_or_else(|| ConfigError::new("calibration.historical", "no historical file given"))?;
    let tables = load_historical_csv(&path)?;
    let mut targets = Vec::new();
    for (name, conventions, start) in config.calibration_starts()? {
        let table = tables
            .iter()
            .find(|t| t.rating() == name)
            .ok_or_else(|| ConfigError::new(path.display().to_string(), format!("no rows for rating {name}")))?;
        targets.push(CalibrationTarget { table: table.clone(), conventions, start });
    }
    let problem = CalibrationProblem {
        shared_lambda: section.shared_lambda,
        runs: section.runs,
        seed: section.seed.unwrap_or(config.engine.seed),
        method: section.method(),
        settings: section.settings(),
        gap_convention: config.market_model()?.gap_convention(),
    };
    prepare_dir(out)?;
    let pool = pool(config.engine.workers)?;
    let result = fit(&problem, &targets, &pool)?;
    let mut w = output::create(&out.join("fitted_params.csv"), &["rating", "sigma", "lambda", "mu_z", "sigma_z"])?;
    for f in &result.firms {
        output::write_fitted(&mut w, f)?;
    }
    output::finish(w)?;
    let mut w = output::create(&out.join("trace.csv"), &TRACE_HEADER)?;
    for e in &result.trace {
        output::write_trace(&mut w, e)?;
    }
    output::finish(w)?;
    Ok(result)
}

/// Brute-force correlation table of the sum-of-uniforms construction.
pub fn sou_table(points: usize, samples: usize, seed: u64, path: &Path) -> Result<SouTable, AppError> {
    if points < 2 || samples < 2 {
        return Err(ConfigError::new("", "sou-table needs at least 2 points and 2 samples").into());
    }
    let table = SouTable::generate(points, samples, seed);
    let comment = format!("spread grid of {points} points, {samples} pairs per point, seed {seed}");
    fs::write(path, table.to_csv(&comment)).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    Ok(table)
}
