//! TOML run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use fptmc_core::calibration::{Conventions, FirmParams, Method, OptimizerSettings};
use fptmc_core::model::ModelError;
use fptmc_core::numeric::cholesky;
use fptmc_core::{CorrelationMatrix, FirmSpec, GapConvention, JumpLaw, MarketModel, Threshold};
use serde::Deserialize;

/// A configuration problem, located by the dotted path of the offending
/// field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { path: path.into(), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub engine: EngineSection,
    #[serde(default)]
    pub output: OutputSection,
    pub calibration: Option<CalibrationSection>,
}

/// A correlation given either as one off-diagonal value or as a full matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CorrelationSpec {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GapName {
    #[default]
    Intensity,
    UnitMean,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub horizon: f64,
    /// Intensity of each shock type.
    #[serde(default)]
    pub shocks: Vec<f64>,
    #[serde(default)]
    pub gap_convention: GapName,
    pub diffusion_correlation: Option<CorrelationSpec>,
    /// Defaults to the diffusion correlation.
    pub bridge_correlation: Option<CorrelationSpec>,
    pub jump_correlation: Option<CorrelationSpec>,
    pub firms: Vec<FirmSection>,
}

fn default_x0() -> f64 {
    2.0
}

fn default_rate() -> f64 {
    -0.001
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmSection {
    pub name: String,
    #[serde(default = "default_x0")]
    pub x0: f64,
    pub kappa: Option<f64>,
    pub log_kappa: Option<f64>,
    #[serde(default = "default_rate")]
    pub gamma: f64,
    #[serde(default = "default_rate")]
    pub drift: f64,
    pub sigma: Option<f64>,
    pub sigma_row: Option<Vec<f64>>,
    /// One law per shock type.
    #[serde(default)]
    pub jumps: Vec<JumpSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSection {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum EngineMethod {
    Conventional,
    Munif,
}

fn default_seed() -> u64 {
    1
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub method: EngineMethod,
    pub delta: Option<f64>,
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Runs per engine for `bench`; defaults to `runs`.
    pub bench_runs: Option<usize>,
}

fn default_grid_points() -> usize {
    200
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_batch() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Horizons of `correlate`; defaults to every whole year up to the horizon.
    pub correlation_times: Option<Vec<f64>>,
    /// Batch size of the per-cycle correlation.
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_true")]
    pub samples: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            grid_points: default_grid_points(),
            dir: default_dir(),
            correlation_times: None,
            batch: default_batch(),
            samples: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    #[default]
    NelderMead,
    QuasiNewton,
}

fn default_calibration_runs() -> usize {
    50_000
}

fn default_max_evaluations() -> usize {
    400
}

fn default_restarts() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub historical: Option<PathBuf>,
    #[serde(default = "default_calibration_runs")]
    pub runs: usize,
    /// Defaults to the engine seed.
    pub seed: Option<u64>,
    #[serde(default)]
    pub optimizer: OptimizerName,
    #[serde(default)]
    pub shared_lambda: bool,
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl CalibrationSection {
    pub fn method(&self) -> Method {
        match self.optimizer {
            OptimizerName::NelderMead => Method::NelderMead,
            OptimizerName::QuasiNewton => Method::QuasiNewton,
        }
    }

    pub fn settings(&self) -> OptimizerSettings {
        OptimizerSettings { max_evaluations: self.max_evaluations, restarts: self.restarts, ..Default::default() }
    }
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            historical: None,
            runs: default_calibration_runs(),
            seed: None,
            optimizer: OptimizerName::default(),
            shared_lambda: false,
            max_evaluations: default_max_evaluations(),
            restarts: default_restarts(),
        }
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("", e.to_string().trim_end()))?;
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::new(if path == "." { String::new() } else { path }, inner.message().trim_end())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(LoadError::Config)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadError {
    Io(String),
    Config(ConfigError),
}

fn correlation(spec: &CorrelationSpec, dim: usize, path: &str) -> Result<CorrelationMatrix, ConfigError> {
    let m = match spec {
        CorrelationSpec::Uniform(rho) => CorrelationMatrix::uniform(dim, *rho),
        CorrelationSpec::Matrix(rows) => CorrelationMatrix::from_rows("correlation", rows),
    };
    let m = m.map_err(|e| ConfigError::new(path, e))?;
    if m.dim() != dim {
        return Err(ConfigError::new(path, format!("expected a {dim}x{dim} matrix")));
    }
    Ok(m)
}

fn model_error(path: String) -> impl Fn(ModelError) -> ConfigError {
    move |e| ConfigError::new(path.clone(), e)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.market_model()?;
        let e = &self.engine;
        if e.runs == 0 {
            return Err(ConfigError::new("engine.runs", "must be at least 1"));
        }
        if e.workers == 0 {
            return Err(ConfigError::new("engine.workers", "must be at least 1"));
        }
        if e.bench_runs == Some(0) {
            return Err(ConfigError::new("engine.bench_runs", "must be at least 1"));
        }
        if let Some(delta) = e.delta {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(ConfigError::new("engine.delta", "must be positive"));
            }
            if (self.model.horizon / delta - 1e-9).ceil() < 2.0 {
                return Err(ConfigError::new("engine.delta", "must split the horizon into at least 2 steps"));
            }
        } else if e.method == EngineMethod::Conventional {
            return Err(ConfigError::new("engine.delta", "required by the conventional method"));
        }
        let o = &self.output;
        if o.grid_points < 2 {
            return Err(ConfigError::new("output.grid_points", "must be at least 2"));
        }
        if o.batch < 2 {
            return Err(ConfigError::new("output.batch", "must be at least 2"));
        }
        if let Some(times) = &o.correlation_times {
            for (i, &t) in times.iter().enumerate() {
                if !(t > 0.0 && t <= self.model.horizon) {
                    return Err(ConfigError::new(format!("output.correlation_times[{i}]"), "must lie in (0, horizon]"));
                }
            }
        }
        if let Some(c) = &self.calibration {
            if c.runs == 0 {
                return Err(ConfigError::new("calibration.runs", "must be at least 1"));
            }
            if c.max_evaluations == 0 {
                return Err(ConfigError::new("calibration.max_evaluations", "must be at least 1"));
            }
            if let Some(path) = &c.historical {
                if !path.is_file() {
                    return Err(ConfigError::new("calibration.historical", format!("no such file {}", path.display())));
                }
            }
        }
        Ok(())
    }

    /// Diffusion loading rows: explicit rows, or each firm's volatility
    /// times the Cholesky factor of the diffusion correlation.
    fn sigma_rows(&self) -> Result<Vec<Vec<f64>>, ConfigError> {
        let model = &self.model;
        let d = model.firms.len();
        let factor = match &model.diffusion_correlation {
            Some(spec) => {
                let c = correlation(spec, d, "model.diffusion_correlation")?;
                let flat: Vec<f64> = c.rows().flatten().copied().collect();
                Some(cholesky(d, &flat).ok_or_else(|| ConfigError::new("model.diffusion_correlation", "not positive semi-definite"))?)
            }
            None => None,
        };
        let mut rows = Vec::with_capacity(d);
        for (i, firm) in model.firms.iter().enumerate() {
            let path = format!("model.firms[{i}]");
            match (&firm.sigma, &firm.sigma_row) {
                (Some(_), Some(_)) => return Err(ConfigError::new(path, "give either sigma or sigma_row, not both")),
                (None, None) => return Err(ConfigError::new(format!("{path}.sigma"), "missing")),
                (None, Some(row)) => {
                    if factor.is_some() {
                        return Err(ConfigError::new(
                            format!("{path}.sigma_row"),
                            "explicit rows cannot be combined with model.diffusion_correlation",
                        ));
                    }
                    rows.push(row.clone());
                }
                (Some(sigma), None) => {
                    if !(*sigma > 0.0 && sigma.is_finite()) {
                        return Err(ConfigError::new(format!("{path}.sigma"), "must be positive"));
                    }
                    rows.push(match &factor {
                        Some(l) => (0..d).map(|j| sigma * l.get(i, j)).collect(),
                        None => (0..d).map(|j| if i == j { *sigma } else { 0.0 }).collect(),
                    });
                }
            }
        }
        Ok(rows)
    }

    pub fn market_model(&self) -> Result<MarketModel, ConfigError> {
        let model = &self.model;
        if model.firms.is_empty() {
            return Err(ConfigError::new("model.firms", "at least one firm is required"));
        }
        let d = model.firms.len();
        let rows = self.sigma_rows()?;
        let mut firms = Vec::with_capacity(d);
        for (i, (f, row)) in model.firms.iter().zip(rows).enumerate() {
            let path = format!("model.firms[{i}]");
            if model.firms[..i].iter().any(|g| g.name == f.name) {
                return Err(ConfigError::new(format!("{path}.name"), format!("duplicate firm name {}", f.name)));
            }
            let threshold = match (f.kappa, f.log_kappa) {
                (Some(_), Some(_)) => return Err(ConfigError::new(path, "give either kappa or log_kappa, not both")),
                (Some(k), None) => Threshold::new(k, f.gamma).map_err(model_error(format!("{path}.kappa")))?,
                (None, l) => Threshold::from_log_kappa(l.unwrap_or(0.0), f.gamma).map_err(model_error(format!("{path}.log_kappa")))?,
            };
            if f.jumps.len() != model.shocks.len() {
                return Err(ConfigError::new(
                    format!("{path}.jumps"),
                    format!("expected {} jump laws, one per shock, got {}", model.shocks.len(), f.jumps.len()),
                ));
            }
            let mut laws = Vec::with_capacity(f.jumps.len());
            for (k, j) in f.jumps.iter().enumerate() {
                laws.push(JumpLaw::new(j.mean, j.std).map_err(model_error(format!("{path}.jumps[{k}]")))?);
            }
            firms.push(FirmSpec::new(f.name.clone(), f.drift, row, laws, threshold, f.x0).map_err(model_error(path))?);
        }
        let bridge = match model.bridge_correlation.as_ref().or(model.diffusion_correlation.as_ref()) {
            Some(spec) => correlation(spec, d, "model.bridge_correlation")?,
            None => CorrelationMatrix::identity(d),
        };
        for (k, &rho) in bridge.rows().next().unwrap_or(&[]).iter().enumerate() {
            if rho < 0.0 {
                return Err(ConfigError::new(
                    "model.bridge_correlation",
                    format!("correlation {rho} between firms 0 and {k} is negative, which uniform sampling cannot produce"),
                ));
            }
        }
        for (k, &lambda) in model.shocks.iter().enumerate() {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(ConfigError::new(format!("model.shocks[{k}]"), "intensity must be positive"));
            }
        }
        let mut market = MarketModel::new(firms, model.shocks.clone(), model.horizon, bridge).map_err(model_error("model".into()))?;
        if let Some(spec) = &model.jump_correlation {
            market = market
                .with_jump_correlations(correlation(spec, d, "model.jump_correlation")?)
                .map_err(model_error("model.jump_correlation".into()))?;
        }
        Ok(market.with_gap_convention(match model.gap_convention {
            GapName::Intensity => GapConvention::Intensity,
            GapName::UnitMean => GapConvention::UnitMean,
        }))
    }

    /// Fixed part and starting parameters of each firm for calibration. Only
    /// the first shock type is fitted.
    pub fn calibration_starts(&self) -> Result<Vec<(String, Conventions, FirmParams)>, ConfigError> {
        let market = self.market_model()?;
        if market.shock_count() != 1 {
            return Err(ConfigError::new("model.shocks", "calibration needs exactly one shock type"));
        }
        Ok(market
            .firms()
            .iter()
            .map(|f| {
                let conventions = Conventions {
                    x0: f.x0(),
                    log_kappa: f.threshold().log_kappa(),
                    gamma: f.threshold().gamma(),
                    drift: f.drift(),
                };
                let law = f.jump_laws()[0];
                let start = FirmParams {
                    sigma: f.effective_sigma(),
                    intensity: market.shock_intensities()[0],
                    jump_mean: law.mean(),
                    jump_std: law.std_dev(),
                };
                (f.name().to_string(), conventions, start)
            })
            .collect())
    }
}
