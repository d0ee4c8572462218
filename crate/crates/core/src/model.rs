//! Firms, default thresholds and the market model that ties them together.
//!
//! A firm's log-value follows
//!
//! ```text
//! dX_i = mu_i dt + sum_j sigma_ij dW_j + dZ_i
//! ```
//!
//! where `Z_i` collects the jumps of every shock type, and the firm defaults
//! the first time `X_i(t) <= gamma_i t + ln(kappa_i)`.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::numeric::{cholesky, LowerTriangular};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} must be finite")]
    NonFinite { field: &'static str },
    #[error("kappa must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("jump-size standard deviation must be positive, got {0}")]
    NonPositiveJumpStd(f64),
    #[error("diffusion row is empty")]
    EmptyDiffusionRow,
    #[error("diffusion row is all zero (degenerate diffusion)")]
    DegenerateDiffusion,
    #[error("initial log-value {x0} is not above the threshold {threshold}")]
    StartsAtOrBelowThreshold { x0: f64, threshold: f64 },
    #[error("diffusion correlation must lie strictly inside (-1, 1), got {0}")]
    SingularFactorization(f64),
    #[error("volatility must be positive, got {0}")]
    NonPositiveVolatility(f64),
    #[error("model has no firms")]
    NoFirms,
    #[error("firm {firm}: diffusion row has length {got}, expected {expected}")]
    DiffusionRowLength { firm: usize, expected: usize, got: usize },
    #[error("firm {firm}: {got} jump laws given for {expected} shock types")]
    JumpLawCount { firm: usize, expected: usize, got: usize },
    #[error("shock {shock}: intensity must be positive, got {value}")]
    NonPositiveIntensity { shock: usize, value: f64 },
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("{which} matrix must be {expected}x{expected}")]
    MatrixShape { which: &'static str, expected: usize },
    #[error("{which} matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { which: &'static str, row: usize, col: usize },
    #[error("{which} matrix entry ({row}, {col}) = {value} lies outside [-1, 1]")]
    EntryOutOfRange { which: &'static str, row: usize, col: usize, value: f64 },
    #[error("{which} matrix diagonal entry {index} is {value}, expected 1")]
    DiagonalNotOne { which: &'static str, index: usize, value: f64 },
    #[error("jump correlation matrix is not positive semi-definite")]
    NotPositiveSemiDefinite,
}

fn finite(value: f64, field: &'static str) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { field })
    }
}

/// Black-Cox threshold `kappa * exp(gamma t)`, handled in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    kappa: f64,
    gamma: f64,
    log_kappa: f64,
}

impl Threshold {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self, ModelError> {
        finite(kappa, "kappa")?;
        finite(gamma, "gamma")?;
        if kappa <= 0.0 {
            return Err(ModelError::NonPositiveKappa(kappa));
        }
        Ok(Self { kappa, gamma, log_kappa: libm::log(kappa) })
    }

    /// Threshold given directly by `ln(kappa)`.
    pub fn from_log_kappa(log_kappa: f64, gamma: f64) -> Result<Self, ModelError> {
        finite(log_kappa, "ln(kappa)")?;
        let mut th = Self::new(libm::exp(log_kappa), gamma)?;
        th.log_kappa = log_kappa;
        Ok(th)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn log_kappa(&self) -> f64 {
        self.log_kappa
    }

    /// Log-threshold `gamma t + ln(kappa)`.
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.gamma * t + self.log_kappa
    }
}

/// Log-threshold of `th` at time `t >= 0`.
pub fn threshold_at(th: &Threshold, t: f64) -> f64 {
    th.at(t)
}

/// Normal jump-size law `N(mean, std_dev)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpLaw {
    mean: f64,
    std_dev: f64,
}

impl JumpLaw {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self, ModelError> {
        finite(mean, "jump mean")?;
        finite(std_dev, "jump std_dev")?;
        if std_dev <= 0.0 {
            return Err(ModelError::NonPositiveJumpStd(std_dev));
        }
        Ok(Self { mean, std_dev })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_dev(&self) -> f64 {
        self.std_dev
    }
}

/// Euclidean norm of a diffusion row, i.e. the firm's effective volatility.
pub fn effective_sigma(sigma_row: &[f64]) -> Result<f64, ModelError> {
    if sigma_row.is_empty() {
        return Err(ModelError::EmptyDiffusionRow);
    }
    for &s in sigma_row {
        finite(s, "sigma_row entry")?;
    }
    let norm = libm::sqrt(sigma_row.iter().map(|s| s * s).sum::<f64>());
    if norm > 0.0 {
        Ok(norm)
    } else {
        Err(ModelError::DegenerateDiffusion)
    }
}

/// Two-firm factor rows `(sigma1, 0)` and `(rho sigma2, sqrt(1 - rho^2) sigma2)`,
/// whose product with their transpose has `rho sigma1 sigma2` off the diagonal.
pub fn sigma_rows_from_corr(sigma1: f64, sigma2: f64, rho: f64) -> Result<[[f64; 2]; 2], ModelError> {
    finite(rho, "rho")?;
    for s in [sigma1, sigma2] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(ModelError::NonPositiveVolatility(s));
        }
    }
    if !(rho.abs() < 1.0) {
        return Err(ModelError::SingularFactorization(rho));
    }
    Ok([[sigma1, 0.0], [rho * sigma2, libm::sqrt(1.0 - rho * rho) * sigma2]])
}

/// One firm: drift, diffusion row, a jump law per shock type, threshold and
/// initial log-value.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmSpec {
    name: String,
    drift: f64,
    sigma_row: Vec<f64>,
    sigma: f64,
    jump_laws: Vec<JumpLaw>,
    threshold: Threshold,
    x0: f64,
}

impl FirmSpec {
    pub fn new(
        name: impl Into<String>,
        drift: f64,
        sigma_row: Vec<f64>,
        jump_laws: Vec<JumpLaw>,
        threshold: Threshold,
        x0: f64,
    ) -> Result<Self, ModelError> {
        finite(drift, "drift")?;
        finite(x0, "x0")?;
        let sigma = effective_sigma(&sigma_row)?;
        let level = threshold.at(0.0);
        if x0 <= level {
            return Err(ModelError::StartsAtOrBelowThreshold { x0, threshold: level });
        }
        Ok(Self { name: name.into(), drift, sigma_row, sigma, jump_laws, threshold, x0 })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn sigma_row(&self) -> &[f64] {
        &self.sigma_row
    }

    /// Effective volatility `sqrt(sum_j sigma_ij^2)`.
    pub fn effective_sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jump_laws(&self) -> &[JumpLaw] {
        &self.jump_laws
    }

    pub fn threshold(&self) -> &Threshold {
        &self.threshold
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Initial distance to default `x0 - ln(kappa)`.
    pub fn initial_distance(&self) -> f64 {
        self.x0 - self.threshold.at(0.0)
    }
}

/// Symmetric matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = alloc::vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// Every off-diagonal entry equal to `rho`.
    pub fn uniform(dim: usize, rho: f64) -> Result<Self, ModelError> {
        let mut rows = alloc::vec![alloc::vec![rho; dim]; dim];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self::from_rows("correlation", &rows)
    }

    pub fn from_rows(which: &'static str, rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(ModelError::MatrixShape { which, expected: dim });
            }
            data.extend_from_slice(row);
        }
        for i in 0..dim {
            for j in 0..dim {
                let v = finite(data[i * dim + j], "correlation entry")?;
                if i == j && v != 1.0 {
                    return Err(ModelError::DiagonalNotOne { which, index: i, value: v });
                }
                if !(-1.0..=1.0).contains(&v) {
                    return Err(ModelError::EntryOutOfRange { which, row: i, col: j, value: v });
                }
                if v != data[j * dim + i] {
                    return Err(ModelError::NotSymmetric { which, row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }
}

/// How the gaps between consecutive shock instants are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapConvention {
    /// Gaps are exponential with mean `1 / lambda` (a Poisson process).
    #[default]
    Intensity,
    /// Gaps are exponential with mean one whatever the intensity.
    UnitMean,
}

/// The firms, the shock intensities, the horizon and the correlation used
/// for the crossing candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    firms: Vec<FirmSpec>,
    shock_intensities: Vec<f64>,
    horizon: f64,
    bridge_correlations: CorrelationMatrix,
    jump_correlations: Option<CorrelationMatrix>,
    jump_factor: Option<LowerTriangular>,
    gap_convention: GapConvention,
}

impl MarketModel {
    pub fn new(
        firms: Vec<FirmSpec>,
        shock_intensities: Vec<f64>,
        horizon: f64,
        bridge_correlations: CorrelationMatrix,
    ) -> Result<Self, ModelError> {
        if firms.is_empty() {
            return Err(ModelError::NoFirms);
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ModelError::NonPositiveHorizon(horizon));
        }
        for (shock, &value) in shock_intensities.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositiveIntensity { shock, value });
            }
        }
        let d = firms.len();
        let m = shock_intensities.len();
        for (firm, spec) in firms.iter().enumerate() {
            if spec.sigma_row.len() != d {
                return Err(ModelError::DiffusionRowLength { firm, expected: d, got: spec.sigma_row.len() });
            }
            if spec.jump_laws.len() != m {
                return Err(ModelError::JumpLawCount { firm, expected: m, got: spec.jump_laws.len() });
            }
        }
        if bridge_correlations.dim() != d {
            return Err(ModelError::MatrixShape { which: "bridge correlation", expected: d });
        }
        Ok(Self {
            firms,
            shock_intensities,
            horizon,
            bridge_correlations,
            jump_correlations: None,
            jump_factor: None,
            gap_convention: GapConvention::Intensity,
        })
    }

    /// Gaussian-copula correlation between the jump sizes of different firms
    /// at a common shock. Without it jump sizes are independent across firms.
    pub fn with_jump_correlations(mut self, corr: CorrelationMatrix) -> Result<Self, ModelError> {
        if corr.dim() != self.firms.len() {
            return Err(ModelError::MatrixShape { which: "jump correlation", expected: self.firms.len() });
        }
        let factor = cholesky(corr.dim(), &corr.data).ok_or(ModelError::NotPositiveSemiDefinite)?;
        self.jump_correlations = Some(corr);
        self.jump_factor = Some(factor);
        Ok(self)
    }

    pub fn with_gap_convention(mut self, convention: GapConvention) -> Self {
        self.gap_convention = convention;
        self
    }

    pub fn firms(&self) -> &[FirmSpec] {
        &self.firms
    }

    pub fn firm_count(&self) -> usize {
        self.firms.len()
    }

    pub fn shock_count(&self) -> usize {
        self.shock_intensities.len()
    }

    pub fn shock_intensities(&self) -> &[f64] {
        &self.shock_intensities
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn bridge_correlations(&self) -> &CorrelationMatrix {
        &self.bridge_correlations
    }

    pub fn jump_correlations(&self) -> Option<&CorrelationMatrix> {
        self.jump_correlations.as_ref()
    }

    pub(crate) fn jump_factor(&self) -> Option<&LowerTriangular> {
        self.jump_factor.as_ref()
    }

    pub fn gap_convention(&self) -> GapConvention {
        self.gap_convention
    }

    /// Firm `firm` alone: its diffusion collapsed to one factor of the
    /// effective volatility, the same shocks and horizon.
    pub fn marginal(&self, firm: usize) -> Result<Self, ModelError> {
        let spec = &self.firms[firm];
        let single = FirmSpec {
            sigma_row: alloc::vec![spec.sigma],
            ..spec.clone()
        };
        Ok(Self::new(alloc::vec![single], self.shock_intensities.clone(), self.horizon, CorrelationMatrix::identity(1))?
            .with_gap_convention(self.gap_convention))
    }

    /// Same model over a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self, ModelError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ModelError::NonPositiveHorizon(horizon));
        }
        let mut m = self.clone();
        m.horizon = horizon;
        Ok(m)
    }
}
