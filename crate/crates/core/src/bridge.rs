//! Brownian-bridge mathematics between consecutive jumps.
//!
//! Between two jump instants a firm's log-value is a Brownian bridge pinned at
//! its post-jump value on the left and its pre-jump value on the right. The
//! threshold is linear in time, and a Brownian bridge minus a linear function
//! is again a Brownian bridge, so everything here works on the distances to
//! the threshold at the two ends, `a` and `b`.

use thiserror::Error;

use crate::numeric::{bisect_increasing, normal_cdf};

/// Crossing probabilities below this are treated as "no crossing possible".
pub const EPS_REJECT: f64 = 1e-12;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error("segment must have t_end > t_start, got [{t_start}, {t_end}]")]
    EmptyInterval { t_start: f64, t_end: f64 },
    #[error("bridge volatility must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("segment endpoints must be finite")]
    NonFinite,
    #[error("both endpoints must lie above the threshold (a = {a}, b = {b})")]
    EndpointNotAbove { a: f64, b: f64 },
    #[error("the segment must start above the threshold (a = {0})")]
    StartNotAbove(f64),
    #[error("time {s} is outside the open segment ({t_start}, {t_end})")]
    OutsideSegment { s: f64, t_start: f64, t_end: f64 },
    #[error("crossing probability {0:e} is below the rejection floor; the segment survives")]
    NoCrossingPossible(f64),
}

/// One inter-jump interval with its end values and threshold levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeSegment {
    t_start: f64,
    t_end: f64,
    x_start: f64,
    x_end: f64,
    d_start: f64,
    d_end: f64,
    sigma: f64,
    a: f64,
    b: f64,
}

/// A uniform crossing candidate `s = t_start + b_ij y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub time: f64,
    /// `true` when the candidate falls inside the segment, i.e. a crossing.
    pub accepted: bool,
    /// `b_ij = tau / (1 - P_ij)`
    pub spread: f64,
}

impl BridgeSegment {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t_start: f64,
        t_end: f64,
        x_start: f64,
        x_end: f64,
        d_start: f64,
        d_end: f64,
        sigma: f64,
    ) -> Result<Self, BridgeError> {
        if ![t_start, t_end, x_start, x_end, d_start, d_end, sigma].iter().all(|v| v.is_finite()) {
            return Err(BridgeError::NonFinite);
        }
        if !(t_end > t_start) {
            return Err(BridgeError::EmptyInterval { t_start, t_end });
        }
        if !(sigma > 0.0) {
            return Err(BridgeError::NonPositiveSigma(sigma));
        }
        Ok(Self { t_start, t_end, x_start, x_end, d_start, d_end, sigma, a: x_start - d_start, b: x_end - d_end })
    }

    /// Segment against a zero threshold, given by its end distances.
    pub fn from_distances(t_start: f64, t_end: f64, a: f64, b: f64, sigma: f64) -> Result<Self, BridgeError> {
        Self::new(t_start, t_end, a, b, 0.0, 0.0, sigma)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn x_start(&self) -> f64 {
        self.x_start
    }

    pub fn x_end(&self) -> f64 {
        self.x_end
    }

    pub fn d_start(&self) -> f64 {
        self.d_start
    }

    pub fn d_end(&self) -> f64 {
        self.d_end
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Distance to the threshold at the left end.
    pub fn start_distance(&self) -> f64 {
        self.a
    }

    /// Distance to the threshold at the right end (before any jump).
    pub fn end_distance(&self) -> f64 {
        self.b
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    fn exponent(&self) -> f64 {
        2.0 * self.a * self.b / (self.duration() * self.sigma * self.sigma)
    }

    /// Probability `P_ij = 1 - exp(-2ab / (tau sigma^2))` that the bridge
    /// stays above the threshold; requires both ends above it.
    pub fn survival_probability(&self) -> Result<f64, BridgeError> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(BridgeError::EndpointNotAbove { a: self.a, b: self.b });
        }
        Ok(-libm::expm1(-self.exponent()))
    }

    /// `1 - P_ij`, extended to 1 when the right end is at or below the
    /// threshold (the crossing is then certain).
    pub fn crossing_probability(&self) -> f64 {
        if self.a <= 0.0 || self.b <= 0.0 {
            1.0
        } else {
            libm::exp(-self.exponent())
        }
    }

    fn log_crossing_probability(&self) -> f64 {
        if self.a <= 0.0 || self.b <= 0.0 {
            0.0
        } else {
            -self.exponent()
        }
    }

    /// Density of the first crossing time at `s`, conditioned on a crossing
    /// inside the segment; integrates to one over the segment.
    pub fn conditional_crossing_density(&self, s: f64) -> Result<f64, BridgeError> {
        if self.a <= 0.0 {
            return Err(BridgeError::StartNotAbove(self.a));
        }
        if !(s > self.t_start && s < self.t_end) {
            return Err(BridgeError::OutsideSegment { s, t_start: self.t_start, t_end: self.t_end });
        }
        Ok(self.density_at_offset(s - self.t_start))
    }

    /// Conditional crossing density at offset `u` from the left end; zero
    /// at the ends of the segment.
    pub(crate) fn density_at_offset(&self, u: f64) -> f64 {
        let tau = self.duration();
        let v = tau - u;
        if !(u > 0.0 && v > 0.0) {
            return 0.0;
        }
        let var = self.sigma * self.sigma;
        let (a, b) = (self.a, self.b);
        let log_density = libm::log(a) + 0.5 * libm::log(tau)
            - LN_SQRT_2PI
            - libm::log(self.sigma)
            - 1.5 * libm::log(u)
            - 0.5 * libm::log(v)
            - a * a / (2.0 * var * u)
            - b * b / (2.0 * var * v)
            + (b - a) * (b - a) / (2.0 * var * tau)
            - self.log_crossing_probability();
        libm::exp(log_density)
    }

    /// Closed-form distribution function of the conditional crossing time.
    pub fn conditional_crossing_cdf(&self, s: f64) -> f64 {
        let tau = self.duration();
        let u = s - self.t_start;
        if u <= 0.0 {
            return 0.0;
        }
        if u >= tau {
            return 1.0;
        }
        let (a, b) = (self.a, self.b);
        let sd = self.sigma * libm::sqrt(u * (tau - u) / tau);
        let reflected_mean = -a + (u / tau) * (b + a);
        let direct_mean = a + (u / tau) * (b - a);
        let log_q = self.log_crossing_probability();
        let log_ratio = -2.0 * a * b / (tau * self.sigma * self.sigma);
        let reflected = libm::exp(log_ratio - log_q + log_normal_cdf(reflected_mean / sd));
        let direct = libm::exp(log_normal_cdf(-direct_mean / sd) - log_q);
        (reflected + direct).clamp(0.0, 1.0)
    }

    /// Crossing time with conditional distribution function value `p`.
    pub fn crossing_time_quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        bisect_increasing(|s| self.conditional_crossing_cdf(s), p, self.t_start, self.t_end, 200)
    }

    /// Uniform candidate `s = t_start + b_ij y` with `b_ij = tau / (1 - P_ij)`.
    /// The candidate is accepted exactly when `y < 1 - P_ij`.
    pub fn crossing_candidate(&self, y: f64) -> Result<Candidate, BridgeError> {
        if self.a <= 0.0 {
            return Err(BridgeError::StartNotAbove(self.a));
        }
        let q = self.crossing_probability();
        if q < EPS_REJECT {
            return Err(BridgeError::NoCrossingPossible(q));
        }
        let spread = self.duration() / q;
        let accepted = y < q;
        let time = if accepted {
            self.t_start + self.duration() * (y / q)
        } else {
            self.t_start + spread * y
        };
        Ok(Candidate { time, accepted, spread })
    }
}

/// `ln Phi(x)`, using the asymptotic tail series where `Phi` underflows.
pub(crate) fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        libm::log(normal_cdf(x))
    } else {
        let x2 = x * x;
        -0.5 * x2 - libm::log(-x) - LN_SQRT_2PI + libm::log1p(-1.0 / x2 + 3.0 / (x2 * x2))
    }
}
