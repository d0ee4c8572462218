//! Sum-of-uniforms (SOU) families of correlated uniforms.
//!
//! The first uniform `U0` is drawn directly and every further member is
//! `frac(U0 + c V)` with `V` uniform, so each member is exactly uniform on
//! `[0, 1)`. The spread `c` that achieves a target correlation with `U0` is
//! read off a brute-force calibration table (spread, achieved correlation),
//! which is shipped as a versioned data file and can be regenerated with
//! [`SouTable::generate`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use thiserror::Error;

use super::RngStream;
use crate::numeric::bisect_increasing;

/// Calibration table shipped with the crate.
pub const EMBEDDED_SOU_TABLE: &str = include_str!("../../data/sou_table_v1.csv");

const TABLE_HEADER: &str = "spread,correlation";
const TABLE_VERSION: &str = "# sou-table v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SouError {
    #[error("target correlation {0} is negative; only non-negative correlations are supported")]
    NegativeCorrelation(f64),
    #[error("target correlation {0} is not in [0, 1]")]
    OutOfRange(f64),
    #[error("a correlated family needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("sou table line {line}: {reason}")]
    Table { line: usize, reason: &'static str },
}

/// Piecewise-linear map from spread `c` to the achieved correlation, with
/// spreads ascending from 0 and correlations strictly decreasing from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SouTable {
    spreads: Vec<f64>,
    correlations: Vec<f64>,
}

impl SouTable {
    /// Largest tabulated spread; at `c = 1/2` the pair is uncorrelated.
    pub const MAX_SPREAD: f64 = 0.5;

    /// The table compiled into the crate.
    pub fn embedded() -> Self {
        Self::parse(EMBEDDED_SOU_TABLE).expect("embedded sou table is valid")
    }

    pub fn parse(text: &str) -> Result<Self, SouError> {
        let mut spreads = Vec::new();
        let mut correlations = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            if !seen_header {
                if row != TABLE_HEADER {
                    return Err(SouError::Table { line, reason: "expected header `spread,correlation`" });
                }
                seen_header = true;
                continue;
            }
            let mut fields = row.split(',');
            let (Some(c), Some(r), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(SouError::Table { line, reason: "expected two fields" });
            };
            let c: f64 = c.trim().parse().map_err(|_| SouError::Table { line, reason: "bad spread" })?;
            let r: f64 = r.trim().parse().map_err(|_| SouError::Table { line, reason: "bad correlation" })?;
            if spreads.last().is_some_and(|&prev| c <= prev) {
                return Err(SouError::Table { line, reason: "spreads must increase" });
            }
            if correlations.last().is_some_and(|&prev| r >= prev) {
                return Err(SouError::Table { line, reason: "correlations must decrease" });
            }
            spreads.push(c);
            correlations.push(r);
        }
        if spreads.len() < 2 {
            return Err(SouError::Table { line: 0, reason: "table needs at least two rows" });
        }
        if spreads[0] != 0.0 || correlations[0] != 1.0 {
            return Err(SouError::Table { line: 0, reason: "table must start at (0, 1)" });
        }
        Ok(Self { spreads, correlations })
    }

    /// Brute-force calibration: `points` spreads evenly on `[0, 1/2]`, each
    /// measured with `samples` pairs. The same pairs are reused for every
    /// spread so the tabulated curve is smooth and monotone.
    pub fn generate(points: usize, samples: usize, seed: u64) -> Self {
        let points = points.max(2);
        let mut rng = RngStream::new(seed, 0);
        let pairs: Vec<(f64, f64)> = (0..samples).map(|_| (rng.uniform(), rng.uniform())).collect();
        let mut spreads = Vec::with_capacity(points);
        let mut correlations = Vec::with_capacity(points);
        for i in 0..points {
            let c = Self::MAX_SPREAD * i as f64 / (points - 1) as f64;
            let r = if i == 0 {
                1.0
            } else {
                pearson(pairs.iter().map(|&(u0, v)| (u0, wrap(u0 + c * v))))
            };
            spreads.push(c);
            correlations.push(r);
        }
        Self { spreads, correlations }
    }

    pub fn to_csv(&self, comment: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TABLE_VERSION}");
        for line in comment.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{TABLE_HEADER}");
        for (c, r) in self.spreads.iter().zip(&self.correlations) {
            let _ = writeln!(out, "{c:.6},{r:.8}");
        }
        out
    }

    pub fn spreads(&self) -> &[f64] {
        &self.spreads
    }

    pub fn correlations(&self) -> &[f64] {
        &self.correlations
    }

    /// Interpolated correlation at spread `c`, clamped to the table range.
    pub fn correlation_at(&self, c: f64) -> f64 {
        let last = self.spreads.len() - 1;
        if c <= self.spreads[0] {
            return self.correlations[0];
        }
        if c >= self.spreads[last] {
            return self.correlations[last];
        }
        let i = self.spreads.partition_point(|&s| s <= c) - 1;
        let w = (c - self.spreads[i]) / (self.spreads[i + 1] - self.spreads[i]);
        self.correlations[i] + w * (self.correlations[i + 1] - self.correlations[i])
    }

    /// Spread achieving correlation `rho` with the first member. `rho = 0`
    /// maps to spread 1, which makes the members exactly independent.
    pub fn spread_for(&self, rho: f64) -> Result<f64, SouError> {
        if rho < 0.0 {
            return Err(SouError::NegativeCorrelation(rho));
        }
        if !(rho <= 1.0) {
            return Err(SouError::OutOfRange(rho));
        }
        if rho == 0.0 {
            return Ok(1.0);
        }
        if rho == 1.0 {
            return Ok(0.0);
        }
        let last = self.spreads.len() - 1;
        if rho <= self.correlations[last] {
            return Ok(self.spreads[last]);
        }
        // correlation decreases in c, so bisect on its negation
        Ok(bisect_increasing(|c| -self.correlation_at(c), -rho, 0.0, self.spreads[last], 80))
    }
}

#[inline]
fn wrap(x: f64) -> f64 {
    if x >= 1.0 {
        x - 1.0
    } else {
        x
    }
}

fn pearson(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in pairs {
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sxx / n - (sx / n) * (sx / n);
    let vy = syy / n - (sy / n) * (sy / n);
    cov / libm::sqrt(vx * vy)
}

/// A hub-shaped SOU family: member 0 is drawn directly, member `k` is
/// `frac(U0 + c_k V_k)` and has the requested correlation with member 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SouFamily {
    spreads: Vec<f64>,
}

impl SouFamily {
    /// `targets[k]` is the correlation of member `k` with member 0;
    /// `targets[0]` is ignored.
    pub fn new(table: &SouTable, targets: &[f64]) -> Result<Self, SouError> {
        let mut spreads = Vec::with_capacity(targets.len());
        for (k, &rho) in targets.iter().enumerate() {
            spreads.push(if k == 0 { 0.0 } else { table.spread_for(rho)? });
        }
        Ok(Self { spreads })
    }

    pub fn len(&self) -> usize {
        self.spreads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spreads.is_empty()
    }

    pub fn spreads(&self) -> &[f64] {
        &self.spreads
    }

    /// Fills `out` (one slot per member) with one draw of the family.
    pub fn draw_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let u0 = rng.uniform();
        for (k, (o, &c)) in out.iter_mut().zip(&self.spreads).enumerate() {
            *o = if k == 0 { u0 } else { wrap(u0 + c * rng.uniform()) };
        }
    }
}

/// `count` uniforms whose pairs with the first member have correlation `rho`.
pub fn sou_correlated_uniforms(
    table: &SouTable,
    rho: f64,
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>, SouError> {
    if count < 2 {
        return Err(SouError::TooFewMembers(count));
    }
    let targets = alloc::vec![rho; count];
    let family = SouFamily::new(table, &targets)?;
    let mut out = alloc::vec![0.0; count];
    family.draw_into(rng, &mut out);
    Ok(out)
}
