use alloc::string::{String, ToString};
use alloc::vec::Vec;
use thiserror::Error;

pub const HISTORICAL_HEADER: [&str; 3] = ["rating", "t_years", "cumulative_default_rate"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistoricalError {
    #[error("historical table is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("rating {rating}: {reason}")]
    Table { rating: String, reason: String },
}

/// Historical cumulative default rates of one rating, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalTable {
    rating: String,
    rows: Vec<(f64, f64)>,
}

impl HistoricalTable {
    /// Rows are `(t_years, cumulative_rate)` in any order; times must be
    /// positive and distinct, rates in `[0, 1]` and non-decreasing in time.
    pub fn new(rating: impl Into<String>, rows: Vec<(f64, f64)>) -> Result<Self, HistoricalError> {
        let rating = rating.into();
        let fail = |reason: String| HistoricalError::Table { rating: rating.clone(), reason };
        if rows.is_empty() {
            return Err(fail("no rows".to_string()));
        }
        for &(t, p) in &rows {
            check_row(t, p).map_err(|r| fail(alloc::format!("{r} at t = {t}")))?;
        }
        let mut sorted = rows;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(fail(alloc::format!("duplicate time {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(fail(alloc::format!("rate decreases between t = {} and t = {}", w[0].0, w[1].0)));
            }
        }
        Ok(Self { rating, rows: sorted })
    }

    pub fn rating(&self) -> &str {
        &self.rating
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.0)
    }

    pub fn last_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.0)
    }
}

fn check_row(t: f64, p: f64) -> Result<(), &'static str> {
    if !(t > 0.0 && t.is_finite()) {
        return Err("time must be positive");
    }
    if !(0.0..=1.0).contains(&p) {
        return Err("rate outside [0, 1]");
    }
    Ok(())
}

/// Parses `rating,t_years,cumulative_default_rate` rows into one table per
/// rating, in order of first appearance. Blank lines and `#` comments are
/// skipped. Errors cite the 1-based line number.
pub fn parse_historical_csv(text: &str) -> Result<Vec<HistoricalTable>, HistoricalError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines.next().ok_or(HistoricalError::Empty)?;
    let header: Vec<&str> = header.trim_start_matches('\u{feff}').split(',').map(str::trim).collect();
    if header != HISTORICAL_HEADER {
        return Err(HistoricalError::Line {
            line: header_line,
            reason: alloc::format!("expected header `{}`", HISTORICAL_HEADER.join(",")),
        });
    }

    // per rating: rows with the line they came from
    let mut groups: Vec<(String, Vec<(usize, f64, f64)>)> = Vec::new();
    for (line, text) in lines {
        let bad = |reason: &str| HistoricalError::Line { line, reason: reason.to_string() };
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        if fields[0].is_empty() {
            return Err(bad("empty rating"));
        }
        let t: f64 = fields[1].parse().map_err(|_| bad("t_years is not a number"))?;
        let p: f64 = fields[2].parse().map_err(|_| bad("cumulative_default_rate is not a number"))?;
        check_row(t, p).map_err(bad)?;
        match groups.iter_mut().find(|g| g.0 == fields[0]) {
            Some(g) => g.1.push((line, t, p)),
            None => groups.push((fields[0].to_string(), alloc::vec![(line, t, p)])),
        }
    }
    if groups.is_empty() {
        return Err(HistoricalError::Empty);
    }

    let mut tables = Vec::with_capacity(groups.len());
    for (rating, mut rows) in groups {
        rows.sort_by(|a, b| a.1.total_cmp(&b.1));
        for w in rows.windows(2) {
            let line = w[0].0.max(w[1].0);
            if w[0].1 == w[1].1 {
                return Err(HistoricalError::Line { line, reason: alloc::format!("duplicate t_years {} for {rating}", w[1].1) });
            }
            if w[1].2 < w[0].2 {
                return Err(HistoricalError::Line {
                    line,
                    reason: alloc::format!("cumulative rate of {rating} decreases between t = {} and t = {}", w[0].1, w[1].1),
                });
            }
        }
        tables.push(HistoricalTable::new(rating, rows.into_iter().map(|r| (r.1, r.2)).collect())?);
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "rating,t_years,cumulative_default_rate\nA,1,0.0001\nA,2,0.0003\nBa,1,0.01\nBa,2,0.03\n";

    #[test]
    fn two_ratings() {
        let t = parse_historical_csv(TWO).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].rating(), "Ba");
        assert_eq!(t[1].rows(), &[(1.0, 0.01), (2.0, 0.03)]);
    }

    #[test]
    fn unordered_rows_are_sorted() {
        let t = parse_historical_csv("rating,t_years,cumulative_default_rate\nA,2,0.3\nA,1,0.1\n").unwrap();
        assert_eq!(t[0].rows(), &[(1.0, 0.1), (2.0, 0.3)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_historical_csv(""), Err(HistoricalError::Empty));
        assert_eq!(parse_historical_csv("rating,t_years,cumulative_default_rate\n"), Err(HistoricalError::Empty));
        let e = parse_historical_csv("rating,t_years,cumulative_default_rate\nA,1,0.1\nA,2,1.2\n").unwrap_err();
        assert!(matches!(e, HistoricalError::Line { line: 3, .. }), "{e:?}");
        let e = parse_historical_csv("rating,t_years,cumulative_default_rate\nA,1,0.2\nA,2,0.1\n").unwrap_err();
        assert!(matches!(e, HistoricalError::Line { line: 3, .. }), "{e:?}");
        let e = parse_historical_csv("rating,t_years,cumulative_default_rate\nA,1,0.2\nA,1,0.3\n").unwrap_err();
        assert!(matches!(e, HistoricalError::Line { line: 3, .. }), "{e:?}");
        let e = parse_historical_csv("rating,t,rate\nA,1,0.2\n").unwrap_err();
        assert!(matches!(e, HistoricalError::Line { line: 1, .. }));
        let e = parse_historical_csv("rating,t_years,cumulative_default_rate\nA,x,0.2\n").unwrap_err();
        assert!(matches!(e, HistoricalError::Line { line: 2, .. }));
        assert!(HistoricalTable::new("A", alloc::vec![(0.0, 0.1)]).is_err());
    }
}
