//! Parameter grids.
//!
//! Accepted text forms:
//!
//! - `0.5`: a single value
//! - `0.1,0.2,0.4`: an explicit list
//! - `0:1:11`: `start:stop:count`, evenly spaced with both ends included

use crate::error::{CliError, CliResult};
use serde::Deserialize;

/// Upper bound on the number of points in one grid axis.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(Vec<f64>);

impl Grid {
    pub fn new(values: Vec<f64>) -> CliResult<Self> {
        if values.is_empty() {
            return Err(CliError::Grid("grid is empty".into()));
        }
        if values.len() > MAX_GRID_POINTS {
            return Err(CliError::Grid(format!("{} points exceed the limit of {MAX_GRID_POINTS}", values.len())));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Grid(format!("non-finite grid value {bad}")));
        }
        Ok(Self(values))
    }

    pub fn single(value: f64) -> CliResult<Self> {
        Self::new(vec![value])
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(CliError::Grid("grid is empty".into()));
        }
        let number = |s: &str| -> CliResult<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Grid(format!("'{}' is not a number", s.trim())))
        };
        if text.contains(':') {
            let parts: Vec<&str> = text.split(':').collect();
            let [start, stop, count] = parts[..] else {
                return Err(CliError::Grid(format!("range '{text}' must be start:stop:count")));
            };
            let (start, stop) = (number(start)?, number(stop)?);
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| CliError::Grid(format!("'{}' is not a point count", count.trim())))?;
            if count == 0 || count > MAX_GRID_POINTS {
                return Err(CliError::Grid(format!("point count {count} outside 1..={MAX_GRID_POINTS}")));
            }
            if count == 1 && start != stop {
                return Err(CliError::Grid(format!("range '{text}' has one point but distinct ends")));
            }
            let step = if count > 1 { (stop - start) / (count - 1) as f64 } else { 0.0 };
            // the last point is pinned to `stop` so that it is exact
            let values = (0..count)
                .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
                .collect();
            return Self::new(values);
        }
        Self::new(text.split(',').map(number).collect::<CliResult<_>>()?)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Same grid rounded to non-negative integers; fails on fractional entries.
    pub fn counts(&self) -> CliResult<Vec<usize>> {
        self.0
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as usize)
                } else {
                    Err(CliError::Grid(format!("{v} is not a non-negative integer")))
                }
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        let shown: Vec<String> = self.0.iter().take(8).map(|v| format!("{v}")).collect();
        if self.0.len() > 8 {
            format!("[{}, … ({} points)]", shown.join(", "), self.0.len())
        } else {
            format!("[{}]", shown.join(", "))
        }
    }
}

/// A grid as written in a config file: a number, a list, or a text form.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSource {
    Single(f64),
    List(Vec<f64>),
    Text(String),
}

impl GridSource {
    pub fn resolve(&self) -> CliResult<Grid> {
        match self {
            GridSource::Single(v) => Grid::single(*v),
            GridSource::List(v) => Grid::new(v.clone()),
            GridSource::Text(t) => Grid::parse(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(Grid::parse("0.5").unwrap().values(), &[0.5]);
        assert_eq!(Grid::parse(" 1, 2 ,3").unwrap().values(), &[1.0, 2.0, 3.0]);
        let g = Grid::parse("0:0.6:13").unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g.values()[12], 0.6);
        assert!((g.values()[1] - 0.05).abs() < 1e-15);
        assert_eq!(Grid::parse("2:2:1").unwrap().values(), &[2.0]);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "a", "1,,2", "0:1", "0:1:0", "0:1:x", "0:1:1", "nan", "1:2:3:4", "inf"] {
            assert!(matches!(Grid::parse(bad), Err(CliError::Grid(_))), "{bad}");
        }
        assert!(Grid::parse("1.5").unwrap().counts().is_err());
        assert_eq!(Grid::parse("8,32").unwrap().counts().unwrap(), vec![8, 32]);
    }
}
