//! Curve fitting for the measured-data side: power-law exponents, Malus-law
//! polarization and Gaussian-convolved exponential decays.

mod lm;
mod models;
pub mod synth;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt_f64;

pub use lm::{minimize_residuals, Bounds, LmOptions, LmOutcome};
pub use models::{emg, fit_lifetime_emg, fit_malus, fit_power_law, EmgOptions};

/// Paired samples with optional per-point uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Option<Vec<f64>>,
}

impl DataSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_errors(x, y, None)
    }

    pub fn with_errors(x: Vec<f64>, y: Vec<f64>, y_err: Option<Vec<f64>>) -> Result<Self> {
        if x.len() != y.len() || y_err.as_ref().is_some_and(|e| e.len() != x.len()) {
            return Err(Error::Data("columns differ in length".into()));
        }
        let all = x.iter().chain(&y).chain(y_err.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in data".into()));
        }
        if y_err.iter().flatten().any(|&e| e <= 0.0) {
            return Err(Error::Data("uncertainties must be positive".into()));
        }
        Ok(Self { x, y, y_err })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub(crate) fn require_points(&self, params: usize) -> Result<()> {
        if self.len() < params + 1 {
            return Err(Error::Precondition(format!(
                "{} points are not enough for {params} parameters",
                self.len()
            )));
        }
        Ok(())
    }

    /// Two or three numeric columns `x, y[, y_err]`; a non-numeric first row is
    /// taken as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::Data(format!("row {}: {e}", line + 1))),
            };
            if !(2..=3).contains(&values.len()) {
                return Err(Error::Data(format!("row {}: expected 2 or 3 columns, got {}", line + 1, values.len())));
            }
            match width {
                None => {
                    width = Some(values.len());
                    cols = vec![Vec::new(); values.len()];
                }
                Some(w) if w != values.len() => {
                    return Err(Error::Data(format!("row {}: expected {w} columns, got {}", line + 1, values.len())));
                }
                _ => {}
            }
            for (c, v) in cols.iter_mut().zip(values) {
                c.push(v);
            }
        }
        if cols.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }
        let y_err = if cols.len() == 3 { cols.pop() } else { None };
        let y = cols.pop().unwrap_or_default();
        let x = cols.pop().unwrap_or_default();
        Self::with_errors(x, y, y_err)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &[&str]) -> Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            write!(w, "{},{}", fmt_f64(self.x[i]), fmt_f64(self.y[i]))?;
            if let Some(e) = &self.y_err {
                write!(w, ",{}", fmt_f64(e[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub stderr: BTreeMap<String, f64>,
    /// Quantities computed from the parameters (e.g. `dolp`).
    pub derived: BTreeMap<String, f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<String>,
}

impl FitResult {
    pub(crate) fn from_outcome(model: &str, names: &[&str], out: &LmOutcome) -> Self {
        Self {
            model: model.to_string(),
            params: names.iter().map(|n| n.to_string()).zip(out.params.iter().copied()).collect(),
            stderr: names.iter().map(|n| n.to_string()).zip(out.stderr.iter().copied()).collect(),
            derived: BTreeMap::new(),
            residual_norm: out.residual_norm,
            converged: out.converged,
            iterations: out.iterations,
            flags: Vec::new(),
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).or_else(|| self.derived.get(name)).copied()
    }
}

/// Weighted least squares of `model(x, p)` against `data`. Weights default to
/// `1/y_err` when the series carries uncertainties, otherwise uniform.
pub fn nls_minimize<M>(
    model: M,
    data: &DataSeries,
    initial: &[f64],
    bounds: &Bounds,
    weights: Option<&[f64]>,
    opts: &LmOptions,
) -> Result<LmOutcome>
where
    M: Fn(f64, &[f64]) -> f64,
{
    data.require_points(bounds.lo.iter().zip(&bounds.hi).filter(|(l, h)| l < h).count())?;
    let w: Vec<f64> = match (weights, &data.y_err) {
        (Some(w), _) => {
            if w.len() != data.len() {
                return Err(Error::Precondition("weights differ in length from data".into()));
            }
            w.to_vec()
        }
        (None, Some(e)) => e.iter().map(|s| 1.0 / s).collect(),
        (None, None) => vec![1.0; data.len()],
    };
    let residuals = |p: &[f64]| {
        data.x
            .iter()
            .zip(&data.y)
            .zip(&w)
            .map(|((&x, &y), &wi)| wi * (model(x, p) - y))
            .collect::<Vec<_>>()
    };
    minimize_residuals(residuals, initial, bounds, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_header_and_errors() {
        let d = DataSeries::read_csv("x,y,err\n1,2,0.1\n2,4,0.2\n".as_bytes()).unwrap();
        assert_eq!(d.x, vec![1.0, 2.0]);
        assert_eq!(d.y_err, Some(vec![0.1, 0.2]));
    }

    #[test]
    fn csv_wrong_column_count_rejected() {
        assert!(matches!(DataSeries::read_csv("1,2,3,4\n".as_bytes()), Err(Error::Data(_))));
        assert!(matches!(DataSeries::read_csv("1,2\n1,2,3\n".as_bytes()), Err(Error::Data(_))));
        assert!(matches!(DataSeries::read_csv("1\n".as_bytes()), Err(Error::Data(_))));
        assert!(matches!(DataSeries::read_csv("x,y\n1,a\n".as_bytes()), Err(Error::Data(_))));
        assert!(DataSeries::read_csv("".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = DataSeries::new(vec![0.1, 1.0 / 3.0], vec![1e-300, -2.5]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, &["x", "y"]).unwrap();
        assert_eq!(DataSeries::read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(DataSeries::new(vec![1.0], vec![]).is_err());
        assert!(DataSeries::new(vec![f64::NAN], vec![1.0]).is_err());
    }
}
