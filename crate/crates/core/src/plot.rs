//! CSV plot data for estimators, S-free regions, cuts and boundary samples.

use std::io::Write;

use thiserror::Error;

use crate::cutgen::Cut;
use crate::estimators::EstimatorPair;
use crate::expr::{Expr, ExprError};
use crate::monoidal::BoundarySample;
use crate::strengthen::{HhatEvaluator, StrengthenError};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plots support at most {max} variables, got {got}")]
    DimensionTooHigh { got: usize, max: usize },
    #[error("need at least two samples per axis")]
    TooFewSamples,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Strengthen(#[from] StrengthenError),
}

/// Uniform grid over `[lo, hi]` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.samples;
        (0..n).map(|i| if i + 1 == n { self.hi } else { self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64 }).collect()
    }

    fn points(&self, dim: usize) -> Result<Vec<Vec<f64>>, PlotError> {
        if self.samples < 2 {
            return Err(PlotError::TooFewSamples);
        }
        let v = self.values();
        Ok(match dim {
            0 | 1 => v.iter().map(|x| vec![*x]).collect(),
            2 => v.iter().flat_map(|x| v.iter().map(move |y| vec![*x, *y])).collect(),
            _ => return Err(PlotError::DimensionTooHigh { got: dim, max: 2 }),
        })
    }
}

fn axis_headers(dim: usize) -> Vec<String> {
    if dim <= 1 {
        vec!["x".into()]
    } else {
        vec!["x".into(), "y".into()]
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Columns `x[, y], f, under, over`.
pub fn estimate_csv<W: Write>(f: &Expr, pair: &EstimatorPair, grid: Grid, out: W) -> Result<(), PlotError> {
    let dim = f.min_dimension().max(pair.base_point.len()).max(1);
    let points = grid.points(dim)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = axis_headers(dim);
    header.extend(["f", "under", "over"].map(String::from));
    w.write_record(&header)?;
    let (fe, ue, oe) = (f.compile(), pair.under.compile(), pair.over.compile());
    for p in points {
        let mut row: Vec<String> = p.iter().map(|v| num(*v)).collect();
        row.push(num(fe.eval(&p)?));
        row.push(num(ue.eval(&p)?));
        row.push(num(oe.eval(&p)?));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `x[, y], h, h_ave, hhat, hhat_tuy`; absent evaluators leave the column empty.
pub fn region_csv<W: Write>(
    h: &Expr,
    h_ave: &Expr,
    hhat: Option<&HhatEvaluator>,
    tuy: Option<&HhatEvaluator>,
    dim: usize,
    grid: Grid,
    out: W,
) -> Result<(), PlotError> {
    let points = grid.points(dim)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = axis_headers(dim);
    header.extend(["h", "h_ave", "hhat", "hhat_tuy"].map(String::from));
    w.write_record(&header)?;
    let (he, ae) = (h.compile(), h_ave.compile());
    for p in points {
        let mut row: Vec<String> = p.iter().map(|v| num(*v)).collect();
        row.push(num(he.eval(&p)?));
        row.push(num(ae.eval(&p)?));
        for ev in [hhat, tuy] {
            row.push(match ev {
                Some(ev) => num(ev.eval(&p)?),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per cut: `method, space, rhs, a1, …, an`.
pub fn cuts_csv<W: Write>(cuts: &[Cut], out: W) -> Result<(), PlotError> {
    let n = cuts.iter().map(|c| c.coeffs.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["method".into(), "space".into(), "rhs".into()];
    header.extend((1..=n).map(|j| format!("a{j}")));
    w.write_record(&header)?;
    for c in cuts {
        let space = serde_json::to_value(c.space).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let mut row = vec![c.method().as_str().to_string(), space, num(c.rhs)];
        row.extend((0..n).map(|j| c.coeffs.get(j).map(|v| num(*v)).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Boundary samples: `y1, …, yn, h, inner, beta, redundant, usable`.
pub fn boundary_csv<W: Write>(sample: &BoundarySample, out: W) -> Result<(), PlotError> {
    let n = sample.points.first().map(|p| p.y.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=n).map(|j| format!("y{j}")).collect();
    header.extend(["h", "inner", "beta", "redundant", "usable"].map(String::from));
    w.write_record(&header)?;
    for p in &sample.points {
        let mut row: Vec<String> = p.y.iter().map(|v| num(*v)).collect();
        row.extend([num(p.value), num(p.inner), num(p.beta), p.redundant.to_string(), p.usable.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate;
    use crate::expr::parse;

    #[test]
    fn estimate_rows_are_sandwiched() {
        let f = parse("exp(-(cos(x1^2) + x1/4)^2)", 1).unwrap();
        let pair = estimate(&f, &[0.0]).unwrap();
        let mut buf = Vec::new();
        estimate_csv(&f, &pair, Grid { lo: -2.5, hi: 2.5, samples: 501 }, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,f,under,over"));
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 501);
        for r in &rows {
            assert!(r[2] <= r[1] + 1e-9 && r[1] <= r[3] + 1e-9, "{r:?}");
        }
        let mid = &rows[250];
        assert_eq!(mid[0], 0.0);
        assert!((mid[1] - mid[2]).abs() < 1e-12 && (mid[1] - mid[3]).abs() < 1e-12);
    }

    #[test]
    fn constant_function() {
        let f = parse("3", 1).unwrap();
        let pair = estimate(&f, &[0.0]).unwrap();
        let mut buf = Vec::new();
        estimate_csv(&f, &pair, Grid { lo: 0.0, hi: 1.0, samples: 3 }, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,f,under,over\n0,3,3,3\n0.5,3,3,3\n1,3,3,3\n");
    }

    #[test]
    fn too_many_dimensions() {
        let f = parse("x1 + x2 + x3", 3).unwrap();
        let pair = estimate(&f, &[0.0; 3]).unwrap();
        assert!(matches!(
            estimate_csv(&f, &pair, Grid { lo: 0.0, hi: 1.0, samples: 3 }, Vec::new()),
            Err(PlotError::DimensionTooHigh { got: 3, max: 2 })
        ));
    }
}
