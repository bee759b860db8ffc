//! Grid-level error metrics between a reference solution and a learned one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mol::GridSolution;

/// `approx` sampled at every node of `truth`, one row per reference time.
/// Rows after a divergence are `None`.
pub fn sample_onto(truth: &GridSolution, approx: &GridSolution) -> Result<Vec<Option<Vec<f64>>>> {
    let x = truth.mesh.coordinates();
    let last = approx.t_end();
    let tol = 1e-9 * truth.t_end().max(1.0);
    truth
        .times()
        .iter()
        .map(|&t| {
            if t > last + tol {
                return Ok(None);
            }
            let t = t.min(last);
            let pts: Vec<(f64, f64)> = x.iter().map(|&xk| (xk, t)).collect();
            approx.interpolate(&pts).map(Some)
        })
        .collect()
}

/// Relative ℓ² over the whole space-time grid. Missing (diverged) rows count
/// as a zero prediction, so they contribute the reference magnitude.
pub fn l2_rel_grids(truth: &GridSolution, approx: &GridSolution) -> Result<f64> {
    let rows = sample_onto(truth, approx)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (tr, ap) in truth.values.iter().zip(&rows) {
        for (k, &u) in tr.iter().enumerate() {
            let v = ap.as_ref().map_or(0.0, |r| r[k]);
            num += (u - v) * (u - v);
            den += u * u;
        }
    }
    if den == 0.0 {
        return Err(Error::Input("reference solution is identically zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Per-time spatial relative errors (`None` past a divergence).
pub fn relative_errors_in_time(truth: &GridSolution, approx: &GridSolution) -> Result<Vec<Option<f64>>> {
    let rows = sample_onto(truth, approx)?;
    Ok(truth
        .values
        .iter()
        .zip(&rows)
        .map(|(tr, ap)| {
            ap.as_ref().map(|r| {
                let num: f64 = tr.iter().zip(r).map(|(u, v)| (u - v) * (u - v)).sum();
                let den: f64 = tr.iter().map(|u| u * u).sum();
                if den > 0.0 {
                    (num / den).sqrt()
                } else if num > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
        })
        .collect())
}

/// First reference time whose spatial relative error exceeds `delta`, or
/// the final time if none does. A diverged solve fails no later than its
/// divergence time.
pub fn time_to_failure_grids(truth: &GridSolution, approx: &GridSolution, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let errs = relative_errors_in_time(truth, approx)?;
    let times = truth.times();
    let mut ttf = truth.t_end();
    for (t, e) in times.iter().zip(&errs) {
        match e {
            Some(e) if *e <= delta => {}
            _ => {
                ttf = *t;
                break;
            }
        }
    }
    if let Some(td) = approx.diverged_at {
        ttf = ttf.min(td);
    }
    Ok(ttf.max(0.0))
}

/// Scores of one selected model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub l2_rel_train_ic: f64,
    pub l2_rel_test_ic: f64,
    pub ttf_train_ic: f64,
    pub ttf_test_ic: f64,
    pub delta: f64,
    pub diverged_train: bool,
    pub diverged_test: bool,
}
