//! Training procedures for the state and right-hand-side networks.
//!
//! [`train_penalty`] runs min-max Adam on the weighted compound loss;
//! [`train_constrained`] warm-starts with Adam and then hands the loosened
//! constrained problem to [`crate::tropt`]. Both update the two networks
//! simultaneously unless a staggered [`Schedule`] is requested.

mod adam;
mod constrained;
mod penalty;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use constrained::{train_constrained, ConstrainedConfig, ConstrainedNlp};
pub use penalty::{train_penalty, Phase, PenaltyConfig, PenaltyTrainer, Schedule, Weights};

use crate::error::{Error, Result};
use crate::nnjet::ParamVector;

/// Training method; selects the trainer and its hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Penalty,
    Constrained,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Penalty => "penalty",
            Method::Constrained => "constrained",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalty" => Ok(Method::Penalty),
            "constrained" => Ok(Method::Constrained),
            _ => Err(Error::Config(format!("unknown method '{s}' (expected penalty or constrained)"))),
        }
    }
}

pub const GRID_SIZE: usize = 10;

/// The `k`-th (1-based) value of the method's log-spaced grid: `ε` from 1e-4
/// to 1e-1 for the constrained method, `λ⁰` from 1e-1 to 1e3 for penalty.
pub fn hyperparameter_grid(method: Method, k: usize) -> Result<f64> {
    if !(1..=GRID_SIZE).contains(&k) {
        return Err(Error::Config(format!("grid index must be in 1..={GRID_SIZE}, got {k}")));
    }
    let (lo, hi) = match method {
        Method::Constrained => (-4.0, -1.0),
        Method::Penalty => (-1.0, 3.0),
    };
    let e = lo + (hi - lo) * (k - 1) as f64 / (GRID_SIZE - 1) as f64;
    Ok(10f64.powf(e))
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    /// Fixed step budget exhausted (penalty method).
    Completed,
    /// Optimizer met its tolerances.
    Converged,
    /// Optimizer stopped early or without meeting its tolerances.
    NotConverged,
}

impl TrainStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainStatus::Completed => "completed",
            TrainStatus::Converged => "converged",
            TrainStatus::NotConverged => "not_converged",
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub data_loss: f64,
    pub max_abs_residual: f64,
    /// Mean residual weight (penalty) or barrier parameter (constrained).
    pub diag: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub final_params: ParamVector,
    pub history: Vec<HistoryRow>,
    pub wall_time: f64,
    pub status: TrainStatus,
    pub message: Option<String>,
    /// Final residual weights of the penalty method.
    pub lambda: Option<Vec<f64>>,
}

impl TrainResult {
    pub fn write_history(&self, path: &Path) -> Result<()> {
        write_history(&self.history, path)
    }

    pub fn final_data_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.data_loss)
    }
}

pub fn write_history(rows: &[HistoryRow], path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "step,data_loss,max_abs_residual,diag,elapsed_s").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{:e},{:e},{:e},{:.3}", r.step, r.data_loss, r.max_abs_residual, r.diag, r.elapsed_s).map_err(io)?;
    }
    w.flush().map_err(io)
}
