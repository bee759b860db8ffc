use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::penalty::params_with;
use super::{HistoryRow, PenaltyConfig, PenaltyTrainer, Phase, Schedule, TrainResult, TrainStatus, Weights};
use crate::error::{Error, Result};
use crate::residuals::ResidualProblem;
use crate::tropt::{self, ConstraintJacobian, NlpProblem, Status, TroptSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstrainedConfig {
    /// Residual bound `|r_j| ≤ ε`; `+∞` drops the constraints.
    pub epsilon: f64,
    pub tropt: TroptSettings,
    /// Adam steps on the unit-weight compound loss before the SQP.
    pub warm_start_steps: usize,
    pub warm_start_lr: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
}

impl Default for ConstrainedConfig {
    fn default() -> Self {
        Self::with_epsilon(1e-2)
    }
}

impl ConstrainedConfig {
    /// Defaults with `ktol = ε / 10`.
    pub fn with_epsilon(epsilon: f64) -> Self {
        let ktol = if epsilon.is_finite() { epsilon / 10.0 } else { 1e-8 };
        Self {
            epsilon,
            tropt: TroptSettings { ktol, ..TroptSettings::default() },
            warm_start_steps: 2000,
            warm_start_lr: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        self.tropt.validate()
    }
}

/// The loosened problem: minimize the data misfit subject to
/// `r_j - ε ≤ 0` and `-r_j - ε ≤ 0`.
pub struct ConstrainedNlp<'a> {
    pub prob: &'a ResidualProblem,
    pub epsilon: f64,
}

impl ConstrainedNlp<'_> {
    fn constrained(&self) -> bool {
        self.epsilon.is_finite()
    }
}

impl NlpProblem for ConstrainedNlp<'_> {
    fn dim(&self) -> usize {
        self.prob.dim()
    }

    fn num_constraints(&self) -> usize {
        if self.constrained() {
            2 * self.prob.colloc.len()
        } else {
            0
        }
    }

    fn objective(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.prob.data_loss(x)
    }

    fn objective_value(&self, x: &[f64]) -> Result<f64> {
        let (state, _) = self.prob.nets(x)?;
        crate::residuals::mse(&state, &self.prob.scaling, &self.prob.data)
    }

    fn constraints(&self, x: &[f64]) -> Result<(Vec<f64>, ConstraintJacobian)> {
        if !self.constrained() {
            return Ok((Vec::new(), ConstraintJacobian::empty(self.dim())));
        }
        let (r, jac) = self.prob.residual_vector(x)?;
        Ok((self.stack(&r), ConstraintJacobian::Mirrored(jac)))
    }

    fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.constrained() {
            return Ok(Vec::new());
        }
        Ok(self.stack(&self.prob.residuals(x)?))
    }
}

impl ConstrainedNlp<'_> {
    fn stack(&self, r: &[f64]) -> Vec<f64> {
        r.iter().map(|v| v - self.epsilon).chain(r.iter().map(|v| -v - self.epsilon)).collect()
    }
}

/// Adam warm start, then the trust-region barrier solve of the loosened
/// problem. The result carries the optimizer's terminal (best) iterate.
pub fn train_constrained(prob: &ResidualProblem, cfg: &ConstrainedConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let started = Instant::now();
    let mut history = Vec::new();
    let mut x0 = prob.params().flat;
    if cfg.warm_start_steps > 0 {
        let warm = PenaltyConfig {
            lr_min: cfg.warm_start_lr,
            lr_max: cfg.warm_start_lr,
            steps: cfg.warm_start_steps,
            adam_betas: cfg.adam_betas,
            adam_eps: cfg.adam_eps,
            weights: Weights::Unit,
            schedule: Schedule::Simultaneous,
            ..PenaltyConfig::default()
        };
        let mut tr = PenaltyTrainer::new(prob, &warm)?;
        for _ in 0..cfg.warm_start_steps {
            tr.step(Phase::Joint)?;
        }
        x0 = tr.x;
        history = tr.history;
    }
    let offset = history.len();
    let warm_time = started.elapsed().as_secs_f64();

    let nlp = ConstrainedNlp { prob, epsilon: cfg.epsilon };
    let sol = tropt::minimize(&nlp, &x0, &cfg.tropt).map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("constrained training: {m}")),
        other => other,
    })?;
    let eps = if cfg.epsilon.is_finite() { cfg.epsilon } else { 0.0 };
    for row in &sol.trace {
        history.push(HistoryRow {
            step: offset + row.iter,
            data_loss: row.objective,
            // the largest stacked constraint is max |r_j| - ε
            max_abs_residual: if cfg.epsilon.is_finite() { row.max_violation + eps } else { f64::NAN },
            diag: row.mu,
            elapsed_s: warm_time + row.elapsed_s,
        });
    }
    let status = match sol.report.status {
        Status::Converged | Status::StepTolerance => TrainStatus::Converged,
        Status::MaxIters | Status::NumericalFailure => TrainStatus::NotConverged,
    };
    let message = Some(format!(
        "{} after {} iterations: kkt {:.3e}, max violation {:.3e}{}",
        sol.report.status.as_str(),
        sol.report.iters,
        sol.report.kkt_norm,
        sol.report.max_violation,
        sol.report.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
    ));
    log::debug!("constrained training: {}", message.as_deref().unwrap_or(""));
    Ok(TrainResult {
        final_params: params_with(prob, sol.x),
        history,
        wall_time: started.elapsed().as_secs_f64(),
        status,
        message,
        lambda: None,
    })
}
