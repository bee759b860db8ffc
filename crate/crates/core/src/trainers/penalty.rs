use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, HistoryRow, TrainResult, TrainStatus};
use crate::error::{Error, Result};
use crate::nnjet::ParamVector;
use crate::residuals::ResidualProblem;

/// Residual weights of the compound loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    /// `λ_j ~ U(0, λ⁰)`, updated by gradient ascent and kept non-negative.
    Adaptive,
    /// `λ_j = 1` throughout: the plain compound loss.
    Unit,
}

/// Order in which the two networks are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Both networks every step.
    Simultaneous,
    /// Thirds of the budget: state on data only, then the rhs with the state
    /// fixed, then the state with the rhs fixed.
    Staggered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Scale of the initial residual weights.
    pub lambda0: f64,
    /// Adam step size for the network parameters.
    pub lr_min: f64,
    /// Adam step size for the residual weights.
    pub lr_max: f64,
    pub steps: usize,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    pub weights: Weights,
    pub schedule: Schedule,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            lr_min: 1e-3,
            lr_max: 1e-3,
            steps: 20_000,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
            weights: Weights::Adaptive,
            schedule: Schedule::Simultaneous,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda0 > 0.0
            && self.lr_min > 0.0
            && self.lr_max > 0.0
            && self.adam_eps > 0.0
            && (0.0..1.0).contains(&self.adam_betas.0)
            && (0.0..1.0).contains(&self.adam_betas.1)
            && self.steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid penalty settings: {self:?}")))
        }
    }
}

/// What one step updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// State and rhs on the compound loss.
    Joint,
    /// State on the data misfit alone.
    DataOnly,
    /// Rhs on the compound loss, state fixed.
    RhsOnly,
    /// State on the compound loss, rhs fixed.
    StateOnly,
}

/// Step-by-step driver behind [`train_penalty`].
pub struct PenaltyTrainer<'a> {
    prob: &'a ResidualProblem,
    cfg: PenaltyConfig,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    adam_x: Adam,
    adam_l: Adam,
    pub history: Vec<HistoryRow>,
    started: Instant,
}

impl<'a> PenaltyTrainer<'a> {
    pub fn new(prob: &'a ResidualProblem, cfg: &PenaltyConfig) -> Result<Self> {
        cfg.validate()?;
        let n = prob.colloc.len();
        let lambda = match cfg.weights {
            Weights::Adaptive => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                (0..n).map(|_| rng.gen_range(0.0..cfg.lambda0)).collect()
            }
            Weights::Unit => vec![1.0; n],
        };
        Ok(Self {
            prob,
            cfg: cfg.clone(),
            x: prob.params().flat,
            lambda,
            adam_x: Adam::new(prob.dim(), cfg.lr_min, cfg.adam_betas, cfg.adam_eps),
            adam_l: Adam::new(n, cfg.lr_max, cfg.adam_betas, cfg.adam_eps),
            history: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Fresh optimizer moments, e.g. between staggered phases.
    pub fn reset_optimizers(&mut self) {
        let c = &self.cfg;
        self.adam_x = Adam::new(self.prob.dim(), c.lr_min, c.adam_betas, c.adam_eps);
        self.adam_l = Adam::new(self.lambda.len(), c.lr_max, c.adam_betas, c.adam_eps);
    }

    /// Updates the residual weights only, leaving the networks untouched.
    pub fn ascend_weights(&mut self) -> Result<()> {
        let cl = self.prob.compound_loss(&self.x, &self.lambda)?;
        self.update_lambda(&cl.grad_lambda);
        Ok(())
    }

    fn update_lambda(&mut self, grad: &[f64]) {
        if self.cfg.weights == Weights::Adaptive {
            self.adam_l.step(&mut self.lambda, grad, true);
            for l in &mut self.lambda {
                *l = l.max(0.0);
            }
        }
    }

    pub fn step(&mut self, phase: Phase) -> Result<HistoryRow> {
        let step = self.history.len() + 1;
        let ns = self.prob.n_state();
        let (data_loss, max_abs_residual, mut grad, grad_lambda) = if phase == Phase::DataOnly {
            let (d, g) = self.prob.data_loss(&self.x)?;
            let r = self.prob.residuals(&self.x)?;
            (d, r.iter().fold(0.0f64, |a, v| a.max(v.abs())), g, None)
        } else {
            let cl = self.prob.compound_loss(&self.x, &self.lambda)?;
            if !cl.value.is_finite() {
                return Err(Error::TrainingDiverged { step, what: "compound loss is not finite".into() });
            }
            (cl.data_loss, cl.max_abs_residual, cl.grad, Some(cl.grad_lambda))
        };
        if !data_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step, what: "loss or gradient is not finite".into() });
        }
        match phase {
            Phase::RhsOnly => grad[..ns].iter_mut().for_each(|g| *g = 0.0),
            Phase::StateOnly | Phase::DataOnly => grad[ns..].iter_mut().for_each(|g| *g = 0.0),
            Phase::Joint => {}
        }
        self.adam_x.step(&mut self.x, &grad, false);
        if let Some(gl) = grad_lambda {
            self.update_lambda(&gl);
        }
        let row = HistoryRow {
            step,
            data_loss,
            max_abs_residual,
            diag: self.lambda.iter().sum::<f64>() / self.lambda.len().max(1) as f64,
            elapsed_s: self.started.elapsed().as_secs_f64(),
        };
        self.history.push(row);
        Ok(row)
    }

    pub fn finish(self, status: TrainStatus) -> TrainResult {
        let mut final_params = self.prob.params();
        final_params.flat = self.x;
        TrainResult {
            final_params,
            history: self.history,
            wall_time: self.started.elapsed().as_secs_f64(),
            status,
            message: None,
            lambda: Some(self.lambda),
        }
    }
}

/// Min-max Adam on `data_loss + (1/N_r) Σ (λ_j r_j)²`: descent for the
/// networks, ascent for the weights.
pub fn train_penalty(prob: &ResidualProblem, cfg: &PenaltyConfig) -> Result<TrainResult> {
    let mut tr = PenaltyTrainer::new(prob, cfg)?;
    match cfg.schedule {
        Schedule::Simultaneous => {
            for _ in 0..cfg.steps {
                tr.step(Phase::Joint)?;
            }
        }
        Schedule::Staggered => {
            let third = cfg.steps / 3;
            let phases = [(Phase::DataOnly, third), (Phase::RhsOnly, third), (Phase::StateOnly, cfg.steps - 2 * third)];
            for (phase, n) in phases {
                tr.reset_optimizers();
                for _ in 0..n {
                    tr.step(phase)?;
                }
            }
        }
    }
    let last = tr.history.last().copied();
    if let Some(r) = last {
        log::debug!("penalty training done: data loss {:.4e}, max |r| {:.3e}", r.data_loss, r.max_abs_residual);
    }
    Ok(tr.finish(TrainStatus::Completed))
}

/// Parameters after training, as a flat vector over both networks.
pub(crate) fn params_with(prob: &ResidualProblem, flat: Vec<f64>) -> ParamVector {
    let mut p = prob.params();
    p.flat = flat;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::testutil::small_problem;

    fn cfg(steps: usize) -> PenaltyConfig {
        PenaltyConfig { steps, lambda0: 10.0, lr_min: 1e-2, lr_max: 1e-2, seed: 3, ..PenaltyConfig::default() }
    }

    #[test]
    fn initial_weights_lie_in_range() {
        let prob = small_problem(1, 20, 40);
        let tr = PenaltyTrainer::new(&prob, &cfg(1)).unwrap();
        assert_eq!(tr.lambda.len(), 40);
        assert!(tr.lambda.iter().all(|&l| (0.0..=10.0).contains(&l)));
        assert!(tr.lambda.iter().any(|&l| l > 5.0));
    }

    #[test]
    fn weights_grow_when_networks_are_frozen() {
        let prob = small_problem(2, 20, 30);
        let mut tr = PenaltyTrainer::new(&prob, &cfg(1)).unwrap();
        let r = prob.residuals(&tr.x).unwrap();
        let before = tr.lambda.clone();
        for _ in 0..5 {
            tr.ascend_weights().unwrap();
        }
        for j in 0..r.len() {
            if r[j] != 0.0 && before[j] > 0.0 {
                assert!(tr.lambda[j] > before[j], "weight {j} did not grow");
            }
        }
    }

    #[test]
    fn data_loss_decreases() {
        let prob = small_problem(3, 40, 30);
        let res = train_penalty(&prob, &cfg(300)).unwrap();
        assert_eq!(res.history.len(), 300);
        assert!(res.history.windows(2).all(|w| w[1].step == w[0].step + 1));
        assert!(res.final_data_loss() < 0.5 * res.history[0].data_loss);
        assert_eq!(res.status, TrainStatus::Completed);
    }

    #[test]
    fn unit_weights_match_direct_compound_descent() {
        let prob = small_problem(4, 15, 10);
        let c = PenaltyConfig { weights: Weights::Unit, ..cfg(25) };
        let res = train_penalty(&prob, &c).unwrap();
        // direct implementation: Adam on data + mean r², written out by hand
        let mut x = prob.params().flat;
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 1e-2);
        let (mut m, mut v) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        for t in 1..=25 {
            let (_, mut g) = prob.data_loss(&x).unwrap();
            let (r, jac) = prob.residual_vector(&x).unwrap();
            for (j, rj) in r.iter().enumerate() {
                for i in 0..x.len() {
                    g[i] += 2.0 * rj * jac[(j, i)] / r.len() as f64;
                }
            }
            for i in 0..x.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t));
                let vh = v[i] / (1.0 - b2.powi(t));
                x[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        for (a, b) in res.final_params.flat.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!(res.lambda.unwrap().iter().all(|&l| l == 1.0));
    }

    #[test]
    fn deterministic() {
        let prob = small_problem(5, 15, 10);
        let a = train_penalty(&prob, &cfg(20)).unwrap();
        let b = train_penalty(&prob, &cfg(20)).unwrap();
        assert_eq!(a.final_params.flat, b.final_params.flat);
        assert_eq!(a.lambda, b.lambda);
    }

    #[test]
    fn staggered_phases_touch_the_right_networks() {
        let prob = small_problem(6, 15, 10);
        let ns = prob.n_state();
        let x0 = prob.params().flat;
        let mut tr = PenaltyTrainer::new(&prob, &cfg(1)).unwrap();
        tr.step(Phase::DataOnly).unwrap();
        assert_eq!(tr.x[ns..], x0[ns..]);
        assert_ne!(tr.x[..ns], x0[..ns]);
        let x1 = tr.x.clone();
        tr.reset_optimizers();
        tr.step(Phase::RhsOnly).unwrap();
        assert_eq!(tr.x[..ns], x1[..ns]);
        assert_ne!(tr.x[ns..], x1[ns..]);

        let c = PenaltyConfig { schedule: Schedule::Staggered, ..cfg(10) };
        assert_eq!(train_penalty(&prob, &c).unwrap().history.len(), 10);
    }

    #[test]
    fn rejects_bad_settings() {
        let prob = small_problem(7, 5, 5);
        assert!(train_penalty(&prob, &PenaltyConfig { lambda0: 0.0, ..cfg(1) }).is_err());
        assert!(train_penalty(&prob, &PenaltyConfig { steps: 0, ..cfg(1) }).is_err());
    }
}
