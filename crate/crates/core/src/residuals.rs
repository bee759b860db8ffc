//! Data misfit and PDE residuals in flat `(θ, φ)` coordinates.
//!
//! The residual at a collocation point is `r_j = u_t - N(u, u_x, ...)`, with
//! `u` the state network and `N` the right-hand-side network. Gradients are
//! assembled from one batched forward pass per network and reverse sweeps
//! seeded with the needed linear combination of jet components.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nnjet::jet::{self, InputScaling, JetOrder, Tape};
use crate::nnjet::{Mlp, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointRole {
    Train,
    Validation,
    Collocation,
}

/// Space-time points, with observed values for data sets.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<(f64, f64)>,
    pub values: Option<Vec<f64>>,
    pub role: PointRole,
}

impl PointSet {
    pub fn data(points: Vec<(f64, f64)>, values: Vec<f64>, role: PointRole) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Input(format!("{} points but {} values", points.len(), values.len())));
        }
        Ok(Self { points, values: Some(values), role })
    }

    pub fn collocation(points: Vec<(f64, f64)>) -> Self {
        Self { points, values: None, role: PointRole::Collocation }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Uniform collocation points over `[x_lo, x_hi] x [t_lo, t_hi]`.
pub fn sample_collocation(n: usize, x: (f64, f64), t: (f64, f64), seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n).map(|_| (rng.gen_range(x.0..x.1), rng.gen_range(t.0..t.1))).collect();
    PointSet::collocation(points)
}

/// Everything needed to evaluate the training objectives.
///
/// The networks fix the architecture and the starting parameters; the loss
/// functions take any parameter vector with the same layout.
#[derive(Debug, Clone)]
pub struct ResidualProblem {
    pub state_net: Mlp,
    pub rhs_net: Mlp,
    pub scaling: InputScaling,
    pub data: PointSet,
    pub colloc: PointSet,
    /// Number of x-derivatives fed to the right-hand side (2 or 3).
    pub rhs_arity: usize,
}

/// Residuals and the intermediate tapes that produced them.
pub struct ResidualEval {
    state_tape: Tape,
    rhs_tape: Tape,
    pub r: Vec<f64>,
}

impl ResidualProblem {
    pub fn new(
        state_net: Mlp,
        rhs_net: Mlp,
        scaling: InputScaling,
        data: PointSet,
        colloc: PointSet,
        rhs_arity: usize,
    ) -> Result<Self> {
        if !(2..=3).contains(&rhs_arity) {
            return Err(Error::Config(format!("rhs arity must be 2 or 3, got {rhs_arity}")));
        }
        if rhs_net.input_dim() != rhs_arity + 1 || rhs_net.output_dim() != 1 {
            return Err(Error::Config(format!(
                "rhs network takes {} inputs, arity {rhs_arity} needs {}",
                rhs_net.input_dim(),
                rhs_arity + 1
            )));
        }
        if state_net.input_dim() != 2 || state_net.output_dim() != 1 {
            return Err(Error::Config("state network must map (x, t) to a scalar".into()));
        }
        if data.values.is_none() {
            return Err(Error::Config("training set has no observed values".into()));
        }
        if colloc.values.is_some() {
            return Err(Error::Config("collocation points must not carry values".into()));
        }
        Ok(Self { state_net, rhs_net, scaling, data, colloc, rhs_arity })
    }

    /// Current parameters of both networks, state first.
    pub fn params(&self) -> ParamVector {
        ParamVector::flatten(&[&self.state_net, &self.rhs_net])
    }

    pub fn dim(&self) -> usize {
        self.state_net.param_count() + self.rhs_net.param_count()
    }

    pub fn n_state(&self) -> usize {
        self.state_net.param_count()
    }

    /// Networks carrying the parameters `flat`.
    pub fn nets(&self, flat: &[f64]) -> Result<(Mlp, Mlp)> {
        if flat.len() != self.dim() {
            return Err(Error::Internal(format!("expected {} parameters, got {}", self.dim(), flat.len())));
        }
        let mut s = self.state_net.clone();
        let mut r = self.rhs_net.clone();
        let k = s.read_params(flat)?;
        r.read_params(&flat[k..])?;
        Ok((s, r))
    }

    /// Writes `flat` back into the problem's networks.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        let (s, r) = self.nets(flat)?;
        self.state_net = s;
        self.rhs_net = r;
        Ok(())
    }

    fn order(&self) -> JetOrder {
        if self.rhs_arity == 3 {
            JetOrder::X3
        } else {
            JetOrder::X2
        }
    }

    /// Mean squared misfit on the training data and its gradient (zero on φ).
    pub fn data_loss(&self, flat: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (state, _) = self.nets(flat)?;
        let mut grad = vec![0.0; self.dim()];
        let v = data_loss_into(&state, &self.scaling, &self.data, &mut grad[..self.n_state()])?;
        Ok((v, grad))
    }

    /// Evaluates the residuals, keeping tapes for later gradient sweeps.
    pub fn evaluate(&self, state: &Mlp, rhs: &Mlp) -> Result<ResidualEval> {
        if self.colloc.is_empty() {
            return Err(Error::Config("collocation set is empty".into()));
        }
        let n = self.colloc.len();
        let state_tape = jet::state_forward(state, &self.scaling, &self.colloc.points, self.order())?;
        let dim = self.rhs_arity + 1;
        let mut inp = DMatrix::zeros(dim, n);
        for i in 0..dim {
            let comp = if i == 0 { jet::VALUE } else { jet::DT + i };
            for (j, &v) in state_tape.output(comp).iter().enumerate() {
                inp[(i, j)] = v;
            }
        }
        let rhs_tape = Tape::forward(rhs, inp, 1)?;
        let ut = state_tape.output(jet::DT);
        let nv = rhs_tape.output(jet::VALUE);
        let mut r = Vec::with_capacity(n);
        for j in 0..n {
            let v = ut[j] - nv[j];
            if !v.is_finite() {
                return Err(Error::NonFinite { index: j, what: "PDE residual".into() });
            }
            r.push(v);
        }
        Ok(ResidualEval { state_tape, rhs_tape, r })
    }

    /// Residual values only.
    pub fn residuals(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let (s, r) = self.nets(flat)?;
        Ok(self.evaluate(&s, &r)?.r)
    }

    /// Residuals and their dense Jacobian (`N_r x dim`).
    pub fn residual_vector(&self, flat: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (state, rhs) = self.nets(flat)?;
        let ev = self.evaluate(&state, &rhs)?;
        let jac = self.jacobian(&state, &rhs, &ev);
        Ok((ev.r, jac))
    }

    fn jacobian(&self, state: &Mlp, rhs: &Mlp, ev: &ResidualEval) -> DMatrix<f64> {
        let n = ev.r.len();
        let ns = self.n_state();
        let adj_rhs = ev.rhs_tape.backward(rhs, DMatrix::from_element(1, n, -1.0), true);
        let seed = self.state_seed(&vec![1.0; n], adj_rhs.input().unwrap(), n);
        let adj_state = ev.state_tape.backward(state, seed, false);
        let mut jac = DMatrix::zeros(n, self.dim());
        let mut row = vec![0.0; self.dim()];
        for j in 0..n {
            row.iter_mut().for_each(|v| *v = 0.0);
            ev.state_tape.accumulate_point(state, &adj_state, j, &mut row[..ns]);
            ev.rhs_tape.accumulate_point(rhs, &adj_rhs, j, &mut row[ns..]);
            for (k, &v) in row.iter().enumerate() {
                jac[(j, k)] = v;
            }
        }
        jac
    }

    /// Seed for the state sweep given `w_j` on `u_t` and the already-weighted
    /// right-hand-side input adjoints.
    fn state_seed(&self, w: &[f64], rhs_in_adj: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
        let comps = self.order().components();
        let mut seed = DMatrix::zeros(1, comps * n);
        for j in 0..n {
            seed[(0, jet::DT * n + j)] = w[j];
            for i in 0..=self.rhs_arity {
                let comp = if i == 0 { jet::VALUE } else { jet::DT + i };
                seed[(0, comp * n + j)] += rhs_in_adj[(i, j)];
            }
        }
        seed
    }

    /// `Σ_j w_j ∇r_j`, i.e. the transposed Jacobian applied to `w`.
    pub fn residual_vjp(&self, state: &Mlp, rhs: &Mlp, ev: &ResidualEval, w: &[f64], out: &mut [f64]) {
        let n = ev.r.len();
        let ns = self.n_state();
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        let adj_rhs = ev.rhs_tape.backward(rhs, DMatrix::from_row_slice(1, n, &neg), true);
        let seed = self.state_seed(w, adj_rhs.input().unwrap(), n);
        let adj_state = ev.state_tape.backward(state, seed, false);
        ev.state_tape.accumulate_sum(state, &adj_state, &mut out[..ns]);
        ev.rhs_tape.accumulate_sum(rhs, &adj_rhs, &mut out[ns..]);
    }

    /// `data_loss + (1/N_r) Σ (λ_j r_j)²` with gradients in `(θ, φ)` and in `λ`.
    pub fn compound_loss(&self, flat: &[f64], lambda: &[f64]) -> Result<CompoundLoss> {
        let n = self.colloc.len();
        if lambda.len() != n {
            return Err(Error::Internal(format!("{} weights for {n} collocation points", lambda.len())));
        }
        let (state, rhs) = self.nets(flat)?;
        let mut grad = vec![0.0; self.dim()];
        let data = data_loss_into(&state, &self.scaling, &self.data, &mut grad[..self.n_state()])?;
        let ev = self.evaluate(&state, &rhs)?;
        let nr = n as f64;
        let mut penalty = 0.0;
        let mut w = Vec::with_capacity(n);
        let mut grad_lambda = Vec::with_capacity(n);
        for (&l, &r) in lambda.iter().zip(&ev.r) {
            penalty += (l * r) * (l * r);
            w.push(2.0 * l * l * r / nr);
            grad_lambda.push(2.0 * l * r * r / nr);
        }
        self.residual_vjp(&state, &rhs, &ev, &w, &mut grad);
        let max_abs_residual = ev.r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(CompoundLoss { value: data + penalty / nr, data_loss: data, grad, grad_lambda, max_abs_residual })
    }
}

/// Output of [`ResidualProblem::compound_loss`].
#[derive(Debug, Clone)]
pub struct CompoundLoss {
    pub value: f64,
    pub data_loss: f64,
    pub grad: Vec<f64>,
    pub grad_lambda: Vec<f64>,
    pub max_abs_residual: f64,
}

/// Adds the gradient of the data MSE into `grad` (state parameters only).
fn data_loss_into(state: &Mlp, scaling: &InputScaling, data: &PointSet, grad: &mut [f64]) -> Result<f64> {
    let values = data.values.as_ref().ok_or_else(|| Error::Config("data set has no values".into()))?;
    if data.is_empty() {
        return Err(Error::Config("data set is empty".into()));
    }
    let n = data.len() as f64;
    let tape = jet::state_forward(state, scaling, &data.points, JetOrder::Value)?;
    let pred = tape.output(jet::VALUE);
    let mut loss = 0.0;
    let mut seed = DMatrix::zeros(1, data.len());
    for (j, (&p, &u)) in pred.iter().zip(values).enumerate() {
        let e = p - u;
        loss += e * e;
        seed[(0, j)] = 2.0 * e / n;
    }
    if !loss.is_finite() {
        return Err(Error::Numerical("data loss is not finite".into()));
    }
    let adj = tape.backward(state, seed, false);
    tape.accumulate_sum(state, &adj, grad);
    Ok(loss / n)
}

/// Data MSE of a state network on a point set, without gradients.
pub fn mse(state: &Mlp, scaling: &InputScaling, data: &PointSet) -> Result<f64> {
    let values = data.values.as_ref().ok_or_else(|| Error::Config("data set has no values".into()))?;
    let tape = jet::state_forward(state, scaling, &data.points, JetOrder::Value)?;
    let s: f64 = tape.output(jet::VALUE).iter().zip(values).map(|(p, u)| (p - u) * (p - u)).sum();
    Ok(s / data.len().max(1) as f64)
}
