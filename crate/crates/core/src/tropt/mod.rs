//! Trust-region barrier method for `min h(x)` subject to `g(x) ≤ 0`.
//!
//! Slacks turn the inequalities into `g(x) + s = 0, s > 0`, and a sequence
//! of log-barrier subproblems with decreasing `μ` is solved by an
//! equality-constrained SQP. Each SQP step splits into a normal step (dogleg
//! towards linearized feasibility) and a tangential step (projected CG on the
//! null space of the constraint Jacobian). Slack steps are measured in the
//! metric scaled by `diag(s)⁻¹`, which makes the fraction-to-boundary rule a
//! simple lower bound `-τ` on the scaled slack step. Globalization uses an
//! ℓ2 merit function with a self-adjusting penalty and an optional
//! second-order correction. Curvature comes from two damped BFGS matrices.

mod bfgs;
mod linalg;

use std::io::Write;
use std::path::Path;

pub use bfgs::Bfgs;
pub use linalg::{
    box_intersections, box_sphere_intersections, sphere_intersections, ConstraintJacobian, Projections,
};

use linalg::{axpy, clamp_box, dot, inside_box, norm, norm_inf};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Problem callbacks. Callbacks must be deterministic; an `Err` or a
/// non-finite value at a trial point rejects that point.
pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// `h(x)` and `∇h(x)`.
    fn objective(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// `g(x)` and its Jacobian.
    fn constraints(&self, x: &[f64]) -> Result<(Vec<f64>, ConstraintJacobian)>;

    fn objective_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.objective(x)?.0)
    }

    fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.constraints(x)?.0)
    }
}

type ObjFn<'a> = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a>;
type ConFn<'a> = Box<dyn Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>) + 'a>;

/// Closure-backed problem with a dense Jacobian.
pub struct FnProblem<'a> {
    pub dim: usize,
    pub m: usize,
    pub objective: ObjFn<'a>,
    pub constraints: ConFn<'a>,
}

impl<'a> FnProblem<'a> {
    pub fn new(
        dim: usize,
        m: usize,
        objective: impl Fn(&[f64]) -> (f64, Vec<f64>) + 'a,
        constraints: impl Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>) + 'a,
    ) -> Self {
        Self { dim, m, objective: Box::new(objective), constraints: Box::new(constraints) }
    }

    pub fn unconstrained(dim: usize, objective: impl Fn(&[f64]) -> (f64, Vec<f64>) + 'a) -> Self {
        Self::new(dim, 0, objective, move |_| (Vec::new(), DMatrix::zeros(0, dim)))
    }
}

impl NlpProblem for FnProblem<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn num_constraints(&self) -> usize {
        self.m
    }
    fn objective(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.objective)(x))
    }
    fn constraints(&self, x: &[f64]) -> Result<(Vec<f64>, ConstraintJacobian)> {
        let (g, j) = (self.constraints)(x);
        Ok((g, ConstraintJacobian::Dense(j)))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TroptSettings {
    pub mu0: f64,
    pub mu_shrink: f64,
    pub barrier_tol: f64,
    /// Largest constraint value accepted as feasible.
    pub ktol: f64,
    /// Scaled KKT residual tolerance.
    pub gtol: f64,
    pub xtol: f64,
    pub max_iters: usize,
    pub tau_ftb: f64,
    pub tr0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub tr_shrink: f64,
    pub tr_grow: f64,
    /// Cap on projected-CG iterations on top of `2 * dim`.
    pub cg_max_iters: Option<usize>,
    pub initial_penalty: f64,
    pub inner_tol0: f64,
}

impl Default for TroptSettings {
    fn default() -> Self {
        Self {
            mu0: 0.1,
            mu_shrink: 0.2,
            barrier_tol: 1e-8,
            ktol: 1e-8,
            gtol: 1e-8,
            xtol: 1e-10,
            max_iters: 1000,
            tau_ftb: 0.995,
            tr0: 1.0,
            eta1: 0.01,
            eta2: 0.9,
            tr_shrink: 0.5,
            tr_grow: 2.0,
            cg_max_iters: None,
            initial_penalty: 1.0,
            inner_tol0: 0.1,
        }
    }
}

impl TroptSettings {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("mu0", self.mu0),
            ("barrier_tol", self.barrier_tol),
            ("ktol", self.ktol),
            ("gtol", self.gtol),
            ("xtol", self.xtol),
            ("tr0", self.tr0),
            ("initial_penalty", self.initial_penalty),
            ("inner_tol0", self.inner_tol0),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tropt setting {name} must be positive and finite, got {v}")));
            }
        }
        let unit = [("mu_shrink", self.mu_shrink), ("tau_ftb", self.tau_ftb), ("tr_shrink", self.tr_shrink)];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("tropt setting {name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.eta1 > 0.0 && self.eta1 < self.eta2 && self.eta2 < 1.0) {
            return Err(Error::Config("tropt needs 0 < eta1 < eta2 < 1".into()));
        }
        if self.tr_grow <= 1.0 {
            return Err(Error::Config("tropt setting tr_grow must exceed 1".into()));
        }
        if self.max_iters == 0 || self.cg_max_iters == Some(0) {
            return Err(Error::Config("tropt iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Callback values at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub h: f64,
    pub grad: Vec<f64>,
    pub g: Vec<f64>,
    pub jac: ConstraintJacobian,
}

impl Evaluation {
    pub fn at<P: NlpProblem + ?Sized>(p: &P, x: &[f64]) -> Result<Self> {
        let (h, grad) = p.objective(x)?;
        let (g, jac) = p.constraints(x)?;
        if grad.len() != p.dim() || g.len() != p.num_constraints() || jac.rows() != g.len() || jac.cols() != p.dim() {
            return Err(Error::Internal("callback output has the wrong shape".into()));
        }
        if !h.is_finite() || grad.iter().chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("callback returned a non-finite value".into()));
        }
        Ok(Self { h, grad, g, jac })
    }

    pub fn max_violation(&self) -> f64 {
        max_violation(&self.g)
    }
}

pub fn max_violation(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |m, &v| m.max(v))
}

/// Iterate of the barrier method.
#[derive(Debug, Clone)]
pub struct BarrierState {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu: f64,
    pub tr_radius: f64,
    pub h_obj: Bfgs,
    pub h_con: Bfgs,
    /// Merit-function penalty parameter.
    pub penalty: f64,
}

impl BarrierState {
    /// State at `x` with the standard starting slack `max(-1.5 g, 1)`.
    pub fn initial(x: &[f64], ev: &Evaluation, settings: &TroptSettings) -> Self {
        let n = x.len();
        Self {
            x: x.to_vec(),
            s: ev.g.iter().map(|&g| (-1.5 * g).max(1.0)).collect(),
            nu: vec![0.0; ev.g.len()],
            mu: settings.mu0,
            tr_radius: settings.tr0,
            h_obj: Bfgs::new(n),
            h_con: Bfgs::new(n),
            penalty: settings.initial_penalty,
        }
    }

    pub fn barrier_objective(&self, h: f64) -> f64 {
        h - self.mu * self.s.iter().map(|s| s.ln()).sum::<f64>()
    }
}

/// Perturbed KKT residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals {
    /// `∇h + Jᵀν`
    pub e1: Vec<f64>,
    /// `s ∘ ν - μ`
    pub e2: Vec<f64>,
    /// `g + s`
    pub e3: Vec<f64>,
}

pub fn kkt_residuals(state: &BarrierState, ev: &Evaluation) -> KktResiduals {
    let jtn = ev.jac.tr_mul(&state.nu);
    KktResiduals {
        e1: axpy(&ev.grad, 1.0, &jtn),
        e2: state.s.iter().zip(&state.nu).map(|(s, v)| s * v - state.mu).collect(),
        e3: ev.g.iter().zip(&state.s).map(|(g, s)| g + s).collect(),
    }
}

/// Scaled KKT residual of the original problem:
/// `max(‖∇h + Jᵀν‖∞, ‖s ∘ ν‖∞) / max(1, ‖∇h‖∞)`.
pub fn kkt_norm(state: &BarrierState, ev: &Evaluation) -> f64 {
    let k = kkt_residuals(state, ev);
    let comp = state.s.iter().zip(&state.nu).map(|(s, v)| (s * v).abs()).fold(0.0, f64::max);
    norm_inf(&k.e1).max(comp) / norm_inf(&ev.grad).max(1.0)
}

/// Gradient of the barrier objective in scaled `(x, s)` coordinates.
fn barrier_gradient(state: &BarrierState, ev: &Evaluation) -> Vec<f64> {
    let mut c = ev.grad.clone();
    c.extend(std::iter::repeat(-state.mu).take(state.s.len()));
    c
}

/// Least-squares multipliers `ν = -(A Aᵀ)⁻¹ A c` in scaled coordinates.
pub fn estimate_multipliers(state: &BarrierState, ev: &Evaluation) -> Result<Vec<f64>> {
    let proj = Projections::new(&ev.jac, &state.s)?;
    Ok(multipliers(&proj, state, ev))
}

fn multipliers(proj: &Projections, state: &BarrierState, ev: &Evaluation) -> Vec<f64> {
    proj.least_squares(&barrier_gradient(state, ev)).iter().map(|v| -v).collect()
}

/// Diagonal slack block of the Lagrangian Hessian: `ν_j / s_j` where
/// `ν_j > 0`, otherwise the primal value `μ / s_j²`.
pub fn slack_hessian(state: &BarrierState) -> Vec<f64> {
    state
        .s
        .iter()
        .zip(&state.nu)
        .map(|(&s, &v)| if v > 0.0 { v / s } else { state.mu / (s * s) })
        .collect()
}

/// Slack block in the scaled metric, `S ∇_ss L S`.
fn scaled_slack_hessian(state: &BarrierState) -> Vec<f64> {
    state.s.iter().zip(&state.nu).map(|(&s, &v)| if v > 0.0 { s * v } else { state.mu }).collect()
}

struct Model<'a> {
    hx: &'a DMatrix<f64>,
    hs: Vec<f64>,
}

impl Model<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.hx.nrows();
        let mut out = (self.hx * DVector::from_column_slice(&v[..n])).as_slice().to_vec();
        out.extend(self.hs.iter().zip(&v[n..]).map(|(h, x)| h * x));
        out
    }
}

fn lower_box(n: usize, m: usize, tau: f64, factor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lb = vec![f64::NEG_INFINITY; n];
    lb.extend(std::iter::repeat(-tau * factor).take(m));
    (lb, vec![f64::INFINITY; n + m])
}

fn modified_dogleg(proj: &Projections, b: &[f64], radius: f64, lb: &[f64], ub: &[f64]) -> Vec<f64> {
    let dim = proj.n() + proj.m();
    let newton: Vec<f64> = proj.row_space(b).iter().map(|v| -v).collect();
    if inside_box(&newton, lb, ub) && norm(&newton) <= radius {
        return newton;
    }
    let g = proj.at_mul(b);
    let ag = proj.a_mul(&g);
    let agag = dot(&ag, &ag);
    if agag == 0.0 {
        return vec![0.0; dim];
    }
    let cauchy: Vec<f64> = g.iter().map(|v| -dot(&g, &g) / agag * v).collect();
    let origin = vec![0.0; dim];
    let leg = axpy(&newton, -1.0, &cauchy);
    let (_, alpha, hit) = box_sphere_intersections(&cauchy, &leg, lb, ub, radius, false);
    let x1 = if hit {
        axpy(&cauchy, alpha, &leg)
    } else {
        let (_, alpha, _) = box_sphere_intersections(&origin, &cauchy, lb, ub, radius, false);
        axpy(&origin, alpha, &cauchy)
    };
    let (_, alpha, _) = box_sphere_intersections(&origin, &newton, lb, ub, radius, false);
    let x2 = axpy(&origin, alpha, &newton);
    let r1 = norm(&axpy(&proj.a_mul(&x1), 1.0, b));
    let r2 = norm(&axpy(&proj.a_mul(&x2), 1.0, b));
    if r1 < r2 {
        x1
    } else {
        x2
    }
}

/// Normal step in scaled `(x, s)` coordinates: dogleg towards `g + s + A d = 0`
/// inside `0.8 × radius` and half the fraction-to-boundary box.
pub fn normal_step(state: &BarrierState, ev: &Evaluation, settings: &TroptSettings) -> Result<Vec<f64>> {
    let proj = Projections::new(&ev.jac, &state.s)?;
    let b: Vec<f64> = ev.g.iter().zip(&state.s).map(|(g, s)| g + s).collect();
    let (lb, ub) = lower_box(state.x.len(), state.s.len(), settings.tau_ftb, 0.5);
    Ok(modified_dogleg(&proj, &b, 0.8 * state.tr_radius, &lb, &ub))
}

#[allow(clippy::too_many_arguments)]
fn projected_cg(
    model: &Model,
    c: &[f64],
    proj: &Projections,
    radius: f64,
    lb: &[f64],
    ub: &[f64],
    max_iter: usize,
) -> (Vec<f64>, usize) {
    let dim = c.len();
    let mut x = vec![0.0; dim];
    let mut r = proj.null_space(c);
    let mut g = r.clone();
    let mut p: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut rt_g = dot(&g, &g);
    if radius <= 1e-25 || rt_g == 0.0 {
        return (x, 0);
    }
    let g0 = rt_g.sqrt();
    let tol = (0.1f64.min(g0.sqrt()) * g0).powi(2);
    let mut hp = model.apply(&p);
    let mut last_feasible = vec![0.0; dim];
    let mut infeasible = 0usize;
    let mut iters = 0;
    for _ in 0..max_iter {
        if rt_g < tol {
            break;
        }
        iters += 1;
        let php = dot(&p, &hp);
        if php <= 0.0 {
            let (_, alpha, hit) = box_sphere_intersections(&x, &p, lb, ub, radius, true);
            if hit {
                x = axpy(&x, alpha, &p);
            }
            clamp_box(&mut x, lb, ub);
            break;
        }
        let alpha = rt_g / php;
        let x_next = axpy(&x, alpha, &p);
        if norm(&x_next) >= radius {
            let ap: Vec<f64> = p.iter().map(|v| alpha * v).collect();
            let (_, theta, hit) = box_sphere_intersections(&x, &ap, lb, ub, radius, false);
            if hit {
                x = axpy(&x, theta, &ap);
            }
            clamp_box(&mut x, lb, ub);
            break;
        }
        if inside_box(&x_next, lb, ub) {
            infeasible = 0;
        } else {
            infeasible += 1;
            let ap: Vec<f64> = p.iter().map(|v| alpha * v).collect();
            let (_, theta, hit) = box_sphere_intersections(&x, &ap, lb, ub, radius, false);
            if hit {
                last_feasible = axpy(&x, theta, &ap);
                clamp_box(&mut last_feasible, lb, ub);
                infeasible = 0;
            }
        }
        if infeasible > max_iter {
            break;
        }
        x = x_next;
        r = axpy(&r, alpha, &hp);
        g = proj.null_space(&r);
        let rt_next = dot(&g, &g);
        let beta = rt_next / rt_g;
        p = axpy(&g.iter().map(|v| -v).collect::<Vec<_>>(), beta, &p);
        r = g.clone();
        rt_g = rt_next;
        hp = model.apply(&p);
    }
    if !inside_box(&x, lb, ub) {
        x = last_feasible;
    }
    (x, iters)
}

fn cg_limit(settings: &TroptSettings, dim: usize) -> usize {
    let cap = 2 * dim;
    settings.cg_max_iters.map_or(cap, |c| c.min(cap))
}

fn lagrangian_x_hessian(state: &BarrierState) -> DMatrix<f64> {
    &state.h_obj.b + &state.h_con.b
}

/// Tangential step: projected CG on the quadratic model restricted to the
/// null space of `A`, inside what remains of the trust region after
/// `normal`.
pub fn tangential_step(state: &BarrierState, ev: &Evaluation, normal: &[f64], settings: &TroptSettings) -> Result<Vec<f64>> {
    let proj = Projections::new(&ev.jac, &state.s)?;
    let hx = lagrangian_x_hessian(state);
    let model = Model { hx: &hx, hs: scaled_slack_hessian(state) };
    let (lb, ub) = lower_box(state.x.len(), state.s.len(), settings.tau_ftb, 1.0);
    Ok(tangential(&model, &proj, state, ev, normal, &lb, &ub, settings).0)
}

#[allow(clippy::too_many_arguments)]
fn tangential(
    model: &Model,
    proj: &Projections,
    state: &BarrierState,
    ev: &Evaluation,
    normal: &[f64],
    lb: &[f64],
    ub: &[f64],
    settings: &TroptSettings,
) -> (Vec<f64>, usize) {
    let c = barrier_gradient(state, ev);
    let c_t = axpy(&model.apply(normal), 1.0, &c);
    let radius_t = (state.tr_radius.powi(2) - dot(normal, normal)).max(0.0).sqrt();
    let lb_t = axpy(lb, -1.0, normal);
    let ub_t = axpy(ub, -1.0, normal);
    projected_cg(model, &c_t, proj, radius_t, &lb_t, &ub_t, cg_limit(settings, c.len()))
}

/// Outcome of one trust-region step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub ratio: f64,
    pub used_soc: bool,
    pub cg_iters: usize,
}

struct Trial {
    x: Vec<f64>,
    s: Vec<f64>,
    merit: f64,
}

fn trial_point<P: NlpProblem + ?Sized>(p: &P, state: &BarrierState, d: &[f64], tau: f64) -> Option<Trial> {
    let n = state.x.len();
    let x: Vec<f64> = state.x.iter().zip(&d[..n]).map(|(a, b)| a + b).collect();
    let s: Vec<f64> = state.s.iter().zip(&d[n..]).map(|(s, ds)| s + s * ds.max(-tau)).collect();
    if s.iter().any(|&v| !(v > 0.0)) || x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let h = p.objective_value(&x).ok()?;
    let g = p.constraint_values(&x).ok()?;
    let b: Vec<f64> = g.iter().zip(&s).map(|(g, s)| g + s).collect();
    let merit = h - state.mu * s.iter().map(|v| v.ln()).sum::<f64>() + state.penalty * norm(&b);
    if !merit.is_finite() {
        return None;
    }
    Some(Trial { x, s, merit })
}

/// Computes and tries one composite step from `state`. On acceptance,
/// `state` and `ev` move to the new point, multipliers are re-estimated and
/// both BFGS matrices are updated.
pub fn sqp_step<P: NlpProblem + ?Sized>(
    p: &P,
    settings: &TroptSettings,
    state: &mut BarrierState,
    ev: &mut Evaluation,
) -> Result<StepOutcome> {
    let n = state.x.len();
    let m = state.s.len();
    let hx = lagrangian_x_hessian(state);
    let model = Model { hx: &hx, hs: scaled_slack_hessian(state) };
    let (d, dn_norm, dt_norm, cg_iters, b, c) = {
        let proj = Projections::new(&ev.jac, &state.s)?;
        let b: Vec<f64> = ev.g.iter().zip(&state.s).map(|(g, s)| g + s).collect();
        let (lb_n, ub_n) = lower_box(n, m, settings.tau_ftb, 0.5);
        let dn = modified_dogleg(&proj, &b, 0.8 * state.tr_radius, &lb_n, &ub_n);
        let (lb, ub) = lower_box(n, m, settings.tau_ftb, 1.0);
        let (dt, cg_iters) = tangential(&model, &proj, state, ev, &dn, &lb, &ub, settings);
        let d = axpy(&dn, 1.0, &dt);
        (d, norm(&dn), norm(&dt), cg_iters, b, barrier_gradient(state, ev))
    };
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("trust-region step is not finite".into()));
    }
    let d_norm = norm(&d);
    let qm = 0.5 * dot(&model.apply(&d), &d) + dot(&c, &d);
    let lin = {
        let proj = Projections::new(&ev.jac, &state.s)?;
        axpy(&proj.a_mul(&d), 1.0, &b)
    };
    let vpred = (norm(&b) - norm(&lin)).max(1e-16);
    let previous_penalty = state.penalty;
    if qm > 0.0 {
        state.penalty = state.penalty.max(qm / ((1.0 - 0.3) * vpred));
    }
    let pred = -qm + state.penalty * vpred;
    let merit = state.barrier_objective(ev.h) + state.penalty * norm(&b);

    let mut used_soc = false;
    let mut trial = trial_point(p, state, &d, settings.tau_ftb);
    let ratio_of = |t: &Option<Trial>| t.as_ref().map_or(f64::NEG_INFINITY, |t| (merit - t.merit) / pred);
    let mut ratio = ratio_of(&trial);
    if ratio < settings.eta1 && dn_norm <= 0.1 * dt_norm {
        if let Some(t) = &trial {
            let g_next = p.constraint_values(&t.x).ok();
            if let Some(g_next) = g_next {
                let b_next: Vec<f64> = g_next.iter().zip(&t.s).map(|(g, s)| g + s).collect();
                let proj = Projections::new(&ev.jac, &state.s)?;
                let y: Vec<f64> = proj.row_space(&b_next).iter().map(|v| -v).collect();
                let (lb, ub) = lower_box(n, m, settings.tau_ftb, 1.0);
                let (_, tb, hit) = box_intersections(&d, &y, &lb, &ub, false);
                if hit {
                    let d_soc = axpy(&d, tb, &y);
                    let soc = trial_point(p, state, &d_soc, settings.tau_ftb);
                    let r_soc = ratio_of(&soc);
                    if r_soc >= settings.eta1 {
                        trial = soc;
                        ratio = r_soc;
                        used_soc = true;
                    }
                }
            }
        }
    }

    if ratio >= settings.eta2 && d_norm >= 0.9 * state.tr_radius {
        state.tr_radius *= settings.tr_grow;
    } else if ratio < settings.eta1 {
        state.tr_radius = settings.tr_shrink * state.tr_radius.min(d_norm.max(f64::MIN_POSITIVE));
    }

    let accepted = ratio >= settings.eta1;
    if accepted {
        let t = trial.expect("accepted step has a trial point");
        let new_ev = match Evaluation::at(p, &t.x) {
            Ok(e) => e,
            Err(_) => {
                state.penalty = previous_penalty;
                state.tr_radius *= settings.tr_shrink;
                return Ok(StepOutcome { accepted: false, ratio, used_soc, cg_iters });
            }
        };
        let dx: Vec<f64> = t.x.iter().zip(&state.x).map(|(a, b)| a - b).collect();
        let old_jac = std::mem::replace(&mut ev.jac, new_ev.jac.clone());
        let old_grad = std::mem::replace(&mut ev.grad, new_ev.grad.clone());
        ev.h = new_ev.h;
        ev.g = new_ev.g;
        state.x = t.x;
        state.s = t.s;
        state.nu = estimate_multipliers(state, ev)?;
        state.h_obj.update(&dx, &axpy(&ev.grad, -1.0, &old_grad));
        let dcon = axpy(&ev.jac.tr_mul(&state.nu), -1.0, &old_jac.tr_mul(&state.nu));
        state.h_con.update(&dx, &dcon);
    } else {
        state.penalty = previous_penalty;
    }
    Ok(StepOutcome { accepted, ratio, used_soc, cg_iters })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    /// The trust region shrank below `xtol` at the final barrier parameter:
    /// no representable step improves the merit function any further.
    StepTolerance,
    MaxIters,
    NumericalFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::StepTolerance => "xtol",
            Status::MaxIters => "max_iters",
            Status::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub status: Status,
    pub iters: usize,
    pub kkt_norm: f64,
    pub max_violation: f64,
    pub objective: f64,
    /// Explanation when `status` is a failure.
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub mu: f64,
    pub tr_radius: f64,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_norm: f64,
    pub step_accepted: bool,
    /// Seconds since `minimize` started (not written to the trace CSV).
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub report: Report,
    pub trace: Vec<TraceRow>,
}

impl Solution {
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "iter,mu,tr_radius,objective,max_violation,kkt_norm,step_accepted").map_err(io)?;
        for r in &self.trace {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{}",
                r.iter, r.mu, r.tr_radius, r.objective, r.max_violation, r.kkt_norm, r.step_accepted as u8
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Best point seen: the feasible one with the lowest objective, or else the
/// one with the lowest violation.
struct Best {
    x: Vec<f64>,
    h: f64,
    viol: f64,
    kkt: f64,
}

impl Best {
    fn consider(&mut self, x: &[f64], h: f64, viol: f64, kkt: f64, ktol: f64) {
        let better = match (viol <= ktol, self.viol <= ktol) {
            (true, true) => h < self.h,
            (true, false) => true,
            (false, true) => false,
            (false, false) => viol < self.viol,
        };
        if better {
            *self = Best { x: x.to_vec(), h, viol, kkt };
        }
    }
}

/// Minimizes `h` subject to `g ≤ 0` from `x0`.
///
/// Fails with an error only when the callbacks fail at `x0`; later failures
/// end the run with `Status::NumericalFailure` and the best iterate.
pub fn minimize<P: NlpProblem + ?Sized>(p: &P, x0: &[f64], settings: &TroptSettings) -> Result<Solution> {
    settings.validate()?;
    if x0.len() != p.dim() {
        return Err(Error::Input(format!("x0 has {} entries, problem has {}", x0.len(), p.dim())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("x0 must be finite".into()));
    }
    let mut ev = Evaluation::at(p, x0)?;
    let mut state = BarrierState::initial(x0, &ev, settings);
    state.nu = estimate_multipliers(&state, &ev)?;
    let mut tol = settings.inner_tol0;
    let mut iters = 0;
    let mut trace = Vec::new();
    let kkt0 = kkt_norm(&state, &ev);
    let mut best = Best { x: x0.to_vec(), h: ev.h, viol: ev.max_violation(), kkt: kkt0 };
    let mut message = None;

    let started = std::time::Instant::now();
    let status = 'outer: loop {
        state.penalty = settings.initial_penalty;
        loop {
            let kkt = kkt_norm(&state, &ev);
            let viol = ev.max_violation();
            if kkt <= settings.gtol && viol <= settings.ktol {
                break 'outer Status::Converged;
            }
            let k = kkt_residuals(&state, &ev);
            let inner_opt = norm_inf(&k.e1).max(norm_inf(&k.e2));
            if (inner_opt < tol && norm_inf(&k.e3) < tol) || state.tr_radius < settings.xtol {
                break;
            }
            if iters >= settings.max_iters {
                break 'outer Status::MaxIters;
            }
            iters += 1;
            match sqp_step(p, settings, &mut state, &mut ev) {
                Ok(out) => {
                    let kkt = kkt_norm(&state, &ev);
                    let viol = ev.max_violation();
                    if out.accepted {
                        best.consider(&state.x, ev.h, viol, kkt, settings.ktol);
                    }
                    log::trace!(
                        "tropt iter {iters}: mu {:.2e} radius {:.2e} h {:.6e} viol {:.2e} kkt {:.2e} ratio {:.3} cg {}",
                        state.mu,
                        state.tr_radius,
                        ev.h,
                        viol,
                        kkt,
                        out.ratio,
                        out.cg_iters
                    );
                    trace.push(TraceRow {
                        iter: iters,
                        mu: state.mu,
                        tr_radius: state.tr_radius,
                        objective: ev.h,
                        max_violation: viol,
                        kkt_norm: kkt,
                        step_accepted: out.accepted,
                        elapsed_s: started.elapsed().as_secs_f64(),
                    });
                }
                Err(e) => {
                    message = Some(e.to_string());
                    break 'outer Status::NumericalFailure;
                }
            }
        }
        if state.mu < settings.barrier_tol && state.tr_radius < settings.xtol {
            break Status::StepTolerance;
        }
        state.mu *= settings.mu_shrink;
        tol *= settings.mu_shrink;
        state.tr_radius = settings.tr0.max(5.0 * state.tr_radius);
        match estimate_multipliers(&state, &ev) {
            Ok(nu) => state.nu = nu,
            Err(e) => {
                message = Some(e.to_string());
                break Status::NumericalFailure;
            }
        }
    };

    let at_current = status == Status::Converged
        || (status == Status::StepTolerance && ev.max_violation() <= settings.ktol);
    let (x, objective, max_violation, kkt) = if at_current {
        (state.x.clone(), ev.h, ev.max_violation(), kkt_norm(&state, &ev))
    } else {
        (best.x, best.h, best.viol, best.kkt)
    };
    Ok(Solution { x, report: Report { status, iters, kkt_norm: kkt, max_violation, objective, message }, trace })
}

#[cfg(test)]
mod tests;
