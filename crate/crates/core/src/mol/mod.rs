//! Method-of-lines solver: centered finite differences in space, classic RK4
//! in time, and bilinear interpolation of the resulting grids.

mod grid;
mod stencil;

pub use grid::{GridSolution, Mesh1D};
pub use stencil::{make_stencil, Stencil};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Zero values at both ends; grid has `n_x + 1` nodes.
    DirichletZero,
    /// Wrap-around; grid has `n_x` nodes, `x_hi` identified with `x_lo`.
    Periodic,
}

impl BoundaryKind {
    pub fn tag(self) -> u8 {
        match self {
            BoundaryKind::DirichletZero => 0,
            BoundaryKind::Periodic => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(BoundaryKind::DirichletZero),
            1 => Some(BoundaryKind::Periodic),
            _ => None,
        }
    }
}

/// Derivatives of `u` of orders `1..=max_order`, index `k - 1` holding order `k`.
///
/// Dirichlet meshes use 3-point stencils (orders 1 and 2 only) and leave the
/// boundary entries at zero; periodic meshes use 9-point stencils.
pub fn spatial_derivatives(mesh: &Mesh1D, u: &[f64], max_order: usize) -> Result<Vec<Vec<f64>>> {
    let n = mesh.nodes();
    if u.len() != n {
        return Err(Error::Input(format!("{} values for a mesh with {n} nodes", u.len())));
    }
    if let Some(i) = u.iter().position(|v| v.is_nan()) {
        return Err(Error::Numerical(format!("NaN in grid values at node {i}")));
    }
    let mut out = Vec::with_capacity(max_order);
    for order in 1..=max_order {
        let stencil = stencil_for(mesh.bc, order)?;
        out.push(apply_stencil(mesh, &stencil, u));
    }
    Ok(out)
}

fn stencil_for(bc: BoundaryKind, order: usize) -> Result<Stencil> {
    match (bc, order) {
        (BoundaryKind::DirichletZero, 1 | 2) => make_stencil(order, 2, true),
        (BoundaryKind::DirichletZero, _) => {
            Err(Error::Config(format!("Dirichlet meshes support derivatives up to order 2, not {order}")))
        }
        (BoundaryKind::Periodic, 1 | 2) => make_stencil(order, 8, true),
        (BoundaryKind::Periodic, 3) => make_stencil(3, 6, true),
        _ => Err(Error::Config(format!("unsupported derivative order {order}"))),
    }
}

fn apply_stencil(mesh: &Mesh1D, s: &Stencil, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let scale = mesh.dx().powi(s.order as i32).recip();
    let mut d = vec![0.0; n];
    match mesh.bc {
        BoundaryKind::DirichletZero => {
            for k in 1..n - 1 {
                let mut acc = 0.0;
                for (&o, &c) in s.offsets.iter().zip(&s.coefficients) {
                    acc += c * u[(k as i64 + o) as usize];
                }
                d[k] = acc * scale;
            }
        }
        BoundaryKind::Periodic => {
            let ni = n as i64;
            for (k, dk) in d.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (&o, &c) in s.offsets.iter().zip(&s.coefficients) {
                    acc += c * u[(k as i64 + o).rem_euclid(ni) as usize];
                }
                *dk = acc * scale;
            }
        }
    }
    d
}

/// Whole-grid state handed to a right-hand side.
pub struct RhsInput<'a> {
    pub x: &'a [f64],
    pub t: f64,
    pub u: &'a [f64],
    /// `derivs[k - 1]` is the order-`k` x-derivative.
    pub derivs: &'a [Vec<f64>],
}

/// Right-hand side `N(x, t, u, u_x, ...)` evaluated on the whole grid.
pub trait GridRhs {
    fn max_order(&self) -> usize;
    fn eval(&mut self, input: &RhsInput) -> Result<Vec<f64>>;
}

/// Wraps a closure as a [`GridRhs`].
pub struct FnRhs<F> {
    pub max_order: usize,
    pub f: F,
}

impl<F: FnMut(&RhsInput) -> Vec<f64>> GridRhs for FnRhs<F> {
    fn max_order(&self) -> usize {
        self.max_order
    }
    fn eval(&mut self, input: &RhsInput) -> Result<Vec<f64>> {
        Ok((self.f)(input))
    }
}

/// Step count and size for `t_end` split into `n_out` stored intervals with
/// internal steps no longer than `dt_ratio · dx`.
pub fn time_steps(t_end: f64, n_out: usize, dt_max: f64) -> (usize, f64) {
    let per = (t_end / (n_out as f64 * dt_max)).ceil().max(1.0) as usize;
    let steps = per * n_out;
    (steps, t_end / steps as f64)
}

/// Integrates `u_t = N` with RK4 from `u0` to `t_end`, storing `n_out + 1`
/// equispaced snapshots.
///
/// A non-finite stage stops the solve; the stored prefix is returned with
/// `diverged_at` set to the start time of the failing step.
pub fn mol_solve(
    rhs: &mut dyn GridRhs,
    mesh: &Mesh1D,
    u0: &[f64],
    t_end: f64,
    dt_ratio: f64,
    n_out: usize,
) -> Result<GridSolution> {
    if u0.len() != mesh.nodes() {
        return Err(Error::Input(format!("initial data has {} values, mesh has {} nodes", u0.len(), mesh.nodes())));
    }
    if !(t_end > 0.0 && dt_ratio > 0.0) || n_out == 0 {
        return Err(Error::Config("mol_solve needs t_end > 0, dt_ratio > 0 and n_out ≥ 1".into()));
    }
    let (steps, dt) = time_steps(t_end, n_out, dt_ratio * mesh.dx());
    let per = steps / n_out;
    let x = mesh.coordinates();
    let max_order = rhs.max_order();
    let mut u = u0.to_vec();
    if mesh.bc == BoundaryKind::DirichletZero {
        let n = u.len();
        u[0] = 0.0;
        u[n - 1] = 0.0;
    }
    let mut values = vec![u.clone()];
    let mut eval = |u: &[f64], t: f64| -> Result<Option<Vec<f64>>> {
        if u.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let derivs = spatial_derivatives(mesh, u, max_order)?;
        let mut f = rhs.eval(&RhsInput { x: &x, t, u, derivs: &derivs })?;
        if f.len() != u.len() {
            return Err(Error::Internal("right-hand side returned the wrong length".into()));
        }
        if mesh.bc == BoundaryKind::DirichletZero {
            let n = f.len();
            f[0] = 0.0;
            f[n - 1] = 0.0;
        }
        Ok(f.iter().all(|v| v.is_finite()).then_some(f))
    };
    let comb = |u: &[f64], k: &[f64], h: f64| -> Vec<f64> { u.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let mut diverged_at = None;
    'steps: for step in 0..steps {
        let t = step as f64 * dt;
        let Some(k1) = eval(&u, t)? else {
            diverged_at = Some(t);
            break 'steps;
        };
        let Some(k2) = eval(&comb(&u, &k1, 0.5 * dt), t + 0.5 * dt)? else {
            diverged_at = Some(t);
            break 'steps;
        };
        let Some(k3) = eval(&comb(&u, &k2, 0.5 * dt), t + 0.5 * dt)? else {
            diverged_at = Some(t);
            break 'steps;
        };
        let Some(k4) = eval(&comb(&u, &k3, dt), t + dt)? else {
            diverged_at = Some(t);
            break 'steps;
        };
        for i in 0..u.len() {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(t);
            break;
        }
        if (step + 1) % per == 0 {
            values.push(u.clone());
        }
    }
    Ok(GridSolution { mesh: *mesh, dt: t_end / n_out as f64, values, diverged_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sup_err(a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
        a.iter().enumerate().map(|(i, v)| (v - b(i)).abs()).fold(0.0, f64::max)
    }

    fn slope(h: &[f64], e: &[f64]) -> f64 {
        let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = e.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
        let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        num / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>()
    }

    #[test]
    fn periodic_first_derivative_is_eighth_order() {
        let (lo, hi) = (0.0, 2.0 * PI);
        let mut hs = vec![];
        let mut es = vec![];
        for n in [16, 20, 24, 32] {
            let mesh = Mesh1D::new(lo, hi, n, BoundaryKind::Periodic).unwrap();
            let x = mesh.coordinates();
            let u: Vec<f64> = x.iter().map(|v| v.sin()).collect();
            let d = spatial_derivatives(&mesh, &u, 1).unwrap();
            hs.push(mesh.dx());
            es.push(sup_err(&d[0], |i| x[i].cos()));
        }
        let s = slope(&hs, &es);
        assert!((s - 8.0).abs() <= 0.5, "slope {s}");
    }

    #[test]
    fn dirichlet_cubic_second_derivative_exact() {
        let mesh = Mesh1D::new(-2.0, 3.0, 40, BoundaryKind::DirichletZero).unwrap();
        let x = mesh.coordinates();
        let u: Vec<f64> = x.iter().map(|&v| (v + 2.0) * (3.0 - v) * (v - 0.5)).collect();
        let d = spatial_derivatives(&mesh, &u, 2).unwrap();
        // u = -(v+2)(v-3)(v-0.5) = -(v³ - 1.5v² - 5.5v + 3); u'' = -(6v - 3)
        for k in 1..x.len() - 1 {
            assert!((d[1][k] + 6.0 * x[k] - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let mesh = Mesh1D::new(-20.0, 20.0, 64, BoundaryKind::Periodic).unwrap();
        let d = spatial_derivatives(&mesh, &vec![3.7; 64], 3).unwrap();
        assert!(d.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn nan_input_is_rejected() {
        let mesh = Mesh1D::new(0.0, 1.0, 8, BoundaryKind::Periodic).unwrap();
        let mut u = vec![0.0; 8];
        u[3] = f64::NAN;
        assert!(matches!(spatial_derivatives(&mesh, &u, 1), Err(Error::Numerical(_))));
    }

    #[test]
    fn zero_rhs_keeps_initial_data() {
        let mesh = Mesh1D::new(-8.0, 8.0, 32, BoundaryKind::DirichletZero).unwrap();
        let u0: Vec<f64> = mesh.coordinates().iter().map(|x| -(PI * x / 8.0).sin()).collect();
        let mut rhs = FnRhs { max_order: 2, f: |i: &RhsInput| vec![0.0; i.u.len()] };
        let sol = mol_solve(&mut rhs, &mesh, &u0, 1.0, 0.2, 10).unwrap();
        assert_eq!(sol.values.len(), 11);
        let mut pinned = u0.clone();
        pinned[0] = 0.0;
        *pinned.last_mut().unwrap() = 0.0;
        for row in &sol.values {
            assert_eq!(row, &pinned);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let mesh = Mesh1D::new(0.0, 1.0, 8, BoundaryKind::Periodic).unwrap();
        let u0: Vec<f64> = (0..8).map(|k| 1.0 + k as f64 * 0.1).collect();
        let mut hs = vec![];
        let mut es = vec![];
        for ratio in [0.8, 0.4, 0.2, 0.1] {
            let mut rhs = FnRhs { max_order: 0, f: |i: &RhsInput| i.u.iter().map(|v| -v).collect() };
            let sol = mol_solve(&mut rhs, &mesh, &u0, 2.0, ratio, 1).unwrap();
            hs.push(ratio);
            es.push(sup_err(&sol.values[1], |i| u0[i] * (-2.0f64).exp()));
        }
        let s = slope(&hs, &es);
        assert!((s - 4.0).abs() <= 0.2, "slope {s}");
    }

    #[test]
    fn divergence_returns_partial_trajectory() {
        let mesh = Mesh1D::new(0.0, 1.0, 8, BoundaryKind::Periodic).unwrap();
        let mut rhs = FnRhs { max_order: 0, f: |i: &RhsInput| i.u.iter().map(|v| if i.t > 0.55 { f64::NAN } else { *v }).collect() };
        let sol = mol_solve(&mut rhs, &mesh, &[1.0; 8], 1.0, 1.0, 10).unwrap();
        let t = sol.diverged_at.unwrap();
        assert!(t > 0.4 && t <= 0.55 + 1e-12);
        assert!(sol.values.len() < 11);
    }

    #[test]
    fn solve_is_deterministic() {
        let mesh = Mesh1D::new(-8.0, 8.0, 64, BoundaryKind::DirichletZero).unwrap();
        let u0: Vec<f64> = mesh.coordinates().iter().map(|x| -(PI * x / 8.0).sin()).collect();
        let run = || {
            let mut rhs =
                FnRhs { max_order: 2, f: |i: &RhsInput| (0..i.u.len()).map(|k| -i.u[k] * i.derivs[0][k] + 0.1 * i.derivs[1][k]).collect() };
            mol_solve(&mut rhs, &mesh, &u0, 2.0, 0.2, 20).unwrap()
        };
        assert_eq!(run().values, run().values);
    }
}
