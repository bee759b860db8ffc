//! Small dense helpers plus the constraint Jacobian representation and the
//! null-space projections built on it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `a + t * b`
pub fn axpy(a: &[f64], t: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * y).collect()
}

/// Constraint Jacobian, either dense or of the form `[R; -R]`.
///
/// The mirrored form stores only `R` and is used for two-sided bounds
/// `r(x) - ε ≤ 0`, `-r(x) - ε ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintJacobian {
    Dense(DMatrix<f64>),
    Mirrored(DMatrix<f64>),
}

impl ConstraintJacobian {
    pub fn empty(n: usize) -> Self {
        ConstraintJacobian::Dense(DMatrix::zeros(0, n))
    }

    pub fn rows(&self) -> usize {
        match self {
            ConstraintJacobian::Dense(j) => j.nrows(),
            ConstraintJacobian::Mirrored(r) => 2 * r.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ConstraintJacobian::Dense(j) | ConstraintJacobian::Mirrored(j) => j.ncols(),
        }
    }

    /// `J v`
    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        match self {
            ConstraintJacobian::Dense(j) => (j * v).as_slice().to_vec(),
            ConstraintJacobian::Mirrored(r) => {
                let rv = r * v;
                rv.iter().copied().chain(rv.iter().map(|x| -x)).collect()
            }
        }
    }

    /// `Jᵀ w`
    pub fn tr_mul(&self, w: &[f64]) -> Vec<f64> {
        match self {
            ConstraintJacobian::Dense(j) => j.tr_mul(&DVector::from_column_slice(w)).as_slice().to_vec(),
            ConstraintJacobian::Mirrored(r) => {
                let k = r.nrows();
                let diff = DVector::from_fn(k, |i, _| w[i] - w[k + i]);
                r.tr_mul(&diff).as_slice().to_vec()
            }
        }
    }

    /// `J Jᵀ`
    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            ConstraintJacobian::Dense(j) => j * j.transpose(),
            ConstraintJacobian::Mirrored(r) => {
                let g = r * r.transpose();
                let k = g.nrows();
                DMatrix::from_fn(2 * k, 2 * k, |i, j| {
                    let v = g[(i % k, j % k)];
                    if (i < k) == (j < k) {
                        v
                    } else {
                        -v
                    }
                })
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            ConstraintJacobian::Dense(j) => j.clone(),
            ConstraintJacobian::Mirrored(r) => {
                let k = r.nrows();
                DMatrix::from_fn(2 * k, r.ncols(), |i, c| if i < k { r[(i, c)] } else { -r[(i - k, c)] })
            }
        }
    }
}

const ORTH_TOL: f64 = 1e-12;
const MAX_REFINE: usize = 3;

/// Projections for the scaled augmented Jacobian `A = [J, diag(s)]`, via a
/// Cholesky factor of `A Aᵀ = J Jᵀ + diag(s²)`.
pub struct Projections<'a> {
    jac: &'a ConstraintJacobian,
    s: &'a [f64],
    chol: Option<Cholesky<f64, Dyn>>,
    a_fro: f64,
}

impl<'a> Projections<'a> {
    pub fn new(jac: &'a ConstraintJacobian, s: &'a [f64]) -> Result<Self> {
        let m = jac.rows();
        if m == 0 {
            return Ok(Self { jac, s, chol: None, a_fro: 0.0 });
        }
        let mut aat = jac.gram();
        for j in 0..m {
            aat[(j, j)] += s[j] * s[j];
        }
        let a_fro = aat.trace().sqrt();
        let chol = match Cholesky::new(aat.clone()) {
            Some(c) => c,
            None => {
                let ridge = 1e-12 * (0..m).map(|j| aat[(j, j)]).fold(1.0f64, f64::max);
                for j in 0..m {
                    aat[(j, j)] += ridge;
                }
                Cholesky::new(aat).ok_or_else(|| Error::Numerical("constraint normal matrix is not positive definite".into()))?
            }
        };
        Ok(Self { jac, s, chol: Some(chol), a_fro })
    }

    pub fn n(&self) -> usize {
        self.jac.cols()
    }

    pub fn m(&self) -> usize {
        self.jac.rows()
    }

    /// `A z` for `z = (z_x, z_s)`.
    pub fn a_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = self.jac.mul(&z[..n]);
        for (j, o) in out.iter_mut().enumerate() {
            *o += self.s[j] * z[n + j];
        }
        out
    }

    /// `Aᵀ w`
    pub fn at_mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = self.jac.tr_mul(w);
        out.extend(w.iter().zip(self.s).map(|(a, b)| a * b));
        out
    }

    fn solve(&self, w: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(c) => c.solve(&DVector::from_column_slice(w)).as_slice().to_vec(),
            None => Vec::new(),
        }
    }

    /// Projection onto the null space of `A`.
    pub fn null_space(&self, z: &[f64]) -> Vec<f64> {
        if self.m() == 0 {
            return z.to_vec();
        }
        let v = self.solve(&self.a_mul(z));
        let mut out = axpy(z, -1.0, &self.at_mul(&v));
        for _ in 0..MAX_REFINE {
            let az = self.a_mul(&out);
            let denom = self.a_fro * norm(&out);
            if denom == 0.0 || norm(&az) / denom <= ORTH_TOL {
                break;
            }
            let v = self.solve(&az);
            out = axpy(&out, -1.0, &self.at_mul(&v));
        }
        out
    }

    /// `(A Aᵀ)⁻¹ A z`, the least-squares solution of `Aᵀ v ≈ z`.
    pub fn least_squares(&self, z: &[f64]) -> Vec<f64> {
        self.solve(&self.a_mul(z))
    }

    /// `Aᵀ (A Aᵀ)⁻¹ w`, the minimum-norm solution of `A y = w`.
    pub fn row_space(&self, w: &[f64]) -> Vec<f64> {
        if self.m() == 0 {
            return vec![0.0; self.n()];
        }
        self.at_mul(&self.solve(w))
    }
}

/// Parameters `t` where `z + t d` meets the box `lb <= · <= ub`.
pub fn box_intersections(z: &[f64], d: &[f64], lb: &[f64], ub: &[f64], entire_line: bool) -> (f64, f64, bool) {
    let mut ta = f64::NEG_INFINITY;
    let mut tb = f64::INFINITY;
    for i in 0..z.len() {
        if d[i] == 0.0 {
            if z[i] < lb[i] || z[i] > ub[i] {
                return (0.0, 0.0, false);
            }
            continue;
        }
        let (t1, t2) = ((lb[i] - z[i]) / d[i], (ub[i] - z[i]) / d[i]);
        ta = ta.max(t1.min(t2));
        tb = tb.min(t1.max(t2));
    }
    if ta > tb {
        return (0.0, 0.0, false);
    }
    if !entire_line {
        if tb < 0.0 || ta > 1.0 {
            return (0.0, 0.0, false);
        }
        ta = ta.max(0.0);
        tb = tb.min(1.0);
    }
    (ta, tb, true)
}

/// Parameters `t` where `z + t d` meets the sphere of radius `radius`.
pub fn sphere_intersections(z: &[f64], d: &[f64], radius: f64, entire_line: bool) -> (f64, f64, bool) {
    let a = dot(d, d);
    if a == 0.0 {
        return (0.0, 0.0, false);
    }
    let b = 2.0 * dot(z, d);
    let c = dot(z, z) - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return (0.0, 0.0, false);
    }
    let aux = b + disc.sqrt().copysign(b);
    let (mut ta, mut tb) = if aux == 0.0 { (0.0, 0.0) } else { (-aux / (2.0 * a), -2.0 * c / aux) };
    if ta > tb {
        std::mem::swap(&mut ta, &mut tb);
    }
    if !entire_line {
        if tb < 0.0 || ta > 1.0 {
            return (0.0, 0.0, false);
        }
        ta = ta.max(0.0);
        tb = tb.min(1.0);
    }
    (ta, tb, true)
}

pub fn box_sphere_intersections(
    z: &[f64],
    d: &[f64],
    lb: &[f64],
    ub: &[f64],
    radius: f64,
    entire_line: bool,
) -> (f64, f64, bool) {
    let (ba, bb, bi) = box_intersections(z, d, lb, ub, entire_line);
    let (sa, sb, si) = sphere_intersections(z, d, radius, entire_line);
    let (ta, tb) = (ba.max(sa), bb.min(sb));
    if bi && si && ta <= tb {
        (ta, tb, true)
    } else {
        (0.0, 0.0, false)
    }
}

pub fn inside_box(x: &[f64], lb: &[f64], ub: &[f64]) -> bool {
    x.iter().zip(lb.iter().zip(ub)).all(|(v, (l, u))| *l <= *v && *v <= *u)
}

pub fn clamp_box(x: &mut [f64], lb: &[f64], ub: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].max(lb[i]).min(ub[i]);
    }
}
