//! Damped BFGS approximation of a Hessian.

use nalgebra::{DMatrix, DVector};

const MIN_CURVATURE: f64 = 0.2;

/// Dense BFGS Hessian approximation with Powell damping.
#[derive(Debug, Clone, PartialEq)]
pub struct Bfgs {
    pub b: DMatrix<f64>,
    first: bool,
}

fn auto_scale(dx: &DVector<f64>, dg: &DVector<f64>) -> f64 {
    let (ss, yy, ys) = (dx.dot(dx), dg.dot(dg), dg.dot(dx).abs());
    if ys == 0.0 || yy == 0.0 || ss == 0.0 {
        1.0
    } else {
        yy / ys
    }
}

impl Bfgs {
    pub fn new(n: usize) -> Self {
        Self { b: DMatrix::identity(n, n), first: true }
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// Updates with the step `dx` and gradient change `dg`. The first
    /// update rescales the identity by `yᵀy / |yᵀs|`. Returns false when the
    /// update was skipped.
    pub fn update(&mut self, dx: &[f64], dg: &[f64]) -> bool {
        if dx.iter().all(|&v| v == 0.0) || dx.iter().chain(dg).any(|v| !v.is_finite()) {
            return false;
        }
        let w = DVector::from_column_slice(dx);
        let mut z = DVector::from_column_slice(dg);
        if self.first {
            self.b = DMatrix::identity(self.dim(), self.dim()) * auto_scale(&w, &z);
            self.first = false;
        }
        let mut bw = &self.b * &w;
        let mut wbw = bw.dot(&w);
        if wbw <= 0.0 {
            self.b = DMatrix::identity(self.dim(), self.dim()) * auto_scale(&w, &z);
            bw = &self.b * &w;
            wbw = bw.dot(&w);
        }
        let mut wz = w.dot(&z);
        if wz <= MIN_CURVATURE * wbw {
            let theta = (1.0 - MIN_CURVATURE) / (1.0 - wz / wbw);
            z = &z * theta + &bw * (1.0 - theta);
            wz = w.dot(&z);
        }
        if wz <= 0.0 || !wz.is_finite() {
            return false;
        }
        let n = self.dim();
        for c in 0..n {
            let (zc, bc) = (z[c] / wz, bw[c] / wbw);
            for r in 0..n {
                self.b[(r, c)] += z[r] * zc - bw[r] * bc;
            }
        }
        true
    }
}
