//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Least-squares slope of `log e` against `log h`.
pub fn loglog_slope(h: &[f64], e: &[f64]) -> f64 {
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    num / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>()
}

/// Richardson-extrapolated central difference of `f` at `x`, error `O(h⁴)`.
pub fn richardson(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Viscous Burgers `u_t = -u u_x + nu u_xx` on `[-l, l]` with zero Dirichlet
/// ends, solved with 4th-order central differences on the odd periodic
/// extension (`2n` points over `[-l, 3l)`) and RK4. Returns `n_out + 1`
/// snapshots on the `n + 1` physical nodes.
pub fn fd_burgers(l: f64, nu: f64, u0: impl Fn(f64) -> f64, n: usize, t_end: f64, n_out: usize, cfl: f64) -> Vec<Vec<f64>> {
    let m = 2 * n;
    let dx = 2.0 * l / n as f64;
    // odd extension about x = l: u(l + s) = -u(l - s)
    let mut u: Vec<f64> = (0..m)
        .map(|j| {
            let x = -l + j as f64 * dx;
            if j <= n {
                u0(x)
            } else {
                -u0(2.0 * l - x)
            }
        })
        .collect();
    u[0] = 0.0;
    u[n] = 0.0;
    let rhs = |u: &[f64]| -> Vec<f64> {
        let at = |j: i64| u[j.rem_euclid(m as i64) as usize];
        (0..m as i64)
            .map(|j| {
                let ux = (-at(j + 2) + 8.0 * at(j + 1) - 8.0 * at(j - 1) + at(j - 2)) / (12.0 * dx);
                let uxx = (-at(j + 2) + 16.0 * at(j + 1) - 30.0 * at(j) + 16.0 * at(j - 1) - at(j - 2)) / (12.0 * dx * dx);
                -at(j) * ux + nu * uxx
            })
            .collect()
    };
    let per = ((t_end / n_out as f64) / (cfl * dx)).ceil() as usize;
    let dt = t_end / (n_out * per) as f64;
    let comb = |a: &[f64], k: &[f64], h: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + h * y).collect() };
    let mut out = vec![u[..=n].to_vec()];
    for _ in 0..n_out {
        for _ in 0..per {
            let k1 = rhs(&u);
            let k2 = rhs(&comb(&u, &k1, dt / 2.0));
            let k3 = rhs(&comb(&u, &k2, dt / 2.0));
            let k4 = rhs(&comb(&u, &k3, dt));
            for i in 0..m {
                u[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            }
        }
        out.push(u[..=n].to_vec());
    }
    out
}

/// Exact solution of `min ½ xᵀQx + cᵀx  s.t.  Ax ≤ b` for positive definite
/// `Q` by enumerating active sets: the unique KKT point is the candidate that
/// is primal feasible with nonnegative multipliers.
pub fn qp_active_set(q: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (n, m) = (q.nrows(), a.nrows());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if act.len() > n {
            continue;
        }
        let k = act.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(q);
        for (r, &i) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[(i, j)];
                kkt[(j, n + r)] = a[(i, j)];
            }
            rhs[n + r] = b[i];
        }
        for j in 0..n {
            rhs[j] = -c[j];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let mult_ok = (0..k).all(|r| sol[n + r] >= -1e-10);
        let feas = (a * &x - b).iter().all(|&v| v <= 1e-10);
        if mult_ok && feas {
            let f = 0.5 * x.dot(&(q * &x)) + c.dot(&x);
            if best.as_ref().is_none_or(|(g, _)| f < *g) {
                best = Some((f, x));
            }
        }
    }
    best.expect("a strictly convex feasible QP has a KKT point").1
}

/// Relative ℓ² distance between two equally shaped grids.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
