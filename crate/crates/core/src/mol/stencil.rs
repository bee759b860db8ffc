use crate::error::{Error, Result};

/// Centered finite-difference weights on integer offsets, scaled by `1/dx^order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub order: usize,
    pub accuracy: usize,
    pub offsets: Vec<i64>,
    pub coefficients: Vec<f64>,
}

/// Fornberg's recursion: weights at `nodes` for derivatives `0..=m` at `z`.
fn fornberg(z: f64, nodes: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Builds the centered stencil for `deriv` with the given accuracy order.
///
/// Supported: 3-point `(1, 2)` and `(2, 2)`; 9-point `(1, 8)`, `(2, 8)`, `(3, 6)`.
pub fn make_stencil(deriv: usize, accuracy: usize, centered: bool) -> Result<Stencil> {
    let half: i64 = match (deriv, accuracy) {
        (1, 2) | (2, 2) => 1,
        (1, 8) | (2, 8) | (3, 6) => 4,
        _ => return Err(Error::Config(format!("no stencil for derivative {deriv} at accuracy {accuracy}"))),
    };
    if !centered {
        return Err(Error::Config("only centered stencils are supported".into()));
    }
    let offsets: Vec<i64> = (-half..=half).collect();
    let nodes: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let mut coefficients = fornberg(0.0, &nodes, deriv).swap_remove(deriv);
    // exact symmetry: even derivatives are symmetric, odd antisymmetric
    let n = coefficients.len();
    for i in 0..n / 2 {
        let (a, b) = (coefficients[i], coefficients[n - 1 - i]);
        let avg = if deriv % 2 == 0 { 0.5 * (a + b) } else { 0.5 * (a - b) };
        coefficients[i] = avg;
        coefficients[n - 1 - i] = if deriv % 2 == 0 { avg } else { -avg };
    }
    if deriv % 2 == 1 {
        coefficients[n / 2] = 0.0;
    }
    Ok(Stencil { order: deriv, accuracy, offsets, coefficients })
}
