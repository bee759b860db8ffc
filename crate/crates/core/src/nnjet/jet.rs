//! Derivative jets through sine networks.
//!
//! A tape evaluates a network on a batch of `P` points while carrying up to
//! five Taylor components per activation: the value, `d/dt`, and `d/dx`,
//! `d²/dx²`, `d³/dx³`. Components are stored as column blocks of one matrix,
//! so every layer is a single matrix product. Affine layers act linearly on
//! each component (the bias only touches the value block); the sine layer
//! applies the Faà di Bruno chain up to third order. The reverse sweep over
//! the recorded tape yields parameter gradients of any linear combination of
//! output components.

use nalgebra::DMatrix;

use super::mlp::Mlp;
use crate::error::{Error, Result};

pub const VALUE: usize = 0;
pub const DT: usize = 1;
pub const DX: usize = 2;
pub const DXX: usize = 3;
pub const DXXX: usize = 4;

/// Number of Taylor components a tape carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOrder {
    Value,
    /// value, t, x, xx
    X2,
    /// value, t, x, xx, xxx
    X3,
}

impl JetOrder {
    pub fn components(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::X2 => 4,
            JetOrder::X3 => 5,
        }
    }

    pub fn from_max_x_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(JetOrder::X2),
            3 => Ok(JetOrder::X3),
            _ => Err(Error::Config(format!("max x-derivative order must be 2 or 3, got {order}"))),
        }
    }
}

/// Affine map `z_i = scale_i * p_i + shift_i` applied to `(x, t)` before the
/// state network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputScaling {
    pub scale: [f64; 2],
    pub shift: [f64; 2],
}

impl InputScaling {
    pub fn identity() -> Self {
        Self { scale: [1.0, 1.0], shift: [0.0, 0.0] }
    }

    /// Maps `[x_lo, x_hi] x [t_lo, t_hi]` onto `[-1, 1]²`.
    pub fn unit_box(x_lo: f64, x_hi: f64, t_lo: f64, t_hi: f64) -> Self {
        let sx = 2.0 / (x_hi - x_lo);
        let st = 2.0 / (t_hi - t_lo);
        Self { scale: [sx, st], shift: [-1.0 - sx * x_lo, -1.0 - st * t_lo] }
    }
}

/// Recorded forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    points: usize,
    comps: usize,
    /// Input to every layer, `fan_in x comps*points`.
    acts: Vec<DMatrix<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<DMatrix<f64>>,
    sin: Vec<Vec<f64>>,
    cos: Vec<Vec<f64>>,
    output: DMatrix<f64>,
}

/// Adjoints of every layer's pre-activation from one reverse sweep.
#[derive(Debug, Clone)]
pub struct Adjoint {
    pre_adj: Vec<DMatrix<f64>>,
    input_adj: Option<DMatrix<f64>>,
}

impl Adjoint {
    /// Adjoint with respect to the network input, `fan_in x comps*points`.
    pub fn input(&self) -> Option<&DMatrix<f64>> {
        self.input_adj.as_ref()
    }
}

fn sine_forward(pre: &DMatrix<f64>, comps: usize, n: usize) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let p = pre.as_slice();
    let mut s = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for &v in &p[..n] {
        let (sv, cv) = v.sin_cos();
        s.push(sv);
        c.push(cv);
    }
    let mut y = DMatrix::zeros(pre.nrows(), pre.ncols());
    let ys = y.as_mut_slice();
    ys[..n].copy_from_slice(&s);
    if comps > DT {
        for i in 0..n {
            ys[n + i] = c[i] * p[n + i];
        }
    }
    if comps > DX {
        for i in 0..n {
            ys[2 * n + i] = c[i] * p[2 * n + i];
        }
    }
    if comps > DXX {
        for i in 0..n {
            let p1 = p[2 * n + i];
            ys[3 * n + i] = -s[i] * p1 * p1 + c[i] * p[3 * n + i];
        }
    }
    if comps > DXXX {
        for i in 0..n {
            let (p1, p2, p3) = (p[2 * n + i], p[3 * n + i], p[4 * n + i]);
            ys[4 * n + i] = -c[i] * p1 * p1 * p1 - 3.0 * s[i] * p1 * p2 + c[i] * p3;
        }
    }
    (y, s, c)
}

fn sine_backward(pre: &DMatrix<f64>, s: &[f64], c: &[f64], ybar: &DMatrix<f64>, comps: usize) -> DMatrix<f64> {
    let n = s.len();
    let p = pre.as_slice();
    let yb = ybar.as_slice();
    let mut pbar = DMatrix::zeros(pre.nrows(), pre.ncols());
    let pb = pbar.as_mut_slice();
    for i in 0..n {
        let (si, ci) = (s[i], c[i]);
        let mut v = yb[i] * ci;
        if comps > DT {
            let pt = p[n + i];
            v -= yb[n + i] * si * pt;
            pb[n + i] = yb[n + i] * ci;
        }
        if comps > DX {
            let p1 = p[2 * n + i];
            let y1 = yb[2 * n + i];
            v -= y1 * si * p1;
            let mut g1 = y1 * ci;
            if comps > DXX {
                let p2 = p[3 * n + i];
                let y2 = yb[3 * n + i];
                v += y2 * (-ci * p1 * p1 - si * p2);
                g1 -= 2.0 * y2 * si * p1;
                let mut g2 = y2 * ci;
                if comps > DXXX {
                    let p3 = p[4 * n + i];
                    let y3 = yb[4 * n + i];
                    v += y3 * (si * p1 * p1 * p1 - 3.0 * ci * p1 * p2 - si * p3);
                    g1 += y3 * (-3.0 * ci * p1 * p1 - 3.0 * si * p2);
                    g2 -= 3.0 * y3 * si * p1;
                    pb[4 * n + i] = y3 * ci;
                }
                pb[3 * n + i] = g2;
            }
            pb[2 * n + i] = g1;
        }
        pb[i] = v;
    }
    pbar
}

fn add_bias_to_value_block(m: &mut DMatrix<f64>, bias: &nalgebra::DVector<f64>, points: usize) {
    for j in 0..points {
        let mut col = m.column_mut(j);
        col += bias;
    }
}

impl Tape {
    /// Forward pass over an input matrix of shape `fan_in x comps*points`.
    pub fn forward(net: &Mlp, input: DMatrix<f64>, comps: usize) -> Result<Self> {
        if input.nrows() != net.input_dim() {
            return Err(Error::Input(format!(
                "network expects {} inputs, tape input has {} rows",
                net.input_dim(),
                input.nrows()
            )));
        }
        if comps == 0 || comps > 5 || input.ncols() % comps != 0 {
            return Err(Error::Internal("tape column count must be a multiple of the component count".into()));
        }
        let points = input.ncols() / comps;
        let layers = net.num_layers();
        let mut acts = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut sin = Vec::with_capacity(layers - 1);
        let mut cos = Vec::with_capacity(layers - 1);
        let mut a = input;
        for l in 0..layers - 1 {
            let mut p = net.weight(l) * &a;
            add_bias_to_value_block(&mut p, net.bias(l), points);
            let n = p.nrows() * points;
            let (y, s, c) = sine_forward(&p, comps, n);
            acts.push(a);
            pre.push(p);
            sin.push(s);
            cos.push(c);
            a = y;
        }
        let mut output = net.weight(layers - 1) * &a;
        add_bias_to_value_block(&mut output, net.bias(layers - 1), points);
        acts.push(a);
        Ok(Self { points, comps, acts, pre, sin, cos, output })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    /// Scalar output of component `comp` at every point.
    pub fn output(&self, comp: usize) -> &[f64] {
        assert_eq!(self.output.nrows(), 1, "tape output must be scalar");
        &self.output.as_slice()[comp * self.points..(comp + 1) * self.points]
    }

    /// Reverse sweep seeded with `out_adj` (`1 x comps*points`, same block
    /// layout as the output).
    pub fn backward(&self, net: &Mlp, out_adj: DMatrix<f64>, want_input: bool) -> Adjoint {
        let layers = net.num_layers();
        let mut pre_adj = vec![DMatrix::zeros(0, 0); layers];
        let mut g = out_adj;
        for l in (0..layers - 1).rev() {
            let ybar = net.weight(l + 1).tr_mul(&g);
            pre_adj[l + 1] = g;
            g = sine_backward(&self.pre[l], &self.sin[l], &self.cos[l], &ybar, self.comps);
        }
        let input_adj = want_input.then(|| net.weight(0).tr_mul(&g));
        pre_adj[0] = g;
        Adjoint { pre_adj, input_adj }
    }

    /// Adds the parameter gradient summed over all points into `out`
    /// (canonical parameter order of [`Mlp::write_params`]).
    pub fn accumulate_sum(&self, net: &Mlp, adj: &Adjoint, out: &mut [f64]) {
        let mut k = 0;
        for l in 0..net.num_layers() {
            let pa = &adj.pre_adj[l];
            let wbar = pa * self.acts[l].transpose();
            for r in 0..wbar.nrows() {
                for c in 0..wbar.ncols() {
                    out[k] += wbar[(r, c)];
                    k += 1;
                }
            }
            for r in 0..pa.nrows() {
                let mut acc = 0.0;
                for j in 0..self.points {
                    acc += pa[(r, j)];
                }
                out[k] += acc;
                k += 1;
            }
        }
    }

    /// Adds the parameter gradient contributed by point `j` alone into `out`.
    pub fn accumulate_point(&self, net: &Mlp, adj: &Adjoint, j: usize, out: &mut [f64]) {
        let mut k = 0;
        let cols: Vec<usize> = (0..self.comps).map(|b| b * self.points + j).collect();
        for l in 0..net.num_layers() {
            let pa = &adj.pre_adj[l];
            let act = &self.acts[l];
            let (rows, fan_in) = (pa.nrows(), act.nrows());
            for r in 0..rows {
                for c in 0..fan_in {
                    let mut acc = 0.0;
                    for &col in &cols {
                        acc += pa[(r, col)] * act[(c, col)];
                    }
                    out[k] += acc;
                    k += 1;
                }
            }
            for r in 0..rows {
                out[k] += pa[(r, j)];
                k += 1;
            }
        }
    }
}

/// Builds the `2 x comps*points` input for the state network, seeding the
/// `t` and `x` derivative blocks with the scaling factors so that derivatives
/// come out with respect to physical coordinates.
pub fn state_input(points: &[(f64, f64)], scaling: &InputScaling, order: JetOrder) -> DMatrix<f64> {
    let comps = order.components();
    let p = points.len();
    let mut m = DMatrix::zeros(2, comps * p);
    for (j, &(x, t)) in points.iter().enumerate() {
        m[(0, j)] = scaling.scale[0] * x + scaling.shift[0];
        m[(1, j)] = scaling.scale[1] * t + scaling.shift[1];
        if comps > DT {
            m[(1, DT * p + j)] = scaling.scale[1];
        }
        if comps > DX {
            m[(0, DX * p + j)] = scaling.scale[0];
        }
    }
    m
}

/// Forward pass of the state network over many points.
pub fn state_forward(net: &Mlp, scaling: &InputScaling, points: &[(f64, f64)], order: JetOrder) -> Result<Tape> {
    if net.input_dim() != 2 || net.output_dim() != 1 {
        return Err(Error::Config("state network must map (x, t) to a scalar".into()));
    }
    Tape::forward(net, state_input(points, scaling, order), order.components())
}

/// Value of `u` and its derivatives at one point, with θ-gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub u: f64,
    pub u_t: f64,
    pub u_x: f64,
    pub u_xx: f64,
    pub u_xxx: Option<f64>,
    /// Gradients of `[u, u_t, u_x, u_xx, u_xxx]` (the last only when present)
    /// with respect to every state-network parameter.
    pub grad_theta: Vec<Vec<f64>>,
}

impl Jet {
    /// Inputs fed to a right-hand-side network of the given arity:
    /// `u` followed by the first `arity` x-derivatives.
    pub fn rhs_inputs(&self, arity: usize) -> Result<Vec<f64>> {
        let mut v = vec![self.u, self.u_x, self.u_xx];
        if let Some(d3) = self.u_xxx {
            v.push(d3);
        }
        if arity == 0 || arity + 1 > v.len() {
            return Err(Error::Config(format!("jet cannot feed {} derivative inputs", arity)));
        }
        v.truncate(arity + 1);
        Ok(v)
    }

    /// Gradient with respect to θ of the right-hand-side input at position `i`
    /// (0 = u, 1 = u_x, 2 = u_xx, 3 = u_xxx).
    pub fn rhs_input_grad(&self, i: usize) -> &[f64] {
        let comp = if i == 0 { VALUE } else { DT + i };
        &self.grad_theta[comp]
    }
}

/// Evaluates `u`, `u_t`, `u_x`, ... up to `max_x_order` at `(x, t)` together
/// with their θ-gradients.
pub fn state_jet(net: &Mlp, scaling: &InputScaling, x: f64, t: f64, max_x_order: usize) -> Result<Jet> {
    let order = JetOrder::from_max_x_order(max_x_order)?;
    let tape = state_forward(net, scaling, &[(x, t)], order)?;
    let comps = order.components();
    let mut grads = Vec::with_capacity(comps);
    for c in 0..comps {
        let mut seed = DMatrix::zeros(1, comps);
        seed[(0, c)] = 1.0;
        let adj = tape.backward(net, seed, false);
        let mut g = vec![0.0; net.param_count()];
        tape.accumulate_point(net, &adj, 0, &mut g);
        grads.push(g);
    }
    let out = |c: usize| tape.output(c)[0];
    Ok(Jet {
        u: out(VALUE),
        u_t: out(DT),
        u_x: out(DX),
        u_xx: out(DXX),
        u_xxx: (comps > DXXX).then(|| out(DXXX)),
        grad_theta: grads,
    })
}

/// Value of a right-hand-side network at a jet, its φ-gradient, and its
/// gradient with respect to each network input.
pub fn rhs_eval_with_grads(rhs_net: &Mlp, jet: &Jet) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let dim = rhs_net.input_dim();
    if !(2..=4).contains(&dim) || rhs_net.output_dim() != 1 {
        return Err(Error::Config(format!("right-hand-side network must take 2 to 4 inputs, has {dim}")));
    }
    let inputs = jet.rhs_inputs(dim - 1)?;
    let tape = Tape::forward(rhs_net, DMatrix::from_column_slice(dim, 1, &inputs), 1)?;
    let adj = tape.backward(rhs_net, DMatrix::from_element(1, 1, 1.0), true);
    let mut grad_phi = vec![0.0; rhs_net.param_count()];
    tape.accumulate_point(rhs_net, &adj, 0, &mut grad_phi);
    let grad_inputs = adj.input().unwrap().column(0).iter().copied().collect();
    Ok((tape.output(VALUE)[0], grad_phi, grad_inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnjet::mlp::SirenInit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-3)
    }

    fn net(seed: u64) -> Mlp {
        Mlp::init(&[2, 12, 12, 1], seed, SirenInit { omega0: 3.0, omega: 1.0 }).unwrap()
    }

    #[test]
    fn single_unit_closed_form() {
        let (wx, wt, b) = (0.7, -1.3, 0.4);
        let net = Mlp::from_parts(
            vec![2, 1, 1],
            vec![DMatrix::from_row_slice(1, 2, &[wx, wt]), DMatrix::from_element(1, 1, 1.0)],
            vec![nalgebra::DVector::from_element(1, b), nalgebra::DVector::zeros(1)],
            crate::nnjet::Activation::Sine,
        )
        .unwrap();
        let (x, t) = (0.3, 1.1);
        let j = state_jet(&net, &InputScaling::identity(), x, t, 3).unwrap();
        let a = wx * x + wt * t + b;
        assert!((j.u - a.sin()).abs() <= 1e-14);
        assert!((j.u_x - wx * a.cos()).abs() <= 1e-14);
        assert!((j.u_xx + wx * wx * a.sin()).abs() <= 1e-14);
        assert!((j.u_xxx.unwrap() + wx.powi(3) * a.cos()).abs() <= 1e-14);
        assert!((j.u_t - wt * a.cos()).abs() <= 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let sc = InputScaling::unit_box(-8.0, 8.0, 0.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..4 {
            let n = net(seed);
            for _ in 0..25 {
                let (x, t): (f64, f64) = (rng.gen_range(-8.0..8.0), rng.gen_range(0.0..10.0));
                let j = state_jet(&n, &sc, x, t, 3).unwrap();
                let h = 1e-4;
                let f = |x: f64, t: f64| state_jet(&n, &sc, x, t, 2).unwrap();
                let (p, m) = (f(x + h, t), f(x - h, t));
                assert!(rel((p.u - m.u) / (2.0 * h), j.u_x) < 1e-6);
                assert!(rel((p.u_x - m.u_x) / (2.0 * h), j.u_xx) < 1e-6);
                assert!(rel((p.u_xx - m.u_xx) / (2.0 * h), j.u_xxx.unwrap()) < 1e-6);
                let (p, m) = (f(x, t + h), f(x, t - h));
                assert!(rel((p.u - m.u) / (2.0 * h), j.u_t) < 1e-6);
            }
        }
    }

    #[test]
    fn theta_gradients_match_finite_differences() {
        let sc = InputScaling::unit_box(-8.0, 8.0, 0.0, 10.0);
        let n = net(11);
        let (x, t) = (1.7, 3.2);
        let j = state_jet(&n, &sc, x, t, 3).unwrap();
        let mut flat = Vec::new();
        n.write_params(&mut flat);
        let h = 1e-5;
        let comps = |p: &[f64]| {
            let mut m = n.clone();
            m.read_params(p).unwrap();
            let j = state_jet(&m, &sc, x, t, 3).unwrap();
            [j.u, j.u_t, j.u_x, j.u_xx, j.u_xxx.unwrap()]
        };
        let scale: Vec<f64> = (0..5).map(|c| j.grad_theta[c].iter().fold(0.0f64, |a, v| a.max(v.abs()))).collect();
        for k in 0..flat.len() {
            let mut p = flat.clone();
            p[k] += h;
            let up = comps(&p);
            p[k] -= 2.0 * h;
            let dn = comps(&p);
            for c in 0..5 {
                let fd = (up[c] - dn[c]) / (2.0 * h);
                let err = (fd - j.grad_theta[c][k]).abs() / scale[c].max(1e-12);
                assert!(err < 1e-5, "param {k} comp {c}: fd {fd} vs {}", j.grad_theta[c][k]);
            }
        }
    }

    #[test]
    fn batched_matches_single_point() {
        let sc = InputScaling::unit_box(-8.0, 8.0, 0.0, 10.0);
        let n = net(5);
        let pts = [(0.1, 0.2), (-3.0, 7.5), (5.5, 1.0)];
        let tape = state_forward(&n, &sc, &pts, JetOrder::X3).unwrap();
        // seed d/dx at every point; per-point gradients must agree with single-point jets
        let mut seed = DMatrix::zeros(1, 5 * pts.len());
        for j in 0..pts.len() {
            seed[(0, DX * pts.len() + j)] = 1.0;
        }
        let adj = tape.backward(&n, seed, false);
        let mut total = vec![0.0; n.param_count()];
        tape.accumulate_sum(&n, &adj, &mut total);
        let mut sum = vec![0.0; n.param_count()];
        for (j, &(x, t)) in pts.iter().enumerate() {
            let single = state_jet(&n, &sc, x, t, 3).unwrap();
            // blocked products may round differently than a single column
            assert!((tape.output(DXX)[j] - single.u_xx).abs() <= 1e-13 * single.u_xx.abs().max(1.0));
            let mut g = vec![0.0; n.param_count()];
            tape.accumulate_point(&n, &adj, j, &mut g);
            for k in 0..g.len() {
                assert!((g[k] - single.grad_theta[DX][k]).abs() < 1e-12);
                sum[k] += g[k];
            }
        }
        for k in 0..sum.len() {
            assert!((sum[k] - total[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn rhs_zero_net() {
        let rhs = Mlp::zeros(&[3, 4, 1]).unwrap();
        let j = state_jet(&net(1), &InputScaling::identity(), 0.2, 0.3, 2).unwrap();
        let (v, _, gi) = rhs_eval_with_grads(&rhs, &j).unwrap();
        assert_eq!(v, 0.0);
        assert!(gi.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rhs_gradients_match_finite_differences() {
        let rhs = Mlp::init(&[3, 8, 8, 1], 2, SirenInit { omega0: 1.0, omega: 1.0 }).unwrap();
        let j = state_jet(&net(4), &InputScaling::unit_box(-8.0, 8.0, 0.0, 10.0), 0.5, 2.0, 2).unwrap();
        let (v, gphi, gin) = rhs_eval_with_grads(&rhs, &j).unwrap();
        let inp = j.rhs_inputs(2).unwrap();
        assert!((v - rhs.eval(&inp).unwrap()).abs() < 1e-14);
        let h = 1e-5;
        for i in 0..3 {
            let mut p = inp.clone();
            p[i] += h;
            let up = rhs.eval(&p).unwrap();
            p[i] -= 2.0 * h;
            let fd = (up - rhs.eval(&p).unwrap()) / (2.0 * h);
            assert!(rel(fd, gin[i]) < 1e-5);
        }
        let mut flat = Vec::new();
        rhs.write_params(&mut flat);
        for k in 0..flat.len() {
            let mut m = rhs.clone();
            let mut p = flat.clone();
            p[k] += h;
            m.read_params(&p).unwrap();
            let up = m.eval(&inp).unwrap();
            p[k] -= 2.0 * h;
            m.read_params(&p).unwrap();
            let fd = (up - m.eval(&inp).unwrap()) / (2.0 * h);
            assert!((fd - gphi[k]).abs() < 1e-5 * gphi[k].abs().max(1e-2));
        }
    }

    #[test]
    fn rhs_arity_mismatch() {
        let j = state_jet(&net(1), &InputScaling::identity(), 0.2, 0.3, 2).unwrap();
        let rhs4 = Mlp::zeros(&[4, 3, 1]).unwrap();
        assert!(matches!(rhs_eval_with_grads(&rhs4, &j), Err(Error::Config(_))));
        let rhs5 = Mlp::zeros(&[5, 3, 1]).unwrap();
        assert!(matches!(rhs_eval_with_grads(&rhs5, &j), Err(Error::Config(_))));
    }
}
