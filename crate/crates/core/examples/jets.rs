//! Derivatives of a sine network with respect to its physical inputs, and
//! their parameter gradients, checked against finite differences.
//!
//! `cargo run --release --example jets`

use pdeforge::nnjet::{layer_sizes, state_jet, InputScaling, Mlp, SirenInit};

fn main() -> pdeforge::Result<()> {
    let net = Mlp::init(&layer_sizes(2, &[32, 32, 32]), 7, SirenInit::default())?;
    let scaling = InputScaling::unit_box(-8.0, 8.0, 0.0, 10.0);
    let (x, t) = (1.3, 4.2);
    let jet = state_jet(&net, &scaling, x, t, 3)?;

    let u = |x: f64, t: f64| state_jet(&net, &scaling, x, t, 3).map(|j| j.u);
    let h = 1e-4;
    let fd_t = (u(x, t + h)? - u(x, t - h)?) / (2.0 * h);
    let fd_x = (u(x + h, t)? - u(x - h, t)?) / (2.0 * h);
    let fd_xx = (u(x + h, t)? - 2.0 * jet.u + u(x - h, t)?) / (h * h);
    println!("u      {:+.10e}", jet.u);
    println!("u_t    {:+.10e}  (difference {:+.10e})", jet.u_t, fd_t);
    println!("u_x    {:+.10e}  (difference {:+.10e})", jet.u_x, fd_x);
    println!("u_xx   {:+.10e}  (difference {:+.10e})", jet.u_xx, fd_xx);
    println!("u_xxx  {:+.10e}", jet.u_xxx.unwrap_or(f64::NAN));

    // d u_x / d theta_i for one parameter, by perturbing the flat vector
    let mut flat = Vec::new();
    net.write_params(&mut flat);
    let i = flat.len() / 2;
    let ux_at = |delta: f64| -> pdeforge::Result<f64> {
        let mut p = flat.clone();
        p[i] += delta;
        let mut n = net.clone();
        n.read_params(&p)?;
        Ok(state_jet(&n, &scaling, x, t, 3)?.u_x)
    };
    let fd = (ux_at(1e-6)? - ux_at(-1e-6)?) / 2e-6;
    println!("d u_x / d theta[{i}]  {:+.10e}  (difference {:+.10e})", jet.rhs_input_grad(1)[i], fd);
    Ok(())
}
