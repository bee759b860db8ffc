//! Trains one grid point of the desk-scale Burgers study and breaks its
//! error down: how well the state network matches the clean solution and
//! its derivatives, how well the learned rhs matches the exact one on clean
//! features, and the resulting validation loss and metrics.
//!
//! `cargo run --release --example diagnose_run -- [penalty|constrained] [k] [s] [state_omega0] [warm_start] [max_sqp_iters]`

use nalgebra::DMatrix;
use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::{spectral_solve, IcKind, SystemName};
use pdeforge::evalharness::{build_problem, evaluate_model, member_dataset, train_one, validation_loss};
use pdeforge::mol::spatial_derivatives;
use pdeforge::nnjet::jet::{DT, DX, DXX, VALUE};
use pdeforge::nnjet::{state_forward, JetOrder};
use pdeforge::trainers::hyperparameter_grid;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (num / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
}

fn main() -> pdeforge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::desk(SystemName::Burgers);
    if let Some(m) = args.first() {
        cfg.method = m.parse()?;
    }
    let k: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let s: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    if let Some(w) = args.get(3).and_then(|s| s.parse().ok()) {
        cfg.state_net.omega0 = w;
    }
    if let Some(n) = args.get(4).and_then(|s| s.parse().ok()) {
        cfg.constrained.warm_start_steps = n;
    }
    if let Some(n) = args.get(5).and_then(|s| s.parse().ok()) {
        cfg.constrained.tropt.max_iters = n;
    }
    let spec = cfg.spec();
    let data = member_dataset(&cfg, 0)?;
    let prob = build_problem(&cfg, &data, 0, s)?;
    let hyper = hyperparameter_grid(cfg.method, k)?;
    let res = train_one(&cfg, &prob, hyper, 0, s)?;
    println!("{} at {hyper:.3e}: {} in {:.1}s, data loss {:.4e}", cfg.method.as_str(), res.status.as_str(), res.wall_time, res.final_data_loss());
    let (state, rhs) = prob.nets(&res.final_params.flat)?;

    // clean solution and its derivatives on the training part of the window
    let clean = &data.clean;
    let t_max = prob.data.points.iter().map(|p| p.1).fold(0.0, f64::max);
    let x = clean.mesh.coordinates();
    let (mut pts, mut feats, mut ut) = (Vec::new(), Vec::new(), Vec::new());
    for (l, t) in clean.times().into_iter().enumerate().step_by(5).filter(|p| p.1 <= t_max) {
        let d = spatial_derivatives(&clean.mesh, &clean.values[l], 2)?;
        for kx in 1..x.len() - 1 {
            let u = clean.values[l][kx];
            pts.push((x[kx], t));
            feats.push([u, d[0][kx], d[1][kx]]);
            ut.push(spec.true_rhs(u, d[0][kx], d[1][kx], 0.0));
        }
    }
    let col = |i: usize| feats.iter().map(|f| f[i]).collect::<Vec<f64>>();
    let tape = state_forward(&state, &prob.scaling, &pts, JetOrder::X2)?;
    println!(
        "state relative error: u {:.3e}, u_x {:.3e}, u_xx {:.3e}, u_t {:.3e}",
        rel(tape.output(VALUE), &col(0)),
        rel(tape.output(DX), &col(1)),
        rel(tape.output(DXX), &col(2)),
        rel(tape.output(DT), &ut)
    );
    let exact_in = DMatrix::from_fn(3, feats.len(), |i, j| feats[j][i]);
    println!("rhs relative error on clean features: {:.3e}", rel(&rhs.eval_batch(&exact_in)?, &ut));
    let fitted_in = DMatrix::from_fn(3, feats.len(), |i, j| [tape.output(VALUE), tape.output(DX), tape.output(DXX)][i][j]);
    println!("PDE residual on the whole grid, relative: {:.3e}", rel(&rhs.eval_batch(&fitted_in)?, tape.output(DT)));

    let v = validation_loss(&spec, &rhs, spec.rhs_arity, &cfg.validation, &data.samples.validation, cfg.t_window, cfg.n_t)?;
    let (t_te, n_te) = spec.horizon(IcKind::Test);
    let test = spectral_solve(&spec, IcKind::Test, spec.n_x, t_te, n_te)?;
    let r = evaluate_model(&spec, &rhs, spec.rhs_arity, cfg.evaluation, clean, &test, cfg.delta)?;
    println!("validation {:.4e} (meshes {:?})", v.loss, v.per_mesh);
    println!(
        "train IC: l2_rel {:.4}, TTF {:.2}; test IC: l2_rel {:.4}, TTF {:.2}",
        r.l2_rel_train_ic, r.ttf_train_ic, r.l2_rel_test_ic, r.ttf_test_ic
    );
    Ok(())
}
