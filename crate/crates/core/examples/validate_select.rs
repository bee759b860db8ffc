//! Model selection by hand: train a small seed-by-λ⁰ grid, score each model
//! by its multi-mesh validation loss, pick the best and evaluate it on both
//! initial conditions.
//!
//! `cargo run --release --example validate_select -- [steps]`

use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::{spectral_solve, IcKind, SystemName};
use pdeforge::evalharness::{build_problem, evaluate_model, member_dataset, select_model, train_one, validation_loss};
use pdeforge::trainers::{hyperparameter_grid, Method};

fn main() -> pdeforge::Result<()> {
    let mut cfg = ExperimentConfig::desk(SystemName::Burgers);
    cfg.method = Method::Penalty;
    cfg.penalty.steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let spec = cfg.spec();
    let data = member_dataset(&cfg, 0)?;
    let ks = [1, 5, 9];

    let mut losses = Vec::new();
    let mut nets = Vec::new();
    for s in 0..2 {
        let (mut row, mut row_nets) = (Vec::new(), Vec::new());
        for &k in &ks {
            let lambda0 = hyperparameter_grid(cfg.method, k)?;
            let prob = build_problem(&cfg, &data, 0, s)?;
            let res = train_one(&cfg, &prob, lambda0, 0, s)?;
            let (_, rhs) = prob.nets(&res.final_params.flat)?;
            let v = validation_loss(&spec, &rhs, spec.rhs_arity, &cfg.validation, &data.samples.validation, cfg.t_window, cfg.n_t)?;
            println!("seed {s} lambda0 {lambda0:8.3}: validation {:.4e} (meshes {:?})", v.loss, v.per_mesh);
            row.push(v.loss);
            row_nets.push(rhs);
        }
        losses.push(row);
        nets.push(row_nets);
    }
    let (k, s) = select_model(&losses)?;
    println!("selected seed {s}, lambda0 {:.3}", hyperparameter_grid(cfg.method, ks[k])?);

    let (t_te, n_te) = spec.horizon(IcKind::Test);
    let truth_test = spectral_solve(&spec, IcKind::Test, spec.n_x, t_te, n_te)?;
    let r = evaluate_model(&spec, &nets[s][k], spec.rhs_arity, cfg.evaluation, &data.clean, &truth_test, cfg.delta)?;
    println!(
        "train IC: l2_rel {:.4}, TTF {:.2}; test IC: l2_rel {:.4}, TTF {:.2}",
        r.l2_rel_train_ic, r.ttf_train_ic, r.l2_rel_test_ic, r.ttf_test_ic
    );
    Ok(())
}
