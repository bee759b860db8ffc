//! Min-max penalty training on noisy Burgers samples, simultaneous or
//! staggered, followed by a classical solve of the learned dynamics.
//!
//! `cargo run --release --example train_penalty -- [lambda0] [steps] [simultaneous|staggered]`

use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::SystemName;
use pdeforge::evalharness::{build_problem, l2_rel_grids, member_dataset, solve_learned, time_to_failure_grids};
use pdeforge::datagen::IcKind;
use pdeforge::trainers::{train_penalty, Method, Schedule};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> pdeforge::Result<T> {
    match std::env::args().nth(i) {
        Some(s) => s.parse().map_err(|_| pdeforge::Error::Config(format!("cannot parse argument {i}: {s}"))),
        None => Ok(default),
    }
}

fn main() -> pdeforge::Result<()> {
    let mut cfg = ExperimentConfig::desk(SystemName::Burgers);
    cfg.method = Method::Penalty;
    cfg.penalty.lambda0 = arg(1, 10.0)?;
    cfg.penalty.steps = arg(2, 5000)?;
    cfg.penalty.schedule = match arg(3, String::from("simultaneous"))?.as_str() {
        "staggered" => Schedule::Staggered,
        _ => Schedule::Simultaneous,
    };
    let data = member_dataset(&cfg, 0)?;
    let prob = build_problem(&cfg, &data, 0, 0)?;
    println!("{} parameters, {} data points, {} collocation points", prob.dim(), prob.data.len(), prob.colloc.len());

    let res = train_penalty(&prob, &cfg.penalty)?;
    for row in res.history.iter().step_by((cfg.penalty.steps / 10).max(1)) {
        println!("step {:6}  data {:.4e}  max|r| {:.3e}  mean lambda {:.3e}", row.step, row.data_loss, row.max_abs_residual, row.diag);
    }
    let (_, rhs) = prob.nets(&res.final_params.flat)?;
    let spec = cfg.spec();
    let sol = solve_learned(&spec, &rhs, spec.rhs_arity, IcKind::Train, cfg.evaluation, data.clean.t_end(), data.clean.n_t())?;
    println!(
        "{:.1}s; learned dynamics: l2_rel {:.4}, time to failure {:.2} of {}",
        res.wall_time,
        l2_rel_grids(&data.clean, &sol)?,
        time_to_failure_grids(&data.clean, &sol, cfg.delta)?,
        data.clean.t_end()
    );
    Ok(())
}
