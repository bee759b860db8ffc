//! Constrained training: minimize the data misfit subject to `|r_j| ≤ ε` at
//! every collocation point, after a short unit-weight warm start.
//!
//! `cargo run --release --example train_constrained -- [epsilon] [max_sqp_iters]`

use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::{IcKind, SystemName};
use pdeforge::evalharness::{build_problem, l2_rel_grids, member_dataset, solve_learned, time_to_failure_grids};
use pdeforge::trainers::{train_constrained, ConstrainedConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> pdeforge::Result<T> {
    match std::env::args().nth(i) {
        Some(s) => s.parse().map_err(|_| pdeforge::Error::Config(format!("cannot parse argument {i}: {s}"))),
        None => Ok(default),
    }
}

fn main() -> pdeforge::Result<()> {
    let cfg = ExperimentConfig::desk(SystemName::Burgers);
    let mut c = ConstrainedConfig::with_epsilon(arg(1, 1e-2)?);
    c.tropt.max_iters = arg(2, 200)?;
    let data = member_dataset(&cfg, 0)?;
    let prob = build_problem(&cfg, &data, 0, 0)?;

    let res = train_constrained(&prob, &c)?;
    let last = res.history.last().copied();
    println!("{} in {:.1}s{}", res.status.as_str(), res.wall_time, res.message.map(|m| format!(": {m}")).unwrap_or_default());
    if let Some(r) = last {
        println!("data loss {:.4e}, max |r| {:.3e} (epsilon {:.1e}), mu {:.1e}", r.data_loss, r.max_abs_residual, c.epsilon, r.diag);
    }
    let (_, rhs) = prob.nets(&res.final_params.flat)?;
    let spec = cfg.spec();
    let sol = solve_learned(&spec, &rhs, spec.rhs_arity, IcKind::Train, cfg.evaluation, data.clean.t_end(), data.clean.n_t())?;
    println!(
        "learned dynamics: l2_rel {:.4}, time to failure {:.2} of {}",
        l2_rel_grids(&data.clean, &sol)?,
        time_to_failure_grids(&data.clean, &sol, cfg.delta)?,
        data.clean.t_end()
    );
    Ok(())
}
