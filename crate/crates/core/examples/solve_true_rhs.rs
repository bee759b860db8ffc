//! Method-of-lines solves of the exact dynamics, written as a small sine
//! network, against the spectral reference on several meshes.
//!
//! `cargo run --release --example solve_true_rhs -- [burgers|kdv]`

use pdeforge::datagen::{spectral_solve, IcKind, SystemName, SystemSpec};
use pdeforge::evalharness::{l2_rel_grids, solve_learned, time_to_failure_grids, true_rhs_network, SolveSettings};

fn main() -> pdeforge::Result<()> {
    let system: SystemName = std::env::args().nth(1).as_deref().unwrap_or("burgers").parse()?;
    let spec = SystemSpec::by_name(system);
    let net = true_rhs_network(&spec)?;
    let base = SolveSettings::evaluation(system);
    for which in [IcKind::Train, IcKind::Test] {
        let (t_end, n_t) = spec.horizon(which);
        let truth = spectral_solve(&spec, which, spec.n_x, t_end, n_t)?;
        for n_x in [base.n_x / 2, base.n_x, 2 * base.n_x] {
            let sol = solve_learned(&spec, &net, spec.rhs_arity, which, SolveSettings { n_x, ..base }, t_end, n_t)?;
            println!(
                "{:?} IC, {n_x:4} intervals: l2_rel {:.3e}, time to failure {} of {t_end}",
                which,
                l2_rel_grids(&truth, &sol)?,
                time_to_failure_grids(&truth, &sol, 0.2)?
            );
        }
    }
    Ok(())
}
