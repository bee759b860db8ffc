//! Accuracy of one right-hand side across mesh resolutions, written as a
//! table. Without a network file the exact dynamics are used.
//!
//! `cargo run --release --example refine -- [rhs.pdef] [out.csv]`

use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::{spectral_solve, IcKind, SystemName};
use pdeforge::evalharness::{refinement_sweep, true_rhs_network, write_refinement};
use pdeforge::nnjet;

fn main() -> pdeforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = ExperimentConfig::desk(SystemName::Burgers);
    let spec = cfg.spec();
    let net = match args.next() {
        Some(p) if p != "true" => nnjet::io::load(p.as_ref())?,
        _ => true_rhs_network(&spec)?,
    };
    let mut tables = Vec::new();
    for (label, which) in [("train", IcKind::Train), ("test", IcKind::Test)] {
        let (t_end, n_t) = spec.horizon(which);
        let truth = spectral_solve(&spec, which, spec.n_x, t_end, n_t)?;
        let rows = refinement_sweep(&spec, &net, spec.rhs_arity, which, &truth, &cfg.refinement_meshes, cfg.evaluation.dt_ratio)?;
        for r in &rows {
            println!("{label:5} n_x {:4}: l2_rel {:.3e}{}", r.n_x, r.l2_rel, if r.diverged { " (diverged)" } else { "" });
        }
        tables.push((label, rows));
    }
    if let Some(out) = args.next() {
        write_refinement(out.as_ref(), &tables)?;
        println!("table written to {out}");
    }
    Ok(())
}
