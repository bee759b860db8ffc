//! Full selection pipeline of the workstation-sized Burgers study for one
//! method, with every artifact written to an output directory.
//!
//! `cargo run --release --example desk_study -- [penalty|constrained] [out_dir]`

use std::path::PathBuf;

use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::SystemName;
use pdeforge::evalharness::run_ensemble;

fn main() -> pdeforge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::desk(SystemName::Burgers);
    if let Some(m) = args.next() {
        cfg.method = m.parse()?;
    }
    let out = args.next().map_or_else(|| PathBuf::from(format!("desk_{}", cfg.method.as_str())), PathBuf::from);
    let result = run_ensemble(&cfg, &out, 1, true)?;
    for m in &result.members {
        let r = &m.report;
        println!(
            "member {}: chose k={} s={}; l2_rel train {:.4} test {:.4}; ttf train {:.2} test {:.2}",
            m.member, m.chosen_k, m.chosen_s, r.l2_rel_train_ic, r.l2_rel_test_ic, r.ttf_train_ic, r.ttf_test_ic
        );
    }
    println!("tables in {}", out.display());
    Ok(())
}
