//! Reference solution and noisy samples for either system.
//!
//! `cargo run --release --example generate_data -- [burgers|kdv] [noise] [out_dir]`

use std::path::PathBuf;

use pdeforge::datagen::{Dataset, SystemName, SystemSpec};

fn main() -> pdeforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let system: SystemName = args.next().as_deref().unwrap_or("burgers").parse()?;
    let noise: f64 = args.next().map_or(Ok(0.2), |s| s.parse()).map_err(|e| pdeforge::Error::Config(format!("noise: {e}")))?;
    let out = args.next().map_or_else(|| PathBuf::from(format!("data_{}", system.as_str())), PathBuf::from);

    let spec = SystemSpec::by_name(system);
    let (t_end, n_t) = (spec.t_train, spec.n_t_train);
    let data = Dataset::generate(&spec, t_end, n_t, noise, 2000, 1)?;
    data.save(&out)?;

    let clean = &data.clean;
    let dx = clean.mesh.dx();
    let mass: Vec<f64> = clean.values.iter().map(|r| r.iter().sum::<f64>() * dx).collect();
    let energy: Vec<f64> = clean.values.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() * dx).collect();
    println!("{} on {} nodes x {} snapshots up to t = {t_end}", system.as_str(), clean.mesh.nodes(), clean.values.len());
    println!("mass   {:+.6e} -> {:+.6e}", mass[0], mass[mass.len() - 1]);
    println!("energy {:.6e} -> {:.6e}", energy[0], energy[energy.len() - 1]);
    println!(
        "{} training and {} validation samples at noise {noise} (sigma {:.4}) in {}",
        data.samples.train.len(),
        data.samples.validation.len(),
        noise * clean.std(),
        out.display()
    );
    Ok(())
}
