//! Best case for the right-hand-side network: fit it directly to the exact
//! `u_t` on exact features `(u, u_x, u_xx)` at as many points as there are
//! collocation points, then score the resulting dynamics. The gap between
//! this and a trained model separates state-fit error from rhs capacity.
//!
//! `cargo run --release --example supervised_bound -- [points] [steps]`

use nalgebra::DMatrix;
use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::{spectral_solve, IcKind, SystemName};
use pdeforge::evalharness::{evaluate_model, member_dataset};
use pdeforge::mol::spatial_derivatives;
use pdeforge::nnjet::jet::Tape;
use pdeforge::trainers::Adam;
use rand::{Rng, SeedableRng};

fn main() -> pdeforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_pts: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let cfg = ExperimentConfig::desk(SystemName::Burgers);
    let spec = cfg.spec();
    let clean = member_dataset(&cfg, 0)?.clean;

    // exact features over the training part of the window
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let last = clean.n_t() * 2 / 3;
    let mut input = DMatrix::zeros(3, n_pts);
    let mut target = Vec::with_capacity(n_pts);
    for j in 0..n_pts {
        let l = rng.gen_range(0..=last);
        let k = rng.gen_range(1..clean.mesh.n_x);
        let d = spatial_derivatives(&clean.mesh, &clean.values[l], 2)?;
        let u = clean.values[l][k];
        input.set_column(j, &nalgebra::Vector3::new(u, d[0][k], d[1][k]));
        target.push(spec.true_rhs(u, d[0][k], d[1][k], 0.0));
    }

    let mut net = cfg.rhs_net.build(3, 7)?;
    let mut p = Vec::new();
    net.write_params(&mut p);
    let mut adam = Adam::new(p.len(), 1e-3, (0.9, 0.999), 1e-8);
    for it in 0..steps {
        let tape = Tape::forward(&net, input.clone(), 1)?;
        let out = tape.output(0);
        if it % (steps / 5).max(1) == 0 {
            let mse = out.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n_pts as f64;
            println!("step {it:6}: mse {mse:.3e}");
        }
        let seed = DMatrix::from_fn(1, n_pts, |_, j| 2.0 * (out[j] - target[j]) / n_pts as f64);
        let adj = tape.backward(&net, seed, false);
        let mut g = vec![0.0; p.len()];
        tape.accumulate_sum(&net, &adj, &mut g);
        adam.step(&mut p, &g, false);
        net.read_params(&p)?;
    }

    let (t, n_t) = spec.horizon(IcKind::Test);
    let test = spectral_solve(&spec, IcKind::Test, spec.n_x, t, n_t)?;
    let r = evaluate_model(&spec, &net, spec.rhs_arity, cfg.evaluation, &clean, &test, cfg.delta)?;
    println!(
        "train IC: l2_rel {:.4}, TTF {:.2}; test IC: l2_rel {:.4}, TTF {:.2}",
        r.l2_rel_train_ic, r.ttf_train_ic, r.l2_rel_test_ic, r.ttf_test_ic
    );
    Ok(())
}
