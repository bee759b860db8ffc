//! Acceptance suite: one pass/fail line per criterion.
//!
//! Positional arguments select criteria by number or name fragment. The
//! paper-scale run (criterion 8) only runs with `--ignored`,
//! `--include-ignored` or `PDEFORGE_PAPER_SCALE=1`. Trained models of the
//! desk-scale criteria are cached under `PDEFORGE_ACCEPTANCE_DIR` (default:
//! the cargo target tmp dir) and reused when their checksums still match.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::{add_noise, spectral_solve, IcKind, SystemName, SystemSpec};
use pdeforge::evalharness::{
    build_problem, combine_mesh_losses, evaluate_model, l2_rel_grids, member_dataset, quantile, run_ensemble,
    select_model, solve_learned, time_to_failure_grids, train_one, true_rhs_network, SolveSettings, Summary,
};
use pdeforge::mol::{mol_solve, spatial_derivatives, BoundaryKind, FnRhs, GridSolution, Mesh1D};
use pdeforge::nnjet::{self, jet, InputScaling, JetOrder, Mlp, SirenInit};
use pdeforge::residuals::{PointRole, PointSet, ResidualProblem};
use pdeforge::trainers::{hyperparameter_grid, Method, Schedule};
use pdeforge::tropt::{minimize, FnProblem, Status, TroptSettings};
use pdeforge::Error;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

struct Criterion {
    id: usize,
    name: &'static str,
    run: fn(&Opts) -> Verdict,
}

struct Opts {
    paper_scale: bool,
    cache: PathBuf,
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ignored = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let env_on = |k: &str| std::env::var(k).is_ok_and(|v| !v.is_empty() && v != "0");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| a == "--list") {
        for c in criteria() {
            println!("c{}_{}: test", c.id, c.name);
        }
        return;
    }
    let opts = Opts {
        paper_scale: ignored || env_on("PDEFORGE_PAPER_SCALE"),
        cache: std::env::var_os("PDEFORGE_ACCEPTANCE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")),
    };
    let mut failed = 0;
    for c in criteria() {
        let label = format!("c{}_{}", c.id, c.name);
        if !filters.is_empty() && !filters.iter().any(|f| label.contains(f.as_str()) || f.as_str() == c.id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| (c.run)(&opts)))
            .unwrap_or_else(|p| Verdict::Fail(format!("panicked: {}", panic_text(&p))));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {} {}: {tag} ({secs:.1}s) {detail}", c.id, c.name);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "derivatives_and_gradients", run: c1_derivatives },
        Criterion { id: 2, name: "optimizer_suite", run: c2_optimizer },
        Criterion { id: 3, name: "convergence_orders", run: c3_orders },
        Criterion { id: 4, name: "data_oracle_fidelity", run: c4_oracle },
        Criterion { id: 5, name: "true_rhs_reproduces_data", run: c5_true_rhs },
        Criterion { id: 6, name: "desk_scale_discovery", run: c6_desk },
        Criterion { id: 7, name: "simultaneous_beats_staggered", run: c7_schedules },
        Criterion { id: 8, name: "full_scale_discovery", run: c8_paper },
        Criterion { id: 9, name: "metric_and_selection_properties", run: c9_properties },
    ]
}

// ---------------------------------------------------------------- criterion 1

fn rel_norm(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().max(1e-300);
    (num / den).sqrt()
}

/// Central difference of a vector-valued function along `e_i`.
fn fd_vec(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let at = |d: f64| {
        let mut y = x.to_vec();
        y[i] += d;
        f(&y)
    };
    let (p, m) = (at(h), at(-h));
    p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

fn c1_derivatives(_: &Opts) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let scaling = InputScaling::unit_box(-8.0, 8.0, 0.0, 10.0);
    let mut worst = [0.0f64; 7];
    for net_id in 0..20 {
        let width = [8, 12, 16][net_id % 3];
        let depth = 2 + net_id % 2;
        let omega0 = [1.0, 5.0, 30.0][net_id % 3];
        let arity = 2 + net_id % 2;
        let state = Mlp::init(&nnjet::layer_sizes(2, &vec![width; depth]), 100 + net_id as u64, SirenInit { omega0, omega: 1.0 })
            .unwrap();
        let rhs = Mlp::init(&nnjet::layer_sizes(arity + 1, &[12, 12]), 200 + net_id as u64, SirenInit { omega0: 1.0, omega: 1.0 })
            .unwrap();
        let pts: Vec<(f64, f64)> = (0..100).map(|_| (rng.gen_range(-8.0..8.0), rng.gen_range(0.0..10.0))).collect();
        let vals: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // input derivatives: each order against a difference of the one below
        let tape = jet::state_forward(&state, &scaling, &pts, JetOrder::X3).unwrap();
        let comp_at = |comp: usize, p: &[(f64, f64)]| -> Vec<f64> {
            let order = if comp == jet::VALUE { JetOrder::Value } else { JetOrder::X3 };
            jet::state_forward(&state, &scaling, p, order).unwrap().output(comp).to_vec()
        };
        let shifted = |dx: f64, dt: f64| -> Vec<(f64, f64)> { pts.iter().map(|&(x, t)| (x + dx, t + dt)).collect() };
        let fd = |comp: usize, along_x: bool| -> Vec<f64> {
            let h = 1e-3;
            let sh = |d: f64| if along_x { shifted(d, 0.0) } else { shifted(0.0, d) };
            let (p1, m1, p2, m2) = (comp_at(comp, &sh(h / 2.0)), comp_at(comp, &sh(-h / 2.0)), comp_at(comp, &sh(h)), comp_at(comp, &sh(-h)));
            (0..pts.len()).map(|j| (4.0 * (p1[j] - m1[j]) / h - (p2[j] - m2[j]) / (2.0 * h)) / 3.0).collect()
        };
        let checks = [
            (jet::DT, fd(jet::VALUE, false)),
            (jet::DX, fd(jet::VALUE, true)),
            (jet::DXX, fd(jet::DX, true)),
            (jet::DXXX, fd(jet::DXX, true)),
        ];
        for (slot, (comp, reference)) in checks.iter().enumerate() {
            worst[slot] = worst[slot].max(rel_norm(tape.output(*comp), reference));
        }

        // parameter gradients of the data misfit, the compound loss and every residual
        let data = PointSet::data(pts[..50].to_vec(), vals[..50].to_vec(), PointRole::Train).unwrap();
        let colloc = PointSet::collocation(pts.clone());
        let prob = ResidualProblem::new(state.clone(), rhs.clone(), scaling, data, colloc, arity).unwrap();
        let theta = prob.params().flat.clone();
        let lambda: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..2.0)).collect();
        let (_, g_data) = prob.data_loss(&theta).unwrap();
        let g_comp = prob.compound_loss(&theta, &lambda).unwrap().grad;
        let (_, jac) = prob.residual_vector(&theta).unwrap();
        let data_f = |p: &[f64]| vec![prob.data_loss(p).unwrap().0];
        let comp_f = |p: &[f64]| vec![prob.compound_loss(p, &lambda).unwrap().value];
        let res_f = |p: &[f64]| prob.residuals(p).unwrap();
        let h = 1e-5;
        let (mut fd_data, mut fd_comp) = (Vec::new(), Vec::new());
        let mut fd_jac = DMatrix::zeros(jac.nrows(), jac.ncols());
        for i in 0..theta.len() {
            fd_data.push(fd_vec(&data_f, &theta, i, h)[0]);
            fd_comp.push(fd_vec(&comp_f, &theta, i, h)[0]);
            let col = fd_vec(&res_f, &theta, i, h);
            for (j, v) in col.into_iter().enumerate() {
                fd_jac[(j, i)] = v;
            }
        }
        worst[4] = worst[4].max(rel_norm(&g_data, &fd_data));
        worst[5] = worst[5].max(rel_norm(&g_comp, &fd_comp));
        worst[6] = worst[6].max(rel_norm(jac.as_slice(), fd_jac.as_slice()));
    }
    let names = ["u_t", "u_x", "u_xx", "u_xxx", "grad L_data", "grad L_compound", "grad r_j"];
    let detail = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(worst.iter().all(|&w| w <= 1e-5), format!("max relative error over 20 nets x 100 points: {detail} (limit 1e-5)"))
}

// ---------------------------------------------------------------- criterion 2

fn c2_optimizer(_: &Opts) -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    let settings = TroptSettings::default();

    let bound = FnProblem::new(
        1,
        1,
        |x| (x[0] * x[0], vec![2.0 * x[0]]),
        |x| (vec![1.0 - x[0]], DMatrix::from_element(1, 1, -1.0)),
    );
    let s = minimize(&bound, &[3.0], &settings).unwrap();
    let e = (s.x[0] - 1.0).abs();
    ok &= e <= 1e-6 && s.report.max_violation <= settings.ktol;
    notes.push(format!("bound |x-1| {e:.1e}"));

    let rosen = FnProblem::new(
        2,
        1,
        |x| {
            let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
            (a * a + 100.0 * b * b, vec![-2.0 * a - 400.0 * x[0] * b, 200.0 * b])
        },
        |x| (vec![x[0] * x[0] + x[1] * x[1] - 2.0], DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])),
    );
    let rs = TroptSettings { max_iters: 3000, ..TroptSettings::default() };
    let s = minimize(&rosen, &[-1.0, 0.5], &rs).unwrap();
    let e = (s.x[0] - 1.0).abs().max((s.x[1] - 1.0).abs());
    ok &= e <= 1e-4 && s.report.max_violation <= rs.ktol;
    notes.push(format!("disk Rosenbrock {e:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_qp = 0.0f64;
    let mut worst_viol = 0.0f64;
    let mut statuses = Vec::new();
    for _ in 0..5 {
        let (n, m) = (4, 6);
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let interior = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        let b = &a * &interior + DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
        let oracle = common::qp_active_set(&q, &c, &a, &b);
        let (qc, cc, ac, bc) = (q.clone(), c.clone(), a.clone(), b.clone());
        let p = FnProblem::new(
            n,
            m,
            move |x| {
                let x = DVector::from_column_slice(x);
                let g = &qc * &x + &cc;
                (0.5 * x.dot(&(&qc * &x)) + cc.dot(&x), g.as_slice().to_vec())
            },
            move |x| {
                let x = DVector::from_column_slice(x);
                ((&ac * &x - &bc).as_slice().to_vec(), ac.clone())
            },
        );
        let s = minimize(&p, &vec![0.0; n], &settings).unwrap();
        let e = s.x.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_qp = worst_qp.max(e / oracle.amax().max(1.0));
        worst_viol = worst_viol.max(s.report.max_violation);
        ok &= matches!(s.report.status, Status::Converged | Status::StepTolerance);
        statuses.push(s.report.status.as_str());
    }
    ok &= worst_qp <= 1e-5 && worst_viol <= settings.ktol;
    notes.push(format!("5 random QPs vs active-set oracle {worst_qp:.1e}, max violation {worst_viol:.1e}, status {}", statuses.join("/")));
    verdict(ok, notes.join(", "))
}

// ---------------------------------------------------------------- criterion 3

fn c3_orders(_: &Opts) -> Verdict {
    // periodic 9-point stencils on exp(sin x)
    let f = |x: f64| x.sin().exp();
    let d1 = |x: f64| x.cos() * f(x);
    let d2 = |x: f64| (x.cos().powi(2) - x.sin()) * f(x);
    let d3 = |x: f64| (x.cos().powi(3) - 3.0 * x.sin() * x.cos() - x.cos()) * f(x);
    let two_pi = 2.0 * std::f64::consts::PI;
    let periodic = |n: usize, order: usize, exact: &dyn Fn(f64) -> f64| -> (f64, f64) {
        let mesh = Mesh1D::new(0.0, two_pi, n, BoundaryKind::Periodic).unwrap();
        let x = mesh.coordinates();
        let u: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let d = spatial_derivatives(&mesh, &u, order).unwrap();
        let err = d[order - 1].iter().zip(&x).map(|(a, &v)| (a - exact(v)).abs()).fold(0.0, f64::max);
        (mesh.dx(), err)
    };
    let slope_of = |ns: &[usize], order: usize, exact: &dyn Fn(f64) -> f64| {
        let (h, e): (Vec<f64>, Vec<f64>) = ns.iter().map(|&n| periodic(n, order, exact)).unzip();
        common::loglog_slope(&h, &e)
    };
    let s8_1 = slope_of(&[24, 28, 32, 40, 48], 1, &d1);
    let s8_2 = slope_of(&[24, 28, 32, 40, 48], 2, &d2);
    let s6_3 = slope_of(&[32, 40, 48, 64, 80], 3, &d3);

    // 3-point stencils on a Dirichlet mesh
    let g = |x: f64| (std::f64::consts::PI * x).sin() * (0.5 * x).exp();
    let g1 = |x: f64| {
        let p = std::f64::consts::PI;
        (p * (p * x).cos() + 0.5 * (p * x).sin()) * (0.5 * x).exp()
    };
    let g2 = |x: f64| {
        let p = std::f64::consts::PI;
        ((0.25 - p * p) * (p * x).sin() + p * (p * x).cos()) * (0.5 * x).exp()
    };
    let dirichlet = |order: usize, exact: &dyn Fn(f64) -> f64| {
        let (h, e): (Vec<f64>, Vec<f64>) = [40usize, 80, 160, 320, 640]
            .iter()
            .map(|&n| {
                let mesh = Mesh1D::new(-1.0, 1.0, n, BoundaryKind::DirichletZero).unwrap();
                let x = mesh.coordinates();
                let u: Vec<f64> = x.iter().map(|&v| g(v)).collect();
                let d = spatial_derivatives(&mesh, &u, 2).unwrap();
                let err = (1..n).map(|k| (d[order - 1][k] - exact(x[k])).abs()).fold(0.0, f64::max);
                (mesh.dx(), err)
            })
            .unzip();
        common::loglog_slope(&h, &e)
    };
    let s2_1 = dirichlet(1, &g1);
    let s2_2 = dirichlet(2, &g2);

    // RK4 on u_t = -u at t = 1
    let mesh = Mesh1D::new(0.0, 1.0, 8, BoundaryKind::Periodic).unwrap();
    let (dts, errs): (Vec<f64>, Vec<f64>) = [2.0, 1.0, 0.5, 0.25]
        .iter()
        .map(|&ratio| {
            let mut rhs = FnRhs { max_order: 1, f: |inp: &pdeforge::mol::RhsInput| inp.u.iter().map(|v| -v).collect::<Vec<f64>>() };
            let sol = mol_solve(&mut rhs, &mesh, &vec![1.0; 8], 1.0, ratio, 1).unwrap();
            let dt = 1.0 / (1.0 / (ratio * mesh.dx())).ceil();
            (dt, (sol.values[1][0] - (-1.0f64).exp()).abs())
        })
        .unzip();
    let s_rk = common::loglog_slope(&dts, &errs);

    let ok = (s2_1 - 2.0).abs() <= 0.1
        && (s2_2 - 2.0).abs() <= 0.1
        && (s8_1 - 8.0).abs() <= 0.5
        && (s8_2 - 8.0).abs() <= 0.5
        && (s6_3 - 6.0).abs() <= 0.5
        && (s_rk - 4.0).abs() <= 0.2;
    verdict(
        ok,
        format!(
            "slopes: 3-point d1 {s2_1:.2} d2 {s2_2:.2}, 9-point d1 {s8_1:.2} d2 {s8_2:.2} d3 {s6_3:.2}, RK4 {s_rk:.2}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn c4_oracle(_: &Opts) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();

    let spec = SystemSpec::burgers();
    let (t_end, n_t) = spec.horizon(IcKind::Train);
    let spectral = spectral_solve(&spec, IcKind::Train, spec.n_x, t_end, n_t).unwrap();
    let fine = 4 * spec.n_x;
    let ic = spec.ic_train;
    let fd = common::fd_burgers(spec.x_hi, spec.rhs.diffusion, |x| ic.eval(x), fine, t_end, n_t, 0.05);
    let mut worst = 0.0f64;
    for (row, oracle) in spectral.values.iter().zip(&fd).skip(1) {
        let coarse: Vec<f64> = (0..row.len()).map(|k| oracle[4 * k]).collect();
        worst = worst.max(common::rel_l2(row, &coarse));
    }
    ok &= worst <= 1e-3 && fd.len() == spectral.values.len();
    notes.push(format!("Burgers spectral vs fine difference oracle max relative l2 {worst:.1e} over {} snapshots", fd.len()));

    let kdv = SystemSpec::kdv();
    let (t_end, n_t) = kdv.horizon(IcKind::Train);
    let sol = spectral_solve(&kdv, IcKind::Train, kdv.n_x, t_end, n_t).unwrap();
    let dx = sol.mesh.dx();
    let mass = |r: &Vec<f64>| r.iter().sum::<f64>() * dx;
    let norm = (sol.values[0].iter().map(|v| v * v).sum::<f64>() * dx).sqrt();
    let m0 = mass(&sol.values[0]);
    let drift = sol.values.iter().map(|r| (mass(r) - m0).abs()).fold(0.0, f64::max) / norm;
    ok &= drift <= 1e-8;
    notes.push(format!("KdV mass drift {drift:.1e} of the L2 norm"));

    let mut worst_noise = 0.0f64;
    for (level, seed) in [(0.1, 5u64), (0.2, 6), (0.4, 7)] {
        let noisy = add_noise(&spectral, level, seed).unwrap();
        let diffs: Vec<f64> = noisy.values.iter().flatten().zip(spectral.values.iter().flatten()).map(|(a, b)| a - b).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        let want = level * spectral.std();
        worst_noise = worst_noise.max((sd / want - 1.0).abs()).max(mean.abs() / want);
    }
    let shape = (spectral.mesh.nodes() - 1, spectral.values.len());
    ok &= worst_noise <= 0.02 && shape == (256, 601);
    notes.push(format!("noise scale off by at most {:.2}% on the {}x{} grid", 100.0 * worst_noise, shape.0, shape.1));
    verdict(ok, notes.join(", "))
}

// ---------------------------------------------------------------- criterion 5

fn c5_true_rhs(_: &Opts) -> Verdict {
    let spec = SystemSpec::burgers();
    let (t_tr, n_tr) = spec.horizon(IcKind::Train);
    let (t_te, n_te) = spec.horizon(IcKind::Test);
    let truth_tr = spectral_solve(&spec, IcKind::Train, spec.n_x, t_tr, n_tr).unwrap();
    let truth_te = spectral_solve(&spec, IcKind::Test, spec.n_x, t_te, n_te).unwrap();
    let settings = SolveSettings::evaluation(SystemName::Burgers);
    let net = true_rhs_network(&spec).unwrap();
    let r = evaluate_model(&spec, &net, spec.rhs_arity, settings, &truth_tr, &truth_te, 0.2).unwrap();

    // the same right-hand side written out analytically
    let exact = |which: IcKind, truth: &GridSolution| {
        let mesh = spec.mesh(settings.n_x).unwrap();
        let u0 = spec.initial_values(which, &mesh);
        let mut f = FnRhs {
            max_order: 2,
            f: |inp: &pdeforge::mol::RhsInput| {
                (0..inp.u.len()).map(|k| spec.true_rhs(inp.u[k], inp.derivs[0][k], inp.derivs[1][k], 0.0)).collect::<Vec<f64>>()
            },
        };
        let sol = mol_solve(&mut f, &mesh, &u0, truth.t_end(), settings.dt_ratio, truth.n_t()).unwrap();
        (l2_rel_grids(truth, &sol).unwrap(), time_to_failure_grids(truth, &sol, 0.2).unwrap())
    };
    let (a_tr, ta_tr) = exact(IcKind::Train, &truth_tr);
    let (a_te, ta_te) = exact(IcKind::Test, &truth_te);
    let ok = r.l2_rel_train_ic <= 1e-2
        && r.l2_rel_test_ic <= 1e-2
        && r.ttf_train_ic == t_tr
        && r.ttf_test_ic == t_te
        && a_tr <= 1e-2
        && a_te <= 1e-2
        && ta_tr == t_tr
        && ta_te == t_te;
    verdict(
        ok,
        format!(
            "network form: l2_rel {:.2e} / {:.2e}, TTF {} / {}; analytic form: l2_rel {a_tr:.2e} / {a_te:.2e}, TTF {ta_tr} / {ta_te} (T = {t_tr} / {t_te})",
            r.l2_rel_train_ic, r.l2_rel_test_ic, r.ttf_train_ic, r.ttf_test_ic
        ),
    )
}

// ---------------------------------------------------------------- criteria 6 to 8

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn c6_desk(opts: &Opts) -> Verdict {
    let mut cfg = ExperimentConfig::desk(SystemName::Burgers);
    cfg.method = Method::Constrained;
    let con = run_ensemble(&cfg, &opts.cache.join("c6_constrained"), workers(), true);
    cfg.method = Method::Penalty;
    let pen = run_ensemble(&cfg, &opts.cache.join("c6_penalty"), workers(), true);
    let (con, pen) = match (con, pen) {
        (Ok(c), Ok(p)) => (c, p),
        (c, p) => return Verdict::Fail(format!("constrained: {:?}, penalty: {:?}", c.err(), p.err())),
    };
    let c = &con.members[0];
    let p = &pen.members[0];
    let scored = p.report.l2_rel_train_ic.is_finite() || p.report.diverged_train;
    let ok = c.report.l2_rel_train_ic <= 0.20 && c.report.ttf_train_ic >= 5.0 && scored;
    verdict(
        ok,
        format!(
            "constrained (eps = {:.1e}, seed {}): l2_rel(train) {:.3} (limit 0.20), TTF {:.2} (limit 5); penalty (lambda0 = {:.2e}, seed {}): l2_rel(train) {:.3}, TTF {:.2}",
            hyperparameter_grid(Method::Constrained, c.chosen_k).unwrap_or(f64::NAN),
            c.chosen_s,
            c.report.l2_rel_train_ic,
            c.report.ttf_train_ic,
            hyperparameter_grid(Method::Penalty, p.chosen_k).unwrap_or(f64::NAN),
            p.chosen_s,
            p.report.l2_rel_train_ic,
            p.report.ttf_train_ic
        ),
    )
}

/// Grid index of `λ⁰` used for the schedule comparison: the one the desk
/// penalty study selects by validation loss.
const SCHEDULE_K: usize = 7;

fn c7_schedules(opts: &Opts) -> Verdict {
    let mut cfg = ExperimentConfig::desk(SystemName::Burgers);
    cfg.method = Method::Penalty;
    let lambda0 = hyperparameter_grid(Method::Penalty, SCHEDULE_K).unwrap();
    let data = member_dataset(&cfg, 0).unwrap();
    let spec = cfg.spec();
    let dir = opts.cache.join("c7");
    std::fs::create_dir_all(&dir).unwrap();
    let mut scores = |schedule: Schedule| -> Vec<f64> {
        (0..3)
            .map(|s| {
                cfg.penalty.schedule = schedule;
                let path = dir.join(format!("{}_k{SCHEDULE_K}_{:?}_s{s}.pdef", &cfg.hash().unwrap()[..16], schedule).to_lowercase());
                let rhs = match nnjet::io::load(&path) {
                    Ok(net) => net,
                    Err(_) => {
                        let prob = build_problem(&cfg, &data, 0, s).unwrap();
                        match train_one(&cfg, &prob, lambda0, 0, s) {
                            Ok(res) => {
                                let (_, rhs) = prob.nets(&res.final_params.flat).unwrap();
                                nnjet::io::save(&rhs, &path).unwrap();
                                rhs
                            }
                            Err(Error::TrainingDiverged { .. } | Error::NonFinite { .. } | Error::Numerical(_)) => {
                                return f64::INFINITY
                            }
                            Err(e) => panic!("{e}"),
                        }
                    }
                };
                let sol = solve_learned(&spec, &rhs, spec.rhs_arity, IcKind::Train, cfg.evaluation, data.clean.t_end(), data.clean.n_t())
                    .unwrap();
                if sol.diverged_at.is_some() {
                    f64::INFINITY
                } else {
                    l2_rel_grids(&data.clean, &sol).unwrap()
                }
            })
            .collect()
    };
    let sim = scores(Schedule::Simultaneous);
    let stag = scores(Schedule::Staggered);
    let (ms, mt) = (quantile(&sim, 0.5), quantile(&stag, 0.5));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    verdict(
        ms < mt,
        format!("lambda0 = {lambda0:.2e}: median l2_rel(train) simultaneous {ms:.3} [{}] vs staggered {mt:.3} [{}]", fmt(&sim), fmt(&stag)),
    )
}

fn c8_paper(opts: &Opts) -> Verdict {
    if !opts.paper_scale {
        return Verdict::Skip("paper-scale run; enable with --ignored or PDEFORGE_PAPER_SCALE=1".into());
    }
    let mut cfg = ExperimentConfig::paper(SystemName::Burgers);
    cfg.method = Method::Constrained;
    cfg.noise_level = 0.4;
    cfg.n_r = 1000;
    let out = match run_ensemble(&cfg, &opts.cache.join("c8_paper"), workers(), true) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let best = out.l2_rel_test.min;
    verdict(best <= 0.18, format!("best l2_rel(test) over {} members {best:.3} (limit 0.18)", out.members.len()))
}

// ---------------------------------------------------------------- criterion 9

fn grid_from(values: Vec<Vec<f64>>, dt: f64) -> GridSolution {
    let n = values[0].len();
    GridSolution { mesh: Mesh1D::new(0.0, 1.0, n - 1, BoundaryKind::DirichletZero).unwrap(), dt, values, diverged_at: None }
}

fn c9_properties(_: &Opts) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok && !failures.contains(&what.to_string()) {
            failures.push(what.to_string());
        }
    };
    for _ in 0..200 {
        let (nx, nt) = (rng.gen_range(9..20), rng.gen_range(2..12));
        let truth = grid_from((0..=nt).map(|_| (0..=nx).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(), 0.5);
        let approx = grid_from(
            truth.values.iter().map(|r| r.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect()).collect(),
            0.5,
        );
        let flat_t: Vec<f64> = truth.values.iter().flatten().copied().collect();
        let flat_a: Vec<f64> = approx.values.iter().flatten().copied().collect();
        let l2 = l2_rel_grids(&truth, &approx).unwrap();
        check((l2 - common::rel_l2(&flat_a, &flat_t)).abs() <= 1e-12 * l2.max(1.0), "l2_rel matches direct formula");
        check(l2_rel_grids(&truth, &truth).unwrap() == 0.0, "l2_rel of identical grids is zero");
        let c = rng.gen_range(0.1..10.0);
        let scale = |g: &GridSolution| grid_from(g.values.iter().map(|r| r.iter().map(|v| c * v).collect()).collect(), 0.5);
        let l2c = l2_rel_grids(&scale(&truth), &scale(&approx)).unwrap();
        check((l2c - l2).abs() <= 1e-12 * l2.max(1.0), "l2_rel is scale invariant");

        let mut deltas: Vec<f64> = (0..5).map(|_| rng.gen_range(0.01..2.0)).collect();
        deltas.sort_by(f64::total_cmp);
        let ttf: Vec<f64> = deltas.iter().map(|&d| time_to_failure_grids(&truth, &approx, d).unwrap()).collect();
        check(ttf.windows(2).all(|w| w[0] <= w[1]), "TTF is monotone in delta");
        check(ttf.iter().all(|&t| (0.0..=truth.t_end()).contains(&t)), "TTF lies in [0, T]");
        check(time_to_failure_grids(&truth, &truth, 1e-9).unwrap() == truth.t_end(), "identical grids survive to T");
        // independent TTF: first snapshot whose relative error exceeds delta
        let d = deltas[2];
        let first_bad = truth.values.iter().zip(&approx.values).position(|(t, a)| common::rel_l2(a, t) > d);
        let expect = first_bad.map_or(truth.t_end(), |l| l as f64 * truth.dt);
        check(ttf[2] == expect, "TTF matches direct scan");

        let (s_n, k_n) = (rng.gen_range(1..4), rng.gen_range(1..6));
        let losses: Vec<Vec<f64>> = (0..s_n)
            .map(|_| {
                (0..k_n)
                    .map(|_| match rng.gen_range(0..10) {
                        0 => f64::INFINITY,
                        1 => f64::NAN,
                        _ => (rng.gen_range(0..8) as f64) / 4.0,
                    })
                    .collect()
            })
            .collect();
        let clean = |l: f64| if l.is_nan() { f64::INFINITY } else { l };
        let mut best: Option<(usize, usize, f64)> = None;
        for (s, row) in losses.iter().enumerate() {
            for (k, &l) in row.iter().enumerate() {
                let l = clean(l);
                if best.is_none_or(|(_, _, b)| l < b) {
                    best = Some((s, k, l));
                }
            }
        }
        match (select_model(&losses), best) {
            (Ok((k, s)), Some((bs, bk, bl))) if bl.is_finite() => {
                check(clean(losses[s][k]) == bl, "selection attains the minimum loss");
                check((s, k) == (bs, bk), "ties go to the smallest seed then smallest index");
            }
            (Err(Error::SelectionFailed), Some((_, _, bl))) => check(!bl.is_finite(), "selection fails only without finite losses"),
            _ => check(false, "selection outcome"),
        }

        let mesh_losses: Vec<f64> = (0..3).map(|_| if rng.gen_bool(0.1) { f64::NAN } else { rng.gen_range(0.0..1.0) }).collect();
        let combined = combine_mesh_losses(&mesh_losses);
        let expect = mesh_losses.iter().map(|&l| clean(l)).fold(f64::NEG_INFINITY, f64::max);
        check(combined == expect, "mesh losses combine by maximum");

        let sample: Vec<f64> = (0..rng.gen_range(1..30)).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let s = Summary::of(&sample);
        let mut sorted = sample.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        check(s.min == sorted[0] && s.max == sorted[n - 1], "summary extremes");
        check((s.median - median).abs() <= 1e-12, "summary median");
        check(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max, "summary ordering");
    }
    // a diverged prediction fails no later than its divergence time
    let truth = grid_from(vec![vec![1.0; 10]; 5], 1.0);
    let mut approx = truth.clone();
    approx.diverged_at = Some(2.5);
    check(time_to_failure_grids(&truth, &approx, 0.1).unwrap() == 2.5, "divergence caps TTF");
    verdict(
        failures.is_empty(),
        if failures.is_empty() { "200 random cases of l2_rel, TTF, selection, mesh max and summaries".into() } else { failures.join("; ") },
    )
}
