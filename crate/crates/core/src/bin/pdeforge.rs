use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pdeforge::config::ExperimentConfig;
use pdeforge::datagen::{spectral_solve, Dataset, IcKind, SystemName};
use pdeforge::evalharness::{
    build_problem, evaluate_model, refinement_sweep, run_ensemble, run_member, solve_learned, train_one,
    true_rhs_network, validation_loss, write_refinement, SolveSettings,
};
use pdeforge::nnjet::{self, Mlp};
use pdeforge::trainers::{hyperparameter_grid, Method, TrainStatus};
use pdeforge::{Error, Result};

const CLEAN_TEST_FILE: &str = "clean_test.grid";

#[derive(Parser)]
#[command(name = "pdeforge", version, about = "Discover PDE right-hand sides from noisy samples")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML study configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    system: Option<SystemArg>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, global = true)]
    noise_level: Option<f64>,
    /// Number of collocation points.
    #[arg(long, global = true)]
    nr: Option<usize>,
    #[arg(long, global = true)]
    seed_data: Option<u64>,
    #[arg(long, global = true, env = "PDEFORGE_WORKERS")]
    workers: Option<usize>,
    /// Reuse finished members whose files match the manifest.
    #[arg(long, global = true)]
    resume: bool,
    /// Full-size defaults instead of the workstation-sized ones.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Burgers,
    Kdv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Penalty,
    Constrained,
}

#[derive(Clone, Copy, ValueEnum)]
enum IcArg {
    Train,
    Test,
}

impl From<IcArg> for IcKind {
    fn from(a: IcArg) -> Self {
        match a {
            IcArg::Train => IcKind::Train,
            IcArg::Test => IcKind::Test,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Right-hand-side network file; `true` uses the exact dynamics.
    #[arg(long)]
    rhs: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reference grids and noisy samples.
    Generate,
    /// Train one (seed, hyperparameter) pair on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// 1-based index into the hyperparameter grid.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// 1-based network seed index.
        #[arg(long, default_value_t = 1)]
        s: usize,
    },
    /// Classical solve of a learned right-hand side.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "train")]
        ic: IcArg,
        #[arg(long)]
        n_x: Option<usize>,
        #[arg(long)]
        dt_ratio: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        n_t: Option<usize>,
    },
    /// Multi-mesh validation loss of a model on a dataset.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
    },
    /// Accuracy and time-to-failure on both initial conditions.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Grid training, selection and scoring for one ensemble member.
    Experiment {
        #[arg(long, default_value_t = 0)]
        member: usize,
    },
    /// Every ensemble member, summary tables and a manifest.
    Ensemble,
    /// Accuracy of one model across mesh resolutions.
    Refine {
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn resolve_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let system = match c.system.unwrap_or(SystemArg::Burgers) {
                SystemArg::Burgers => SystemName::Burgers,
                SystemArg::Kdv => SystemName::Kdv,
            };
            if c.paper_scale {
                ExperimentConfig::paper(system)
            } else {
                ExperimentConfig::desk(system)
            }
        }
    };
    if let Some(m) = c.method {
        cfg.method = match m {
            MethodArg::Penalty => Method::Penalty,
            MethodArg::Constrained => Method::Constrained,
        };
    }
    if let Some(v) = c.noise_level {
        cfg.noise_level = v;
    }
    if let Some(v) = c.nr {
        cfg.n_r = v;
    }
    if let Some(v) = c.seed_data {
        cfg.seeds.data = v;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e })
}

fn load_model(arg: &ModelArgs, cfg: &ExperimentConfig) -> Result<Mlp> {
    if arg.rhs == "true" {
        return true_rhs_network(&cfg.spec());
    }
    let net = nnjet::io::load(Path::new(&arg.rhs))?;
    if net.input_dim() != cfg.spec().rhs_arity + 1 {
        return Err(Error::Config(format!(
            "{} takes {} inputs, {} needs {}",
            arg.rhs,
            net.input_dim(),
            cfg.system.as_str(),
            cfg.spec().rhs_arity + 1
        )));
    }
    Ok(net)
}

/// Loads a dataset and checks it was generated for this configuration.
fn load_dataset(dir: &Path, cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = Dataset::load(dir)?;
    let m = &data.meta;
    let mismatch = |what: &str, have: String, want: String| {
        Err(Error::Config(format!("dataset {} has {what} {have}, config wants {want}", dir.display())))
    };
    if m.system != cfg.system {
        return mismatch("system", m.system.as_str().into(), cfg.system.as_str().into());
    }
    if m.n_u != cfg.n_u {
        return mismatch("n_u", m.n_u.to_string(), cfg.n_u.to_string());
    }
    if (m.t_end - cfg.t_window).abs() > 1e-12 || m.n_t != cfg.n_t {
        return mismatch("window", format!("{}/{}", m.t_end, m.n_t), format!("{}/{}", cfg.t_window, cfg.n_t));
    }
    if m.noise_level != cfg.noise_level {
        return mismatch("noise level", m.noise_level.to_string(), cfg.noise_level.to_string());
    }
    Ok(data)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Reference solution from the test initial condition.
fn test_truth(cfg: &ExperimentConfig) -> Result<pdeforge::mol::GridSolution> {
    let spec = cfg.spec();
    let (t, n_t) = spec.horizon(IcKind::Test);
    spectral_solve(&spec, IcKind::Test, spec.n_x, t, n_t)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = resolve_config(&cli.common)?;
    let spec = cfg.spec();
    let out = cfg.out_dir.clone();
    match cli.cmd {
        Cmd::Generate => {
            let data = Dataset::generate(&spec, cfg.t_window, cfg.n_t, cfg.noise_level, cfg.n_u, cfg.seeds.data)?;
            data.save(&out)?;
            test_truth(&cfg)?.save(&out.join(CLEAN_TEST_FILE))?;
            cfg.save(&out.join("config.toml"))?;
            println!(
                "{} samples ({} train, {} validation) in {}",
                cfg.n_u,
                data.samples.train.len(),
                data.samples.validation.len(),
                out.display()
            );
        }
        Cmd::Train { data, k, s } => {
            if !(1..=3).contains(&s) {
                return Err(Error::Config(format!("--s must be 1, 2 or 3, got {s}")));
            }
            let data = load_dataset(&data, &cfg)?;
            let hyper = hyperparameter_grid(cfg.method, k)?;
            let prob = build_problem(&cfg, &data, 0, s - 1)?;
            let res = train_one(&cfg, &prob, hyper, 0, s - 1)?;
            create_dir(&out)?;
            let (state, rhs) = prob.nets(&res.final_params.flat)?;
            nnjet::io::save(&state, &out.join("state.pdef"))?;
            nnjet::io::save(&rhs, &out.join("rhs.pdef"))?;
            res.write_history(&out.join("history.csv"))?;
            println!(
                "{} with {:.3e}: {} in {:.1}s, final data loss {:.4e}",
                cfg.method.as_str(),
                hyper,
                res.status.as_str(),
                res.wall_time,
                res.final_data_loss()
            );
            if let Some(m) = &res.message {
                println!("{m}");
            }
            if res.status == TrainStatus::NotConverged {
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::Solve { model, ic, n_x, dt_ratio, t_end, n_t } => {
            let net = load_model(&model, &cfg)?;
            let which = IcKind::from(ic);
            let (t_default, n_default) = spec.horizon(which);
            let settings = SolveSettings {
                n_x: n_x.unwrap_or(cfg.evaluation.n_x),
                dt_ratio: dt_ratio.unwrap_or(cfg.evaluation.dt_ratio),
            };
            let sol = solve_learned(&spec, &net, spec.rhs_arity, which, settings, t_end.unwrap_or(t_default), n_t.unwrap_or(n_default))?;
            create_dir(&out)?;
            sol.save(&out.join("solution.grid"))?;
            sol.write_csv(&out.join("solution.csv"))?;
            if let Some(t) = sol.diverged_at {
                eprintln!("solution diverged at t = {t}");
                return Ok(ExitCode::from(3));
            }
            println!("solution on {} nodes x {} snapshots in {}", sol.mesh.nodes(), sol.n_t() + 1, out.display());
        }
        Cmd::Validate { model, data } => {
            let net = load_model(&model, &cfg)?;
            let data = load_dataset(&data, &cfg)?;
            let v = validation_loss(&spec, &net, spec.rhs_arity, &cfg.validation, &data.samples.validation, cfg.t_window, cfg.n_t)?;
            println!("validation loss {:.6e} (per mesh {:?})", v.loss, v.per_mesh);
            if v.diverged {
                return Ok(ExitCode::from(3));
            }
        }
        Cmd::Evaluate { model } => {
            let net = load_model(&model, &cfg)?;
            let truth_train = spectral_solve(&spec, IcKind::Train, spec.n_x, cfg.t_window, cfg.n_t)?;
            let report = evaluate_model(&spec, &net, spec.rhs_arity, cfg.evaluation, &truth_train, &test_truth(&cfg)?, cfg.delta)?;
            create_dir(&out)?;
            write_json(&out.join("metrics.json"), &report)?;
            println!(
                "l2_rel train {:.4e} test {:.4e}; ttf train {} test {}",
                report.l2_rel_train_ic, report.l2_rel_test_ic, report.ttf_train_ic, report.ttf_test_ic
            );
            if report.diverged_train || report.diverged_test {
                return Ok(ExitCode::from(3));
            }
        }
        Cmd::Experiment { member } => {
            create_dir(&out)?;
            cfg.save(&out.join("config.toml"))?;
            let o = run_member(&cfg, member, Some(&out))?;
            let r = &o.report;
            println!(
                "chose k={} s={}: l2_rel train {:.4e} test {:.4e}; ttf train {} test {}",
                o.chosen_k, o.chosen_s, r.l2_rel_train_ic, r.l2_rel_test_ic, r.ttf_train_ic, r.ttf_test_ic
            );
        }
        Cmd::Ensemble => {
            let workers = cli
                .common
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let res = run_ensemble(&cfg, &out, workers, cli.common.resume)?;
            println!(
                "{} members; median l2_rel train {:.4e} test {:.4e}; tables in {}",
                res.members.len(),
                res.l2_rel_train.median,
                res.l2_rel_test.median,
                out.display()
            );
        }
        Cmd::Refine { model } => {
            let net = load_model(&model, &cfg)?;
            let truth_train = spectral_solve(&spec, IcKind::Train, spec.n_x, cfg.t_window, cfg.n_t)?;
            let truth_test = test_truth(&cfg)?;
            let dt = cfg.evaluation.dt_ratio;
            let rows_train = refinement_sweep(&spec, &net, spec.rhs_arity, IcKind::Train, &truth_train, &cfg.refinement_meshes, dt)?;
            let rows_test = refinement_sweep(&spec, &net, spec.rhs_arity, IcKind::Test, &truth_test, &cfg.refinement_meshes, dt)?;
            create_dir(&out)?;
            let path = out.join("refinement.csv");
            write_refinement(&path, &[("train", rows_train), ("test", rows_test)])?;
            println!("refinement table in {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::TrainingDiverged { .. } | Error::SelectionFailed => 3,
        Error::Numerical(_) | Error::NonFinite { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
