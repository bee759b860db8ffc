//! One full study per ensemble member: data, grid training, selection, scoring.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_model, select_model, validation_loss, MetricReport, Summary};
use crate::config::ExperimentConfig;
use crate::datagen::{spectral_solve, Dataset, IcKind};
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::nnjet::{self, InputScaling, Mlp};
use crate::residuals::{sample_collocation, ResidualProblem};
use crate::trainers::{train_constrained, train_penalty, Method, TrainResult};

pub const MEMBERS_FILE: &str = "members.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_FILE: &str = "runs.csv";
const OUTCOME_FILE: &str = "member.json";
const SELECTED_RHS: &str = "selected_rhs.pdef";

/// One training of the selection grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub member: usize,
    /// 1-based seed index.
    pub s: usize,
    /// 1-based hyperparameter index.
    pub k: usize,
    pub hyper: f64,
    #[serde(with = "nonfinite")]
    pub val_loss: f64,
    #[serde(with = "nonfinite")]
    pub final_data_loss: f64,
    pub status: String,
    pub wall_time: f64,
}

/// JSON has no infinities; non-finite values travel as strings.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberOutcome {
    pub member: usize,
    pub method: Method,
    pub noise_level: f64,
    pub n_r: usize,
    pub chosen_k: usize,
    pub chosen_s: usize,
    pub report: MetricReport,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub members: Vec<MemberOutcome>,
    pub l2_rel_train: Summary,
    pub l2_rel_test: Summary,
    pub ttf_train: Summary,
    pub ttf_test: Summary,
}

/// Input scaling mapping the training window to `[-1, 1]²`.
pub fn window_scaling(cfg: &ExperimentConfig) -> InputScaling {
    let spec = cfg.spec();
    InputScaling::unit_box(spec.x_lo, spec.x_hi, 0.0, cfg.t_window)
}

/// Noisy samples of member `member` over the configured window.
pub fn member_dataset(cfg: &ExperimentConfig, member: usize) -> Result<Dataset> {
    Dataset::generate(&cfg.spec(), cfg.t_window, cfg.n_t, cfg.noise_level, cfg.n_u, cfg.seeds.data_for(member))
}

/// Training problem for seed index `s` (0-based): fresh networks, the
/// dataset's training split and `N_r` uniform collocation points up to the
/// last training time.
pub fn build_problem(cfg: &ExperimentConfig, data: &Dataset, member: usize, s: usize) -> Result<ResidualProblem> {
    let spec = cfg.spec();
    let train = &data.samples.train;
    let t_max = train.points.iter().map(|p| p.1).fold(0.0, f64::max);
    if !(t_max > 0.0) {
        return Err(Error::Input("training samples span no time".into()));
    }
    let colloc = sample_collocation(cfg.n_r, (spec.x_lo, spec.x_hi), (0.0, t_max), cfg.seeds.colloc_for(member));
    let state = cfg.state_net.build(2, cfg.seeds.state_for(member, s))?;
    let rhs = cfg.rhs_net.build(spec.rhs_arity + 1, cfg.seeds.rhs_for(member, s))?;
    ResidualProblem::new(state, rhs, window_scaling(cfg), train.clone(), colloc, spec.rhs_arity)
}

/// Trains with the configured method at hyperparameter value `hyper`.
pub fn train_one(cfg: &ExperimentConfig, prob: &ResidualProblem, hyper: f64, member: usize, s: usize) -> Result<TrainResult> {
    match cfg.method {
        Method::Penalty => {
            let mut p = cfg.penalty.clone();
            p.lambda0 = hyper;
            p.seed = cfg.seeds.lambda_for(member, s);
            train_penalty(prob, &p)
        }
        Method::Constrained => {
            let mut c = cfg.constrained.clone();
            c.epsilon = hyper;
            c.tropt.ktol = if hyper.is_finite() { hyper / 10.0 } else { c.tropt.ktol };
            train_constrained(prob, &c)
        }
    }
}

/// Failures that disqualify a single training instead of aborting the study.
fn is_run_failure(e: &Error) -> bool {
    matches!(e, Error::TrainingDiverged { .. } | Error::Numerical(_) | Error::NonFinite { .. })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn member_dir_name(member: usize) -> String {
    format!("member_{member:02}")
}

/// Runs the whole selection pipeline for one member. With `dir`, the
/// dataset, every trained pair of networks and the outcome are written there.
pub fn run_member(cfg: &ExperimentConfig, member: usize, dir: Option<&Path>) -> Result<MemberOutcome> {
    cfg.validate()?;
    let spec = cfg.spec();
    let data = member_dataset(cfg, member)?;
    if let Some(d) = dir {
        data.save(&d.join("data"))?;
    }
    let hypers = cfg.hyper_values()?;
    let mut losses = vec![vec![f64::INFINITY; hypers.len()]; cfg.grid.seeds];
    let mut rhs_nets: Vec<Vec<Option<Mlp>>> = vec![vec![None; hypers.len()]; cfg.grid.seeds];
    let mut runs = Vec::new();

    for s in 0..cfg.grid.seeds {
        for (ki, (&k, &hyper)) in cfg.grid.hyper.iter().zip(&hypers).enumerate() {
            let prob = build_problem(cfg, &data, member, s)?;
            let mut record = RunRecord {
                member,
                s: s + 1,
                k,
                hyper,
                val_loss: f64::INFINITY,
                final_data_loss: f64::NAN,
                status: String::new(),
                wall_time: 0.0,
            };
            match train_one(cfg, &prob, hyper, member, s) {
                Ok(res) => {
                    let (state, rhs) = prob.nets(&res.final_params.flat)?;
                    let val = validation_loss(
                        &spec,
                        &rhs,
                        spec.rhs_arity,
                        &cfg.validation,
                        &data.samples.validation,
                        cfg.t_window,
                        cfg.n_t,
                    )?;
                    record.val_loss = val.loss;
                    record.final_data_loss = res.final_data_loss();
                    record.status = res.status.as_str().to_string();
                    record.wall_time = res.wall_time;
                    if let Some(d) = dir {
                        let rd = d.join("runs").join(format!("s{}_k{:02}", s + 1, k));
                        std::fs::create_dir_all(&rd).map_err(|e| Error::io(&rd, e))?;
                        nnjet::io::save(&state, &rd.join("state.pdef"))?;
                        nnjet::io::save(&rhs, &rd.join("rhs.pdef"))?;
                        res.write_history(&rd.join("history.csv"))?;
                    }
                    log::info!(
                        "member {member} s={} k={k} ({hyper:.3e}): val {:.4e}, data {:.4e}, {} in {:.1}s",
                        s + 1,
                        val.loss,
                        record.final_data_loss,
                        record.status,
                        res.wall_time
                    );
                    losses[s][ki] = val.loss;
                    rhs_nets[s][ki] = Some(rhs);
                }
                Err(e) if is_run_failure(&e) => {
                    log::warn!("member {member} s={} k={k}: training failed: {e}", s + 1);
                    record.status = format!("failed: {e}");
                }
                Err(e) => return Err(e),
            }
            runs.push(record);
        }
    }

    let (ki, s) = select_model(&losses)?;
    let rhs = rhs_nets[s][ki].take().ok_or_else(|| Error::Internal("selected run has no network".into()))?;
    let truth_test = {
        let (t, n_t) = spec.horizon(IcKind::Test);
        spectral_solve(&spec, IcKind::Test, spec.n_x, t, n_t)?
    };
    let report = evaluate_model(&spec, &rhs, spec.rhs_arity, cfg.evaluation, &data.clean, &truth_test, cfg.delta)?;
    let outcome = MemberOutcome {
        member,
        method: cfg.method,
        noise_level: cfg.noise_level,
        n_r: cfg.n_r,
        chosen_k: cfg.grid.hyper[ki],
        chosen_s: s + 1,
        report,
        runs,
    };
    if let Some(d) = dir {
        nnjet::io::save(&rhs, &d.join(SELECTED_RHS))?;
        write_json(&d.join(OUTCOME_FILE), &outcome)?;
    }
    Ok(outcome)
}

/// Files of a finished member, relative to the member directory.
fn member_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(d).map_err(|e| Error::io(d, e))? {
            let p = entry.map_err(|e| Error::io(d, e))?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                out.push(p.strip_prefix(root).map_err(|e| Error::Internal(e.to_string()))?.to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn load_outcome(path: &Path) -> Result<MemberOutcome> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

fn write_members(path: &Path, members: &[MemberOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "member_id",
        "method",
        "noise_level",
        "N_r",
        "chosen_k",
        "chosen_s",
        "l2_rel_train",
        "l2_rel_test",
        "ttf_train",
        "ttf_test",
        "diverged_train",
        "diverged_test",
    ])
    .map_err(csv_err(path))?;
    for m in members {
        let r = &m.report;
        w.write_record([
            m.member.to_string(),
            m.method.as_str().to_string(),
            m.noise_level.to_string(),
            m.n_r.to_string(),
            m.chosen_k.to_string(),
            m.chosen_s.to_string(),
            format!("{:e}", r.l2_rel_train_ic),
            format!("{:e}", r.l2_rel_test_ic),
            r.ttf_train_ic.to_string(),
            r.ttf_test_ic.to_string(),
            r.diverged_train.to_string(),
            r.diverged_test.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_runs(path: &Path, members: &[MemberOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in members.iter().flat_map(|m| &m.runs) {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary(path: &Path, out: &EnsembleOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["statistic", "l2_rel_train", "l2_rel_test", "ttf_train", "ttf_test"]).map_err(csv_err(path))?;
    let cols = [out.l2_rel_train.as_array(), out.l2_rel_test.as_array(), out.ttf_train.as_array(), out.ttf_test.as_array()];
    for (i, label) in Summary::LABELS.iter().enumerate() {
        let mut rec = vec![label.to_string()];
        rec.extend(cols.iter().map(|c| format!("{:e}", c[i])));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every member (in parallel on `workers` threads), then writes the
/// member table, the five-number summaries, the per-run table and a manifest.
/// With `resume`, members whose files still match the manifest of an
/// identical configuration are read back instead of recomputed.
pub fn run_ensemble(cfg: &ExperimentConfig, out_dir: &Path, workers: usize, resume: bool) -> Result<EnsembleOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let hash = cfg.hash()?;
    let previous = if resume { Manifest::load(out_dir)?.filter(|m| m.config_hash == hash) } else { None };
    if resume && previous.is_none() {
        log::info!("no matching manifest in {}; starting fresh", out_dir.display());
    }
    cfg.save(&out_dir.join("config.toml"))?;
    let manifest = Mutex::new(Manifest::new(hash));
    manifest.lock().map_err(|_| Error::Internal("manifest lock poisoned".into()))?.record(out_dir, "config.toml")?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))?;
    let members: Vec<MemberOutcome> = pool.install(|| {
        (0..cfg.ensemble_size)
            .into_par_iter()
            .map(|m| -> Result<MemberOutcome> {
                let name = member_dir_name(m);
                let dir = out_dir.join(&name);
                let prefix = format!("{name}/");
                let reusable = previous.as_ref().is_some_and(|p| p.verify_prefix(out_dir, &prefix));
                let outcome = if reusable {
                    log::info!("member {m}: reusing {}", dir.display());
                    load_outcome(&dir.join(OUTCOME_FILE))?
                } else {
                    if dir.exists() {
                        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    }
                    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    run_member(cfg, m, Some(&dir))?
                };
                let files = member_files(&dir)?;
                let mut man = manifest.lock().map_err(|_| Error::Internal("manifest lock poisoned".into()))?;
                for f in files {
                    man.record(out_dir, &format!("{prefix}{}", f.to_string_lossy().replace('\\', "/")))?;
                }
                man.save(out_dir)?;
                Ok(outcome)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let col = |f: fn(&MetricReport) -> f64| Summary::of(&members.iter().map(|m| f(&m.report)).collect::<Vec<_>>());
    let out = EnsembleOutput {
        l2_rel_train: col(|r| r.l2_rel_train_ic),
        l2_rel_test: col(|r| r.l2_rel_test_ic),
        ttf_train: col(|r| r.ttf_train_ic),
        ttf_test: col(|r| r.ttf_test_ic),
        members,
    };
    write_members(&out_dir.join(MEMBERS_FILE), &out.members)?;
    write_runs(&out_dir.join(RUNS_FILE), &out.members)?;
    write_summary(&out_dir.join(SUMMARY_FILE), &out)?;
    let mut man = manifest.into_inner().map_err(|_| Error::Internal("manifest lock poisoned".into()))?;
    for f in [MEMBERS_FILE, RUNS_FILE, SUMMARY_FILE] {
        man.record(out_dir, f)?;
    }
    man.save(out_dir)?;
    Ok(out)
}
