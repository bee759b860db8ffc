//! Scoring learned right-hand sides with classical solves: multi-mesh
//! validation, grid-and-seed model selection, accuracy metrics, ensembles
//! and mesh-refinement sweeps.

mod ensemble;
mod metrics;
mod stats;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use ensemble::{
    build_problem, member_dataset, train_one, window_scaling,
    run_ensemble, run_member, EnsembleOutput, MemberOutcome, RunRecord, MEMBERS_FILE, RUNS_FILE, SUMMARY_FILE,
};
pub use metrics::{l2_rel_grids, relative_errors_in_time, sample_onto, time_to_failure_grids, MetricReport};
pub use stats::{quantile, Summary};

use crate::datagen::{IcKind, SystemName, SystemSpec};
use crate::error::{Error, Result};
use crate::mol::{self, GridRhs, GridSolution, RhsInput};
use crate::nnjet::Mlp;
use crate::residuals::PointSet;

/// A right-hand-side network evaluated over a whole grid.
pub struct NetRhs<'a> {
    pub net: &'a Mlp,
    /// Number of x-derivatives the network takes after `u`.
    pub arity: usize,
}

impl GridRhs for NetRhs<'_> {
    fn max_order(&self) -> usize {
        self.arity
    }

    fn eval(&mut self, input: &RhsInput) -> Result<Vec<f64>> {
        let n = input.u.len();
        let mut m = DMatrix::zeros(self.arity + 1, n);
        m.row_mut(0).copy_from_slice(input.u);
        for k in 0..self.arity {
            m.row_mut(k + 1).copy_from_slice(&input.derivs[k]);
        }
        self.net.eval_batch(&m)
    }
}

/// Frequency scale of [`true_rhs_network`]; the product term is exact up to
/// a relative `O(c²)` error.
const ORACLE_SCALE: f64 = 1e-3;

/// A one-hidden-layer sine network that reproduces the system's true right-hand
/// side, so reference dynamics travel through the same model format.
///
/// Uses `sin(cu) sin(cv) / c² → u v` written as a difference of two phase-
/// shifted sines, and `sin(cw) / c → w` for the linear terms.
pub fn true_rhs_network(spec: &SystemSpec) -> Result<Mlp> {
    let c = ORACLE_SCALE;
    let n_in = spec.rhs_arity + 1;
    let mut w0 = DMatrix::zeros(4, n_in);
    let mut b0 = nalgebra::DVector::zeros(4);
    w0[(0, 0)] = c;
    w0[(0, 1)] = -c;
    w0[(1, 0)] = c;
    w0[(1, 1)] = c;
    b0[0] = std::f64::consts::FRAC_PI_2;
    b0[1] = std::f64::consts::FRAC_PI_2;
    w0[(2, 2)] = c;
    if spec.rhs_arity >= 3 {
        w0[(3, 3)] = c;
    }
    let a = spec.rhs.advection / (2.0 * c * c);
    let w1 = DMatrix::from_row_slice(1, 4, &[a, -a, spec.rhs.diffusion / c, spec.rhs.dispersion / c]);
    Mlp::from_parts(vec![n_in, 4, 1], vec![w0, w1], vec![b0, nalgebra::DVector::zeros(1)], crate::nnjet::Activation::Sine)
}

/// Mesh resolution and time-step ratio of one classical solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSettings {
    pub n_x: usize,
    pub dt_ratio: f64,
}

impl SolveSettings {
    /// Evaluation mesh per system: 128 intervals at `dt = 0.2 dx` for
    /// Burgers, 64 at `0.01 dx` for KdV.
    pub fn evaluation(system: SystemName) -> Self {
        match system {
            SystemName::Burgers => Self { n_x: 128, dt_ratio: 0.2 },
            SystemName::Kdv => Self { n_x: 64, dt_ratio: 0.01 },
        }
    }
}

/// The three validation meshes and their shared time-step ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    pub mesh_sizes: [usize; 3],
    pub dt_ratio: f64,
}

impl ValidationSpec {
    pub fn for_system(system: SystemName) -> Self {
        match system {
            SystemName::Burgers => Self { mesh_sizes: [112, 128, 148], dt_ratio: 0.2 },
            SystemName::Kdv => Self { mesh_sizes: [56, 64, 72], dt_ratio: 0.01 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.mesh_sizes;
        if a == b || b == c || a == c || self.mesh_sizes.iter().any(|&n| n < 8) || !(self.dt_ratio > 0.0) {
            return Err(Error::Config(format!("validation needs three distinct meshes ≥ 8 and dt_ratio > 0: {self:?}")));
        }
        Ok(())
    }
}

/// Solves `u_t = N(u, u_x, ...)` from one of the system's initial conditions
/// and stores `n_out + 1` snapshots on `[0, t_end]`.
pub fn solve_learned(
    spec: &SystemSpec,
    rhs: &Mlp,
    arity: usize,
    which: IcKind,
    settings: SolveSettings,
    t_end: f64,
    n_out: usize,
) -> Result<GridSolution> {
    let mesh = spec.mesh(settings.n_x)?;
    let u0 = spec.initial_values(which, &mesh);
    let mut f = NetRhs { net: rhs, arity };
    mol::mol_solve(&mut f, &mesh, &u0, t_end, settings.dt_ratio, n_out)
}

/// Largest of the per-mesh losses; `NaN` counts as `+∞`.
pub fn combine_mesh_losses(losses: &[f64]) -> f64 {
    losses.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(if l.is_nan() { f64::INFINITY } else { l }))
}

/// Per-mesh validation losses and their maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOutcome {
    pub loss: f64,
    pub per_mesh: Vec<f64>,
    pub diverged: bool,
}

/// MSE of the learned PDE's classical solution against the validation
/// samples, maximized over the three meshes. A diverged solve scores `+∞`.
pub fn validation_loss(
    spec: &SystemSpec,
    rhs: &Mlp,
    arity: usize,
    vspec: &ValidationSpec,
    val: &PointSet,
    t_end: f64,
    n_out: usize,
) -> Result<ValidationOutcome> {
    vspec.validate()?;
    let values = val.values.as_ref().ok_or_else(|| Error::Config("validation set has no values".into()))?;
    if val.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let mut per_mesh = Vec::with_capacity(3);
    let mut diverged = false;
    for &n_x in &vspec.mesh_sizes {
        let settings = SolveSettings { n_x, dt_ratio: vspec.dt_ratio };
        let sol = solve_learned(spec, rhs, arity, IcKind::Train, settings, t_end, n_out)?;
        if sol.diverged_at.is_some() {
            diverged = true;
            per_mesh.push(f64::INFINITY);
            continue;
        }
        let pred = sol.interpolate(&val.points)?;
        let mse = pred.iter().zip(values).map(|(p, u)| (p - u) * (p - u)).sum::<f64>() / val.len() as f64;
        per_mesh.push(if mse.is_finite() { mse } else { f64::INFINITY });
    }
    Ok(ValidationOutcome { loss: combine_mesh_losses(&per_mesh), per_mesh, diverged })
}

/// Grid-and-seed selection over `losses[s][k]` (0-based): the best `k` per
/// seed, then the best seed among those. Ties go to the smaller index.
pub fn select_model(losses: &[Vec<f64>]) -> Result<(usize, usize)> {
    let clean = |l: f64| if l.is_nan() { f64::INFINITY } else { l };
    let mut best: Option<(usize, usize, f64)> = None;
    for (s, row) in losses.iter().enumerate() {
        let mut k_best: Option<(usize, f64)> = None;
        for (k, &l) in row.iter().enumerate() {
            let l = clean(l);
            if k_best.is_none_or(|(_, b)| l < b) {
                k_best = Some((k, l));
            }
        }
        if let Some((k, l)) = k_best {
            if best.is_none_or(|(_, _, b)| l < b) {
                best = Some((k, s, l));
            }
        }
    }
    match best {
        Some((k, s, l)) if l.is_finite() => Ok((k, s)),
        _ => Err(Error::SelectionFailed),
    }
}

/// Metrics of one network on both initial conditions against reference grids.
pub fn evaluate_model(
    spec: &SystemSpec,
    rhs: &Mlp,
    arity: usize,
    settings: SolveSettings,
    truth_train: &GridSolution,
    truth_test: &GridSolution,
    delta: f64,
) -> Result<MetricReport> {
    let score = |which, truth: &GridSolution| -> Result<(f64, f64, bool)> {
        let sol = solve_learned(spec, rhs, arity, which, settings, truth.t_end(), truth.n_t())?;
        Ok((l2_rel_grids(truth, &sol)?, time_to_failure_grids(truth, &sol, delta)?, sol.diverged_at.is_some()))
    };
    let (l_tr, t_tr, d_tr) = score(IcKind::Train, truth_train)?;
    let (l_te, t_te, d_te) = score(IcKind::Test, truth_test)?;
    Ok(MetricReport {
        l2_rel_train_ic: l_tr,
        l2_rel_test_ic: l_te,
        ttf_train_ic: t_tr,
        ttf_test_ic: t_te,
        delta,
        diverged_train: d_tr,
        diverged_test: d_te,
    })
}

/// One row of a refinement sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    pub n_x: usize,
    pub l2_rel: f64,
    pub diverged: bool,
}

/// Re-solves the same network on each mesh and scores it against `truth`.
pub fn refinement_sweep(
    spec: &SystemSpec,
    rhs: &Mlp,
    arity: usize,
    which: IcKind,
    truth: &GridSolution,
    meshes: &[usize],
    dt_ratio: f64,
) -> Result<Vec<RefinementRow>> {
    meshes
        .iter()
        .map(|&n_x| {
            let sol = solve_learned(spec, rhs, arity, which, SolveSettings { n_x, dt_ratio }, truth.t_end(), truth.n_t())?;
            Ok(RefinementRow { n_x, l2_rel: l2_rel_grids(truth, &sol)?, diverged: sol.diverged_at.is_some() })
        })
        .collect()
}

/// Writes a refinement table: one header row of mesh sizes, one row of scores
/// per initial condition label.
pub fn write_refinement(path: &std::path::Path, tables: &[(&str, Vec<RefinementRow>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let meshes: Vec<usize> = tables.first().map(|(_, r)| r.iter().map(|x| x.n_x).collect()).unwrap_or_default();
    let mut header = vec!["ic".to_string()];
    header.extend(meshes.iter().map(|n| format!("n_x_{n}")));
    w.write_record(&header).map_err(|e| Error::format(path, e.to_string()))?;
    for (label, rows) in tables {
        let mut rec = vec![label.to_string()];
        rec.extend(rows.iter().map(|r| format!("{:e}", r.l2_rel)));
        w.write_record(&rec).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
