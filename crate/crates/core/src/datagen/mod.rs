//! Ground-truth data: benchmark systems, spectral reference solutions,
//! additive noise, and time-ordered train/validation sampling.

mod spectral;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use spectral::{solve_periodic, tail_fraction, Coefficients, TAIL_LIMIT};

use crate::error::{Error, Result};
use crate::mol::{BoundaryKind, GridSolution, Mesh1D};
use crate::residuals::{PointRole, PointSet};

/// Closed-form initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `amplitude · sin(wavenumber · x)`
    Sine { amplitude: f64, wavenumber: f64 },
    /// `amplitude · cos(wavenumber · x)`
    Cosine { amplitude: f64, wavenumber: f64 },
    /// `exp(-(x - center)² / width²)`
    Gaussian { center: f64, width: f64 },
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Sine { amplitude, wavenumber } => amplitude * (wavenumber * x).sin(),
            InitialCondition::Cosine { amplitude, wavenumber } => amplitude * (wavenumber * x).cos(),
            InitialCondition::Gaussian { center, width } => (-((x - center) / width).powi(2)).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    Burgers,
    Kdv,
}

impl SystemName {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemName::Burgers => "burgers",
            SystemName::Kdv => "kdv",
        }
    }
}

impl std::str::FromStr for SystemName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "burgers" => Ok(SystemName::Burgers),
            "kdv" => Ok(SystemName::Kdv),
            _ => Err(Error::Config(format!("unknown system '{s}' (expected burgers or kdv)"))),
        }
    }
}

/// Which initial condition of a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcKind {
    Train,
    Test,
}

/// A benchmark system: PDE, domain, initial conditions, and grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: SystemName,
    pub x_lo: f64,
    pub x_hi: f64,
    pub t_train: f64,
    pub t_test: f64,
    pub bc: BoundaryKind,
    /// True dynamics `u_t = a u u_x + b u_xx + c u_xxx`.
    pub rhs: Coefficients,
    pub ic_train: InitialCondition,
    pub ic_test: InitialCondition,
    /// Output grid intervals in x.
    pub n_x: usize,
    pub n_t_train: usize,
    pub n_t_test: usize,
    /// Number of x-derivatives the learned right-hand side receives.
    pub rhs_arity: usize,
    /// Internal spectral resolution as a multiple of `n_x`.
    pub oversample: usize,
}

impl SystemSpec {
    /// Viscous Burgers on `[-8, 8]`, `u_t = -u u_x + 0.1 u_xx`.
    pub fn burgers() -> Self {
        Self {
            name: SystemName::Burgers,
            x_lo: -8.0,
            x_hi: 8.0,
            t_train: 30.0,
            t_test: 10.0,
            bc: BoundaryKind::DirichletZero,
            rhs: Coefficients { advection: -1.0, diffusion: 0.1, dispersion: 0.0 },
            ic_train: InitialCondition::Sine { amplitude: -1.0, wavenumber: PI / 8.0 },
            ic_test: InitialCondition::Gaussian { center: -2.0, width: 1.0 },
            n_x: 256,
            n_t_train: 600,
            n_t_test: 200,
            rhs_arity: 2,
            oversample: 4,
        }
    }

    /// KdV on `[-20, 20]`, `u_t = -u u_x - u_xxx`, periodic.
    pub fn kdv() -> Self {
        Self {
            name: SystemName::Kdv,
            x_lo: -20.0,
            x_hi: 20.0,
            t_train: 40.0,
            t_test: 40.0,
            bc: BoundaryKind::Periodic,
            rhs: Coefficients { advection: -1.0, diffusion: 0.0, dispersion: -1.0 },
            ic_train: InitialCondition::Sine { amplitude: -1.0, wavenumber: PI / 20.0 },
            ic_test: InitialCondition::Cosine { amplitude: 1.0, wavenumber: PI / 20.0 },
            n_x: 256,
            n_t_train: 200,
            n_t_test: 200,
            rhs_arity: 3,
            oversample: 4,
        }
    }

    pub fn by_name(name: SystemName) -> Self {
        match name {
            SystemName::Burgers => Self::burgers(),
            SystemName::Kdv => Self::kdv(),
        }
    }

    pub fn ic(&self, which: IcKind) -> InitialCondition {
        match which {
            IcKind::Train => self.ic_train,
            IcKind::Test => self.ic_test,
        }
    }

    pub fn horizon(&self, which: IcKind) -> (f64, usize) {
        match which {
            IcKind::Train => (self.t_train, self.n_t_train),
            IcKind::Test => (self.t_test, self.n_t_test),
        }
    }

    pub fn mesh(&self, n_x: usize) -> Result<Mesh1D> {
        Mesh1D::new(self.x_lo, self.x_hi, n_x, self.bc)
    }

    /// True right-hand side at given derivative values.
    pub fn true_rhs(&self, u: f64, ux: f64, uxx: f64, uxxx: f64) -> f64 {
        self.rhs.advection * u * ux + self.rhs.diffusion * uxx + self.rhs.dispersion * uxxx
    }

    /// Initial data on a mesh; Dirichlet ends are zeroed.
    pub fn initial_values(&self, which: IcKind, mesh: &Mesh1D) -> Vec<f64> {
        let ic = self.ic(which);
        let mut u: Vec<f64> = mesh.coordinates().iter().map(|&x| ic.eval(x)).collect();
        if mesh.bc == BoundaryKind::DirichletZero {
            let n = u.len();
            u[0] = 0.0;
            u[n - 1] = 0.0;
        }
        u
    }
}

/// Reference solution on the system's output grid (`n_x` intervals,
/// `n_t_output` snapshot intervals over `[0, t_end]`).
///
/// The solve runs on the periodic extension at `oversample · n_x` points and
/// is subsampled to the output nodes. Dirichlet grids get exact zeros at both
/// ends.
pub fn spectral_solve(spec: &SystemSpec, which: IcKind, n_x: usize, t_end: f64, n_t_output: usize) -> Result<GridSolution> {
    if n_x < 128 || !n_x.is_power_of_two() {
        return Err(Error::Config(format!("output n_x must be a power of two ≥ 128, got {n_x}")));
    }
    let n_int = n_x * spec.oversample.max(1);
    let length = spec.x_hi - spec.x_lo;
    let ic = spec.ic(which);
    let u0: Vec<f64> = (0..n_int).map(|j| ic.eval(spec.x_lo + length * j as f64 / n_int as f64)).collect();
    let rows = solve_periodic(spec.rhs, length, &u0, t_end, n_t_output)?;
    let mesh = spec.mesh(n_x)?;
    let stride = spec.oversample.max(1);
    let values = rows
        .iter()
        .map(|row| {
            let mut v: Vec<f64> = (0..mesh.nodes()).map(|k| row[(k * stride) % n_int]).collect();
            if mesh.bc == BoundaryKind::DirichletZero {
                let n = v.len();
                v[0] = 0.0;
                v[n - 1] = 0.0;
            }
            v
        })
        .collect();
    Ok(GridSolution { mesh, dt: t_end / n_t_output as f64, values, diverged_at: None })
}

/// Adds i.i.d. `Normal(0, level · std(clean))` noise to every entry.
pub fn add_noise(clean: &GridSolution, level: f64, seed: u64) -> Result<GridSolution> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::Config(format!("noise level must be ≥ 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(clean.clone());
    }
    let sigma = level * clean.std();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = clean.clone();
    for v in noisy.values.iter_mut().flatten() {
        *v += normal.sample(&mut rng);
    }
    Ok(noisy)
}

/// Training and validation samples drawn from one noisy grid.
#[derive(Debug, Clone)]
pub struct NoisySamples {
    pub train: PointSet,
    pub validation: PointSet,
    pub noise_level: f64,
    pub seed: u64,
}

/// Number of training points out of `n_u` samples.
pub fn train_count(n_u: usize) -> usize {
    (2 * n_u).div_ceil(3)
}

/// Samples `n_u` distinct grid nodes and splits them by time: the
/// `⌈2 n_u / 3⌉` earliest go to training (ties by x, then draw order).
pub fn sample_points(noisy: &GridSolution, n_u: usize, noise_level: f64, seed: u64) -> Result<NoisySamples> {
    let nodes = noisy.mesh.nodes();
    let total = noisy.values.len() * nodes;
    if n_u == 0 || n_u > total {
        return Err(Error::Config(format!("cannot sample {n_u} points from a grid with {total} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, total, n_u).into_vec();
    let mut order: Vec<(usize, usize, usize)> = picks.iter().enumerate().map(|(i, &p)| (p / nodes, p % nodes, i)).collect();
    order.sort_unstable();
    let x = noisy.mesh.coordinates();
    let n_train = train_count(n_u);
    let split = |part: &[(usize, usize, usize)], role| {
        let pts = part.iter().map(|&(l, k, _)| (x[k], l as f64 * noisy.dt)).collect();
        let vals = part.iter().map(|&(l, k, _)| noisy.values[l][k]).collect();
        PointSet::data(pts, vals, role)
    };
    let train = split(&order[..n_train], PointRole::Train)?;
    let validation = split(&order[n_train..], PointRole::Validation)?;
    Ok(NoisySamples { train, validation, noise_level, seed })
}

/// Metadata written next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: SystemName,
    pub seed: u64,
    pub noise_level: f64,
    pub n_u: usize,
    pub t_end: f64,
    pub n_t: usize,
    pub n_x: usize,
}

/// A clean grid plus the noisy samples drawn from it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub clean: GridSolution,
    pub samples: NoisySamples,
}

pub const CLEAN_FILE: &str = "clean.grid";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const META_FILE: &str = "meta.json";

impl Dataset {
    /// Full pipeline: spectral solve on `[0, t_end]`, noise, sampling.
    pub fn generate(spec: &SystemSpec, t_end: f64, n_t: usize, noise_level: f64, n_u: usize, seed: u64) -> Result<Self> {
        let clean = spectral_solve(spec, IcKind::Train, spec.n_x, t_end, n_t)?;
        let noisy = add_noise(&clean, noise_level, seed)?;
        let samples = sample_points(&noisy, n_u, noise_level, seed.wrapping_add(1))?;
        let meta = DatasetMeta { system: spec.name, seed, noise_level, n_u, t_end, n_t, n_x: spec.n_x };
        Ok(Self { meta, clean, samples })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.clean.save(&dir.join(CLEAN_FILE))?;
        let path = dir.join(SAMPLES_FILE);
        let io = |e: std::io::Error| Error::io(&path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io)?);
        writeln!(w, "x,t,u,split").map_err(io)?;
        for (set, tag) in [(&self.samples.train, "train"), (&self.samples.validation, "val")] {
            for (&(x, t), u) in set.points.iter().zip(set.values.as_ref().unwrap()) {
                writeln!(w, "{x:?},{t:?},{u:?},{tag}").map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        let meta_path = dir.join(META_FILE);
        let json = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::format(&meta_path, e.to_string()))?;
        std::fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let clean = GridSolution::load(&dir.join(CLEAN_FILE))?;
        let meta_path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e.to_string()))?;
        let (train, validation) = read_samples(&dir.join(SAMPLES_FILE))?;
        let samples = NoisySamples { train, validation, noise_level: meta.noise_level, seed: meta.seed };
        Ok(Self { meta, clean, samples })
    }
}

/// Reads a `x,t,u,split` CSV into training and validation sets.
pub fn read_samples(path: &Path) -> Result<(PointSet, PointSet)> {
    #[derive(Deserialize)]
    struct Row {
        x: f64,
        t: f64,
        u: f64,
        split: String,
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let (mut tp, mut tv, mut vp, mut vv) = (vec![], vec![], vec![], vec![]);
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let r = row.map_err(|e| Error::format(path, e.to_string()))?;
        if !(r.x.is_finite() && r.t.is_finite() && r.u.is_finite()) {
            return Err(Error::format(path, format!("non-finite entry on data row {}", i + 1)));
        }
        match r.split.as_str() {
            "train" => {
                tp.push((r.x, r.t));
                tv.push(r.u);
            }
            "val" => {
                vp.push((r.x, r.t));
                vv.push(r.u);
            }
            other => return Err(Error::format(path, format!("unknown split '{other}' on data row {}", i + 1))),
        }
    }
    Ok((PointSet::data(tp, tv, PointRole::Train)?, PointSet::data(vp, vv, PointRole::Validation)?))
}
