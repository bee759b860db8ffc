//! Declarative description of one study, read from and written to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{SystemName, SystemSpec};
use crate::error::{Error, Result};
use crate::evalharness::{SolveSettings, ValidationSpec};
use crate::nnjet::{layer_sizes, Mlp, SirenInit};
use crate::trainers::{ConstrainedConfig, Method, PenaltyConfig, GRID_SIZE};

/// Hidden widths and first-layer frequency of a sine network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub omega0: f64,
}

impl NetConfig {
    pub fn build(&self, inputs: usize, seed: u64) -> Result<Mlp> {
        Mlp::init(&layer_sizes(inputs, &self.hidden), seed, SirenInit { omega0: self.omega0, omega: 1.0 })
    }
}

/// Every random stream of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Noise and sampling.
    pub data: u64,
    pub colloc: u64,
    /// Network initialization, one per selection seed.
    pub net: [u64; 3],
    /// Initial residual weights of the penalty method.
    pub lambda: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { data: 1, colloc: 2, net: [11, 12, 13], lambda: 3 }
    }
}

impl Seeds {
    pub fn data_for(&self, member: usize) -> u64 {
        self.data.wrapping_add(1000 * member as u64)
    }
    pub fn colloc_for(&self, member: usize) -> u64 {
        self.colloc.wrapping_add(1000 * member as u64)
    }
    pub fn state_for(&self, member: usize, s: usize) -> u64 {
        self.net[s].wrapping_add(1000 * member as u64)
    }
    pub fn rhs_for(&self, member: usize, s: usize) -> u64 {
        self.net[s].wrapping_add(1000 * member as u64 + 500)
    }
    pub fn lambda_for(&self, member: usize, s: usize) -> u64 {
        self.lambda.wrapping_add(1000 * member as u64 + 10 * s as u64)
    }
}

/// Which part of the seed-by-hyperparameter grid to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Number of initialization seeds (1 to 3).
    pub seeds: usize,
    /// 1-based indices into the method's hyperparameter grid.
    pub hyper: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemName,
    pub noise_level: f64,
    pub n_u: usize,
    pub n_r: usize,
    pub method: Method,
    /// End of the time window the data are drawn from.
    pub t_window: f64,
    /// Snapshot intervals of the data grid over the window.
    pub n_t: usize,
    pub state_net: NetConfig,
    pub rhs_net: NetConfig,
    pub penalty: PenaltyConfig,
    pub constrained: ConstrainedConfig,
    pub validation: ValidationSpec,
    pub evaluation: SolveSettings,
    /// Error tolerance of the time-to-failure metric.
    pub delta: f64,
    pub seeds: Seeds,
    pub grid: GridConfig,
    pub ensemble_size: usize,
    pub refinement_meshes: Vec<usize>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reduced setup that runs on a workstation: shorter window, smaller
    /// state network, fewer samples, a 2 x 4 selection grid. The state
    /// network starts at a low frequency (omega0 2) so that 2000 noisy
    /// samples do not get interpolated.
    pub fn desk(system: SystemName) -> Self {
        let spec = SystemSpec::by_name(system);
        let (t_window, n_t) = match system {
            SystemName::Burgers => (10.0, 200),
            SystemName::Kdv => (spec.t_train, spec.n_t_train),
        };
        let refinement_meshes = match system {
            SystemName::Burgers => vec![64, 96, 128, 192, 256],
            SystemName::Kdv => vec![48, 56, 64, 72, 96],
        };
        Self {
            system,
            noise_level: 0.2,
            n_u: 2000,
            n_r: 200,
            method: Method::Constrained,
            t_window,
            n_t,
            state_net: NetConfig { hidden: vec![32; 3], omega0: 2.0 },
            rhs_net: NetConfig { hidden: vec![16; 2], omega0: 1.0 },
            penalty: PenaltyConfig::default(),
            constrained: ConstrainedConfig::default(),
            validation: ValidationSpec::for_system(system),
            evaluation: SolveSettings::evaluation(system),
            delta: 0.2,
            seeds: Seeds::default(),
            grid: GridConfig { seeds: 2, hyper: vec![1, 4, 7, 10] },
            ensemble_size: 1,
            refinement_meshes,
            out_dir: PathBuf::from("runs"),
        }
    }

    /// Full-size setup: all data, five-layer state network, 3 x 10 grid,
    /// ten ensemble members, 100k Adam steps, omega0 30 state network.
    pub fn paper(system: SystemName) -> Self {
        let spec = SystemSpec::by_name(system);
        let mut c = Self::desk(system);
        c.n_u = 10_000;
        c.n_r = 1000;
        c.t_window = spec.t_train;
        c.n_t = spec.n_t_train;
        c.state_net = NetConfig { hidden: vec![32; 5], omega0: 30.0 };
        c.penalty.steps = 100_000;
        c.grid = GridConfig { seeds: 3, hyper: (1..=GRID_SIZE).collect() };
        c.ensemble_size = 10;
        c
    }

    pub fn spec(&self) -> SystemSpec {
        SystemSpec::by_name(self.system)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        let spec = self.spec();
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad("noise_level", format!("must be ≥ 0, got {}", self.noise_level));
        }
        if self.n_u < 2 {
            return bad("n_u", format!("need at least 2 samples, got {}", self.n_u));
        }
        if self.n_r == 0 {
            return bad("n_r", "must be positive".into());
        }
        if !(self.t_window > 0.0 && self.t_window <= spec.t_train) {
            return bad("t_window", format!("must lie in (0, {}], got {}", spec.t_train, self.t_window));
        }
        if self.n_t == 0 || self.n_u > self.n_t.saturating_add(1) * (spec.n_x + 1) {
            return bad("n_t", format!("grid of {} intervals cannot supply {} samples", self.n_t, self.n_u));
        }
        for (name, net) in [("state_net", &self.state_net), ("rhs_net", &self.rhs_net)] {
            if net.hidden.is_empty() || net.hidden.contains(&0) || !(net.omega0 > 0.0) {
                return bad(name, format!("invalid architecture {net:?}"));
            }
        }
        self.penalty.validate().map_err(|e| Error::Config(format!("penalty: {e}")))?;
        self.constrained.tropt.validate().map_err(|e| Error::Config(format!("constrained.tropt: {e}")))?;
        self.validation.validate().map_err(|e| Error::Config(format!("validation: {e}")))?;
        if self.evaluation.n_x < 8 || !(self.evaluation.dt_ratio > 0.0) {
            return bad("evaluation", format!("invalid solve settings {:?}", self.evaluation));
        }
        if !(self.delta > 0.0) {
            return bad("delta", format!("must be positive, got {}", self.delta));
        }
        if !(1..=3).contains(&self.grid.seeds) {
            return bad("grid.seeds", format!("must be 1, 2 or 3, got {}", self.grid.seeds));
        }
        if self.grid.hyper.is_empty() || self.grid.hyper.iter().any(|k| !(1..=GRID_SIZE).contains(k)) {
            return bad("grid.hyper", format!("indices must lie in 1..={GRID_SIZE}: {:?}", self.grid.hyper));
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size", "must be positive".into());
        }
        if self.refinement_meshes.iter().any(|&n| n < 8) {
            return bad("refinement_meshes", "every mesh needs at least 8 intervals".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Hyperparameter values for the configured grid indices.
    pub fn hyper_values(&self) -> Result<Vec<f64>> {
        self.grid.hyper.iter().map(|&k| crate::trainers::hyperparameter_grid(self.method, k)).collect()
    }
}
