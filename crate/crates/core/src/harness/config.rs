use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::BallTask;
use crate::error::{Error, Result};
use crate::losses::{LossKind, RegularizedLoss};
use crate::teachers::DEFAULT_GRID_SIZE;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_ETA_V: f64 = 0.01;

fn default_true() -> bool {
    true
}

fn default_dim() -> usize {
    10
}

fn default_n_per_class() -> usize {
    1000
}

fn default_mean() -> f64 {
    0.5
}

fn default_spherical_n() -> usize {
    2000
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub lambda: f64,
}

impl LossSpec {
    pub fn loss(&self) -> Result<RegularizedLoss> {
        RegularizedLoss::new(self.kind, self.lambda).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum DataSource {
    Gaussian {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_n_per_class")]
        n_per_class: usize,
        #[serde(default = "default_mean")]
        mean: f64,
    },
    Spherical {
        #[serde(default = "default_spherical_n")]
        n: usize,
    },
    /// Uniform points in the ball of radius `radius` (default 1).
    Ball {
        dim: usize,
        n: usize,
        task: BallTask,
        #[serde(default)]
        noise: f64,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherSpace {
    #[default]
    Same,
    RandomOrthogonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    #[serde(flatten)]
    pub source: DataSource,
    /// Norm bound of the teaching set; defaults to the largest training norm.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Append a constant-1 feature after any feature map.
    #[serde(default = "default_true")]
    pub bias: bool,
    #[serde(default)]
    pub teacher_space: TeacherSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Synthesis,
    Combination,
    Pool,
    RescalablePool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceMode {
    #[default]
    Same,
    Cross,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeacherSpec {
    /// Uniform draws from the training pool, i.e. plain SGD.
    Random,
    /// Full-batch gradient steps with the same learning rate.
    Batch,
    Omniscient {
        strategy: Strategy,
        #[serde(default = "default_grid")]
        grid_size: usize,
        /// Score candidates with the `λw` part of the update gradient.
        #[serde(default = "default_true")]
        include_regularizer: bool,
    },
    Surrogate {
        #[serde(default)]
        space: SpaceMode,
    },
    Imitation {
        #[serde(default)]
        warm_start: u64,
    },
}

impl TeacherSpec {
    pub fn label(&self) -> String {
        match self {
            TeacherSpec::Random => "random".into(),
            TeacherSpec::Batch => "batch".into(),
            TeacherSpec::Omniscient { strategy, .. } => format!(
                "omniscient-{}",
                match strategy {
                    Strategy::Synthesis => "synthesis",
                    Strategy::Combination => "combination",
                    Strategy::Pool => "pool",
                    Strategy::RescalablePool => "rescalable-pool",
                }
            ),
            TeacherSpec::Surrogate { space: SpaceMode::Same } => "surrogate-same".into(),
            TeacherSpec::Surrogate { space: SpaceMode::Cross } => "surrogate-cross".into(),
            TeacherSpec::Imitation { .. } => "imitation".into(),
        }
    }

    /// Whether the teacher works on the teacher-space copy of the data.
    pub fn uses_teacher_space(&self) -> bool {
        matches!(
            self,
            TeacherSpec::Imitation { .. } | TeacherSpec::Surrogate { space: SpaceMode::Cross }
        )
    }

    pub fn selects_from_pool(&self) -> bool {
        !matches!(
            self,
            TeacherSpec::Batch
                | TeacherSpec::Omniscient {
                    strategy: Strategy::Synthesis | Strategy::Combination | Strategy::RescalablePool,
                    ..
                }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub loss: LossSpec,
    /// Student learning rate; defaults depend on the data source.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Imitation fitting rate.
    #[serde(default)]
    pub eta_v: Option<f64>,
    pub iterations: u64,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSpec,
    pub teacher: TeacherSpec,
    /// Stop once `‖w − w*‖ < epsilon`; `0` disables stopping.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative data paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::File { path, test_path } = &mut self.data.source {
            if path.is_relative() {
                *path = base.join(&*path);
            }
            if let Some(t) = test_path {
                if t.is_relative() {
                    *t = base.join(&*t);
                }
            }
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.teacher.label())
    }

    /// The learning rate, falling back to the per-source default.
    pub fn eta(&self) -> f64 {
        if let Some(eta) = self.eta {
            return eta;
        }
        let cross = self.data.teacher_space == TeacherSpace::RandomOrthogonal;
        match (&self.data.source, cross) {
            (DataSource::Gaussian { .. }, false) => 1e-4,
            (DataSource::Gaussian { .. }, true) => 1e-5,
            (DataSource::Spherical { .. }, false) => 1e-3,
            (DataSource::Spherical { .. }, true) => 1e-4,
            (DataSource::File { .. } | DataSource::Ball { .. }, _) => 1e-3,
        }
    }

    pub fn eta_v(&self) -> f64 {
        self.eta_v.unwrap_or(DEFAULT_ETA_V)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.loss.loss()?;
        let eta = self.eta();
        if !(eta > 0.0 && eta.is_finite()) {
            return fail(format!("eta must be positive, got {eta}"));
        }
        let eta_v = self.eta_v();
        if !(eta_v > 0.0 && eta_v.is_finite()) {
            return fail(format!("eta_v must be positive, got {eta_v}"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if let Some(r) = self.data.radius {
            if !(r > 0.0 && r.is_finite()) {
                return fail(format!("radius must be positive, got {r}"));
            }
        }
        match &self.data.source {
            DataSource::Gaussian { dim, n_per_class, mean } => {
                if *dim == 0 || *n_per_class == 0 || !mean.is_finite() {
                    return fail("gaussian data needs dim ≥ 1, n_per_class ≥ 1 and a finite mean".into());
                }
            }
            DataSource::Spherical { n } => {
                if *n < 2 {
                    return fail("spherical data needs n ≥ 2".into());
                }
            }
            DataSource::Ball { dim, n, task, noise } => {
                if *dim == 0 || *n == 0 || !(*noise >= 0.0) {
                    return fail("ball data needs dim ≥ 1, n ≥ 1 and noise ≥ 0".into());
                }
                let classification = self.loss.kind.is_classification();
                if classification != (*task == BallTask::Classification) {
                    return fail(format!("ball task {task:?} does not match the {} loss", self.loss.kind));
                }
            }
            DataSource::File { .. } => {}
        }
        if let TeacherSpec::Omniscient { grid_size, .. } = self.teacher {
            if grid_size == 0 {
                return fail("grid_size must be at least 1".into());
            }
        }
        Ok(())
    }
}

/// A set of runs compared on shared data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub runs: Vec<ExperimentConfig>,
}

impl CompareConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", cfg.schema_version)));
        }
        cfg.runs.iter().try_for_each(ExperimentConfig::validate)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.runs.iter_mut().for_each(|r| r.resolve_paths(base));
        Ok(cfg)
    }
}
