//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::HyperParams;
use crate::protocol::Compressor;
use crate::tasks::{self, Dataset, MlpShape, ModelKind};
use crate::topology::{self, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Logistic,
    Mlp,
}

/// One experiment. Every key is top-level; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskName,
    /// CSV with the label in the last column. When absent, data is
    /// synthesized from `samples`, `features`, `sparsity` and `classes`.
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    #[serde(default = "defaults::features")]
    pub features: usize,
    /// Fraction of nonzero ground-truth weights (logistic).
    #[serde(default = "defaults::sparsity")]
    pub sparsity: f64,
    #[serde(default = "defaults::classes")]
    pub classes: usize,
    #[serde(default = "defaults::hidden")]
    pub hidden: usize,
    /// Rows held out for the test metric. 0 disables it.
    #[serde(default)]
    pub test_samples: usize,
    /// `ring10`, `ring` or `complete`. Ignored when `topology_path` is set.
    #[serde(default = "defaults::topology")]
    pub topology: String,
    /// CSV mixing matrix.
    #[serde(default)]
    pub topology_path: Option<PathBuf>,
    #[serde(default = "defaults::n_nodes")]
    pub n_nodes: usize,
    pub eta: f64,
    pub mu: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::levels")]
    pub levels: u16,
    pub rounds: u64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "defaults::metric_every")]
    pub metric_every: u64,
    #[serde(default)]
    pub codec: Compressor,
    /// Output directory, overridden by the command line.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Objective level for the bits-to-cutoff comparison.
    #[serde(default)]
    pub cutoff_objective: Option<f64>,
    /// Worker threads; 0 picks the machine default.
    #[serde(default)]
    pub threads: usize,
    /// Write every wire message to `messages.log`.
    #[serde(default)]
    pub record_messages: bool,
    /// Standard deviation of the shared random initial model. Defaults to
    /// 0 for logistic regression and 0.1 for the MLP.
    #[serde(default)]
    pub init_scale: Option<f64>,
}

mod defaults {
    pub fn samples() -> usize {
        5000
    }
    pub fn features() -> usize {
        200
    }
    pub fn sparsity() -> f64 {
        0.1
    }
    pub fn classes() -> usize {
        3
    }
    pub fn hidden() -> usize {
        16
    }
    pub fn topology() -> String {
        "ring10".to_owned()
    }
    pub fn n_nodes() -> usize {
        10
    }
    pub fn gamma() -> f64 {
        1.0
    }
    pub fn levels() -> u16 {
        8
    }
    pub fn metric_every() -> u64 {
        50
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            eta: self.eta,
            mu: self.mu,
            gamma: self.gamma,
            levels_count: self.levels,
            rounds_t: self.rounds,
            batch_size: self.batch_size,
        }
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<()> {
        self.hyper_params().validate()?;
        if self.n_nodes < 2 {
            return Err(Error::Config(format!(
                "n_nodes must be at least 2, got {}",
                self.n_nodes
            )));
        }
        if self.metric_every == 0 {
            return Err(Error::Config("metric_every must be positive".to_owned()));
        }
        if self.data_path.is_none() {
            if self.features == 0 {
                return Err(Error::Config("features must be positive".to_owned()));
            }
            if !(0.0..=1.0).contains(&self.sparsity) {
                return Err(Error::Config(format!(
                    "sparsity must lie in [0, 1], got {}",
                    self.sparsity
                )));
            }
            if self.samples < self.n_nodes {
                return Err(Error::Config(format!(
                    "{} samples cannot feed {} nodes",
                    self.samples, self.n_nodes
                )));
            }
        }
        if self.task == TaskName::Mlp && (self.classes < 2 || self.hidden == 0) {
            return Err(Error::Config(
                "mlp needs classes >= 2 and hidden >= 1".to_owned(),
            ));
        }
        if let Some(s) = self.init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "init_scale must be non-negative, got {s}"
                )));
            }
        }
        if let Some(c) = self.cutoff_objective {
            if !c.is_finite() {
                return Err(Error::Config("cutoff_objective must be finite".to_owned()));
            }
        }
        if self.topology_path.is_none()
            && !["ring10", "ring", "complete"].contains(&self.topology.as_str())
        {
            return Err(Error::Config(format!(
                "unknown topology {:?}",
                self.topology
            )));
        }
        Ok(())
    }

    pub fn build_topology(&self) -> Result<Topology> {
        let topo = match (&self.topology_path, self.topology.as_str()) {
            (Some(path), _) => Topology::load_csv(path)?,
            (None, "ring10") if self.n_nodes != 10 => {
                return Err(Error::Config(format!(
                    "ring10 needs n_nodes = 10, got {}",
                    self.n_nodes
                )))
            }
            (None, "ring10" | "ring") => topology::build_ring(self.n_nodes)?,
            (None, "complete") => topology::build_fully_connected(self.n_nodes)?,
            (None, other) => return Err(Error::Config(format!("unknown topology {other:?}"))),
        };
        if topo.n != self.n_nodes {
            return Err(Error::Config(format!(
                "topology has {} nodes, n_nodes is {}",
                topo.n, self.n_nodes
            )));
        }
        Ok(topo)
    }

    /// Training data (before partitioning) and the optional test split.
    pub fn build_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        let total = match &self.data_path {
            Some(path) => tasks::load_csv(path)?,
            None => {
                let m = self.samples + self.test_samples;
                match self.task {
                    TaskName::Logistic => {
                        tasks::synth_logistic(self.seed, m, self.features, self.sparsity)
                    }
                    TaskName::Mlp => tasks::synth_blobs(self.seed, m, self.features, self.classes),
                }
            }
        };
        if self.test_samples == 0 {
            return Ok((total, None));
        }
        if self.test_samples >= total.len() {
            return Err(Error::Config(format!(
                "test_samples {} leaves no training data out of {}",
                self.test_samples,
                total.len()
            )));
        }
        let split = total.len() - self.test_samples;
        let train: Vec<usize> = (0..split).collect();
        let test: Vec<usize> = (split..total.len()).collect();
        Ok((
            total.select(&train, total.name.clone()),
            Some(total.select(&test, format!("{}-test", total.name))),
        ))
    }

    pub fn model_kind(&self, data: &Dataset) -> Result<ModelKind> {
        Ok(match self.task {
            TaskName::Logistic => ModelKind::Logistic { features: data.dim },
            TaskName::Mlp => {
                let classes = match self.data_path {
                    Some(_) => {
                        data.labels.iter().fold(0.0f64, |a, &b| a.max(b)).max(1.0) as usize + 1
                    }
                    None => self.classes,
                };
                ModelKind::Mlp(MlpShape {
                    inputs: data.dim,
                    hidden: self.hidden,
                    classes,
                })
            }
        })
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(match self.task {
            TaskName::Logistic => 0.0,
            TaskName::Mlp => 0.1,
        })
    }
}
