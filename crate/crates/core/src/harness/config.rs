use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalMode;
use crate::data::{
    generate_class_incremental, generate_domain_incremental, GeneratorConfig, Heterogeneity,
    PartitionPlan, Regime, TaskStream,
};
use crate::error::{Error, Result};
use crate::fedcl::{Method, TrainingConfig};
use crate::model::{Activation, ModelSpec};
use crate::rng::{derive_seed, purpose};

/// A complete experiment description, read from TOML.
///
/// ```toml
/// [run]
/// seed = 7
/// methods = ["fedavg", "fedprotip"]
///
/// [data]
/// regime = "class_incremental"
/// num_tasks = 3
/// classes_per_task = 2
/// samples_per_class = 40
/// input_dim = 8
/// class_separation = 6.0
/// noise_std = 1.0
///
/// [partition]
/// alpha = 0.5          # or "iid"
///
/// [model]
/// hidden_dims = [16, 16]
///
/// [training]
/// num_clients = 4
/// local_epochs = 1
/// global_rounds_per_task = 3
/// lr = 0.05
/// batch_size = 16
///
/// [training.extraction]
/// epsilon_per_layer = [0.9]
/// ```
///
/// Unknown keys anywhere are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunSection,
    pub data: DataSection,
    pub partition: PartitionSection,
    pub model: ModelSection,
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Master seed: data, partition, initialisation and training all derive
    /// from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "all_modes")]
    pub eval_modes: Vec<EvalMode>,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            methods: all_methods(),
            eval_modes: all_modes(),
            out: None,
        }
    }
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn all_modes() -> Vec<EvalMode> {
    EvalMode::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub regime: Regime,
    pub num_tasks: usize,
    pub classes_per_task: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    pub class_separation: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub alpha: Heterogeneity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub freeze_first_n_layers: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.training.seed != 0 && cfg.training.seed != cfg.run.seed {
            return Err(Error::Config(format!(
                "training.seed ({}) conflicts with run.seed ({}); set only run.seed",
                cfg.training.seed, cfg.run.seed
            )));
        }
        cfg.training.seed = cfg.run.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; an unreadable file is a
    /// configuration error like a malformed one.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML; parsing it back yields an identical config.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.run.seed = seed;
        self.training.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.methods.is_empty() {
            return Err(Error::Config("run.methods must not be empty".into()));
        }
        if self.run.eval_modes.is_empty() {
            return Err(Error::Config("run.eval_modes must not be empty".into()));
        }
        self.generator_config().validate()?;
        let spec = self.model_spec();
        spec.validate()?;
        self.training.validate(spec.extracted_layer_dims().len())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let d = &self.data;
        GeneratorConfig {
            num_tasks: d.num_tasks,
            classes_per_task: d.classes_per_task,
            samples_per_class: d.samples_per_class,
            input_dim: d.input_dim,
            class_separation: d.class_separation,
            noise_std: d.noise_std,
            seed: derive_seed(self.run.seed, &[purpose::DATA]),
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        let mut layer_dims = vec![self.data.input_dim];
        layer_dims.extend(&self.model.hidden_dims);
        ModelSpec {
            layer_dims,
            activation: self.model.activation,
            freeze_first_n_layers: self.model.freeze_first_n_layers,
        }
    }

    pub fn generate_stream(&self) -> Result<TaskStream> {
        let g = self.generator_config();
        match self.data.regime {
            Regime::ClassIncremental => generate_class_incremental(&g),
            Regime::DomainIncremental => generate_domain_incremental(&g),
        }
    }

    pub fn build_plan(&self, stream: &TaskStream) -> Result<PartitionPlan> {
        PartitionPlan::build(stream, self.training.num_clients, self.partition.alpha, self.run.seed)
    }
}
