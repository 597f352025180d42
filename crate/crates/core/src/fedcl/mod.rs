//! The federated continual-learning protocol.
//!
//! Per task: the head grows, `E` barrier-synchronous rounds of local projected
//! SGD and weighted averaging run, then every client extracts core bases from
//! its activations and the server merges them. Reference vectors recorded at
//! the end of each task let the server infer the task of a test input.

mod client;
mod engine;
mod server;
mod tip;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::ExtractionConfig;

pub use client::{client_local_train, extract_client_bases, ClientExtraction, ClientShard, LocalOutcome};
pub use engine::{
    evaluate_phase, run_experiment, run_experiment_observed, ExperimentOutput, NoopObserver,
    Observer, PhaseEval, PhaseTip, RoundContext, RoundRecord, TipRecord, VoteRecord,
};
pub use server::{end_of_task_merge, server_aggregate};
pub use tip::{
    predict_task, predict_tasks, relevance_vector, update_references, vote, ReferenceStore,
    ReferenceVector, TaskPrediction, TaskVote,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AggregationWeights {
    /// `p_k` proportional to the client's sample count for the task.
    #[default]
    DataProportional,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Old reference vectors get a zero entry for every later task.
    #[default]
    ZeroPad,
    /// Clients keep their sampled final-layer activations per task and
    /// recompute every reference vector exactly.
    CachedActivations,
}

/// Method variants compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain federated averaging: no projection, no subspaces, no TIP.
    Fedavg,
    /// Projected training, task-agnostic inference over the full head.
    FedprotipNoTip,
    /// Projected training with task-identity prediction.
    Fedprotip,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fedavg, Method::FedprotipNoTip, Method::Fedprotip];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fedavg => "fedavg",
            Method::FedprotipNoTip => "fedprotip_no_tip",
            Method::Fedprotip => "fedprotip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Training config with this method's projection/TIP switches applied.
    pub fn apply(self, cfg: &TrainingConfig) -> TrainingConfig {
        let mut c = cfg.clone();
        match self {
            Method::Fedavg => {
                c.projection_enabled = false;
                c.tip_enabled = false;
            }
            Method::FedprotipNoTip => {
                c.projection_enabled = true;
                c.tip_enabled = false;
            }
            Method::Fedprotip => {
                c.projection_enabled = true;
                c.tip_enabled = true;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub num_clients: usize,
    #[serde(default = "one")]
    pub client_fraction: f64,
    pub local_epochs: usize,
    pub global_rounds_per_task: usize,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default = "yes")]
    pub tip_enabled: bool,
    /// Off turns the run into plain FedAvg training.
    #[serde(default = "yes")]
    pub projection_enabled: bool,
    #[serde(default)]
    pub aggregation_weights: AggregationWeights,
    #[serde(default)]
    pub reference_mode: ReferenceMode,
    /// Fraction of clients whose references vote at inference.
    #[serde(default = "one")]
    pub vote_client_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            num_clients: 5,
            client_fraction: 1.0,
            local_epochs: 2,
            global_rounds_per_task: 10,
            lr: 0.05,
            weight_decay: 5e-4,
            batch_size: 16,
            extraction: ExtractionConfig::default(),
            tip_enabled: true,
            projection_enabled: true,
            aggregation_weights: AggregationWeights::DataProportional,
            reference_mode: ReferenceMode::ZeroPad,
            vote_client_fraction: 1.0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, extracted_layers: usize) -> Result<()> {
        if self.num_clients == 0
            || self.local_epochs == 0
            || self.global_rounds_per_task == 0
            || self.batch_size == 0
        {
            return Err(Error::Config(
                "num_clients, local_epochs, global_rounds_per_task and batch_size must be >= 1".into(),
            ));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "client_fraction {} outside (0, 1]",
                self.client_fraction
            )));
        }
        if !(self.vote_client_fraction > 0.0 && self.vote_client_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "vote_client_fraction {} outside (0, 1]",
                self.vote_client_fraction
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr must be > 0 and weight_decay >= 0".into()));
        }
        self.extraction.validate(extracted_layers)
    }

    /// Whether end-of-task basis extraction runs at all.
    pub fn extraction_active(&self) -> bool {
        self.projection_enabled || self.tip_enabled
    }

    pub fn clients_per_round(&self) -> usize {
        ((self.client_fraction * self.num_clients as f64).ceil() as usize).clamp(1, self.num_clients)
    }
}
