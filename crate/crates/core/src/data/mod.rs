//! Synthetic continual-learning task streams and their split across clients.

mod generate;
mod io;
mod partition;

use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;

pub use generate::{
    generate_class_incremental, generate_domain_incremental, rotation_for_task, GeneratorConfig,
};
pub use io::{export_stream, load_stream};
pub use partition::{partition_dirichlet, Heterogeneity, PartitionPlan, TaskPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Every task brings new, disjoint labels.
    #[default]
    ClassIncremental,
    /// Every task shares one label set under a different input distribution.
    DomainIncremental,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::ClassIncremental => "class_incremental",
            Regime::DomainIncremental => "domain_incremental",
        }
    }
}

/// One task: inputs stored column-wise (`d₀ × n`) with labels and a
/// stratified train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_id: usize,
    pub inputs: DenseMatrix,
    pub labels: Vec<usize>,
    /// Sorted label set of the task; head row `offset + i` predicts `classes[i]`.
    pub classes: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.rows()
    }

    /// Position of `label` in this task's class list.
    pub fn local_class(&self, label: usize) -> Option<usize> {
        self.classes.binary_search(&label).ok()
    }

    /// Inputs of the given samples as columns.
    pub fn gather(&self, idx: &[usize]) -> DenseMatrix {
        self.inputs.select_columns(idx)
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Training samples grouped by local class.
    pub fn train_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.classes.len()];
        for &i in &self.train {
            groups[self.local_class(self.labels[i]).expect("label in class set")].push(i);
        }
        groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<TaskDataset>,
    pub regime: Regime,
}

impl TaskStream {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks.first().map_or(0, TaskDataset::input_dim)
    }

    pub fn classes_per_task(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.classes.len()).collect()
    }

    /// Checks the label-set contract of the regime.
    pub fn check_labels(&self) -> bool {
        match self.regime {
            Regime::ClassIncremental => {
                let mut seen = std::collections::BTreeSet::new();
                self.tasks
                    .iter()
                    .all(|t| t.classes.iter().all(|c| seen.insert(*c)))
            }
            Regime::DomainIncremental => self
                .tasks
                .windows(2)
                .all(|w| w[0].classes == w[1].classes),
        }
    }
}
