use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{TaskDataset, TaskStream};
use crate::error::{Error, Result};
use crate::rng::{purpose, rng_for};

/// Label heterogeneity across clients: an IID split or a Dirichlet
/// concentration `α > 0`. In config files this is either a number or `"iid"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heterogeneity {
    Iid,
    Dirichlet(f64),
}

impl fmt::Display for Heterogeneity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Heterogeneity::Iid => write!(f, "iid"),
            Heterogeneity::Dirichlet(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for Heterogeneity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Heterogeneity::Iid => s.serialize_str("iid"),
            Heterogeneity::Dirichlet(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for Heterogeneity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Heterogeneity;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a positive Dirichlet alpha or \"iid\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Heterogeneity, E> {
                if v > 0.0 && v.is_finite() {
                    Ok(Heterogeneity::Dirichlet(v))
                } else {
                    Err(E::custom(format!("alpha must be > 0, got {v}")))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Heterogeneity, E> {
                self.visit_f64(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Heterogeneity, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Heterogeneity, E> {
                if v.eq_ignore_ascii_case("iid") {
                    Ok(Heterogeneity::Iid)
                } else {
                    Err(E::custom(format!("expected \"iid\", got {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Per-client sample indices (into the task's dataset) for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPartition {
    pub clients: Vec<Vec<usize>>,
}

impl TaskPartition {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub alpha: Heterogeneity,
    pub assignments: Vec<TaskPartition>,
}

impl PartitionPlan {
    /// Partitions every task of `stream`; task `t` uses a seed derived from
    /// `(seed, t)`.
    pub fn build(
        stream: &TaskStream,
        num_clients: usize,
        alpha: Heterogeneity,
        seed: u64,
    ) -> Result<Self> {
        let assignments = stream
            .tasks
            .iter()
            .map(|t| {
                partition_dirichlet(
                    t,
                    num_clients,
                    alpha,
                    crate::rng::derive_seed(seed, &[purpose::PARTITION, t.task_id as u64]),
                )
            })
            .collect::<Result<_>>()?;
        Ok(PartitionPlan { alpha, assignments })
    }

    pub fn num_clients(&self) -> usize {
        self.assignments.first().map_or(0, TaskPartition::num_clients)
    }
}

/// Splits the task's training samples across `num_clients` clients.
///
/// IID: shuffled equal split ignoring labels. Dirichlet: for each class,
/// proportions `p ~ Dir(α·1_K)` are turned into counts by largest-remainder
/// rounding, then any client left without a sample of that class takes one
/// from the current largest holder.
pub fn partition_dirichlet(
    task: &TaskDataset,
    num_clients: usize,
    alpha: Heterogeneity,
    seed: u64,
) -> Result<TaskPartition> {
    if num_clients == 0 {
        return Err(Error::Input("partition needs at least one client".into()));
    }
    let mut rng = rng_for(seed, &[]);
    if num_clients == 1 {
        return Ok(TaskPartition {
            clients: vec![task.train.clone()],
        });
    }
    let mut clients = vec![Vec::new(); num_clients];
    match alpha {
        Heterogeneity::Iid => {
            let mut idx = task.train.clone();
            idx.shuffle(&mut rng);
            let base = idx.len() / num_clients;
            let extra = idx.len() % num_clients;
            let mut start = 0;
            for (k, c) in clients.iter_mut().enumerate() {
                let size = base + usize::from(k < extra);
                c.extend_from_slice(&idx[start..start + size]);
                start += size;
            }
        }
        Heterogeneity::Dirichlet(a) => {
            if !(a > 0.0) {
                return Err(Error::Input(format!("Dirichlet alpha must be > 0, got {a}")));
            }
            let gamma = Gamma::new(a, 1.0).map_err(|e| Error::Input(e.to_string()))?;
            for (local, mut idx) in task.train_by_class().into_iter().enumerate() {
                let n = idx.len();
                if n < num_clients {
                    return Err(Error::PartitionInfeasible {
                        class: task.classes[local],
                        available: n,
                        clients: num_clients,
                    });
                }
                idx.shuffle(&mut rng);
                let props = dirichlet_sample(&mut rng, &gamma, num_clients);
                let mut counts = largest_remainder(&props, n);
                repair_empty(&mut counts);
                let mut start = 0;
                for (c, &cnt) in clients.iter_mut().zip(&counts) {
                    c.extend_from_slice(&idx[start..start + cnt]);
                    start += cnt;
                }
            }
        }
    }
    for c in &mut clients {
        c.sort_unstable();
    }
    Ok(TaskPartition { clients })
}

fn dirichlet_sample(rng: &mut impl Rng, gamma: &Gamma<f64>, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.into_iter().map(|g| g / sum).collect()
    } else {
        // every gamma draw underflowed: all mass to one uniformly chosen client
        let winner = rng.random_range(0..k);
        (0..k).map(|i| if i == winner { 1.0 } else { 0.0 }).collect()
    }
}

/// Integer counts summing to `n`, closest to `props · n`; leftover units go to
/// the largest fractional parts, ties to the lower index.
pub(crate) fn largest_remainder(props: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = exact[i] - exact[i].floor();
        let fj = exact[j] - exact[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Moves single samples from the largest holder to each empty client.
pub(crate) fn repair_empty(counts: &mut [usize]) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let (largest, _) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if counts[largest] <= 1 {
            break;
        }
        counts[largest] -= 1;
        counts[empty] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_class_incremental, GeneratorConfig};

    fn task(samples_per_class: usize) -> TaskDataset {
        generate_class_incremental(&GeneratorConfig {
            num_tasks: 1,
            classes_per_task: 3,
            samples_per_class,
            input_dim: 2,
            class_separation: 3.0,
            noise_std: 1.0,
            seed: 1,
        })
        .unwrap()
        .tasks
        .remove(0)
    }

    fn assert_disjoint_cover(t: &TaskDataset, p: &TaskPartition) {
        let mut all: Vec<usize> = p.clients.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, t.train);
    }

    #[test]
    fn single_client_gets_everything() {
        let t = task(10);
        let p = partition_dirichlet(&t, 1, Heterogeneity::Dirichlet(0.5), 0).unwrap();
        assert_eq!(p.clients, vec![t.train.clone()]);
    }

    #[test]
    fn iid_equal_split() {
        let t = task(10); // 24 train samples
        assert_eq!(t.train.len(), 24);
        let p = partition_dirichlet(&t, 4, Heterogeneity::Iid, 5).unwrap();
        assert_eq!(p.sizes(), vec![6; 4]);
        assert_disjoint_cover(&t, &p);
    }

    #[test]
    fn dirichlet_covers_and_keeps_every_class() {
        let t = task(30);
        for seed in 0..20 {
            for alpha in [0.05, 0.2, 1.0, 100.0] {
                let p = partition_dirichlet(&t, 5, Heterogeneity::Dirichlet(alpha), seed).unwrap();
                assert_disjoint_cover(&t, &p);
                for c in &p.clients {
                    let mut labels: Vec<usize> = c.iter().map(|&i| t.labels[i]).collect();
                    labels.sort_unstable();
                    labels.dedup();
                    assert_eq!(labels, t.classes);
                }
            }
        }
    }

    #[test]
    fn infeasible_class_is_named() {
        let t = task(3); // 2 train samples per class
        let err = partition_dirichlet(&t, 5, Heterogeneity::Dirichlet(1.0), 0).unwrap_err();
        assert!(matches!(err, Error::PartitionInfeasible { class: 0, available: 2, clients: 5 }));
    }

    #[test]
    fn rounding_and_repair() {
        assert_eq!(largest_remainder(&[0.5, 0.25, 0.25], 3), vec![1, 1, 1]);
        assert_eq!(largest_remainder(&[0.5, 0.3, 0.2], 4), vec![2, 1, 1]);
        assert_eq!(largest_remainder(&[1.0, 0.0], 5), vec![5, 0]);
        let mut c = vec![5, 0, 0];
        repair_empty(&mut c);
        assert_eq!(c, vec![3, 1, 1]);
    }

    #[test]
    fn alpha_parses_from_toml() {
        #[derive(Deserialize)]
        struct W {
            alpha: Heterogeneity,
        }
        let w: W = toml::from_str("alpha = 0.5").unwrap();
        assert_eq!(w.alpha, Heterogeneity::Dirichlet(0.5));
        let w: W = toml::from_str("alpha = \"iid\"").unwrap();
        assert_eq!(w.alpha, Heterogeneity::Iid);
        assert!(toml::from_str::<W>("alpha = -1.0").is_err());
        assert!(toml::from_str::<W>("alpha = \"skewed\"").is_err());
    }
}
