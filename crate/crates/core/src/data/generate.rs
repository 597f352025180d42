use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Regime, TaskDataset, TaskStream};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, DenseMatrix};
use crate::rng::{purpose, rng_for};

const ROTATION: u64 = 0x5207;
const BASE_LAYOUT: u64 = 0xBA5E;

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_tasks: usize,
    pub classes_per_task: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Radius of the class-mean sphere, in units of `noise_std`.
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0
            || self.classes_per_task == 0
            || self.samples_per_class == 0
            || self.input_dim == 0
        {
            return Err(Error::Config("generator counts must all be >= 1".into()));
        }
        if !(self.class_separation >= 0.0) || !(self.noise_std > 0.0) {
            return Err(Error::Config(
                "class_separation must be >= 0 and noise_std > 0".into(),
            ));
        }
        Ok(())
    }

    fn radius(&self) -> f64 {
        self.class_separation * self.noise_std
    }
}

fn sphere_point(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = crate::linalg::norm2(&v);
    v.into_iter().map(|x| x / n * radius).collect()
}

/// Stratified 80/20 split: per class, a seeded shuffle decides which samples
/// are held out.
fn stratified_split(
    rng: &mut impl Rng,
    labels: &[usize],
    classes: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        let n = idx.len();
        let n_test = if n >= 2 {
            ((n as f64 * 0.2).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn sample_clusters(
    rng: &mut impl Rng,
    cfg: &GeneratorConfig,
    means: &[Vec<f64>],
    labels_of_means: &[usize],
) -> (DenseMatrix, Vec<usize>) {
    let n = means.len() * cfg.samples_per_class;
    let mut inputs = DenseMatrix::zeros(cfg.input_dim, n);
    let mut labels = Vec::with_capacity(n);
    let mut j = 0;
    for (mean, &label) in means.iter().zip(labels_of_means) {
        for _ in 0..cfg.samples_per_class {
            for (i, m) in mean.iter().enumerate() {
                let noise: f64 = StandardNormal.sample(rng);
                inputs[(i, j)] = m + cfg.noise_std * noise;
            }
            labels.push(label);
            j += 1;
        }
    }
    (inputs, labels)
}

/// Disjoint label sets per task; task `t` owns labels
/// `t·C .. (t+1)·C`. Class means are uniform on a sphere.
pub fn generate_class_incremental(cfg: &GeneratorConfig) -> Result<TaskStream> {
    cfg.validate()?;
    let c = cfg.classes_per_task;
    let tasks = (0..cfg.num_tasks)
        .map(|t| {
            let mut rng = rng_for(cfg.seed, &[purpose::DATA, t as u64]);
            let classes: Vec<usize> = (t * c..(t + 1) * c).collect();
            let means: Vec<Vec<f64>> = classes
                .iter()
                .map(|_| sphere_point(&mut rng, cfg.input_dim, cfg.radius()))
                .collect();
            let (inputs, labels) = sample_clusters(&mut rng, cfg, &means, &classes);
            let (train, test) = stratified_split(&mut rng, &labels, &classes);
            TaskDataset {
                task_id: t,
                inputs,
                labels,
                classes,
                train,
                test,
            }
        })
        .collect();
    Ok(TaskStream {
        tasks,
        regime: Regime::ClassIncremental,
    })
}

/// Haar-random rotation applied to task `task`'s inputs; identity for task 0.
pub fn rotation_for_task(cfg: &GeneratorConfig, task: usize) -> DenseMatrix {
    let d = cfg.input_dim;
    if task == 0 {
        return DenseMatrix::identity(d);
    }
    let mut rng = rng_for(cfg.seed, &[purpose::DATA, ROTATION, task as u64]);
    loop {
        let g = DenseMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let q = orthonormalize_columns(&g, 1e-10);
        if q.cols() == d {
            return q;
        }
    }
}

/// One shared class layout; task `t` sees it through rotation `R_t`.
pub fn generate_domain_incremental(cfg: &GeneratorConfig) -> Result<TaskStream> {
    cfg.validate()?;
    let classes: Vec<usize> = (0..cfg.classes_per_task).collect();
    let mut base_rng = rng_for(cfg.seed, &[purpose::DATA, BASE_LAYOUT]);
    let means: Vec<Vec<f64>> = classes
        .iter()
        .map(|_| sphere_point(&mut base_rng, cfg.input_dim, cfg.radius()))
        .collect();
    let tasks = (0..cfg.num_tasks)
        .map(|t| -> Result<TaskDataset> {
            let mut rng = rng_for(cfg.seed, &[purpose::DATA, t as u64]);
            let (raw, labels) = sample_clusters(&mut rng, cfg, &means, &classes);
            let inputs = if t == 0 {
                raw
            } else {
                rotation_for_task(cfg, t).matmul(&raw)?
            };
            let (train, test) = stratified_split(&mut rng, &labels, &classes);
            Ok(TaskDataset {
                task_id: t,
                inputs,
                labels,
                classes: classes.clone(),
                train,
                test,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskStream {
        tasks,
        regime: Regime::DomainIncremental,
    })
}
