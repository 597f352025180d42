use rand::seq::SliceRandom;

use super::TrainingConfig;
use crate::data::TaskDataset;
use crate::error::Result;
use crate::linalg::{project_rows_onto_complement, DenseMatrix};
use crate::model::ModelParams;
use crate::rng::{derive_seed, purpose, rng_for};
use crate::subspace::{extract_core_bases, subtract_known_subspace, ProjectionMemory, SubspaceBasis};

/// One client's training data for the current task, with targets already
/// mapped to absolute head rows.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub client_id: usize,
    pub inputs: DenseMatrix,
    pub target_rows: Vec<usize>,
}

impl ClientShard {
    pub fn from_task(client_id: usize, task: &TaskDataset, idx: &[usize], head_offset: usize) -> Self {
        ClientShard {
            client_id,
            inputs: task.gather(idx),
            target_rows: idx
                .iter()
                .map(|&i| head_offset + task.local_class(task.labels[i]).expect("label in task"))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.target_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_rows.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum LocalOutcome {
    Trained {
        params: ModelParams,
        mean_loss: f64,
        samples: usize,
    },
    /// Empty shard: the client contributes nothing this round.
    Skipped,
}

/// Local epochs of mini-batch SGD from the broadcast model.
///
/// Weight decay is folded into each gradient before projection, so the whole
/// update of every trainable hidden layer lies in the orthogonal complement of
/// the merged basis for that layer's inputs. Head rows of previous tasks and
/// the first `freeze_first_n_layers` hidden layers (after task 0) stay frozen.
#[allow(clippy::too_many_arguments)]
pub fn client_local_train(
    global_params: &ModelParams,
    shard: &ClientShard,
    memory: &ProjectionMemory,
    cfg: &TrainingConfig,
    task: usize,
    round: usize,
    frozen_hidden: usize,
) -> Result<LocalOutcome> {
    if shard.is_empty() {
        return Ok(LocalOutcome::Skipped);
    }
    let mut rng = rng_for(
        cfg.seed,
        &[purpose::BATCHES, task as u64, round as u64, shard.client_id as u64],
    );
    let n = shard.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = global_params.clone();
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = shard.inputs.select_columns(chunk);
            let targets: Vec<usize> = chunk.iter().map(|&i| shard.target_rows[i]).collect();
            let trace = params.forward(&x, true)?;
            let (mut grads, loss) = params.backward(&trace, &targets, task)?;
            grads.frozen_hidden = frozen_hidden;
            grads.add_weight_decay(&params, cfg.weight_decay);
            if cfg.projection_enabled {
                for l in frozen_hidden..grads.hidden_grads.len() {
                    grads.hidden_grads[l] =
                        project_rows_onto_complement(&grads.hidden_grads[l], &memory.merged[l].basis)?;
                }
            }
            params = params.sgd_step(&grads, cfg.lr, 0.0)?;
            loss_sum += loss;
            batches += 1;
        }
    }
    Ok(LocalOutcome::Trained {
        params,
        mean_loss: loss_sum / batches as f64,
        samples: n,
    })
}

/// What a client uploads at the end of a task.
#[derive(Debug, Clone)]
pub struct ClientExtraction {
    pub client_id: usize,
    /// One basis per extracted layer (hidden layers, then the head input).
    pub bases: Vec<SubspaceBasis>,
    /// Sampled final-layer activations (`d_L × m^s`), kept client-side for
    /// reference vectors.
    pub final_acts: DenseMatrix,
}

/// Samples `m` local examples, keeps a random `m^s` of them, runs them through
/// the global model and extracts a thresholded basis per layer from the part
/// of each layer's input not yet covered by the global memory.
pub fn extract_client_bases(
    global_params: &ModelParams,
    shard: &ClientShard,
    memory: &ProjectionMemory,
    cfg: &TrainingConfig,
    task: usize,
) -> Result<ClientExtraction> {
    let ext = &cfg.extraction;
    let mut rng = rng_for(
        cfg.seed,
        &[purpose::ACTIVATION_SAMPLE, task as u64, shard.client_id as u64],
    );
    let mut idx: Vec<usize> = (0..shard.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(ext.sample_count_m.min(shard.len()));
    idx.shuffle(&mut rng);
    idx.truncate(ext.subsample_count_ms);
    idx.sort_unstable();

    let x = shard.inputs.select_columns(&idx);
    let trace = global_params.forward(&x, true)?;
    let bases = trace
        .layer_inputs
        .iter()
        .enumerate()
        .map(|(l, acts)| {
            let residual = subtract_known_subspace(acts, &memory.merged[l])?;
            let svd_seed = derive_seed(
                cfg.seed,
                &[purpose::RSVD, task as u64, shard.client_id as u64, l as u64],
            );
            extract_core_bases(
                l,
                &residual,
                ext.epsilon_for(l),
                ext.energy_mode,
                &ext.svd_config(svd_seed),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let final_acts = trace.layer_inputs.last().cloned().expect("captured");
    Ok(ClientExtraction {
        client_id: shard.client_id,
        bases,
        final_acts,
    })
}
