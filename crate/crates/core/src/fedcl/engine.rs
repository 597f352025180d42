use rand::seq::index::sample;
use rayon::prelude::*;

use super::tip::vote;
use super::{
    client_local_train, end_of_task_merge, extract_client_bases, relevance_vector,
    server_aggregate, update_references, AggregationWeights, ClientExtraction, ClientShard,
    LocalOutcome, ReferenceMode, ReferenceStore, ReferenceVector, TrainingConfig,
};
use crate::data::{PartitionPlan, TaskStream};
use crate::error::{Error, Result};
use crate::harness::{AccuracyMatrix, EvalMode};
use crate::linalg::DenseMatrix;
use crate::model::{ModelParams, ModelSpec};
use crate::rng::{derive_seed, purpose, rng_for};
use crate::subspace::{CostLedger, ProjectionMemory};

/// Diagnostics for one global round (0-based task and round).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub task: usize,
    pub round: usize,
    /// Sampled clients, ascending.
    pub participants: Vec<usize>,
    /// Mean of the trained participants' mean batch losses.
    pub mean_loss: f64,
    /// Checksum of the aggregated global model.
    pub checksum: u64,
}

/// One test sample's task prediction at a given phase.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteRecord {
    pub phase: usize,
    /// Column of the sample in its task's dataset.
    pub sample_id: usize,
    pub true_task: usize,
    pub predicted_task: usize,
    pub fallback: bool,
    /// Vote of each voting client, in voter order.
    pub client_votes: Vec<usize>,
}

/// Task-identity prediction results across phases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TipRecord {
    /// Fraction of test samples of all seen tasks routed to their true task.
    pub per_phase_accuracy: Vec<f64>,
    /// `confusion[phase][true_task][predicted_task]` counts.
    pub confusion: Vec<Vec<Vec<usize>>>,
    pub votes: Vec<VoteRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub params: ModelParams,
    pub memory: ProjectionMemory,
    pub refs: ReferenceStore,
    /// One matrix per evaluated mode; TIP routing only when enabled.
    pub accuracy: Vec<AccuracyMatrix>,
    pub tip: Option<TipRecord>,
    pub cost: CostLedger,
    pub rounds: Vec<RoundRecord>,
}

impl ExperimentOutput {
    pub fn accuracy_for(&self, mode: EvalMode) -> Option<&AccuracyMatrix> {
        self.accuracy.iter().find(|m| m.mode == mode)
    }
}

/// Everything an observer can inspect at a round barrier.
pub struct RoundContext<'a> {
    pub task: usize,
    pub round: usize,
    pub global_before: &'a ModelParams,
    pub global_after: &'a ModelParams,
    /// `(client_id, locally trained params)` of every trained participant.
    pub client_params: &'a [(usize, ModelParams)],
    pub memory: &'a ProjectionMemory,
}

/// Hooks for tests and diagnostics; both default to no-ops.
pub trait Observer {
    fn on_round(&mut self, _ctx: &RoundContext<'_>) {}
    fn on_task_end(&mut self, _task: usize, _params: &ModelParams, _memory: &ProjectionMemory) {}
}

pub struct NoopObserver;

impl Observer for NoopObserver {}

pub fn run_experiment(
    stream: &TaskStream,
    plan: &PartitionPlan,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
) -> Result<ExperimentOutput> {
    run_experiment_observed(stream, plan, spec, cfg, &mut NoopObserver)
}

fn check_inputs(stream: &TaskStream, plan: &PartitionPlan, spec: &ModelSpec, cfg: &TrainingConfig) -> Result<()> {
    spec.validate()?;
    cfg.validate(spec.extracted_layer_dims().len())?;
    if stream.num_tasks() == 0 {
        return Err(Error::Input("empty task stream".into()));
    }
    if stream.input_dim() != spec.layer_dims[0] {
        return Err(Error::Config(format!(
            "stream input dim {} != model input dim {}",
            stream.input_dim(),
            spec.layer_dims[0]
        )));
    }
    if plan.assignments.len() != stream.num_tasks() || plan.num_clients() != cfg.num_clients {
        return Err(Error::Config(format!(
            "partition plan covers {} tasks × {} clients, expected {} × {}",
            plan.assignments.len(),
            plan.num_clients(),
            stream.num_tasks(),
            cfg.num_clients
        )));
    }
    Ok(())
}

/// Sorted uniform sample without replacement of `count` out of `n` clients.
fn sample_clients(n: usize, count: usize, seed: u64, tags: &[u64]) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    let mut rng = rng_for(seed, tags);
    let mut picked = sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}

/// Copies the blocks that must not move this task back from `before`, so
/// aggregation rounding cannot perturb them.
fn restore_frozen(after: &mut ModelParams, before: &ModelParams, task: usize, frozen_hidden: usize) -> Result<()> {
    for l in 0..frozen_hidden.min(after.hidden_weights.len()) {
        after.hidden_weights[l] = before.hidden_weights[l].clone();
    }
    let active = before.task_rows(task)?;
    for r in (0..before.total_classes()).filter(|r| !active.contains(r)) {
        after.head.row_mut(r).copy_from_slice(before.head.row(r));
    }
    Ok(())
}

/// Runs the whole protocol over the stream, calling `observer` at every
/// round barrier and task end.
pub fn run_experiment_observed(
    stream: &TaskStream,
    plan: &PartitionPlan,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    observer: &mut dyn Observer,
) -> Result<ExperimentOutput> {
    check_inputs(stream, plan, spec, cfg)?;
    let num_tasks = stream.num_tasks();
    let k = cfg.num_clients;

    let mut params = ModelParams::init(spec, cfg.seed)?;
    let mut memory = ProjectionMemory::new(&spec.extracted_layer_dims());
    let mut refs: ReferenceStore = vec![Vec::new(); k];
    let mut cached_acts: Vec<Vec<DenseMatrix>> = vec![Vec::new(); k];
    let mut cost = CostLedger::new(num_tasks);
    let mut rounds = Vec::new();
    let mut modes = vec![EvalMode::TaskAware, EvalMode::AgnosticNoTip];
    if cfg.tip_enabled {
        modes.push(EvalMode::AgnosticTip);
    }
    let mut accuracy: Vec<AccuracyMatrix> = modes.iter().map(|&m| AccuracyMatrix::new(num_tasks, m)).collect();
    let mut tip = cfg.tip_enabled.then(TipRecord::default);

    for (t, task) in stream.tasks.iter().enumerate() {
        params = params.expand_head(task.classes.len(), derive_seed(cfg.seed, &[t as u64]))?;
        let head_offset = params.head_task_offsets[t];
        let frozen_hidden = if t > 0 { spec.freeze_first_n_layers } else { 0 };
        let shards: Vec<ClientShard> = plan.assignments[t]
            .clients
            .iter()
            .enumerate()
            .map(|(c, idx)| ClientShard::from_task(c, task, idx, head_offset))
            .collect();

        for e in 0..cfg.global_rounds_per_task {
            let participants = sample_clients(
                k,
                cfg.clients_per_round(),
                cfg.seed,
                &[purpose::CLIENT_SAMPLING, t as u64, e as u64],
            );
            let outcomes = participants
                .par_iter()
                .map(|&c| client_local_train(&params, &shards[c], &memory, cfg, t, e, frozen_hidden))
                .collect::<Result<Vec<_>>>()?;

            let mut trained = Vec::new();
            let mut raw_weights = Vec::new();
            let mut losses = Vec::new();
            for (&c, outcome) in participants.iter().zip(outcomes) {
                if let LocalOutcome::Trained { params: p, mean_loss, samples } = outcome {
                    raw_weights.push(match cfg.aggregation_weights {
                        AggregationWeights::DataProportional => samples as f64,
                        AggregationWeights::Uniform => 1.0,
                    });
                    losses.push(mean_loss);
                    trained.push((c, p));
                }
            }
            let before = params.clone();
            if !trained.is_empty() {
                let total: f64 = raw_weights.iter().sum();
                let weights: Vec<f64> = raw_weights.iter().map(|w| w / total).collect();
                let models: Vec<ModelParams> = trained.iter().map(|(_, p)| p.clone()).collect();
                params = server_aggregate(&models, &weights)?;
                restore_frozen(&mut params, &before, t, frozen_hidden)?;
            }
            let mean_loss = if losses.is_empty() {
                f64::NAN
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            };
            rounds.push(RoundRecord {
                task: t,
                round: e,
                participants,
                mean_loss,
                checksum: params.checksum(),
            });
            observer.on_round(&RoundContext {
                task: t,
                round: e,
                global_before: &before,
                global_after: &params,
                client_params: &trained,
                memory: &memory,
            });
        }

        if cfg.extraction_active() {
            let extractions = shards
                .par_iter()
                .filter(|s| !s.is_empty())
                .map(|s| extract_client_bases(&params, s, &memory, cfg, t))
                .collect::<Result<Vec<ClientExtraction>>>()?;
            for ex in &extractions {
                cost.record_cost(t, &ex.bases, &[])?;
            }
            memory = end_of_task_merge(&memory, &extractions, cfg.extraction.merge_drop_tol)?;
            if cfg.tip_enabled {
                update_reference_store(&mut refs, &mut cached_acts, &extractions, &memory, cfg, t, &mut cost)?;
            }
            let ref_floats: usize = refs.iter().flatten().map(|r| r.values.len()).sum();
            cost.set_stored(t, memory.stored_floats() + ref_floats);
        }
        observer.on_task_end(t, &params, &memory);

        let phase = evaluate_phase(stream, &params, &memory, &refs, cfg, t)?;
        for m in &mut accuracy {
            let per_task = phase.accuracy_for(m.mode).expect("mode evaluated");
            for (s, &a) in per_task.iter().enumerate() {
                m.set(s, t, a)?;
            }
        }
        if let (Some(rec), Some(pt)) = (tip.as_mut(), phase.tip) {
            rec.per_phase_accuracy.push(pt.accuracy);
            rec.confusion.push(pt.confusion);
            rec.votes.extend(pt.votes);
        }
    }

    Ok(ExperimentOutput {
        params,
        memory,
        refs,
        accuracy,
        tip,
        cost,
        rounds,
    })
}

/// Adds task `t`'s references for every client. A client that holds no data
/// for the task gets an all-zero reference, which never wins a vote.
#[allow(clippy::too_many_arguments)]
fn update_reference_store(
    refs: &mut ReferenceStore,
    cached_acts: &mut [Vec<DenseMatrix>],
    extractions: &[ClientExtraction],
    memory: &ProjectionMemory,
    cfg: &TrainingConfig,
    t: usize,
    cost: &mut CostLedger,
) -> Result<()> {
    let bases = &memory.per_task_final;
    for (c, client_refs) in refs.iter_mut().enumerate() {
        let ex = extractions.iter().find(|e| e.client_id == c);
        let acts = match ex {
            Some(e) => e.final_acts.clone(),
            None => DenseMatrix::zeros(memory.merged[memory.final_layer()].dim(), 0),
        };
        let uploaded = match cfg.reference_mode {
            ReferenceMode::ZeroPad => {
                *client_refs = update_references(c, &acts, client_refs, bases, t)?;
                1
            }
            ReferenceMode::CachedActivations => {
                cached_acts[c].push(acts);
                let mut fresh: Vec<ReferenceVector> = Vec::with_capacity(t + 1);
                for (tau, a) in cached_acts[c].iter().enumerate() {
                    let mut r = update_references(c, a, &[], bases, t)?.remove(0);
                    r.task_id = tau;
                    fresh.push(r);
                }
                *client_refs = fresh;
                t + 1
            }
        };
        if ex.is_some() {
            let n = client_refs.len();
            cost.record_cost(t, &[], &client_refs[n - uploaded..])?;
        }
    }
    Ok(())
}

/// Evaluation of all seen tasks after one training phase.
#[derive(Debug, Clone)]
pub struct PhaseEval {
    /// `(mode, accuracy per seen task)`.
    pub accuracy: Vec<(EvalMode, Vec<f64>)>,
    pub tip: Option<PhaseTip>,
}

#[derive(Debug, Clone)]
pub struct PhaseTip {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub votes: Vec<VoteRecord>,
}

impl PhaseEval {
    pub fn accuracy_for(&self, mode: EvalMode) -> Option<&[f64]> {
        self.accuracy
            .iter()
            .find(|(m, _)| *m == mode)
            .map(|(_, v)| v.as_slice())
    }
}

fn argmax_rows(logits: &DenseMatrix, rows: std::ops::Range<usize>, j: usize) -> usize {
    let mut best = rows.start;
    for r in rows {
        if logits[(r, j)] > logits[(best, j)] {
            best = r;
        }
    }
    best
}

/// Label predicted by head row `row`.
fn label_of_row(stream: &TaskStream, params: &ModelParams, row: usize) -> usize {
    let task = params
        .head_task_offsets
        .windows(2)
        .position(|w| (w[0]..w[1]).contains(&row))
        .expect("row inside head");
    stream.tasks[task].classes[row - params.head_task_offsets[task]]
}

/// Accuracy of every seen task (`0..=phase`) on its full test split in each
/// evaluation mode; TIP routing is included when enabled.
pub fn evaluate_phase(
    stream: &TaskStream,
    params: &ModelParams,
    memory: &ProjectionMemory,
    refs: &ReferenceStore,
    cfg: &TrainingConfig,
    phase: usize,
) -> Result<PhaseEval> {
    let seen = phase + 1;
    let use_tip = cfg.tip_enabled;
    let voters = sample_clients(
        cfg.num_clients,
        ((cfg.vote_client_fraction * cfg.num_clients as f64).ceil() as usize).clamp(1, cfg.num_clients),
        cfg.seed,
        &[purpose::VOTERS, phase as u64],
    );
    let mut aware = Vec::with_capacity(seen);
    let mut agnostic = Vec::with_capacity(seen);
    let mut routed = Vec::with_capacity(seen);
    let mut confusion = vec![vec![0usize; seen]; seen];
    let mut votes = Vec::new();
    let mut tip_hits = 0usize;
    let mut tip_total = 0usize;

    for (s, task) in stream.tasks.iter().take(seen).enumerate() {
        let x = task.gather(&task.test);
        let trace = params.forward(&x, true)?;
        let logits = &trace.logits;
        let features = trace.layer_inputs.last().expect("captured");
        let predictions = if use_tip {
            let rel = relevance_vector(&memory.per_task_final, features)?;
            rel.iter().map(|r| vote(r, refs, &voters)).collect::<Vec<_>>()
        } else {
            Vec::new()
        };
        let n = task.test.len();
        let (mut hit_aware, mut hit_agn, mut hit_tip) = (0usize, 0usize, 0usize);
        for (j, &sample_id) in task.test.iter().enumerate() {
            let truth = task.labels[sample_id];
            let row = argmax_rows(logits, params.task_rows(s)?, j);
            hit_aware += usize::from(label_of_row(stream, params, row) == truth);
            let row = argmax_rows(logits, 0..params.total_classes(), j);
            hit_agn += usize::from(label_of_row(stream, params, row) == truth);
            if let Some(p) = predictions.get(j) {
                let row = argmax_rows(logits, params.task_rows(p.task)?, j);
                hit_tip += usize::from(label_of_row(stream, params, row) == truth);
                confusion[s][p.task] += 1;
                tip_hits += usize::from(p.task == s);
                tip_total += 1;
                votes.push(VoteRecord {
                    phase,
                    sample_id,
                    true_task: s,
                    predicted_task: p.task,
                    fallback: p.fallback,
                    client_votes: p.votes.iter().map(|v| v.vote).collect(),
                });
            }
        }
        let frac = |h: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
        aware.push(frac(hit_aware));
        agnostic.push(frac(hit_agn));
        routed.push(frac(hit_tip));
    }

    let mut accuracy = vec![(EvalMode::TaskAware, aware), (EvalMode::AgnosticNoTip, agnostic)];
    let tip = use_tip.then(|| {
        accuracy.push((EvalMode::AgnosticTip, routed));
        PhaseTip {
            accuracy: if tip_total == 0 { 0.0 } else { tip_hits as f64 / tip_total as f64 },
            confusion,
            votes,
        }
    });
    Ok(PhaseEval { accuracy, tip })
}
