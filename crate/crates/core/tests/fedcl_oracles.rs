use proptest::prelude::*;
use rand::seq::SliceRandom;

use fedprotip::data::{generate_class_incremental, GeneratorConfig, Heterogeneity, PartitionPlan, TaskStream};
use fedprotip::fedcl::{
    run_experiment, run_experiment_observed, server_aggregate, update_references, vote, ClientShard,
    Method, Observer, ReferenceStore, ReferenceVector, RoundContext, TrainingConfig,
};
use fedprotip::linalg::{exact_svd, norm2, DenseMatrix};
use fedprotip::model::{Activation, ModelParams, ModelSpec};
use fedprotip::rng::{derive_seed, purpose, rng_for};
use fedprotip::subspace::{EnergyMode, ExtractionConfig, SubspaceBasis};

fn stream(seed: u64, tasks: usize) -> TaskStream {
    generate_class_incremental(&GeneratorConfig {
        num_tasks: tasks,
        classes_per_task: 2,
        samples_per_class: 20,
        input_dim: 5,
        class_separation: 4.0,
        noise_std: 1.0,
        seed,
    })
    .unwrap()
}

fn spec() -> ModelSpec {
    ModelSpec {
        layer_dims: vec![5, 8, 6],
        activation: Activation::Tanh,
        freeze_first_n_layers: 0,
    }
}

fn training(clients: usize) -> TrainingConfig {
    TrainingConfig {
        num_clients: clients,
        local_epochs: 2,
        global_rounds_per_task: 3,
        lr: 0.05,
        weight_decay: 0.0,
        batch_size: 8,
        extraction: ExtractionConfig {
            epsilon_per_layer: vec![0.9],
            energy_mode: EnergyMode::SquaredSumFraction,
            sample_count_m: 10_000,
            subsample_count_ms: 10_000,
            rank_budget: None,
            ..ExtractionConfig::default()
        },
        seed: 5,
        ..TrainingConfig::default()
    }
}

/// Local SGD exactly as a client runs it, with an optional gradient projection.
fn local_train(
    params: &ModelParams,
    shard: &ClientShard,
    cfg: &TrainingConfig,
    task: usize,
    round: usize,
    memory: &[DenseMatrix],
) -> ModelParams {
    let mut rng = rng_for(cfg.seed, &[purpose::BATCHES, task as u64, round as u64, shard.client_id as u64]);
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut p = params.clone();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = shard.inputs.select_columns(chunk);
            let targets: Vec<usize> = chunk.iter().map(|&i| shard.target_rows[i]).collect();
            let (mut g, _) = p.backward(&p.forward(&x, true).unwrap(), &targets, task).unwrap();
            for (l, phi) in memory.iter().enumerate() {
                // g ← g − (gΦ)Φᵀ
                let gp = g.hidden_grads[l].matmul(phi).unwrap();
                let correction = gp.matmul(&phi.transpose()).unwrap();
                g.hidden_grads[l] = g.hidden_grads[l].sub(&correction).unwrap();
            }
            p = p.sgd_step(&g, cfg.lr, 0.0).unwrap();
        }
    }
    p
}

fn naive_average(models: &[ModelParams], weights: &[f64]) -> ModelParams {
    let mut out = models[0].clone();
    for l in 0..out.hidden_weights.len() {
        let (r, c) = out.hidden_weights[l].shape();
        for i in 0..r {
            for j in 0..c {
                out.hidden_weights[l][(i, j)] = models.iter().zip(weights).map(|(m, w)| w * m.hidden_weights[l][(i, j)]).sum();
            }
        }
    }
    let (r, c) = out.head.shape();
    for i in 0..r {
        for j in 0..c {
            out.head[(i, j)] = models.iter().zip(weights).map(|(m, w)| w * m.head[(i, j)]).sum();
        }
    }
    out
}

fn max_param_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    a.hidden_weights
        .iter()
        .zip(&b.hidden_weights)
        .map(|(x, y)| x.max_abs_diff(y))
        .fold(a.head.max_abs_diff(&b.head), f64::max)
}

#[test]
fn fedavg_matches_a_hand_written_loop() {
    let s = stream(1, 3);
    let cfg = Method::Fedavg.apply(&training(3));
    let plan = PartitionPlan::build(&s, 3, Heterogeneity::Dirichlet(0.5), 9).unwrap();
    let engine = run_experiment(&s, &plan, &spec(), &cfg).unwrap();

    let mut params = ModelParams::init(&spec(), cfg.seed).unwrap();
    for (t, task) in s.tasks.iter().enumerate() {
        params = params.expand_head(task.classes.len(), derive_seed(cfg.seed, &[t as u64])).unwrap();
        let offset = params.head_task_offsets[t];
        for e in 0..cfg.global_rounds_per_task {
            let mut models = Vec::new();
            let mut sizes = Vec::new();
            for (c, idx) in plan.assignments[t].clients.iter().enumerate() {
                if idx.is_empty() {
                    continue;
                }
                let shard = ClientShard::from_task(c, task, idx, offset);
                models.push(local_train(&params, &shard, &cfg, t, e, &[]));
                sizes.push(idx.len() as f64);
            }
            let total: f64 = sizes.iter().sum();
            let weights: Vec<f64> = sizes.iter().map(|n| n / total).collect();
            params = naive_average(&models, &weights);
        }
    }
    let diff = max_param_diff(&params, &engine.params);
    assert!(diff <= 1e-10, "engine deviates from reference FedAvg by {diff:e}");
}

/// Orthonormal columns of `acts`' residual reaching `eps` of its squared energy,
/// appended to `phi` by Gram–Schmidt.
fn gpm_update(phi: &DenseMatrix, acts: &DenseMatrix, eps: f64, drop_tol: f64) -> DenseMatrix {
    let residual = if phi.cols() == 0 {
        acts.clone()
    } else {
        acts.sub(&phi.matmul(&phi.t_matmul(acts).unwrap()).unwrap()).unwrap()
    };
    let svd = exact_svd(&residual).unwrap();
    let total: f64 = residual.frobenius_norm().powi(2);
    let mut cum = 0.0;
    let mut r = 0;
    while r < svd.s.len() && cum < eps * total && svd.s[r] > 1e-12 * svd.s[0] {
        cum += svd.s[r] * svd.s[r];
        r += 1;
    }
    let mut cols: Vec<Vec<f64>> = phi.columns().collect();
    for j in 0..r {
        let mut v = svd.u.column(j);
        for _ in 0..2 {
            for q in &cols {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let n = norm2(&v);
        if n >= drop_tol {
            cols.push(v.iter().map(|x| x / n).collect());
        }
    }
    DenseMatrix::from_columns(phi.rows(), &cols)
}

#[test]
fn single_client_run_is_centralized_gradient_projection() {
    let s = stream(2, 3);
    let cfg = Method::FedprotipNoTip.apply(&training(1));
    let plan = PartitionPlan::build(&s, 1, Heterogeneity::Iid, 4).unwrap();
    let engine = run_experiment(&s, &plan, &spec(), &cfg).unwrap();

    let mut params = ModelParams::init(&spec(), cfg.seed).unwrap();
    let dims = spec().extracted_layer_dims();
    let mut memory: Vec<DenseMatrix> = dims.iter().map(|&d| DenseMatrix::zeros(d, 0)).collect();
    for (t, task) in s.tasks.iter().enumerate() {
        params = params.expand_head(task.classes.len(), derive_seed(cfg.seed, &[t as u64])).unwrap();
        let shard = ClientShard::from_task(0, task, &plan.assignments[t].clients[0], params.head_task_offsets[t]);
        for e in 0..cfg.global_rounds_per_task {
            params = local_train(&params, &shard, &cfg, t, e, &memory[..memory.len() - 1]);
        }
        let trace = params.forward(&shard.inputs, true).unwrap();
        for (l, acts) in trace.layer_inputs.iter().enumerate() {
            memory[l] = gpm_update(&memory[l], acts, 0.9, cfg.extraction.merge_drop_tol);
        }
    }
    let ranks: Vec<usize> = memory.iter().map(DenseMatrix::cols).collect();
    assert_eq!(ranks, engine.memory.merged_ranks());
    let diff = max_param_diff(&params, &engine.params);
    assert!(diff <= 1e-8, "single-client run deviates from centralized GPM by {diff:e}");
}

/// Counts changes to earlier tasks' head rows, globally and in every client model.
struct FrozenRows {
    violations: usize,
}

impl Observer for FrozenRows {
    fn on_round(&mut self, ctx: &RoundContext<'_>) {
        let active = ctx.global_after.task_rows(ctx.task).unwrap();
        for r in 0..ctx.global_before.total_classes() {
            if !active.contains(&r) && ctx.global_before.head.row(r) != ctx.global_after.head.row(r) {
                self.violations += 1;
            }
        }
        for (_, client) in ctx.client_params {
            for r in 0..ctx.global_before.total_classes() {
                if !active.contains(&r) && ctx.global_before.head.row(r) != client.head.row(r) {
                    self.violations += 1;
                }
            }
        }
    }
}

#[test]
fn old_head_rows_never_move() {
    let s = stream(3, 3);
    let cfg = Method::Fedprotip.apply(&training(3));
    let plan = PartitionPlan::build(&s, 3, Heterogeneity::Dirichlet(0.5), 1).unwrap();
    let mut obs = FrozenRows { violations: 0 };
    run_experiment_observed(&s, &plan, &spec(), &cfg, &mut obs).unwrap();
    assert_eq!(obs.violations, 0);
}

#[test]
fn merged_memory_only_grows() {
    struct Ranks(Vec<Vec<usize>>);
    impl Observer for Ranks {
        fn on_task_end(&mut self, _: usize, _: &ModelParams, m: &fedprotip::subspace::ProjectionMemory) {
            self.0.push(m.merged_ranks());
        }
    }
    let s = stream(4, 4);
    let cfg = Method::Fedprotip.apply(&training(3));
    let plan = PartitionPlan::build(&s, 3, Heterogeneity::Dirichlet(1.0), 2).unwrap();
    let mut obs = Ranks(Vec::new());
    run_experiment_observed(&s, &plan, &spec(), &cfg, &mut obs).unwrap();
    for w in obs.0.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b), "{:?}", obs.0);
    }
}

#[test]
fn zero_padded_references_match_brute_force() {
    let bases: Vec<SubspaceBasis> = [vec![vec![1.0, 0.0, 0.0]], vec![vec![0.0, 0.6, 0.8]]]
        .iter()
        .map(|cols| SubspaceBasis::new(0, DenseMatrix::from_columns(3, cols)).unwrap())
        .collect();
    let a0 = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![1.0, 0.0], vec![0.0, 3.0]]);
    let r0 = update_references(4, &a0, &[], &bases[..1], 0).unwrap();
    let a1 = DenseMatrix::from_rows(&[vec![0.0], vec![3.0], vec![4.0]]);
    let r1 = update_references(4, &a1, &r0, &bases, 1).unwrap();

    // Brute force: mean over columns of ‖U Uᵀ a‖.
    let brute = |u: &DenseMatrix, a: &DenseMatrix| {
        let p = u.matmul(&u.t_matmul(a).unwrap()).unwrap();
        p.columns().map(|c| norm2(&c)).sum::<f64>() / a.cols() as f64
    };
    assert_eq!(r1.len(), 2);
    assert!((r1[0].values[0] - brute(&bases[0].basis, &a0)).abs() < 1e-15);
    assert_eq!(r1[0].values[1], 0.0);
    assert!((r1[1].values[0] - brute(&bases[0].basis, &a1)).abs() < 1e-15);
    assert!((r1[1].values[1] - brute(&bases[1].basis, &a1)).abs() < 1e-15);
    assert_eq!(r1[1].values[1], 5.0);
    assert!(r1.iter().all(|r| r.client_id == 4));
}

fn store(values: &[Vec<Vec<f64>>]) -> ReferenceStore {
    values
        .iter()
        .enumerate()
        .map(|(k, per_task)| {
            per_task
                .iter()
                .enumerate()
                .map(|(t, v)| ReferenceVector { client_id: k, task_id: t, values: v.clone() })
                .collect()
        })
        .collect()
}

fn model(rows: usize, cols: usize) -> impl Strategy<Value = Vec<ModelParams>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, rows * cols + cols * 2), 1..5).prop_map(
        move |blocks| {
            blocks
                .into_iter()
                .map(|v| ModelParams {
                    activation: Activation::Relu,
                    hidden_weights: vec![DenseMatrix::from_vec(rows, cols, v[..rows * cols].to_vec()).unwrap()],
                    head: DenseMatrix::from_vec(2, rows, v[rows * cols..rows * cols + 2 * rows].to_vec()).unwrap(),
                    head_task_offsets: vec![0, 2],
                })
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn aggregation_matches_a_double_loop(
        models in model(3, 4),
        raw in prop::collection::vec(0.01f64..5.0, 5),
    ) {
        let raw = &raw[..models.len()];
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let ours = server_aggregate(&models, &weights).unwrap();
        prop_assert!(max_param_diff(&ours, &naive_average(&models, &weights)) <= 1e-12);
    }

    #[test]
    fn votes_are_invariant_to_relevance_scale(
        refs in prop::collection::vec(prop::collection::vec(prop::collection::vec(0.0f64..5.0, 3), 3), 1..6),
        relevance in prop::collection::vec(0.0f64..5.0, 3),
        scale in 1e-3f64..1e3,
    ) {
        let refs = store(&refs);
        let voters: Vec<usize> = (0..refs.len()).collect();
        let scaled: Vec<f64> = relevance.iter().map(|v| v * scale).collect();
        let a = vote(&relevance, &refs, &voters);
        let b = vote(&scaled, &refs, &voters);
        prop_assert_eq!(a.task, b.task);
        prop_assert_eq!(a.fallback, b.fallback);
        for (x, y) in a.votes.iter().zip(&b.votes) {
            prop_assert_eq!(x.vote, y.vote);
            for (s, t) in x.similarities.iter().zip(&y.similarities) {
                prop_assert!((s - t).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn zero_relevance_falls_back_to_latest_task() {
    let refs = store(&[vec![vec![1.0, 0.0], vec![0.0, 1.0]]]);
    let p = vote(&[0.0, 0.0], &refs, &[0]);
    assert!(p.fallback);
    assert_eq!(p.task, 1);
}
