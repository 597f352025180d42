//! FedAvg against projected training with and without task-identity
//! prediction on a short class-incremental stream.
//!
//! cargo run --release --example fedavg_vs_fedprotip

use fedprotip::data::{generate_class_incremental, GeneratorConfig, Heterogeneity, PartitionPlan};
use fedprotip::fedcl::{run_experiment, Method, ReferenceMode, TrainingConfig};
use fedprotip::harness::{compute_acc, compute_ft, EvalMode};
use fedprotip::model::{Activation, ModelSpec};
use fedprotip::subspace::{EnergyMode, ExtractionConfig};

fn main() -> fedprotip::Result<()> {
    let stream = generate_class_incremental(&GeneratorConfig {
        num_tasks: 4,
        classes_per_task: 3,
        samples_per_class: 50,
        input_dim: 10,
        class_separation: 6.0,
        noise_std: 1.0,
        seed: 1,
    })?;
    let plan = PartitionPlan::build(&stream, 4, Heterogeneity::Dirichlet(0.5), 1)?;
    let spec = ModelSpec { layer_dims: vec![10, 64, 64], activation: Activation::Relu, freeze_first_n_layers: 0 };
    let base = TrainingConfig {
        num_clients: 4,
        local_epochs: 3,
        global_rounds_per_task: 10,
        lr: 0.1,
        weight_decay: 0.0,
        reference_mode: ReferenceMode::CachedActivations,
        extraction: ExtractionConfig {
            epsilon_per_layer: vec![0.9],
            energy_mode: EnergyMode::SquaredSumFraction,
            rank_budget: Some(2),
            merge_drop_tol: 0.3,
            ..ExtractionConfig::default()
        },
        seed: 1,
        ..TrainingConfig::default()
    };

    let tasks = stream.num_tasks();
    println!("{:<18} {:<16} {:>8} {:>8}", "method", "mode", "ACC", "FT");
    for (method, mode) in [
        (Method::Fedavg, EvalMode::AgnosticNoTip),
        (Method::FedprotipNoTip, EvalMode::AgnosticNoTip),
        (Method::Fedprotip, EvalMode::AgnosticTip),
    ] {
        let out = run_experiment(&stream, &plan, &spec, &method.apply(&base))?;
        let m = out.accuracy_for(mode).expect("mode evaluated");
        println!(
            "{:<18} {:<16} {:>8.4} {:>8.4}",
            method.as_str(),
            mode.as_str(),
            compute_acc(m, tasks)?,
            compute_ft(m, tasks)?
        );
        if let Some(tip) = &out.tip {
            println!("  task-identity accuracy per phase {:.3?}", tip.per_phase_accuracy);
        }
    }
    Ok(())
}
