//! Synthetic class-incremental stream and Dirichlet label-skew partitions at
//! several concentrations.
//!
//! cargo run --example dirichlet_partition

use fedprotip::data::{generate_class_incremental, partition_dirichlet, GeneratorConfig, Heterogeneity};

fn main() -> fedprotip::Result<()> {
    let stream = generate_class_incremental(&GeneratorConfig {
        num_tasks: 3,
        classes_per_task: 4,
        samples_per_class: 50,
        input_dim: 8,
        class_separation: 5.0,
        noise_std: 1.0,
        seed: 3,
    })?;
    for task in &stream.tasks {
        println!(
            "task {}: classes {:?}, {} train / {} test",
            task.task_id,
            task.classes,
            task.train.len(),
            task.test.len()
        );
    }

    let task = &stream.tasks[0];
    for alpha in [Heterogeneity::Dirichlet(0.1), Heterogeneity::Dirichlet(1.0), Heterogeneity::Iid] {
        let part = partition_dirichlet(task, 4, alpha, 11)?;
        println!("\n{alpha:?}");
        for (k, idx) in part.clients.iter().enumerate() {
            let mut hist = vec![0usize; task.classes.len()];
            for &i in idx {
                hist[task.local_class(task.labels[i]).unwrap()] += 1;
            }
            println!("  client {k}: {:>3} samples, per class {hist:?}", idx.len());
        }
    }
    Ok(())
}
