use proptest::prelude::*;

use fedprotip::data::{
    export_stream, generate_class_incremental, generate_domain_incremental, load_stream,
    partition_dirichlet, GeneratorConfig, Heterogeneity, TaskDataset,
};

fn gen(seed: u64, classes: usize, per_class: usize) -> GeneratorConfig {
    GeneratorConfig {
        num_tasks: 2,
        classes_per_task: classes,
        samples_per_class: per_class,
        input_dim: 4,
        class_separation: 5.0,
        noise_std: 1.0,
        seed,
    }
}

/// Mean total-variation distance between each client's label histogram and
/// the task's overall one.
fn label_skew(task: &TaskDataset, clients: &[Vec<usize>]) -> f64 {
    let k = task.classes.len();
    let hist = |idx: &[usize]| {
        let mut h = vec![0.0; k];
        for &i in idx {
            h[task.local_class(task.labels[i]).unwrap()] += 1.0;
        }
        let n: f64 = h.iter().sum();
        h.iter().map(|v| v / n.max(1.0)).collect::<Vec<f64>>()
    };
    let global = hist(&task.train);
    let per: Vec<f64> = clients
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| 0.5 * hist(c).iter().zip(&global).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

proptest! {
    #[test]
    fn partitions_are_disjoint_and_cover_the_training_set(
        seed in any::<u64>(),
        clients in 1usize..8,
        alpha in prop_oneof![Just(Heterogeneity::Iid), (0.05f64..10.0).prop_map(Heterogeneity::Dirichlet)],
        classes in 2usize..5,
    ) {
        let stream = generate_class_incremental(&gen(seed, classes, 20)).unwrap();
        let task = &stream.tasks[0];
        let part = partition_dirichlet(task, clients, alpha, seed ^ 0xabc).unwrap();
        prop_assert_eq!(part.num_clients(), clients);
        let mut all: Vec<usize> = part.clients.iter().flatten().copied().collect();
        all.sort_unstable();
        let mut train = task.train.clone();
        train.sort_unstable();
        prop_assert_eq!(all, train);
        prop_assert!(part.clients.iter().flatten().all(|i| !task.test.contains(i)));
    }

    #[test]
    fn generator_is_a_pure_function_of_its_config(seed in any::<u64>()) {
        let a = generate_class_incremental(&gen(seed, 3, 10)).unwrap();
        let b = generate_class_incremental(&gen(seed, 3, 10)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.check_labels());
        let d = generate_domain_incremental(&gen(seed, 3, 10)).unwrap();
        prop_assert_eq!(d.tasks[0].classes.clone(), d.tasks[1].classes.clone());
    }
}

#[test]
fn smaller_alpha_means_more_label_skew() {
    let skew = |alpha: f64| {
        let mut total = 0.0;
        for seed in 0..20 {
            let stream = generate_class_incremental(&gen(seed, 4, 50)).unwrap();
            let task = &stream.tasks[0];
            let part = partition_dirichlet(task, 5, Heterogeneity::Dirichlet(alpha), seed).unwrap();
            total += label_skew(task, &part.clients);
        }
        total / 20.0
    };
    let (s_low, s_mid, s_high) = (skew(0.1), skew(1.0), skew(100.0));
    assert!(s_low > s_mid && s_mid > s_high, "{s_low} {s_mid} {s_high}");
}

#[test]
fn class_incremental_tasks_have_disjoint_labels() {
    let stream = generate_class_incremental(&gen(3, 4, 10)).unwrap();
    let (a, b) = (&stream.tasks[0].classes, &stream.tasks[1].classes);
    assert!(a.iter().all(|c| !b.contains(c)));
}

#[test]
fn exported_stream_loads_back_exactly() {
    let stream = generate_domain_incremental(&gen(11, 3, 12)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_stream(&stream, dir.path()).unwrap();
    assert_eq!(load_stream(dir.path()).unwrap(), stream);
}
