//! Task-identity prediction by hand: per-task feature subspaces, client
//! reference vectors, and cosine-similarity voting.
//!
//! cargo run --example task_identity

use fedprotip::fedcl::{relevance_vector, update_references, vote, ReferenceVector};
use fedprotip::linalg::DenseMatrix;
use fedprotip::subspace::SubspaceBasis;

/// Unit basis vectors `e_i` for the listed coordinates of a 4-d feature space.
fn axes(dims: &[usize]) -> SubspaceBasis {
    let cols: Vec<Vec<f64>> = dims
        .iter()
        .map(|&d| (0..4).map(|i| (i == d) as u8 as f64).collect())
        .collect();
    SubspaceBasis::new(1, DenseMatrix::from_columns(4, &cols)).unwrap()
}

fn main() -> fedprotip::Result<()> {
    // Task 0 lives on coordinates {0, 1}, task 1 on {2, 3}.
    let bases = vec![axes(&[0, 1]), axes(&[2, 3])];

    // Two clients record references from their own activations.
    let task0 = DenseMatrix::from_rows(&[vec![2.0, 1.5], vec![1.0, 2.0], vec![0.1, 0.2], vec![0.0, 0.1]]);
    let task1 = DenseMatrix::from_rows(&[vec![0.2, 0.0], vec![0.1, 0.3], vec![1.8, 2.2], vec![1.1, 0.9]]);
    let mut refs: Vec<Vec<ReferenceVector>> = Vec::new();
    for client in 0..2 {
        let r0 = update_references(client, &task0, &[], &bases[..1], 0)?;
        refs.push(update_references(client, &task1, &r0, &bases, 1)?);
    }
    for r in &refs[0] {
        println!("client 0 reference for task {}: {:.3?}", r.task_id, r.values);
    }

    let probes = DenseMatrix::from_rows(&[vec![1.7, 0.1, 0.0], vec![0.9, 0.2, 0.0], vec![0.2, 2.0, 0.0], vec![0.0, 1.0, 0.0]]);
    for (j, rel) in relevance_vector(&bases, &probes)?.iter().enumerate() {
        let p = vote(rel, &refs, &[0, 1]);
        println!(
            "probe {j}: relevance {rel:.3?} → task {} (fallback {}, votes {:?})",
            p.task,
            p.fallback,
            p.votes.iter().map(|v| v.vote).collect::<Vec<_>>()
        );
    }
    Ok(())
}
