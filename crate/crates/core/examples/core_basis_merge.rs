//! Core-basis extraction on two clients' activations, merging into a global
//! memory, and the residual left for the next task.
//!
//! cargo run --example core_basis_merge

use fedprotip::linalg::{DenseMatrix, RandomizedSvdConfig};
use fedprotip::subspace::{
    extract_core_bases, merge_into_global, subtract_known_subspace, EnergyMode, SubspaceBasis,
};

/// `d × n` activations concentrated on a few directions chosen by `shift`.
fn activations(shift: usize) -> DenseMatrix {
    DenseMatrix::from_fn(8, 30, |i, j| {
        let strong = if (i + shift).is_multiple_of(4) { 3.0 } else { 0.2 };
        strong * ((i * 7 + j * 3 + shift) as f64).cos()
    })
}

fn main() -> fedprotip::Result<()> {
    let svd = RandomizedSvdConfig::new(8);
    let mut memory = SubspaceBasis::empty(0, 8);

    for task in 0..3 {
        let clients: Vec<SubspaceBasis> = (0..2)
            .map(|k| {
                let residual = subtract_known_subspace(&activations(task + k), &memory)?;
                extract_core_bases(0, &residual, 0.9, EnergyMode::SquaredSumFraction, &svd)
            })
            .collect::<fedprotip::Result<_>>()?;
        let uploads: Vec<usize> = clients.iter().map(SubspaceBasis::rank).collect();
        memory = merge_into_global(&memory, &clients, 0.05)?;
        println!(
            "task {task}: client ranks {uploads:?}, merged rank {}, stored floats {}",
            memory.rank(),
            memory.float_count()
        );
    }
    Ok(())
}
