//! Orthogonal gradient projection: an update projected onto the complement of
//! a protected subspace no longer moves the layer's response on that subspace.
//!
//! cargo run --example gradient_projection

use fedprotip::linalg::{orthonormalize_columns, project_rows_onto_complement, DenseMatrix};

fn main() -> fedprotip::Result<()> {
    // Protected input directions of a 6-dimensional layer.
    let raw = DenseMatrix::from_fn(6, 2, |i, j| ((i + 1) * (j + 2)) as f64 % 5.0 - 2.0);
    let phi = orthonormalize_columns(&raw, 1e-10);

    // A 3×6 weight gradient, projected row-wise: g − (gΦ)Φᵀ.
    let g = DenseMatrix::from_fn(3, 6, |i, j| (i as f64 - j as f64).sin());
    let projected = project_rows_onto_complement(&g, &phi)?;

    println!("basis rank            {}", phi.cols());
    println!("‖g‖_F                 {:.6}", g.frobenius_norm());
    println!("‖P(g)‖_F              {:.6}", projected.frobenius_norm());
    println!("‖g Φ‖_F               {:.3e}", g.matmul(&phi)?.frobenius_norm());
    println!("‖P(g) Φ‖_F            {:.3e}", projected.matmul(&phi)?.frobenius_norm());

    // An empty basis leaves the gradient untouched bit for bit.
    let passthrough = project_rows_onto_complement(&g, &DenseMatrix::zeros(6, 0))?;
    println!("empty basis identical {}", passthrough.bit_eq(&g));
    Ok(())
}
