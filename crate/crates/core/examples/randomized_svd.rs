//! Randomized range-finder SVD against the exact Jacobi SVD on a low-rank
//! matrix with a little noise.
//!
//! cargo run --example randomized_svd

use fedprotip::linalg::{exact_svd, randomized_svd, DenseMatrix, RandomizedSvdConfig};

fn main() -> fedprotip::Result<()> {
    let left = DenseMatrix::from_fn(60, 4, |i, j| ((i * 13 + j * 7) % 17) as f64 / 8.0 - 1.0);
    let right = DenseMatrix::from_fn(4, 40, |i, j| ((i * 5 + j * 11) % 13) as f64 / 6.0 - 1.0);
    let noise = DenseMatrix::from_fn(60, 40, |i, j| 1e-3 * ((i * 31 + j * 17) as f64).sin());
    let a = left.matmul(&right)?.add(&noise)?;

    let exact = exact_svd(&a)?;
    let cfg = RandomizedSvdConfig::new(4).with_oversampling(6).with_power_iterations(2).with_seed(42);
    let approx = randomized_svd(&a, &cfg)?;

    println!("{:>3} {:>14} {:>14} {:>10}", "k", "exact σ", "randomized σ", "rel err");
    for k in 0..4 {
        let rel = (approx.s[k] - exact.s[k]).abs() / exact.s[k];
        println!("{k:>3} {:>14.8} {:>14.8} {rel:>10.2e}", exact.s[k], approx.s[k]);
    }
    let residual = approx.reconstruct().sub(&a)?.frobenius_norm() / a.frobenius_norm();
    println!("relative reconstruction error {residual:.3e}");
    Ok(())
}
