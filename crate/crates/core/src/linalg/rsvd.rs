use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::ortho::{complete_orthonormal, orthonormalize_columns};
use super::svd::{exact_svd, SvdResult};
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Parameters of the Gaussian range finder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizedSvdConfig {
    pub target_rank: usize,
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
    #[serde(default = "default_power_iterations")]
    pub power_iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_oversampling() -> usize {
    10
}

fn default_power_iterations() -> usize {
    2
}

impl RandomizedSvdConfig {
    pub fn new(target_rank: usize) -> Self {
        RandomizedSvdConfig {
            target_rank,
            oversampling: default_oversampling(),
            power_iterations: default_power_iterations(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_oversampling(mut self, oversampling: usize) -> Self {
        self.oversampling = oversampling;
        self
    }

    pub fn with_power_iterations(mut self, power_iterations: usize) -> Self {
        self.power_iterations = power_iterations;
        self
    }
}

/// Approximates the leading `target_rank` singular triples of `a` by Gaussian
/// range finding with power iterations, followed by an exact SVD of the small
/// projected matrix `Qᵀa`.
pub fn randomized_svd(a: &DenseMatrix, cfg: &RandomizedSvdConfig) -> Result<SvdResult> {
    let (m, n) = a.shape();
    if cfg.target_rank == 0 {
        return Err(Error::Contract {
            op: "randomized_svd",
            detail: "target_rank must be at least 1".into(),
        });
    }
    let sketch = cfg.target_rank + cfg.oversampling;
    if sketch > m.min(n) {
        return Err(Error::dim(
            "randomized_svd",
            format!("target_rank + oversampling <= {}", m.min(n)),
            format!("{} + {} = {sketch}", cfg.target_rank, cfg.oversampling),
        ));
    }
    if !a.is_finite() {
        return Err(Error::Input("randomized_svd: matrix has non-finite entries".into()));
    }
    let full = sketch_svd(a, sketch, cfg.power_iterations, cfg.seed)?;
    Ok(pad_to_rank(full.truncate(cfg.target_rank), cfg.target_rank, m, n))
}

/// Randomized SVD with a sketch of `width` columns, returning every triple the
/// sketch resolves (possibly fewer than `width` on rank-deficient input).
pub(crate) fn sketch_svd(
    a: &DenseMatrix,
    width: usize,
    power_iterations: usize,
    seed: u64,
) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let mut rng = rng_for(seed, &[]);
    let omega = DenseMatrix::from_fn(n, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orth(&a.matmul(&omega)?);
    for _ in 0..power_iterations {
        if q.cols() == 0 {
            break;
        }
        let z = orth(&a.t_matmul(&q)?);
        q = orth(&a.matmul(&z)?);
    }
    if q.cols() == 0 {
        return Ok(SvdResult {
            u: DenseMatrix::zeros(m, 0),
            s: Vec::new(),
            vt: DenseMatrix::zeros(0, n),
        });
    }
    let b = q.t_matmul(a)?;
    let small = exact_svd(&b)?;
    Ok(SvdResult {
        u: q.matmul(&small.u)?,
        s: small.s,
        vt: small.vt,
    })
}

/// Orthonormal basis of the column space, dropping directions that are
/// numerically zero relative to the largest column.
fn orth(y: &DenseMatrix) -> DenseMatrix {
    let scale = y.columns().map(|c| super::matrix::norm2(&c)).fold(0.0, f64::max);
    if scale == 0.0 {
        return DenseMatrix::zeros(y.rows(), 0);
    }
    orthonormalize_columns(y, scale * 1e-12)
}

fn pad_to_rank(mut r: SvdResult, k: usize, m: usize, n: usize) -> SvdResult {
    if r.s.len() >= k {
        return r;
    }
    r.u = complete_orthonormal(&r.u, k);
    let v = complete_orthonormal(&r.vt.transpose(), k);
    r.vt = v.transpose();
    r.s.resize(k, 0.0);
    debug_assert_eq!(r.u.shape(), (m, k));
    debug_assert_eq!(r.vt.shape(), (k, n));
    r
}
