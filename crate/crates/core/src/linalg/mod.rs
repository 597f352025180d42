//! Dense linear algebra: matrices, exact and randomized SVD, Gram–Schmidt and
//! orthogonal-complement projection.
//!
//! All functions are pure; none of them hold shared state.

mod matrix;
mod ortho;
mod rsvd;
mod svd;

pub use matrix::{dot, norm2, DenseMatrix};
pub use ortho::{
    orthonormality_error, orthonormalize_columns, project_onto_complement,
    project_rows_onto_complement, DEFAULT_DROP_TOL, ORTHONORMAL_TOL,
};
pub use rsvd::{randomized_svd, RandomizedSvdConfig};
pub use svd::{exact_svd, SvdResult};

pub(crate) use ortho::orthogonalize_against;
pub(crate) use rsvd::sketch_svd;
