use super::matrix::{dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

/// Tolerance on `‖ΦᵀΦ − I‖_max` accepted as "orthonormal".
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Default residual-norm threshold below which a column is considered redundant.
pub const DEFAULT_DROP_TOL: f64 = 1e-8;

/// Largest deviation of `mᵀm` from the identity.
pub fn orthonormality_error(m: &DenseMatrix) -> f64 {
    if m.cols() == 0 {
        return 0.0;
    }
    let gram = m.t_matmul(m).expect("square gram");
    gram.max_abs_diff(&DenseMatrix::identity(m.cols()))
}

fn check_basis(op: &'static str, basis: &DenseMatrix, rows: usize) -> Result<()> {
    if basis.rows() != rows {
        return Err(Error::dim(
            op,
            format!("basis with {rows} rows"),
            format!("basis with {} rows", basis.rows()),
        ));
    }
    let err = orthonormality_error(basis);
    if err > ORTHONORMAL_TOL {
        return Err(Error::Contract {
            op,
            detail: format!("basis columns not orthonormal (‖ΦᵀΦ − I‖_max = {err:.3e})"),
        });
    }
    Ok(())
}

/// Returns `g − Φ(Φᵀg)`: the part of each column of `g` orthogonal to span(Φ).
///
/// An empty basis (zero columns) returns a bit-exact copy of `g` without touching
/// any floating-point arithmetic; a basis spanning the whole space returns exact
/// zeros.
pub fn project_onto_complement(g: &DenseMatrix, basis: &DenseMatrix) -> Result<DenseMatrix> {
    if basis.cols() == 0 {
        return Ok(g.clone());
    }
    check_basis("project_onto_complement", basis, g.rows())?;
    if basis.cols() == basis.rows() {
        return Ok(DenseMatrix::zeros(g.rows(), g.cols()));
    }
    let coeffs = basis.t_matmul(g)?;
    g.sub(&basis.matmul(&coeffs)?)
}

/// Row-space counterpart of [`project_onto_complement`]: returns `g − (gΦ)Φᵀ`.
///
/// Weight gradients are stored `out × in`, while feature bases live in the input
/// space, so gradient projection acts on rows.
pub fn project_rows_onto_complement(g: &DenseMatrix, basis: &DenseMatrix) -> Result<DenseMatrix> {
    if basis.cols() == 0 {
        return Ok(g.clone());
    }
    check_basis("project_rows_onto_complement", basis, g.cols())?;
    if basis.cols() == basis.rows() {
        return Ok(DenseMatrix::zeros(g.rows(), g.cols()));
    }
    let coeffs = g.matmul(basis)?;
    g.sub(&coeffs.matmul(&basis.transpose())?)
}

/// Removes from `v` its components along the given orthonormal columns, twice
/// (classical "twice is enough" re-orthogonalization).
pub(crate) fn orthogonalize_against(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            for (x, qi) in v.iter_mut().zip(q) {
                *x -= c * qi;
            }
        }
    }
}

/// Modified Gram–Schmidt with re-orthogonalization. Columns whose residual norm
/// falls below `drop_tol` are dropped; the survivors are unit-normalized.
pub fn orthonormalize_columns(m: &DenseMatrix, drop_tol: f64) -> DenseMatrix {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(m.cols());
    for mut v in m.columns() {
        orthogonalize_against(&mut v, &kept);
        let n = norm2(&v);
        if n < drop_tol || !n.is_finite() {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        kept.push(v);
    }
    DenseMatrix::from_columns(m.rows(), &kept)
}

/// Extends orthonormal columns `q` to `target` orthonormal columns using
/// standard basis vectors as candidates.
pub(crate) fn complete_orthonormal(q: &DenseMatrix, target: usize) -> DenseMatrix {
    let d = q.rows();
    let mut cols: Vec<Vec<f64>> = q.columns().collect();
    let mut candidate = 0;
    while cols.len() < target.min(d) && candidate < d {
        let mut e = vec![0.0; d];
        e[candidate] = 1.0;
        candidate += 1;
        orthogonalize_against(&mut e, &cols);
        let n = norm2(&e);
        if n > 1e-6 {
            e.iter_mut().for_each(|x| *x /= n);
            cols.push(e);
        }
    }
    DenseMatrix::from_columns(d, &cols)
}
