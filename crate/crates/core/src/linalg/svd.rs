use super::matrix::{dot, norm2, DenseMatrix};
use super::ortho::{complete_orthonormal, orthogonalize_against};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `a = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows × k` with orthonormal columns.
    pub u: DenseMatrix,
    /// Non-negative, non-increasing.
    pub s: Vec<f64>,
    /// `k × cols` with orthonormal rows.
    pub vt: DenseMatrix,
}

impl SvdResult {
    /// `u · diag(s) · vt`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.s.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformant")
    }

    /// Keeps the leading `k` singular triples.
    pub fn truncate(mut self, k: usize) -> Self {
        if k < self.s.len() {
            self.s.truncate(k);
            self.u = self.u.leading_columns(k);
            self.vt = DenseMatrix::from_fn(k, self.vt.cols(), |i, j| self.vt[(i, j)]);
        }
        self
    }
}

/// Full thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Jacobi is used for its high relative accuracy on small singular values; the
/// matrices handled here are activation samples with at most a few hundred rows
/// or columns.
pub fn exact_svd(a: &DenseMatrix) -> Result<SvdResult> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::dim("exact_svd", "non-empty matrix", format!("{:?}", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::Input("exact_svd: matrix has non-finite entries".into()));
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        })
    }
}

fn jacobi_tall(a: &DenseMatrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = a.columns().collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m as f64).sqrt();
    // Columns this small are rounding noise of a rank-deficient input; rotating
    // them never settles, and they end up below the negligible cut anyway.
    let frob = a.frobenius_norm();
    let noise = (1e-13 * frob) * (1e-13 * frob);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || alpha <= noise || beta <= noise {
                    continue;
                }
                if gamma.abs() <= tol * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical {
            op: "exact_svd",
            rows: m,
            cols: n,
            detail: format!("Jacobi sweeps did not converge within {MAX_SWEEPS} sweeps"),
        });
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let s_max = norms[order[0]];
    let negligible = s_max * 1e-12;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut needs_completion = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        let mut col = cols[j].clone();
        if norms[j] > negligible && norms[j] > 0.0 {
            col.iter_mut().for_each(|x| *x /= norms[j]);
            if norms[j] <= s_max * 1e-6 {
                orthogonalize_against(&mut col, &u_cols);
                let nn = norm2(&col);
                if nn < 0.5 {
                    needs_completion.push(k);
                    col = vec![0.0; m];
                } else {
                    col.iter_mut().for_each(|x| *x /= nn);
                }
            }
        } else {
            needs_completion.push(k);
            col = vec![0.0; m];
        }
        u_cols.push(col);
    }
    if !needs_completion.is_empty() {
        let good: Vec<Vec<f64>> = u_cols
            .iter()
            .enumerate()
            .filter(|(k, _)| !needs_completion.contains(k))
            .map(|(_, c)| c.clone())
            .collect();
        let good_m = DenseMatrix::from_columns(m, &good);
        let full = complete_orthonormal(&good_m, good.len() + needs_completion.len());
        for (slot, &k) in needs_completion.iter().enumerate() {
            u_cols[k] = full.column(good.len() + slot);
        }
    }

    let u = DenseMatrix::from_columns(m, &u_cols);
    let vt = DenseMatrix::from_fn(n, n, |i, j| v[order[i]][j]);
    Ok(SvdResult { u, s, vt })
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ortho::orthonormality_error;

    #[test]
    fn identity() {
        let r = exact_svd(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0]);
    }

    #[test]
    fn diagonal_hand_case() {
        let r = exact_svd(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert!((r.s[0] - 3.0).abs() < 1e-15 && (r.s[1] - 1.0).abs() < 1e-15);
        assert!((r.u[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!(r.u[(1, 0)].abs() < 1e-15);
        assert!((r.u[(1, 1)].abs() - 1.0).abs() < 1e-15);
        assert!(r.u[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn diagonal_unsorted_input_is_sorted() {
        let r = exact_svd(&DenseMatrix::diag(&[1.0, 5.0, 2.0])).unwrap();
        assert_eq!(r.s, vec![5.0, 2.0, 1.0]);
        assert!(r.reconstruct().max_abs_diff(&DenseMatrix::diag(&[1.0, 5.0, 2.0])) < 1e-15);
    }

    #[test]
    fn zero_matrix_has_orthonormal_factors() {
        let r = exact_svd(&DenseMatrix::zeros(4, 3)).unwrap();
        assert_eq!(r.s, vec![0.0; 3]);
        assert!(orthonormality_error(&r.u) < 1e-14);
        assert!(orthonormality_error(&r.vt.transpose()) < 1e-14);
    }

    #[test]
    fn wide_matrix_goes_through_transpose() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.5, 0.0, 2.0]]);
        let r = exact_svd(&a).unwrap();
        assert_eq!(r.u.shape(), (2, 2));
        assert_eq!(r.vt.shape(), (2, 4));
        assert!(r.reconstruct().max_abs_diff(&a) < 1e-13);
    }

    #[test]
    fn rank_deficient_keeps_orthonormal_u() {
        // rank 1 outer product
        let a = DenseMatrix::from_fn(5, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
        let r = exact_svd(&a).unwrap();
        assert!(orthonormality_error(&r.u) < 1e-10);
        assert!(r.s[1] < 1e-12 * r.s[0]);
        assert!(r.reconstruct().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut a = DenseMatrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(exact_svd(&a).is_err());
        assert!(exact_svd(&DenseMatrix::zeros(0, 3)).is_err());
    }
}
