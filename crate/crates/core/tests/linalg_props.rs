use nalgebra::DMatrix;
use proptest::prelude::*;

use fedprotip::linalg::{
    exact_svd, orthonormality_error, orthonormalize_columns, project_onto_complement,
    project_rows_onto_complement, randomized_svd, DenseMatrix, RandomizedSvdConfig,
};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c)
            .prop_map(move |data| DenseMatrix::from_vec(r, c, data).unwrap())
    })
}

/// A `d × k` orthonormal basis from random columns.
fn basis(d: usize, k: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, d * k)
        .prop_map(move |data| orthonormalize_columns(&DenseMatrix::from_vec(d, k, data).unwrap(), 1e-6))
}

fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

proptest! {
    #[test]
    fn svd_singular_values_match_nalgebra(a in matrix(12, 12)) {
        let ours = exact_svd(&a).unwrap();
        let mut oracle: Vec<f64> = to_nalgebra(&a).singular_values().iter().copied().collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        let scale = oracle[0].max(1.0);
        for (s, o) in ours.s.iter().zip(&oracle) {
            prop_assert!((s - o).abs() <= 1e-10 * scale, "{s} vs {o}");
        }
        prop_assert!(ours.reconstruct().max_abs_diff(&a) <= 1e-10 * scale);
        prop_assert!(orthonormality_error(&ours.u) <= 1e-10);
    }

    #[test]
    fn orthonormalized_columns_span_the_input(m in matrix(10, 6)) {
        let q = orthonormalize_columns(&m, 1e-8);
        prop_assert!(q.cols() <= m.cols());
        if q.cols() > 0 {
            prop_assert!(orthonormality_error(&q) <= 1e-10);
        }
        // Whatever was dropped was already (numerically) inside span(Q).
        let residual = project_onto_complement(&m, &q).unwrap();
        prop_assert!(residual.frobenius_norm() <= 1e-6 * m.frobenius_norm().max(1.0));
    }

    #[test]
    fn projection_is_idempotent_and_non_expansive(
        (phi, g) in (2usize..10).prop_flat_map(|d| (1..=d).prop_flat_map(move |k| (
            basis(d, k),
            prop::collection::vec(-3.0f64..3.0, d * 4).prop_map(move |v| DenseMatrix::from_vec(d, 4, v).unwrap()),
        )))
    ) {
        let once = project_onto_complement(&g, &phi).unwrap();
        let twice = project_onto_complement(&once, &phi).unwrap();
        prop_assert!(twice.max_abs_diff(&once) <= 1e-12 * g.frobenius_norm().max(1.0));
        prop_assert!(once.frobenius_norm() <= g.frobenius_norm());
        // The projected part is orthogonal to every basis column.
        prop_assert!(phi.t_matmul(&once).unwrap().frobenius_norm() <= 1e-12 * g.frobenius_norm().max(1.0));
    }

    #[test]
    fn row_projection_removes_basis_response(
        (phi, g) in (2usize..9).prop_flat_map(|d| (basis(d, 1 + d / 2), Just(d)))
            .prop_flat_map(|(phi, d)| (Just(phi), prop::collection::vec(-2.0f64..2.0, 3 * d)
                .prop_map(move |v| DenseMatrix::from_vec(3, d, v).unwrap())))
    ) {
        let p = project_rows_onto_complement(&g, &phi).unwrap();
        prop_assert!(p.matmul(&phi).unwrap().frobenius_norm() <= 1e-12 * g.frobenius_norm().max(1.0));
        prop_assert!(p.frobenius_norm() <= g.frobenius_norm());
        let via_columns = project_onto_complement(&g.transpose(), &phi).unwrap().transpose();
        prop_assert!(p.max_abs_diff(&via_columns) <= 1e-12);
    }
}

#[test]
fn empty_basis_projection_is_bit_exact() {
    let g = DenseMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) / (j as f64 + 0.7));
    let empty = DenseMatrix::zeros(4, 0);
    assert!(project_rows_onto_complement(&g, &empty).unwrap().bit_eq(&g));
    assert!(project_onto_complement(&g.transpose(), &DenseMatrix::zeros(3, 0))
        .unwrap()
        .bit_eq(&g.transpose()));
}

#[test]
fn randomized_svd_recovers_exact_low_rank_factorization() {
    let u = DenseMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
    let v = DenseMatrix::from_fn(3, 25, |i, j| ((i * 5 + j * 2) % 7) as f64 - 3.0);
    let a = u.matmul(&v).unwrap();
    let approx = randomized_svd(&a, &RandomizedSvdConfig::new(3).with_seed(9)).unwrap();
    let exact = exact_svd(&a).unwrap();
    for k in 0..3 {
        assert!((approx.s[k] - exact.s[k]).abs() <= 1e-9 * exact.s[0]);
    }
    assert!(approx.reconstruct().max_abs_diff(&a) <= 1e-9 * exact.s[0]);
}
