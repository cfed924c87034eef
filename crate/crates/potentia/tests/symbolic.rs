//! Operator symbol evaluation and the structural checks, pinned against
//! independent oracles: naive term-by-term summation, closed-form inverses,
//! and explicit null spaces at hand-picked directions.

use nalgebra::DMatrix;
use num_complex::Complex;
use potentia::symbolic::{
    annihilator_pair_check, catalog, HomogeneousOperator, MultiIndex, SphereSample,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex<f64>;
type Op = HomogeneousOperator<f64>;

fn c(re: f64) -> C {
    Complex::new(re, 0.0)
}

fn sphere(dim: usize, count: usize) -> SphereSample<f64> {
    SphereSample::standard(dim, count).unwrap()
}

/// Independent oracle: evaluate the symbol by raw loops over exponent
/// vectors, no shared code with the library path.
fn naive_symbol(terms: &[(Vec<u32>, DMatrix<C>)], xi: &[f64]) -> DMatrix<C> {
    let (rows, cols) = (terms[0].1.nrows(), terms[0].1.ncols());
    let mut acc = DMatrix::<C>::zeros(rows, cols);
    for (alpha, mat) in terms {
        let mut factor = 1.0;
        for (axis, &e) in alpha.iter().enumerate() {
            for _ in 0..e {
                factor *= xi[axis];
            }
        }
        for r in 0..rows {
            for col in 0..cols {
                acc[(r, col)] += mat[(r, col)] * c(factor);
            }
        }
    }
    acc
}

fn random_operator(rng: &mut ChaCha8Rng, dim: usize, order: u32, e_dim: usize, f_dim: usize, n_terms: usize) -> (Op, Vec<(Vec<u32>, DMatrix<C>)>) {
    let all = MultiIndex::all_of_order(dim, order);
    let mut raw = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    while raw.len() < n_terms.min(all.len()) {
        let pick = rng.random_range(0..all.len());
        if !used.insert(pick) {
            continue;
        }
        let mat = DMatrix::from_fn(f_dim, e_dim, |_, _| {
            Complex::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        });
        raw.push((all[pick].exponents().to_vec(), mat));
    }
    let op = HomogeneousOperator::new(
        dim,
        order,
        e_dim,
        f_dim,
        raw.iter().map(|(a, m)| (MultiIndex::new(a.clone()), m.clone())),
    )
    .unwrap();
    (op, raw)
}

#[test]
fn gradient_symbol_is_the_direction_column() {
    let grad = catalog::gradient::<f64>(2);
    let a = grad.eval_symbol(&[1.0, 0.0]).unwrap();
    assert_eq!(a.nrows(), 2);
    assert_eq!(a.ncols(), 1);
    assert_eq!(a[(0, 0)], c(1.0));
    assert_eq!(a[(1, 0)], c(0.0));
}

#[test]
fn laplacian_symbol_is_squared_length() {
    let lap = catalog::laplacian::<f64>(2);
    let a = lap.eval_symbol(&[3.0, 4.0]).unwrap();
    assert_eq!(a[(0, 0)], c(25.0));
}

#[test]
fn random_three_term_symbol_matches_naive_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..32 {
        let dim = 2 + (case % 2);
        let (op, raw) = random_operator(&mut rng, dim, 2, 2, 3, 3);
        let xi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let fast = op.eval_symbol(&xi).unwrap();
        let slow = naive_symbol(&raw, &xi);
        for r in 0..3 {
            for col in 0..2 {
                assert!((fast[(r, col)] - slow[(r, col)]).norm() <= 1e-14);
            }
        }
    }
}

#[test]
fn gradient_margin_is_exactly_one() {
    for dim in 2..=3 {
        let grad = catalog::gradient::<f64>(dim);
        let report = grad.ellipticity_margin(&sphere(dim, 128));
        assert!(!report.structurally_non_elliptic);
        assert_eq!(report.samples, 128);
        assert!((report.margin - 1.0).abs() <= 1e-12, "margin {}", report.margin);
    }
}

#[test]
fn laplacian_margin_is_one_on_unit_directions() {
    let lap = catalog::laplacian::<f64>(2);
    let report = lap.ellipticity_margin(&sphere(2, 64));
    assert!((report.margin - 1.0).abs() <= 1e-12);
}

#[test]
fn zero_coefficients_give_zero_margin() {
    let zero = HomogeneousOperator::<f64>::new(
        2,
        1,
        1,
        1,
        [(MultiIndex::new(vec![1, 0]), DMatrix::<C>::zeros(1, 1))],
    )
    .unwrap();
    let report = zero.ellipticity_margin(&sphere(2, 32));
    assert_eq!(report.margin, 0.0);
}

#[test]
fn wide_operators_are_structurally_non_elliptic() {
    let div = catalog::divergence::<f64>(3);
    let report = div.ellipticity_margin(&sphere(3, 32));
    assert!(report.structurally_non_elliptic);
    assert_eq!(report.margin, 0.0);
}

#[test]
fn gradient_cancels_exactly_when_dim_is_at_least_two() {
    assert_eq!(catalog::gradient::<f64>(2).canceling_defect(&sphere(2, 64)), 0);
    assert_eq!(catalog::gradient::<f64>(3).canceling_defect(&sphere(3, 64)), 0);
    assert_eq!(catalog::gradient::<f64>(1).canceling_defect(&sphere(1, 16)), 1);
}

#[test]
fn scalar_laplacian_does_not_cancel() {
    // oracle: A(xi) = |xi|^2 is a nonzero scalar at every sampled xi, so each
    // range is all of C and the intersection stays one-dimensional
    let lap = catalog::laplacian::<f64>(2);
    assert_eq!(lap.canceling_defect(&sphere(2, 64)), 1);
}

#[test]
fn divergence_is_cocanceling_in_dim_three() {
    let div = catalog::divergence::<f64>(3);
    assert_eq!(div.cocanceling_defect(&sphere(3, 64)), 0);
}

#[test]
fn zero_operator_has_maximal_cocanceling_defect() {
    let zero = HomogeneousOperator::<f64>::new(
        2,
        1,
        3,
        2,
        [(MultiIndex::new(vec![1, 0]), DMatrix::<C>::zeros(2, 3))],
    )
    .unwrap();
    assert_eq!(zero.cocanceling_defect(&sphere(2, 32)), 3);
}

#[test]
fn curl_rows_kernel_is_the_direction_itself() {
    // oracle: at xi=(1,0) the single row is [0, 1] with kernel span{e1}; at
    // xi=(0,1) it is [-1, 0] with kernel span{e2}; the intersection is {0}
    let rows = catalog::curl_rows::<f64>(2);
    let at_e1 = rows.eval_symbol(&[1.0, 0.0]).unwrap();
    assert_eq!(at_e1[(0, 0)], c(0.0));
    assert_eq!(at_e1[(0, 1)], c(1.0));
    let at_e2 = rows.eval_symbol(&[0.0, 1.0]).unwrap();
    assert_eq!(at_e2[(0, 0)], c(-1.0));
    assert_eq!(at_e2[(0, 1)], c(0.0));
    assert_eq!(rows.cocanceling_defect(&sphere(2, 64)), 0);
}

#[test]
fn gradient_and_curl_rows_form_an_annihilator_pair() {
    for dim in 2..=3 {
        let report = annihilator_pair_check(
            &catalog::gradient::<f64>(dim),
            &catalog::curl_rows::<f64>(dim),
            &sphere(dim, 64),
        )
        .unwrap();
        assert!(report.composition_residual <= 1e-12, "residual {}", report.composition_residual);
        assert_eq!(report.kernel_match_defect, 0);
        assert!(report.is_valid_pair());
    }
}

#[test]
fn gradient_and_divergence_fail_the_pairing() {
    let report = annihilator_pair_check(
        &catalog::gradient::<f64>(2),
        &catalog::divergence::<f64>(2),
        &sphere(2, 64),
    )
    .unwrap();
    // div(grad) has symbol |xi|^2 = 1 on unit directions
    assert!((report.composition_residual - 1.0).abs() <= 1e-12);
    assert!(!report.is_valid_pair());
}

#[test]
fn zero_annihilator_composes_to_zero_but_mismatches_kernels() {
    let grad = catalog::gradient::<f64>(2);
    let zero_l = HomogeneousOperator::<f64>::new(
        2,
        1,
        2,
        1,
        [(MultiIndex::new(vec![1, 0]), DMatrix::<C>::zeros(1, 2))],
    )
    .unwrap();
    let report = annihilator_pair_check(&grad, &zero_l, &sphere(2, 32)).unwrap();
    assert_eq!(report.composition_residual, 0.0);
    // ker of the zero row is 2-dimensional, rank of the gradient symbol is 1
    assert_eq!(report.kernel_match_defect, 1);
    assert!(!report.is_valid_pair());
}

#[test]
fn kernel_symbol_of_gradient_is_normalized_transpose() {
    let grad = catalog::gradient::<f64>(2);
    let h = grad.kernel_symbol(&[0.0, 1.0]).unwrap();
    assert_eq!(h.nrows(), 1);
    assert_eq!(h.ncols(), 2);
    assert!((h[(0, 0)] - c(0.0)).norm() <= 1e-14);
    assert!((h[(0, 1)] - c(1.0)).norm() <= 1e-14);
}

#[test]
fn kernel_symbol_scales_with_inverse_order_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lap = catalog::laplacian::<f64>(2);
    for _ in 0..16 {
        let xi: Vec<f64> = (0..2).map(|_| rng.random_range(0.2..1.5)).collect();
        let doubled: Vec<f64> = xi.iter().map(|x| 2.0 * x).collect();
        let h = lap.kernel_symbol(&xi).unwrap();
        let h2 = lap.kernel_symbol(&doubled).unwrap();
        let scale = 0.25; // 2^{-m} with m = 2
        for r in 0..h.nrows() {
            for col in 0..h.ncols() {
                assert!((h2[(r, col)] - h[(r, col)] * c(scale)).norm() <= 1e-12);
            }
        }
    }
}

#[test]
fn kernel_symbol_left_inverts_the_symbol() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (op, _) = random_operator(&mut rng, 2, 1, 2, 3, 2);
    let circle = sphere(2, 64);
    for xi in circle.directions() {
        let h = op.kernel_symbol(xi).unwrap();
        let a = op.eval_symbol(xi).unwrap();
        let prod = &h * &a;
        for r in 0..2 {
            for col in 0..2 {
                let expect = if r == col { 1.0 } else { 0.0 };
                assert!((prod[(r, col)] - c(expect)).norm() <= 1e-12);
            }
        }
    }
}

#[test]
fn kernel_symbol_rejects_origin_and_singular_symbols() {
    let grad = catalog::gradient::<f64>(2);
    assert!(matches!(grad.kernel_symbol(&[0.0, 0.0]), Err(potentia::Error::Domain(_))));

    let zero = HomogeneousOperator::<f64>::new(
        2,
        1,
        1,
        1,
        [(MultiIndex::new(vec![1, 0]), DMatrix::<C>::zeros(1, 1))],
    )
    .unwrap();
    assert!(matches!(zero.kernel_symbol(&[1.0, 0.0]), Err(potentia::Error::Singular(_))));
}

#[test]
fn kernel_symbol_succeeds_exactly_where_margin_is_positive() {
    let circle = sphere(2, 64);
    let cases: Vec<(Op, bool)> = vec![
        (catalog::gradient::<f64>(2), true),
        (catalog::laplacian::<f64>(2), true),
        (
            HomogeneousOperator::new(
                2,
                1,
                1,
                1,
                [(MultiIndex::new(vec![1, 0]), DMatrix::<C>::from_element(1, 1, c(1.0)))],
            )
            .unwrap(),
            // symbol xi_1 vanishes on the vertical directions
            false,
        ),
    ];
    for (op, expect_elliptic) in cases {
        let margin_positive = op.ellipticity_margin(&circle).margin > 1e-10;
        let all_invertible = circle.directions().all(|xi| op.kernel_symbol(xi).is_ok());
        assert_eq!(margin_positive, expect_elliptic);
        assert_eq!(all_invertible, expect_elliptic);
    }
}

#[test]
fn constructor_rejects_malformed_operators() {
    let ok_term = (MultiIndex::new(vec![1, 0]), DMatrix::<C>::zeros(1, 1));
    assert!(Op::new(2, 1, 1, 1, [] as [(MultiIndex, DMatrix<C>); 0]).is_err());
    assert!(Op::new(2, 0, 1, 1, [ok_term.clone()]).is_err());
    assert!(Op::new(
        2,
        1,
        1,
        1,
        [(MultiIndex::new(vec![1, 1]), DMatrix::<C>::zeros(1, 1))]
    )
    .is_err());
    assert!(Op::new(
        2,
        1,
        1,
        1,
        [(MultiIndex::new(vec![1]), DMatrix::<C>::zeros(1, 1))]
    )
    .is_err());
    assert!(Op::new(
        2,
        1,
        2,
        1,
        [(MultiIndex::new(vec![1, 0]), DMatrix::<C>::zeros(1, 1))]
    )
    .is_err());
}

#[test]
fn sphere_samples_are_unit_and_sized() {
    for dim in 1..=3 {
        let s = SphereSample::<f64>::default_for_dim(dim).unwrap();
        assert!(s.count() >= 16);
        for d in s.directions() {
            let len: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((len - 1.0).abs() <= 1e-12);
        }
    }
    assert!(SphereSample::<f64>::standard(2, 8).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Scaling a direction by a power of two scales the symbol by exactly
    /// 2^{km}: every step is an exact float operation.
    #[test]
    fn symbol_homogeneity_is_exact_for_binary_scales(
        seed in 0u64..1000,
        k in -3i32..=3,
        order in 1u32..=3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (op, _) = random_operator(&mut rng, 2, order, 2, 2, 2);
        let xi: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = (2.0f64).powi(k);
        let scaled: Vec<f64> = xi.iter().map(|x| t * x).collect();
        let lhs = op.eval_symbol(&scaled).unwrap();
        let rhs = op.eval_symbol(&xi).unwrap() * Complex::new(t.powi(order as i32), 0.0);
        for r in 0..2 {
            for col in 0..2 {
                prop_assert_eq!(lhs[(r, col)], rhs[(r, col)]);
            }
        }
    }

    /// General positive scales agree to relative rounding error.
    #[test]
    fn symbol_homogeneity_holds_for_general_scales(
        seed in 0u64..1000,
        t in 0.1f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (op, _) = random_operator(&mut rng, 2, 2, 2, 2, 3);
        let xi: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let scaled: Vec<f64> = xi.iter().map(|x| t * x).collect();
        let lhs = op.eval_symbol(&scaled).unwrap();
        let rhs = op.eval_symbol(&xi).unwrap() * Complex::new(t * t, 0.0);
        for r in 0..2 {
            for col in 0..2 {
                let denom = 1.0f64.max(rhs[(r, col)].norm());
                prop_assert!((lhs[(r, col)] - rhs[(r, col)]).norm() <= 1e-12 * denom);
            }
        }
    }

    /// Growing the sample can only shrink the range intersection.
    #[test]
    fn canceling_defect_is_monotone_in_the_sample(
        seed in 0u64..500,
        small in 16usize..40,
        extra in 0usize..60,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (op, _) = random_operator(&mut rng, 2, 1, 2, 3, 2);
        let big_sample = SphereSample::<f64>::standard(2, small + extra + 16).unwrap();
        let small_sample = big_sample.prefix(small).unwrap();
        let d_small = op.canceling_defect(&small_sample);
        let d_big = op.canceling_defect(&big_sample);
        prop_assert!(d_big <= d_small);
    }
}
