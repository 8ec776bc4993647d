use proptest::prelude::*;

use sepdet::matcore::{
    branch_sqrt_shift, det, det_one_minus, eig_count_below, eye, gz_apply, herm_eig, max_abs, rel_dev, rel_dev_mat,
    sqrt_imnonneg, CMatrix, HermMatrix, SpectralParam, C64,
};

fn cmatrix(r: usize, c: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * r * c).prop_map(move |v| CMatrix::from_fn(r, c, |i, j| C64::new(v[2 * (i * c + j)], v[2 * (i * c + j) + 1])))
}

fn hermitian() -> impl Strategy<Value = HermMatrix> {
    (1usize..=4).prop_flat_map(|n| cmatrix(n, n)).prop_map(|m| HermMatrix::new((&m + m.adjoint()) * C64::new(1.5, 0.0)).unwrap())
}

fn square_pair() -> impl Strategy<Value = (CMatrix, CMatrix)> {
    (1usize..=5).prop_flat_map(|n| (cmatrix(n, n), cmatrix(n, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifted_root_squares_back(a in hermitian(), s in 0.05f64..20.0) {
        let z = SpectralParam::new(C64::new(-s, 0.0)).unwrap();
        let r = branch_sqrt_shift(&a, &z).unwrap();
        let n = a.dim();
        let want = a.matrix() * a.matrix() + eye(n) * C64::new(s, 0.0);
        prop_assert!(rel_dev_mat(&(&r * &r), &want) < 1e-10);
    }

    #[test]
    fn gz_is_odd(a in hermitian(), re in -3.0f64..3.0, im in 0.1f64..3.0) {
        let z = SpectralParam::new(C64::new(re, im)).unwrap();
        let neg = HermMatrix::new(-a.matrix()).unwrap();
        let sum = gz_apply(&a, &z).unwrap() + gz_apply(&neg, &z).unwrap();
        prop_assert!(max_abs(&sum) < 1e-12);
    }

    #[test]
    fn det_one_minus_is_multiplicative((m, n) in square_pair()) {
        let k = m.nrows();
        let prod = (eye(k) - &m) * (eye(k) - &n);
        let lhs = det_one_minus(&(eye(k) - prod)).unwrap();
        let rhs = det_one_minus(&m).unwrap().value * det_one_minus(&n).unwrap().value;
        prop_assert!(rel_dev(lhs.value, rhs) < 1e-10);
    }

    #[test]
    fn sylvester_identity((a, b) in (1usize..=5, 1usize..=5).prop_flat_map(|(n, m)| (cmatrix(n, m), cmatrix(m, n)))) {
        let l = det_one_minus(&(&a * &b)).unwrap().value;
        let r = det_one_minus(&(&b * &a)).unwrap().value;
        prop_assert!(rel_dev(l, r) < 1e-10);
    }

    #[test]
    fn log_and_phase_reconstruct_the_value(m in (1usize..=6).prop_flat_map(|n| cmatrix(n, n))) {
        let d = det(&m).unwrap();
        let from_parts = C64::from_polar(d.ln_abs.exp(), d.phase);
        prop_assert!((from_parts - d.value).norm() <= 1e-12 * d.value.norm().max(1e-300));
        prop_assert!(d.phase > -std::f64::consts::PI - 1e-15 && d.phase <= std::f64::consts::PI);
    }

    #[test]
    fn scalar_root_branch(re in -10.0f64..10.0, im in -10.0f64..10.0) {
        let w = C64::new(re, im);
        let r = sqrt_imnonneg(w);
        prop_assert!(r.im >= 0.0);
        prop_assert!((r * r - w).norm() < 1e-12 * (1.0 + w.norm()));
    }

    #[test]
    fn eigen_counts_are_monotone(a in hermitian(), l1 in -5.0f64..5.0, dl in 0.0f64..5.0) {
        let lo = eig_count_below(&a, l1).unwrap();
        let hi = eig_count_below(&a, l1 + dl).unwrap();
        prop_assert!(lo <= hi && hi <= a.dim());
        let back = herm_eig(&a).unwrap().apply(|v| C64::new(v, 0.0));
        prop_assert!(rel_dev_mat(&back, a.matrix()) < 1e-12);
    }
}

#[test]
fn asymmetric_input_is_rejected_not_symmetrized() {
    let m = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    assert!(HermMatrix::new(m).is_err());
}
