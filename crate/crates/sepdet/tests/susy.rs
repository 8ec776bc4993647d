use proptest::prelude::*;

use sepdet::matcore::{c, real, rel_dev, HermMatrix, SpectralParam, C64};
use sepdet::par::Exec;
use sepdet::schrodinger::Numerics;
use sepdet::susy_index::{self as susy, AProfile, StepShape, XiStep};

fn num() -> Numerics {
    Numerics { radius: 12.0, panels: 48, q: 8 }
}

fn scalar(v: f64) -> HermMatrix {
    HermMatrix::from_real_diag(&[v])
}

fn sp(z: C64) -> SpectralParam {
    SpectralParam::new(z).unwrap()
}

#[test]
fn determinant_depends_only_on_the_endpoints() {
    // a tanh path and a compactly supported polynomial path between the same A±
    let z = sp(real(-1.0));
    let tanh = AProfile::tanh_step(scalar(-1.0), scalar(1.0), &num()).unwrap();
    let bump = AProfile::new(scalar(-1.0), vec![(StepShape::Smooth { center: 0.3, width: 1.5 }, scalar(2.0))], &num()).unwrap();
    let a = susy::det_formula(&tanh, z, Exec::default()).unwrap();
    let b = susy::det_formula(&bump, z, Exec::default()).unwrap();
    assert_eq!(a.rhs, b.rhs);
    assert!(rel_dev(a.lhs_reduced, b.lhs_reduced) < 1e-5, "{} vs {}", a.lhs_reduced, b.lhs_reduced);
    assert!(b.rel_err < 1e-5, "{b:?}");
}

#[test]
fn diagonal_profile_factorizes() {
    let z = sp(c(-1.0, 0.4));
    let scalar_path = AProfile::tanh_step(scalar(-1.0), scalar(1.0), &num()).unwrap();
    let diag = AProfile::tanh_step(HermMatrix::from_real_diag(&[-1.0, 2.0]), HermMatrix::from_real_diag(&[1.0, 2.0]), &num()).unwrap();
    let s = scalar_path.build_susy().unwrap().det_lhs(z).unwrap().value;
    let d = diag.build_susy().unwrap().det_lhs(z).unwrap().value;
    // the constant channel contributes det 1
    assert!(rel_dev(s, d) < 1e-8, "{s} vs {d}");
    let rhs = susy::det_formula_rhs(diag.a_minus(), diag.a_plus(), z).unwrap();
    assert!(rel_dev(d, rhs) < 1e-5);
}

#[test]
fn kernel_trace_matches_nystrom() {
    let p = susy::random_profile(2, 1, &num()).unwrap();
    for z in [real(-1.0), c(0.5, 0.8)] {
        let (o, t) = susy::bs_kernel_trace_check(&p, sp(z), Exec::default()).unwrap();
        assert!((o - t).norm() < 1e-8 * (1.0 + t.norm()), "{o} vs {t}");
    }
}

#[test]
fn xi_h_vanishes_below_zero() {
    let p = AProfile::tanh_step(scalar(-1.0), scalar(1.0), &num()).unwrap();
    let step = XiStep::from_profile(&p).unwrap();
    assert!(susy::xi_h_via_abel(&step, &[-3.0, -0.1, 0.0]).iter().all(|&v| v == 0.0));
    assert!(susy::xi_h_via_boundary(&p, &[-2.0, -0.5], 1e-4, Exec::Serial).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn trace_formula_on_a_matrix_path() {
    let p = susy::random_profile(2, 7, &num()).unwrap();
    for z in [real(-1.0), c(-0.3, 0.6)] {
        let t = susy::trace_formula(&p, sp(z)).unwrap();
        assert!(t.rel_err < 1e-4, "{t:?}");
    }
}

#[test]
fn random_profile_index_matches_kernel_dimensions() {
    for seed in 0..4 {
        let p = susy::random_profile(2, seed, &num()).unwrap();
        let r = susy::fredholm_index(&p).unwrap();
        let (ker, coker) = susy::kernel_dims(&p).unwrap();
        assert_eq!(r.index, ker as i64 - coker as i64, "seed {seed}: {r:?}");
    }
}

#[test]
fn winding_survives_full_turns() {
    // det((A₊ − iε)(A₋ − iε)⁻¹) → (−1)² = 1: both ends of the imaginary-axis
    // path share a branch, but the argument still turns by 2π
    let p = AProfile::tanh_step(HermMatrix::from_real_diag(&[0.3, 0.3]), HermMatrix::from_real_diag(&[-0.3, -0.3]), &num()).unwrap();
    let r = susy::fredholm_index(&p).unwrap();
    assert_eq!(r.index, -2);
    assert!((r.raw.1 + 2.0).abs() < 1e-6, "{r:?}");
    let xa = susy::xi_a(&p, &[0.0, 0.5]).unwrap();
    assert!((xa.boundary[0] + 2.0).abs() < 1e-5 && xa.boundary[1].abs() < 1e-5, "{:?}", xa.boundary);
}

fn diag_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let eig = prop_oneof![-3.0f64..-0.3, 0.3f64..3.0];
    (1usize..=3).prop_flat_map(move |n| (prop::collection::vec(eig.clone(), n), prop::collection::vec(eig.clone(), n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Index = #negative eigenvalues of A₋ − #negative eigenvalues of A₊ for diagonal endpoints.
    #[test]
    fn index_counts_sign_changes((am, ap) in diag_pair()) {
        let coarse = Numerics { radius: 12.0, panels: 24, q: 8 };
        let p = AProfile::tanh_step(HermMatrix::from_real_diag(&am), HermMatrix::from_real_diag(&ap), &coarse).unwrap();
        let neg = |v: &[f64]| v.iter().filter(|&&x| x < 0.0).count() as i64;
        let r = susy::fredholm_index(&p).unwrap();
        prop_assert_eq!(r.index, neg(&am) - neg(&ap));
    }

    #[test]
    fn gz_trace_closed_form((am, ap) in diag_pair(), re in -4.0f64..4.0, im in 0.05f64..3.0) {
        let p = AProfile::tanh_step(HermMatrix::from_real_diag(&am), HermMatrix::from_real_diag(&ap), &Numerics { radius: 4.0, panels: 4, q: 4 }).unwrap();
        let g = susy::gz_trace(&p, sp(C64::new(re, im))).unwrap();
        prop_assert!((g.direct - g.via_xi).norm() < 1e-8 * (1.0 + g.direct.norm()));
    }

    #[test]
    fn determinant_rhs_is_one_on_constant_paths(a in prop::collection::vec(prop_oneof![-3.0f64..-0.2, 0.2f64..3.0], 1..=3), re in -3.0f64..3.0, im in 0.05f64..3.0) {
        let h = HermMatrix::from_real_diag(&a);
        let v = susy::det_formula_rhs(&h, &h, sp(C64::new(re, im))).unwrap();
        prop_assert!((v - 1.0).norm() < 1e-10);
    }
}
