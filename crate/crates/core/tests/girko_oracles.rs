mod common;

use circlaw::dyson::{solve, SolveOptions, VarianceProfile};
use circlaw::ensemble::{hermitize, EnsembleConfig, EntryLaw};
use circlaw::girko::{
    girko_identity, hermitized_logdet, im_m_integral, log_potential, master_formula_audit, tail_integral,
    v1_integral_numeric, GirkoGrid, MasterOptions, TestFunction,
};
use circlaw::linalg::{hermitian_eigenvalues, ComplexMatrix};
use common::seeded_complex;
use num_complex::Complex64;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn fixed_diagonal() -> ComplexMatrix {
    let d = [c(0.2, 0.0), c(-0.1, 0.3), c(0.4, 0.0)];
    ComplexMatrix::from_fn(3, 3, |i, j| if i == j { d[i] } else { c(0.0, 0.0) })
}

#[test]
fn log_transform_identity_converges_at_second_order() {
    let x = fixed_diagonal();
    let f = TestFunction::new(c(0.0, 0.0), 0.0, 3).unwrap();
    let fine = girko_identity(&x, &f, &GirkoGrid::new(&f, 0.01).unwrap()).unwrap();
    assert!(fine.residual <= 1e-3, "{fine:?}");
    assert!(fine.max_logdet_mismatch <= 1e-9);
    let coarse = girko_identity(&x, &f, &GirkoGrid::new(&f, 0.02).unwrap()).unwrap();
    let order = (coarse.residual / fine.residual).log2();
    assert!(order > 1.5 && order < 2.5, "observed order {order}: {} / {}", coarse.residual, fine.residual);
}

#[test]
fn identity_without_eigenvalues_in_the_support() {
    let d = [c(3.0, 0.0), c(0.0, 4.0), c(-5.0, 1.0)];
    let x = ComplexMatrix::from_fn(3, 3, |i, j| if i == j { d[i] } else { c(0.0, 0.0) });
    let f = TestFunction::new(c(0.0, 0.0), 0.0, 3).unwrap();
    let mut last = f64::INFINITY;
    for h in [0.04, 0.02, 0.01] {
        let r = girko_identity(&x, &f, &GirkoGrid::new(&f, h).unwrap()).unwrap();
        assert_eq!(r.lhs, 0.0);
        // log|det| is harmonic on the support: only quadrature error remains
        assert!(r.residual <= 2.0 * r.error_estimate, "{r:?}");
        assert!(r.residual < 0.5 * last, "{r:?}");
        last = r.residual;
    }
}

#[test]
fn identity_on_a_random_matrix() {
    let x = seeded_complex(8, 3).scaled(Complex64::new(1.0 / 8f64.sqrt(), 0.0));
    let f = TestFunction::new(c(0.1, 0.1), 0.0, 8).unwrap();
    let r = girko_identity(&x, &f, &GirkoGrid::new(&f, 0.01).unwrap()).unwrap();
    assert!(r.residual <= 1e-3, "{r:?}");
}

#[test]
fn hermitized_logdet_two_sides() {
    let n = 50;
    let x = seeded_complex(n, 11).scaled(Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    let r = hermitized_logdet(&x, c(0.3, 0.0), 1e3).unwrap();
    assert!(r.difference.abs() <= 1e-6, "{r:?}");
    assert!((r.log_det_x - 0.5 * r.lhs).abs() <= 1e-9 * r.log_det_x.abs().max(1.0));

    let zero = ComplexMatrix::zeros(1, 1);
    let r = hermitized_logdet(&zero, c(1.0, 0.0), 100.0).unwrap();
    assert!(r.lhs.abs() < 1e-15);
    // int_0^T Im m = (1/2) log(1 + T^2) for eigenvalues +-1
    assert!((r.im_m_integral - 0.5 * (1.0f64 + 1e4).ln()).abs() < 1e-12);
    assert!(r.difference.abs() < 1e-12);
}

#[test]
fn im_m_quadrature_matches_closed_form() {
    let x = seeded_complex(12, 5).scaled(Complex64::new(1.0 / 12f64.sqrt(), 0.0));
    let lambdas = hermitian_eigenvalues(&hermitize(&x, c(0.2, -0.1))).unwrap();
    for &t in &[0.01, 1.0, 1e4] {
        let exact = lambdas.iter().map(|l| (t * t / (l * l)).ln_1p()).sum::<f64>() / (2.0 * lambdas.len() as f64);
        let q = im_m_integral(&lambdas, t);
        assert!((q - exact).abs() <= 1e-10 * exact.max(1.0), "T {t}: {q} vs {exact}");
    }
}

#[test]
fn test_function_calculus() {
    for &(a, n) in &[(0.0, 10), (0.25, 200), (0.4, 1000)] {
        let f = TestFunction::new(c(0.3, -0.1), a, n).unwrap();
        let (i_f, i_lap) = f.polar_integrals(64);
        assert!((i_f - PI / 4.0).abs() < 1e-10, "a {a}: int f = {i_f}");
        assert!(i_lap.abs() < 1e-10 * f.laplacian_l1(), "a {a}: int Laplace f = {i_lap}");
    }
    assert!(TestFunction::new(c(0.0, 0.0), 0.5, 10).is_err());
}

#[test]
fn dyson_antiderivatives() {
    let p = VarianceProfile::two_block(16, 3.0, 1.0, 0.5).unwrap().normalize().unwrap();
    let o = SolveOptions::default();
    for &tau in &[0.2, 1.8] {
        let lam = |eta: f64| log_potential(&p, &solve(&p, eta, tau, &o).unwrap());
        let num = v1_integral_numeric(&p, tau, 0.01, 10.0, &o).unwrap();
        let closed = 0.5 * (lam(10.0) - lam(0.01));
        assert!((num - closed).abs() < 1e-9, "tau {tau}: {num} vs {closed}");

        // int_T^inf splits as int_T^{10 T} plus the tail from 10 T
        let t = 50.0;
        let head = v1_integral_numeric(&p, tau, t, 10.0 * t, &o).unwrap() - (1.0f64 + 10.0 * t).ln() + (1.0f64 + t).ln();
        let tail_t = tail_integral(&p, &solve(&p, t, tau, &o).unwrap());
        let tail_10t = tail_integral(&p, &solve(&p, 10.0 * t, tau, &o).unwrap());
        assert!((tail_t - (head + tail_10t)).abs() < 1e-10, "{tail_t} vs {}", head + tail_10t);
    }
}

#[test]
fn master_formula_bookkeeping() {
    let n = 40;
    let config = EnsembleConfig::new(VarianceProfile::constant(n).unwrap(), EntryLaw::ComplexGaussian, 2, 2);
    let f = TestFunction::new(c(0.0, 0.0), 0.0, n).unwrap();
    let r = master_formula_audit(&config, &f, &MasterOptions::default()).unwrap();
    assert_eq!(r.failed, 0);
    assert!(r.max_ratio <= 10.0, "{r:?}");
    for t in &r.trials {
        assert!(t.term3.abs() <= r.term3_bound, "term3 {} vs {}", t.term3, r.term3_bound);
        assert!(t.identity_gap.abs() <= 0.1 * r.target, "gap {} vs target {}", t.identity_gap, r.target);
    }
}
