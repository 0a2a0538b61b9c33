mod common;

use circlaw::dyson::{
    derivative_eta, derivative_tau, regime_check, solve, solve_limit, DysonError, LimitOptions, Regime, SolveOptions,
    VarianceProfile,
};
use circlaw::linalg::{power_iteration_radius, RealMatrix};
use common::{scalar_dyson, two_block_limit};

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn max_dev(x: &[f64], target: f64) -> f64 {
    x.iter().map(|v| (v - target).abs()).fold(0.0, f64::max)
}

fn block_profile(n: usize) -> (VarianceProfile, usize) {
    let p = VarianceProfile::two_block(n, 3.0, 1.0, 0.5).unwrap().normalize().unwrap();
    let k = (0.5 * n as f64).round() as usize;
    (p, k)
}

#[test]
fn normalization_cases() {
    let s = RealMatrix::from_fn(5, 5, |_, _| 4.0 / 5.0);
    let p = VarianceProfile::new(s).unwrap().normalize().unwrap();
    assert!((p.scale() - 4.0).abs() < 1e-12);
    assert!((p.spectral_radius() - 1.0).abs() < 1e-12);

    let e = VarianceProfile::constant(6).unwrap();
    let q = e.normalize().unwrap();
    assert_eq!(q.matrix(), e.matrix());
    assert_eq!(q.scale(), 1.0);

    let (b, _) = block_profile(30);
    let r = power_iteration_radius(b.matrix(), 11, 1e-14).unwrap().radius;
    assert!((r - 1.0).abs() < 1e-10, "rho = {r}");
}

#[test]
fn constant_profile_solutions() {
    let e = VarianceProfile::constant(8).unwrap();
    let s = solve(&e, 1.0, 0.0, &opts()).unwrap();
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    assert!(max_dev(&s.v1, golden) < 1e-10);
    assert!(max_dev(&s.v2, golden) < 1e-10);

    let s = solve(&e, 1e-9, 0.5, &opts()).unwrap();
    assert!(max_dev(&s.v1, 0.5f64.sqrt()) < 1e-7);

    let s = solve(&e, 1e-4, 2.0, &opts()).unwrap();
    let w = scalar_dyson(1e-4, 2.0);
    assert!(max_dev(&s.v1, w) <= 1e-10 * w);
    assert!((w - 1e-4).abs() < 1e-5, "leading order eta/(tau-1), got {w}");
}

#[test]
fn scalar_oracle_across_parameters() {
    let e = VarianceProfile::constant(4).unwrap();
    for &(eta, tau) in &[(0.3, 0.1), (2.0, 3.0), (1e-3, 0.9), (0.05, 1.5)] {
        let s = solve(&e, eta, tau, &opts()).unwrap();
        let w = scalar_dyson(eta, tau);
        assert!(max_dev(&s.v1, w) <= 1e-10 * w, "eta {eta} tau {tau}: {} vs {w}", s.v1[0]);
    }
}

#[test]
fn limit_solutions() {
    let e = VarianceProfile::constant(6).unwrap();
    let lim = LimitOptions::default();
    let s = solve_limit(&e, 0.0, &lim, &opts()).unwrap();
    assert!(max_dev(&s.v1, 1.0) < 1e-10);
    let s = solve_limit(&e, 0.75, &lim, &opts()).unwrap();
    assert!(max_dev(&s.v1, 0.5) < 1e-10);
    assert!(max_dev(&s.v2, 0.5) < 1e-10);
    assert!(matches!(solve_limit(&e, 0.99, &lim, &opts()), Err(DysonError::EdgeTooClose { .. })));
}

#[test]
fn two_block_limit_matches_reduced_system() {
    let (p, k) = block_profile(40);
    for &tau in &[0.0, 0.3, 0.6, 0.9] {
        let s = solve_limit(&p, tau, &LimitOptions::default(), &opts()).unwrap();
        let (w_in, w_out) = two_block_limit(&p, k, tau);
        for i in 0..p.n() {
            let w = if i < k { w_in } else { w_out };
            assert!((s.v1[i] - w).abs() < 1e-10, "tau {tau}, i {i}: {} vs {w}", s.v1[i]);
            assert!((s.v2[i] - w).abs() < 1e-10);
        }
    }
}

#[test]
fn derivative_tau_closed_forms() {
    let e = VarianceProfile::constant(5).unwrap();
    let lim = LimitOptions::default();
    let s = solve_limit(&e, 0.0, &lim, &opts()).unwrap();
    let d = derivative_tau(&e, &s).unwrap();
    assert!(max_dev(&d, -0.5) < 1e-9);
    let s = solve_limit(&e, 0.5, &lim, &opts()).unwrap();
    let d = derivative_tau(&e, &s).unwrap();
    assert!(max_dev(&d, -1.0 / (2.0 * 0.5f64.sqrt())) < 1e-9);
}

fn central_difference(p: &VarianceProfile, eta: f64, tau: f64, wrt_tau: bool, h: f64) -> Vec<f64> {
    let (e1, t1, e2, t2) = if wrt_tau { (eta, tau + h, eta, tau - h) } else { (eta + h, tau, eta - h, tau) };
    let tight = SolveOptions { tol: 1e-15, ..SolveOptions::default() };
    let a = solve(p, e1, t1, &tight).unwrap().v();
    let b = solve(p, e2, t2, &tight).unwrap().v();
    a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
}

#[test]
fn derivatives_match_finite_differences() {
    let (p, _) = block_profile(20);
    let e = VarianceProfile::constant(20).unwrap();
    for prof in [&p, &e] {
        let s = solve(prof, 0.1, 0.3, &opts()).unwrap();
        let dt = derivative_tau(prof, &s).unwrap();
        let de = derivative_eta(prof, &s).unwrap();
        let ft = central_difference(prof, 0.1, 0.3, true, 1e-5);
        let fe = central_difference(prof, 0.1, 0.3, false, 1e-5);
        for i in 0..dt.len() {
            assert!((dt[i] - ft[i]).abs() < 1e-6, "d/dtau [{i}] {} vs {}", dt[i], ft[i]);
            assert!((de[i] - fe[i]).abs() < 1e-6, "d/deta [{i}] {} vs {}", de[i], fe[i]);
        }
    }
}

#[test]
fn derivative_eta_closed_forms() {
    let e = VarianceProfile::constant(5).unwrap();
    let s = solve(&e, 1.0, 0.0, &opts()).unwrap();
    let v = s.v1[0];
    let d = derivative_eta(&e, &s).unwrap();
    assert!(max_dev(&d, -v * v / (1.0 + v * v)) < 1e-10);
    assert!((d[0] + 0.2764).abs() < 1e-4);

    let eta = 100.0;
    let s = solve(&e, eta, 0.0, &opts()).unwrap();
    let d = derivative_eta(&e, &s).unwrap();
    let target = -1.0 / (eta * eta);
    assert!(max_dev(&d, target) < 0.05 * target.abs(), "{} vs {target}", d[0]);
}

#[test]
fn regime_examples() {
    let (p, _) = block_profile(30);
    let band = (0.05, 20.0);
    let r = regime_check(&solve(&p, 10.0, 0.5, &opts()).unwrap(), band);
    assert_eq!(r.regime, Regime::LargeEta);
    assert!(r.in_band, "{r:?}");
    let r = regime_check(&solve(&p, 1e-6, 0.5, &opts()).unwrap(), band);
    assert_eq!(r.regime, Regime::Inside);
    assert!(r.in_band, "{r:?}");
    let r = regime_check(&solve(&p, 1e-6, 2.0, &opts()).unwrap(), band);
    assert_eq!(r.regime, Regime::Outside);
    assert!(r.in_band, "{r:?}");
}
