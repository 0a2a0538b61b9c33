use circlaw::density::{
    cumulative_mass, jump_height, sigma_both_forms, sigma_derivative_form, sigma_integral_form, total_mass,
    DensityOptions,
};
use circlaw::dyson::{solve_limit, VarianceProfile};
use circlaw::linalg::RealMatrix;
use std::f64::consts::PI;

fn block(n: usize) -> VarianceProfile {
    VarianceProfile::two_block(n, 3.0, 1.0, 0.5).unwrap().normalize().unwrap()
}

fn shipped(n: usize) -> Vec<(String, VarianceProfile)> {
    let mut v = vec![("constant".to_string(), VarianceProfile::constant(n).unwrap()), ("two-block".into(), block(n))];
    for id in VarianceProfile::smooth_ids() {
        v.push((id.to_string(), VarianceProfile::smooth(n, id).unwrap().normalize().unwrap()));
    }
    v
}

fn tau_grid() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

#[test]
fn constant_profile_is_the_circular_law() {
    let e = VarianceProfile::constant(12).unwrap();
    let o = DensityOptions::default();
    for tau in tau_grid() {
        let s = sigma_derivative_form(&e, tau, &o).unwrap();
        assert!((s - 1.0 / PI).abs() < 1e-6, "tau {tau}: {s}");
    }
    let i = sigma_integral_form(&e, 0.25, &o).unwrap();
    assert!((i.value - 1.0 / PI).abs() < 1e-4, "{}", i.value);
    assert!((cumulative_mass(&e, 0.25, &o).unwrap() - 0.25).abs() < 1e-10);
    assert_eq!(cumulative_mass(&e, 0.0, &o).unwrap(), 0.0);
    assert!((jump_height(&e).unwrap() - 1.0 / PI).abs() < 1e-10);
    let tight = DensityOptions { tau_star: 0.02, ..o };
    assert!((total_mass(&e, &tight).unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn sigma_at_zero_matches_a_finite_difference() {
    let o = DensityOptions::default();
    for (name, p) in shipped(16) {
        let mass = |tau: f64| tau * solve_limit(&p, tau, &o.limit(), &o.solve).unwrap().mean_u();
        let h = 1e-5;
        // one-sided at 0: tau <u0> = tau <u0(0)> + O(tau^2)
        let fd = (4.0 * mass(h) - mass(2.0 * h)) / (2.0 * h) / PI;
        let s = sigma_derivative_form(&p, 0.0, &o).unwrap();
        assert!((s - fd).abs() < 1e-6, "{name}: {s} vs {fd}");
    }
}

#[test]
fn the_two_expressions_of_the_derivative_form_agree() {
    let o = DensityOptions::default();
    for (name, p) in shipped(16) {
        for tau in tau_grid() {
            let (a, b) = sigma_both_forms(&p, tau, &o).unwrap();
            assert!((a - b).abs() < 1e-8, "{name} tau {tau}: {a} vs {b}");
        }
    }
}

#[test]
fn cross_formula_agreement() {
    let o = DensityOptions::default();
    for (name, p) in shipped(12) {
        for tau in tau_grid() {
            let d = sigma_derivative_form(&p, tau, &o).unwrap();
            let i = sigma_integral_form(&p, tau, &o).unwrap();
            assert!((d - i.value).abs() <= 1e-4, "{name} tau {tau}: {d} vs {}", i.value);
            assert!(d > 0.0);
        }
    }
}

#[test]
fn integrand_decays_like_eta_cubed() {
    let p = block(12);
    let i = sigma_integral_form(&p, 0.5, &DensityOptions::default()).unwrap();
    for (eta, f) in i.eta.iter().zip(&i.integrand) {
        if *eta >= 10.0 {
            assert!(f.abs() * (1.0 + eta.powi(3)) < 10.0, "eta {eta}: {f}");
        }
    }
}

#[test]
fn cumulative_mass_is_the_radial_integral() {
    let p = block(20);
    let o = DensityOptions::default();
    let tau = 0.5;
    // 2 pi int_0^sqrt(tau) sigma(r^2) r dr = pi int_0^tau sigma(t) dt, composite Simpson
    let m = 20;
    let h = tau / m as f64;
    let mut s = 0.0;
    for k in 0..=m {
        let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * sigma_derivative_form(&p, k as f64 * h, &o).unwrap();
    }
    let quad = PI * s * h / 3.0;
    let mass = cumulative_mass(&p, tau, &o).unwrap();
    assert!((mass - quad).abs() < 1e-4, "{mass} vs {quad}");
}

#[test]
fn cumulative_is_monotone() {
    let o = DensityOptions::default();
    for (name, p) in shipped(16) {
        let c: Vec<f64> = tau_grid().iter().map(|&t| cumulative_mass(&p, t, &o).unwrap()).collect();
        assert!(c.windows(2).all(|w| w[1] >= w[0]), "{name}: {c:?}");
        assert!(*c.last().unwrap() < 1.0);
    }
}

#[test]
fn jump_height_cases() {
    // row and column sums all equal: Perron vectors are constant
    let n = 6;
    let s = RealMatrix::from_fn(n, n, |i, j| (1.0 + ((i + j) % n) as f64) / n as f64);
    let p = VarianceProfile::new(s).unwrap().normalize().unwrap();
    assert!((jump_height(&p).unwrap() - 1.0 / PI).abs() < 1e-10);

    let p = block(20);
    let o = DensityOptions { tau_star: 0.01, ..DensityOptions::default() };
    let xs = [0.10, 0.06, 0.02];
    let ys: Vec<f64> = xs.iter().map(|x| sigma_derivative_form(&p, 1.0 - x, &o).unwrap()).collect();
    // quadratic through the three points, evaluated at 1 - tau = 0
    let mut extrap = 0.0;
    for i in 0..3 {
        let mut w = 1.0;
        for j in 0..3 {
            if j != i {
                w *= xs[j] / (xs[j] - xs[i]);
            }
        }
        extrap += w * ys[i];
    }
    let j = jump_height(&p).unwrap();
    assert!((extrap - j).abs() <= 0.05 * j, "extrapolated {extrap} vs {j}");
}

#[test]
fn total_mass_of_the_block_profile() {
    let p = block(20);
    let o = DensityOptions::default();
    let m = total_mass(&p, &o).unwrap();
    assert!((m - 1.0).abs() <= 5e-3, "{m}");
    let halved = total_mass(&p, &DensityOptions { tau_star: 0.025, ..o }).unwrap();
    assert!((halved - 1.0).abs() <= (m - 1.0).abs() + 1e-12, "{halved} vs {m}");
}
