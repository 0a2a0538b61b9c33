//! Density of states `sigma` as a function of `tau = |z|^2`.

use crate::dyson::{
    apply_so, derivative_tau_with, derivative_tau2_with, mean, solve_from, solve_limit, BorderedSystem, DysonError,
    DysonSolution, LimitOptions, SolveOptions, VarianceProfile,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    pub tau_star: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_points: usize,
    pub solve: SolveOptions,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { tau_star: 0.05, eta_min: 1e-6, eta_max: 1e3, eta_points: 120, solve: SolveOptions::default() }
    }
}

impl DensityOptions {
    pub fn limit(&self) -> LimitOptions {
        LimitOptions { tau_star: self.tau_star, ..LimitOptions::default() }
    }
}

fn limit_solution(profile: &VarianceProfile, tau: f64, opts: &DensityOptions) -> Result<(DysonSolution, Vec<f64>), DysonError> {
    let sol = solve_limit(profile, tau, &opts.limit(), &opts.solve)?;
    let sys = BorderedSystem::new(profile, &sol)?;
    let dv = derivative_tau_with(&sys, &sol)?;
    Ok((sol, dv))
}

/// `sigma = -(2/pi) <S_o v0, d_tau v0>`.
pub fn sigma_derivative_form(profile: &VarianceProfile, tau: f64, opts: &DensityOptions) -> Result<f64, DysonError> {
    let (sol, dv) = limit_solution(profile, tau, opts)?;
    Ok(pairing_sigma(profile, &sol, &dv))
}

fn pairing_sigma(profile: &VarianceProfile, sol: &DysonSolution, dv: &[f64]) -> f64 {
    let so = apply_so(profile, &sol.v());
    let pair = so.iter().zip(dv).map(|(a, b)| a * b).sum::<f64>() / dv.len() as f64;
    -2.0 / PI * pair
}

/// `sigma = (1/pi) d_tau (tau <u0>)`, with the derivative of `u0` taken
/// exactly from `d_tau v0`.
pub fn sigma_via_u(profile: &VarianceProfile, tau: f64, opts: &DensityOptions) -> Result<f64, DysonError> {
    let (sol, dv) = limit_solution(profile, tau, opts)?;
    let n = sol.n();
    let mut w = vec![0.0; n];
    let mut dw = vec![0.0; n];
    profile.apply_t(&sol.v1, &mut w);
    profile.apply_t(&dv[..n], &mut dw);
    let du: Vec<f64> = (0..n).map(|i| dv[i] / w[i] - sol.v1[i] * dw[i] / (w[i] * w[i])).collect();
    Ok((sol.mean_u() + tau * mean(&du)) / PI)
}

/// Both representations from one solve, for consistency checks.
pub fn sigma_both_forms(profile: &VarianceProfile, tau: f64, opts: &DensityOptions) -> Result<(f64, f64), DysonError> {
    let (sol, dv) = limit_solution(profile, tau, opts)?;
    let n = sol.n();
    let mut w = vec![0.0; n];
    let mut dw = vec![0.0; n];
    profile.apply_t(&sol.v1, &mut w);
    profile.apply_t(&dv[..n], &mut dw);
    let du: Vec<f64> = (0..n).map(|i| dv[i] / w[i] - sol.v1[i] * dw[i] / (w[i] * w[i])).collect();
    Ok((pairing_sigma(profile, &sol, &dv), (sol.mean_u() + tau * mean(&du)) / PI))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralSigma {
    pub value: f64,
    /// `|I_h - I_2h| / 3` from the half-resolution trapezoid rule.
    pub error_estimate: f64,
    /// `eta` nodes and `<Laplacian v>` at each.
    pub eta: Vec<f64>,
    pub integrand: Vec<f64>,
}

pub fn geometric_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
}

/// `sigma = -(1/2 pi) int_0^inf <Laplacian_z v1> d eta` with
/// `Laplacian_z v = 4 (tau d_tau^2 v + d_tau v)`.
///
/// Trapezoid rule in `log eta` on the geometric grid, plus
/// `f(eta_min) eta_min` for `[0, eta_min]` and `f(eta_max) eta_max / 2`
/// for the `eta^{-3}` tail.
pub fn sigma_integral_form(profile: &VarianceProfile, tau: f64, opts: &DensityOptions) -> Result<IntegralSigma, DysonError> {
    if tau > 1.0 - opts.tau_star {
        return Err(DysonError::EdgeTooClose { tau, limit: 1.0 - opts.tau_star });
    }
    let grid = geometric_grid(opts.eta_min, opts.eta_max, opts.eta_points);
    let n = profile.n();
    let mut f = vec![0.0; grid.len()];
    let mut v1 = vec![1.0 / (1.0 + grid[grid.len() - 1]); n];
    let mut v2 = v1.clone();
    for k in (0..grid.len()).rev() {
        let sol = solve_from(profile, grid[k], tau, &opts.solve, &v1, &v2)?;
        let sys = BorderedSystem::new(profile, &sol)?;
        let d1 = derivative_tau_with(&sys, &sol)?;
        let d2 = derivative_tau2_with(profile, &sys, &sol, &d1)?;
        f[k] = 4.0 * (tau * mean(&d2[..n]) + mean(&d1[..n]));
        v1 = sol.v1;
        v2 = sol.v2;
    }
    let t: Vec<f64> = grid.iter().map(|x| x.ln()).collect();
    let g: Vec<f64> = f.iter().zip(&grid).map(|(a, b)| a * b).collect();
    let trap = |step: usize| {
        let mut s = 0.0;
        let mut k = 0;
        while k + step < g.len() {
            s += 0.5 * (g[k] + g[k + step]) * (t[k + step] - t[k]);
            k += step;
        }
        s
    };
    let ends = f[0] * grid[0] + 0.5 * f[f.len() - 1] * grid[grid.len() - 1];
    let full = trap(1) + ends;
    // half resolution; an odd interval count keeps the last fine interval
    let m = g.len() - 1;
    let coarse = if m >= 2 {
        let even = m - m % 2;
        let mut s = 0.0;
        let mut k = 0;
        while k + 2 <= even {
            s += 0.5 * (g[k] + g[k + 2]) * (t[k + 2] - t[k]);
            k += 2;
        }
        if m % 2 == 1 {
            s += 0.5 * (g[m - 1] + g[m]) * (t[m] - t[m - 1]);
        }
        s + ends
    } else {
        full
    };
    Ok(IntegralSigma { value: -full / (2.0 * PI), error_estimate: (full - coarse).abs() / (6.0 * PI), eta: grid, integrand: f })
}

/// `int_{|z|^2 <= tau} sigma = tau <u0>`.
pub fn cumulative_mass(profile: &VarianceProfile, tau: f64, opts: &DensityOptions) -> Result<f64, DysonError> {
    if tau == 0.0 {
        return Ok(0.0);
    }
    let sol = solve_limit(profile, tau, &opts.limit(), &opts.solve)?;
    Ok(tau * sol.mean_u())
}

/// Edge value `(1/pi) <s1 s2>^2 / <s1^2 s2^2>` from the left and right
/// Perron vectors of `S`.
pub fn jump_height(profile: &VarianceProfile) -> Result<f64, DysonError> {
    let (s1, s2) = profile.perron_vectors()?;
    let p: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a * b).collect();
    let num = mean(&p);
    let den = mean(&p.iter().map(|x| x * x).collect::<Vec<_>>());
    Ok(num * num / den / PI)
}

/// Mass inside `|z|^2 <= 1 - tau_*` plus `pi tau_*` times the jump height
/// for the remaining annulus.
pub fn total_mass(profile: &VarianceProfile, opts: &DensityOptions) -> Result<f64, DysonError> {
    let inner = cumulative_mass(profile, 1.0 - opts.tau_star, opts)?;
    Ok(inner + jump_height(profile)? * PI * opts.tau_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Derivative,
    Integral,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub tau_grid: Vec<f64>,
    pub sigma_vals: Vec<f64>,
    pub sigma_integral: Option<Vec<f64>>,
    pub cumulative: Vec<f64>,
    pub jump_height: f64,
    pub total_mass: f64,
    /// Largest and smallest `sigma` on the grid.
    pub c1: f64,
    pub c2: f64,
    pub max_cross_method_gap: Option<f64>,
}

/// Evaluates `sigma` and the cumulative mass on a grid, in parallel
/// over grid points. With `Method::Integral` the integral form fills
/// `sigma_vals`.
pub fn density_profile(
    profile: &VarianceProfile,
    taus: &[f64],
    method: Method,
    opts: &DensityOptions,
) -> Result<DensityProfile, DysonError> {
    let rows: Result<Vec<(f64, Option<f64>, f64)>, DysonError> = taus
        .par_iter()
        .map(|&tau| {
            let cum = cumulative_mass(profile, tau, opts)?;
            let deriv = match method {
                Method::Integral => None,
                _ => Some(sigma_derivative_form(profile, tau, opts)?),
            };
            let integ = match method {
                Method::Derivative => None,
                _ => Some(sigma_integral_form(profile, tau, opts)?.value),
            };
            let primary = deriv.or(integ).unwrap_or(f64::NAN);
            let secondary = if method == Method::Both { integ } else { None };
            Ok((primary, secondary, cum))
        })
        .collect();
    let rows = rows?;
    let sigma_vals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let sigma_integral: Option<Vec<f64>> =
        if method == Method::Both { Some(rows.iter().map(|r| r.1.unwrap_or(f64::NAN)).collect()) } else { None };
    let max_cross_method_gap = sigma_integral
        .as_ref()
        .map(|si| si.iter().zip(&sigma_vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    let c1 = sigma_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c2 = sigma_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DensityProfile {
        tau_grid: taus.to_vec(),
        sigma_vals,
        sigma_integral,
        cumulative: rows.iter().map(|r| r.2).collect(),
        jump_height: jump_height(profile)?,
        total_mass: total_mass(profile, opts)?,
        c1,
        c2,
        max_cross_method_gap,
    })
}

/// Radial density on a fine grid, for interpolation. Between
/// `1 - tau_*` and the edge the values are interpolated linearly towards
/// the jump height; beyond `tau = 1` the density is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialDensity {
    pub taus: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub jump: f64,
}

impl RadialDensity {
    pub fn compute(profile: &VarianceProfile, points: usize, opts: &DensityOptions) -> Result<Self, DysonError> {
        let top = 1.0 - opts.tau_star;
        let taus: Vec<f64> = (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect();
        let sigmas: Result<Vec<f64>, DysonError> = taus.par_iter().map(|&t| sigma_derivative_form(profile, t, opts)).collect();
        let mut taus = taus;
        let mut sigmas = sigmas?;
        let jump = jump_height(profile)?;
        taus.push(1.0);
        sigmas.push(jump);
        Ok(RadialDensity { taus, sigmas, jump })
    }

    pub fn eval(&self, tau: f64) -> f64 {
        if !(0.0..=1.0).contains(&tau) {
            return 0.0;
        }
        let k = self.taus.partition_point(|&t| t <= tau).clamp(1, self.taus.len() - 1);
        let (t0, t1) = (self.taus[k - 1], self.taus[k]);
        let w = (tau - t0) / (t1 - t0);
        self.sigmas[k - 1] * (1.0 - w) + self.sigmas[k] * w
    }
}

/// Plot grid `re, im, sigma` on `[-r, r]^2`.
pub fn grid_2d(radial: &RadialDensity, k: usize, r: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        let y = -r + 2.0 * r * i as f64 / (k - 1).max(1) as f64;
        for j in 0..k {
            let x = -r + 2.0 * r * j as f64 / (k - 1).max(1) as f64;
            out.push((x, y, radial.eval(x * x + y * y)));
        }
    }
    out
}
