//! The vector Dyson equation
//!
//! ```text
//! 1/v1 = eta + S v2 + tau/(eta + S^t v1)
//! 1/v2 = eta + S^t v1 + tau/(eta + S v2)
//! ```
//!
//! and its derivatives in `eta` and `tau`. Stacking `v = (v1, v2)` and
//! writing `S_o = [[0, S], [S^t, 0]]`, `S_d = [[S^t, 0], [0, S]]`, the
//! system reads `1/v = eta + S_o v + tau/(eta + S_d v)`. Averages `<x>`
//! are plain means over the vector length.

mod profile;

pub use profile::{ProfileError, ProfileSpec, VarianceProfile};

use crate::linalg::{lu_factor, LinalgError, LuFactorization, RealMatrix};
use crate::stability::stability_matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DysonError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("Dyson iteration did not converge: {iterations} iterations, residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("tau = {tau} exceeds 1 - tau_* = {limit}; the eta = 0 solution degenerates at the edge")]
    EdgeTooClose { tau: f64, limit: f64 },
    #[error("stability operator is numerically singular (pivot ratio {ratio:e})")]
    SingularStability { ratio: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Switch from the damped iteration to Newton steps after this many
    /// iterations. `usize::MAX` disables Newton.
    pub newton_after: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-12, max_iter: 100_000, damping: 0.5, newton_after: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub tau_star: f64,
    /// `eta` of the positive solve used as the starting point.
    pub seed_eta: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { tau_star: 0.05, seed_eta: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DysonSolution {
    pub eta: f64,
    pub tau: f64,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

impl DysonSolution {
    pub fn n(&self) -> usize {
        self.v1.len()
    }

    /// `v = (v1, v2)`
    pub fn v(&self) -> Vec<f64> {
        let mut v = self.v1.clone();
        v.extend_from_slice(&self.v2);
        v
    }

    /// `v~ = (v2, v1)`
    pub fn v_tilde(&self) -> Vec<f64> {
        let mut v = self.v2.clone();
        v.extend_from_slice(&self.v1);
        v
    }

    /// `(u, u)`
    pub fn u_doubled(&self) -> Vec<f64> {
        let mut u = self.u.clone();
        u.extend_from_slice(&self.u);
        u
    }

    pub fn mean_v1(&self) -> f64 {
        mean(&self.v1)
    }

    pub fn mean_u(&self) -> f64 {
        mean(&self.u)
    }
}

/// `(eta + S^t v1, eta + S v2)`
fn shifted_products(profile: &VarianceProfile, eta: f64, v1: &[f64], v2: &[f64], a1: &mut [f64], a2: &mut [f64]) {
    profile.apply_t(v1, a1);
    profile.apply(v2, a2);
    a1.iter_mut().for_each(|x| *x += eta);
    a2.iter_mut().for_each(|x| *x += eta);
}

/// Dimensionless residual `max |1 - v (eta + S_o v + tau/(eta + S_d v))|`.
pub fn residual(profile: &VarianceProfile, eta: f64, tau: f64, v1: &[f64], v2: &[f64]) -> f64 {
    let n = v1.len();
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    shifted_products(profile, eta, v1, v2, &mut a1, &mut a2);
    residual_from(tau, v1, v2, &a1, &a2)
}

fn residual_from(tau: f64, v1: &[f64], v2: &[f64], a1: &[f64], a2: &[f64]) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..v1.len() {
        r = r.max((v1[i] * (a2[i] + tau / a1[i]) - 1.0).abs());
        r = r.max((v2[i] * (a1[i] + tau / a2[i]) - 1.0).abs());
    }
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}

fn check_params(profile: &VarianceProfile, eta: f64, tau: f64) -> Result<(), DysonError> {
    if !profile.is_normalized() {
        return Err(DysonError::InvalidParameter("profile must be normalized (rho(S) = 1)".into()));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(DysonError::InvalidParameter(format!("eta must be finite and >= 0, got {eta}")));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(DysonError::InvalidParameter(format!("tau must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

/// Solves at `eta > 0` from the constant start `1/(1+eta)`.
pub fn solve(profile: &VarianceProfile, eta: f64, tau: f64, opts: &SolveOptions) -> Result<DysonSolution, DysonError> {
    if !(eta > 0.0) {
        return Err(DysonError::InvalidParameter(format!("solve needs eta > 0, got {eta}; use solve_limit")));
    }
    let n = profile.n();
    let v0 = vec![1.0 / (1.0 + eta); n];
    solve_from(profile, eta, tau, opts, &v0, &v0)
}

/// Solves from a caller-supplied positive starting point. Also accepts
/// `eta = 0`, where the iteration is only well defined in the bulk.
pub fn solve_from(
    profile: &VarianceProfile,
    eta: f64,
    tau: f64,
    opts: &SolveOptions,
    init1: &[f64],
    init2: &[f64],
) -> Result<DysonSolution, DysonError> {
    check_params(profile, eta, tau)?;
    let n = profile.n();
    if init1.len() != n || init2.len() != n {
        return Err(DysonError::InvalidParameter("initial vectors have the wrong length".into()));
    }
    if init1.iter().chain(init2).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(DysonError::InvalidParameter("initial vectors must be positive".into()));
    }
    let w = opts.damping;
    let mut v1 = init1.to_vec();
    let mut v2 = init2.to_vec();
    rebalance(&mut v1, &mut v2);
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    let mut res = f64::INFINITY;
    let mut it = 0;
    while it <= opts.max_iter {
        shifted_products(profile, eta, &v1, &v2, &mut a1, &mut a2);
        res = residual_from(tau, &v1, &v2, &a1, &a2);
        if res <= opts.tol {
            return Ok(finish(eta, tau, v1, v2, &a1, it, res));
        }
        if it >= opts.newton_after || it == opts.max_iter {
            break;
        }
        for i in 0..n {
            let f1 = 1.0 / (a2[i] + tau / a1[i]);
            let f2 = 1.0 / (a1[i] + tau / a2[i]);
            v1[i] = (1.0 - w) * v1[i] + w * f1;
            v2[i] = (1.0 - w) * v2[i] + w * f2;
        }
        rebalance(&mut v1, &mut v2);
        it += 1;
    }
    // Newton polish with the bordered linearisation.
    while it < opts.max_iter {
        let step = newton_step(profile, eta, tau, &v1, &v2)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let c1: Vec<f64> = (0..n).map(|i| v1[i] + t * step[i]).collect();
            let c2: Vec<f64> = (0..n).map(|i| v2[i] + t * step[n + i]).collect();
            if c1.iter().chain(&c2).all(|&x| x > 0.0) {
                let r = residual(profile, eta, tau, &c1, &c2);
                if r < res {
                    v1 = c1;
                    v2 = c2;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        it += 1;
        if res <= opts.tol {
            shifted_products(profile, eta, &v1, &v2, &mut a1, &mut a2);
            return Ok(finish(eta, tau, v1, v2, &a1, it, res));
        }
        if !accepted {
            break;
        }
    }
    Err(DysonError::NoConvergence { iterations: it, residual: res })
}

/// Removes the `(c v1, v2/c)` drift by equalising the means. Exact
/// solutions have `<v1> = <v2>`, so fixed points are unchanged.
fn rebalance(v1: &mut [f64], v2: &mut [f64]) {
    let c = (mean(v2) / mean(v1)).sqrt();
    if c.is_finite() && c > 0.0 {
        v1.iter_mut().for_each(|x| *x *= c);
        v2.iter_mut().for_each(|x| *x /= c);
    }
}

fn finish(eta: f64, tau: f64, v1: Vec<f64>, v2: Vec<f64>, a1: &[f64], iterations: usize, residual: f64) -> DysonSolution {
    let u = v1.iter().zip(a1).map(|(v, a)| v / a).collect();
    DysonSolution { eta, tau, v1, v2, u, iterations, residual }
}

fn newton_step(profile: &VarianceProfile, eta: f64, tau: f64, v1: &[f64], v2: &[f64]) -> Result<Vec<f64>, DysonError> {
    let n = profile.n();
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    shifted_products(profile, eta, v1, v2, &mut a1, &mut a2);
    let mut v = v1.to_vec();
    v.extend_from_slice(v2);
    let mut u = Vec::with_capacity(2 * n);
    u.extend(v1.iter().zip(&a1).map(|(x, a)| x / a));
    u.extend(v2.iter().zip(&a2).map(|(x, a)| x / a));
    let sys = BorderedSystem::from_parts(profile, eta, tau, &v, &u)?;
    // rhs = v^2 F(v) = v - v^2 (eta + S_o v + tau/(eta + S_d v))
    let mut rhs = vec![0.0; 2 * n];
    for i in 0..n {
        rhs[i] = v1[i] - v1[i] * v1[i] * (a2[i] + tau / a1[i]);
        rhs[n + i] = v2[i] - v2[i] * v2[i] * (a1[i] + tau / a2[i]);
    }
    sys.solve(&rhs)
}

/// Solution of the `eta = 0` equation `1/v = S_o v + tau/(S_d v)`.
pub fn solve_limit(profile: &VarianceProfile, tau: f64, lim: &LimitOptions, opts: &SolveOptions) -> Result<DysonSolution, DysonError> {
    check_params(profile, 0.0, tau)?;
    let limit = 1.0 - lim.tau_star;
    if tau > limit {
        return Err(DysonError::EdgeTooClose { tau, limit });
    }
    let seed = solve(profile, lim.seed_eta, tau, opts)?;
    solve_limit_from(profile, tau, opts, &seed.v1, &seed.v2)
}

/// As `solve_limit`, from a given positive start and without the edge
/// guard.
pub fn solve_limit_from(
    profile: &VarianceProfile,
    tau: f64,
    opts: &SolveOptions,
    init1: &[f64],
    init2: &[f64],
) -> Result<DysonSolution, DysonError> {
    solve_from(profile, 0.0, tau, opts, init1, init2)
}

/// The linearisation `L` bordered by the gauge direction `e_- v` and the
/// constraint `<e_- x> = 0`:
///
/// ```text
/// [ L          e_- v ] [x]   [r]
/// [ e_-^t/2n   0     ] [m] = [0]
/// ```
///
/// For `eta > 0` this reproduces `L^{-1} r`, whose solutions already
/// satisfy the constraint. At `eta = 0`, where `L` has the null vector
/// `e_- v`, it selects the solution with `<x1> = <x2>`.
pub struct BorderedSystem {
    lu: LuFactorization<f64>,
    dim: usize,
}

impl BorderedSystem {
    pub fn new(profile: &VarianceProfile, sol: &DysonSolution) -> Result<Self, DysonError> {
        Self::from_parts(profile, sol.eta, sol.tau, &sol.v(), &sol.u_doubled())
    }

    fn from_parts(profile: &VarianceProfile, eta: f64, tau: f64, v: &[f64], u: &[f64]) -> Result<Self, DysonError> {
        let l = stability_matrix(profile, eta, tau, v, u);
        let m = l.rows();
        let n = m / 2;
        let mut b = RealMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            b.row_mut(i)[..m].copy_from_slice(l.row(i));
            let sgn = if i < n { 1.0 } else { -1.0 };
            b[(i, m)] = sgn * v[i];
            b[(m, i)] = sgn / m as f64;
        }
        let lu = match lu_factor(&b) {
            Ok(f) => f,
            Err(LinalgError::ExactSingular { .. }) => return Err(DysonError::SingularStability { ratio: 0.0 }),
            Err(e) => return Err(e.into()),
        };
        let ratio = lu.min_pivot() / lu.max_pivot();
        if ratio < 1e-14 {
            return Err(DysonError::SingularStability { ratio });
        }
        Ok(BorderedSystem { lu, dim: m })
    }

    /// Solves `L x = rhs` (in the constrained sense above).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, DysonError> {
        let mut b = rhs.to_vec();
        b.push(0.0);
        self.lu.solve_in_place(&mut b)?;
        b.truncate(self.dim);
        Ok(b)
    }
}

/// `d v / d tau`, from `L x = -u v`.
pub fn derivative_tau(profile: &VarianceProfile, sol: &DysonSolution) -> Result<Vec<f64>, DysonError> {
    let sys = BorderedSystem::new(profile, sol)?;
    derivative_tau_with(&sys, sol)
}

pub fn derivative_tau_with(sys: &BorderedSystem, sol: &DysonSolution) -> Result<Vec<f64>, DysonError> {
    let rhs: Vec<f64> = sol.v().iter().zip(sol.u_doubled()).map(|(v, u)| -u * v).collect();
    sys.solve(&rhs)
}

/// `d v / d eta`, from `L x = -v^2 + tau u^2`.
pub fn derivative_eta(profile: &VarianceProfile, sol: &DysonSolution) -> Result<Vec<f64>, DysonError> {
    let sys = BorderedSystem::new(profile, sol)?;
    let rhs: Vec<f64> = sol.v().iter().zip(sol.u_doubled()).map(|(v, u)| -v * v + sol.tau * u * u).collect();
    sys.solve(&rhs)
}

/// `d^2 v / d tau^2` given the first derivative `dv`:
/// `L x = 2 dv^2/v + 2 u^2 S_d dv - 2 tau u^3 (S_d dv)^2 / v`.
pub fn derivative_tau2_with(
    profile: &VarianceProfile,
    sys: &BorderedSystem,
    sol: &DysonSolution,
    dv: &[f64],
) -> Result<Vec<f64>, DysonError> {
    let n = sol.n();
    let sd = apply_sd(profile, dv);
    let v = sol.v();
    let mut rhs = vec![0.0; 2 * n];
    for i in 0..2 * n {
        let u = sol.u[i % n];
        rhs[i] = 2.0 * dv[i] * dv[i] / v[i] + 2.0 * u * u * sd[i] - 2.0 * sol.tau * u * u * u * sd[i] * sd[i] / v[i];
    }
    sys.solve(&rhs)
}

/// `S_o x` for a stacked `2n` vector.
pub fn apply_so(profile: &VarianceProfile, x: &[f64]) -> Vec<f64> {
    let n = profile.n();
    let mut out = vec![0.0; 2 * n];
    let (lo, hi) = out.split_at_mut(n);
    profile.apply(&x[n..], lo);
    profile.apply_t(&x[..n], hi);
    out
}

/// `S_d x` for a stacked `2n` vector.
pub fn apply_sd(profile: &VarianceProfile, x: &[f64]) -> Vec<f64> {
    let n = profile.n();
    let mut out = vec![0.0; 2 * n];
    let (lo, hi) = out.split_at_mut(n);
    profile.apply_t(&x[..n], lo);
    profile.apply(&x[n..], hi);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    LargeEta,
    Inside,
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub eta: f64,
    pub tau: f64,
    pub regime: Regime,
    pub scale: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub band: (f64, f64),
    pub in_band: bool,
}

/// Order of magnitude of `v` predicted in each parameter regime.
pub fn regime_scale(eta: f64, tau: f64) -> (Regime, f64) {
    if eta >= 1.0 {
        (Regime::LargeEta, 1.0 / eta)
    } else if tau <= 1.0 {
        (Regime::Inside, eta.cbrt() + (1.0 - tau).sqrt())
    } else {
        (Regime::Outside, eta / (tau - 1.0 + eta.powf(2.0 / 3.0)))
    }
}

pub fn regime_check(sol: &DysonSolution, band: (f64, f64)) -> RegimeReport {
    let (regime, scale) = regime_scale(sol.eta, sol.tau);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &x in sol.v1.iter().chain(&sol.v2) {
        let r = x / scale;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    RegimeReport {
        eta: sol.eta,
        tau: sol.tau,
        regime,
        scale,
        min_ratio: lo,
        max_ratio: hi,
        band,
        in_band: lo >= band.0 && hi <= band.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize) -> VarianceProfile {
        VarianceProfile::constant(n).unwrap().normalize().unwrap()
    }

    #[test]
    fn golden_ratio_at_eta_one() {
        let p = constant(20);
        let s = solve(&p, 1.0, 0.0, &SolveOptions::default()).unwrap();
        let g = (5f64.sqrt() - 1.0) / 2.0;
        assert!(s.v1.iter().chain(&s.v2).all(|&x| (x - g).abs() < 1e-11));
        assert!(s.residual <= 1e-12);
    }

    #[test]
    fn limit_constant_profile() {
        let p = constant(10);
        let lim = LimitOptions::default();
        let o = SolveOptions::default();
        let s = solve_limit(&p, 0.75, &lim, &o).unwrap();
        assert!(s.v1.iter().all(|&x| (x - 0.5).abs() < 1e-11));
        let s = solve_limit(&p, 0.0, &lim, &o).unwrap();
        assert!(s.v1.iter().all(|&x| (x - 1.0).abs() < 1e-11));
        assert!(matches!(solve_limit(&p, 0.97, &lim, &o), Err(DysonError::EdgeTooClose { .. })));
    }

    #[test]
    fn constant_profile_derivatives() {
        let p = constant(6);
        let o = SolveOptions::default();
        let s = solve_limit(&p, 0.5, &LimitOptions::default(), &o).unwrap();
        let d = derivative_tau(&p, &s).unwrap();
        let want = -1.0 / (2.0 * 0.5f64.sqrt());
        assert!(d.iter().all(|&x| (x - want).abs() < 1e-9), "{d:?}");
        let s = solve(&p, 1.0, 0.0, &o).unwrap();
        let d = derivative_eta(&p, &s).unwrap();
        let v = s.v1[0];
        assert!(d.iter().all(|&x| (x + v * v / (1.0 + v * v)).abs() < 1e-10));
    }

    #[test]
    fn unnormalized_profile_rejected() {
        let p = VarianceProfile::two_block(4, 3.0, 1.0, 0.5).unwrap();
        assert!(matches!(solve(&p, 1.0, 0.0, &SolveOptions::default()), Err(DysonError::InvalidParameter(_))));
    }

    #[test]
    fn regime_scales() {
        assert_eq!(regime_scale(10.0, 0.5), (Regime::LargeEta, 0.1));
        assert_eq!(regime_scale(1e-6, 0.5).0, Regime::Inside);
        assert_eq!(regime_scale(1e-6, 2.0).0, Regime::Outside);
    }
}
