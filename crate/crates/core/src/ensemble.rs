//! Random matrices with a variance profile and the statistics of their
//! hermitizations.
//!
//! Every trial draws from its own ChaCha stream, keyed by the base seed
//! and the trial index, so a trial can be rerun in isolation.

use crate::dyson::{self, DysonError, DysonSolution, SolveOptions, VarianceProfile};
use crate::linalg::{
    hermitian_eigenvalues, lu_factor, ComplexMatrix, HessenbergForm, LinalgError,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dyson(#[from] DysonError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{failed} of {total} trials failed; first error: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryLaw {
    /// `(N(0,1/2) + i N(0,1/2))`.
    #[default]
    ComplexGaussian,
    /// Real `+-1` with equal probability.
    SymmetrizedBernoulli,
    /// Uniform on the disk of radius `sqrt 2`.
    UniformDisk,
}

impl EntryLaw {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "complex-gaussian" | "gaussian" => Some(Self::ComplexGaussian),
            "symmetrized-bernoulli" | "bernoulli" => Some(Self::SymmetrizedBernoulli),
            "uniform-disk" | "disk" => Some(Self::UniformDisk),
            _ => None,
        }
    }

    /// One unit-variance centered draw.
    fn draw(self, rng: &mut ChaCha8Rng) -> Complex64 {
        match self {
            Self::ComplexGaussian => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
            }
            Self::SymmetrizedBernoulli => Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
            Self::UniformDisk => {
                let r = SQRT_2 * rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                Complex64::from_polar(r, t)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub profile: VarianceProfile,
    pub entry_law: EntryLaw,
    pub base_seed: u64,
    pub trials: usize,
}

impl EnsembleConfig {
    pub fn new(profile: VarianceProfile, entry_law: EntryLaw, base_seed: u64, trials: usize) -> Self {
        Self { profile, entry_law, base_seed, trials }
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSample {
    pub x: ComplexMatrix,
    pub base_seed: u64,
    pub trial: u64,
}

pub fn trial_rng(base_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(trial);
    rng
}

/// `x_ij = sqrt(s_ij) xi_ij`, entries drawn in row-major order.
pub fn sample(config: &EnsembleConfig, trial: u64) -> EnsembleSample {
    let n = config.n();
    let s = config.profile.matrix();
    let mut rng = trial_rng(config.base_seed, trial);
    let mut x = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            x[(i, j)] = config.entry_law.draw(&mut rng) * s[(i, j)].sqrt();
        }
    }
    EnsembleSample { x, base_seed: config.base_seed, trial }
}

/// `H^z = [[0, X - z], [(X - z)^*, 0]]`.
pub fn hermitize(x: &ComplexMatrix, z: Complex64) -> ComplexMatrix {
    let n = x.rows();
    let mut h = ComplexMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let mut a = x[(i, j)];
            if i == j {
                a -= z;
            }
            h[(i, n + j)] = a;
            h[(n + j, i)] = a.conj();
        }
    }
    h
}

/// Diagonal of `(H - i eta)^{-1}`.
pub fn resolvent_diag(h: &ComplexMatrix, eta: f64) -> Result<Vec<Complex64>, EnsembleError> {
    if !(eta > 0.0) {
        return Err(EnsembleError::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let m = h.ensure_square()?;
    let mut a = h.clone();
    for i in 0..m {
        a[(i, i)] -= Complex64::new(0.0, eta);
    }
    Ok(lu_factor(&a)?.inverse_diagonal()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalRegime {
    Bulk,
    Outside,
    LargeEta,
}

/// Bounds `(||g - iv||_inf, |<1, g - iv>|)` of the local law, without
/// the `n^eps` slack.
pub fn local_law_bound(n: usize, eta: f64, tau: f64, tau_star: f64) -> Result<(LocalRegime, f64, f64), EnsembleError> {
    let nf = n as f64;
    if eta >= 1.0 {
        return Ok((LocalRegime::LargeEta, 1.0 / (nf.sqrt() * eta * eta), 1.0 / (nf * eta * eta)));
    }
    if tau <= 1.0 - tau_star {
        Ok((LocalRegime::Bulk, 1.0 / (nf * eta).sqrt(), 1.0 / (nf * eta)))
    } else if tau >= 1.0 + tau_star {
        let ne = nf * eta;
        Ok((LocalRegime::Outside, 1.0 / nf.sqrt() + 1.0 / ne, 1.0 / nf + 1.0 / (ne * ne)))
    } else {
        Err(EnsembleError::InvalidParameter(format!("tau = {tau} lies in the edge band of width {tau_star}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalLawReport {
    pub trial: u64,
    pub z: Complex64,
    pub eta: f64,
    pub tau: f64,
    pub regime: LocalRegime,
    pub g: Vec<Complex64>,
    pub err_inf: f64,
    pub err_avg: f64,
    pub predicted_bound: f64,
    pub predicted_bound_avg: f64,
    /// `|<g1> - <g2>|`.
    pub trace_gap: f64,
    /// `||d||_inf` for the perturbed equation `g + (i eta + S_o g - tau/(i eta + S_d g))^{-1} = d`.
    pub d_inf: f64,
}

impl LocalLawReport {
    pub fn ratio_inf(&self) -> f64 {
        self.err_inf / self.predicted_bound
    }

    pub fn ratio_avg(&self) -> f64 {
        self.err_avg / self.predicted_bound_avg
    }
}

fn apply_complex(profile: &VarianceProfile, x: &[Complex64], transpose: bool) -> Vec<Complex64> {
    let s = if transpose { profile.transpose_matrix() } else { profile.matrix() };
    let n = profile.n();
    (0..n)
        .map(|i| s.row(i).iter().zip(x).fold(Complex64::new(0.0, 0.0), |acc, (&a, &b)| acc + b * a))
        .collect()
}

/// The `d` for which `g` solves the perturbed Dyson equation exactly.
pub fn perturbation(profile: &VarianceProfile, eta: f64, tau: f64, g: &[Complex64]) -> Vec<Complex64> {
    let n = profile.n();
    let (g1, g2) = g.split_at(n);
    let ie = Complex64::new(0.0, eta);
    let so1 = apply_complex(profile, g2, false);
    let so2 = apply_complex(profile, g1, true);
    let sd1 = apply_complex(profile, g1, true);
    let sd2 = apply_complex(profile, g2, false);
    let mut d = Vec::with_capacity(2 * n);
    for (k, &gk) in g.iter().enumerate() {
        let (so, sd) = if k < n { (so1[k], sd1[k]) } else { (so2[k - n], sd2[k - n]) };
        d.push(gk + (ie + so - tau / (ie + sd)).inv());
    }
    d
}

/// Local-law metrics for one sample against a precomputed Dyson solution
/// at `(eta, |z|^2)`.
pub fn local_law_report(
    samp: &EnsembleSample,
    profile: &VarianceProfile,
    sol: &DysonSolution,
    z: Complex64,
    tau_star: f64,
) -> Result<LocalLawReport, EnsembleError> {
    let n = profile.n();
    let (regime, bound, bound_avg) = local_law_bound(n, sol.eta, sol.tau, tau_star)?;
    let h = hermitize(&samp.x, z);
    let g = resolvent_diag(&h, sol.eta)?;
    let v = sol.v();
    let mut err_inf: f64 = 0.0;
    let mut sum = Complex64::new(0.0, 0.0);
    for (gk, &vk) in g.iter().zip(&v) {
        let e = gk - Complex64::new(0.0, vk);
        err_inf = err_inf.max(e.norm());
        sum += e;
    }
    let m = g.len() as f64;
    let t1: Complex64 = g[..n].iter().sum();
    let t2: Complex64 = g[n..].iter().sum();
    let d = perturbation(profile, sol.eta, sol.tau, &g);
    Ok(LocalLawReport {
        trial: samp.trial,
        z,
        eta: sol.eta,
        tau: sol.tau,
        regime,
        err_inf,
        err_avg: sum.norm() / m,
        predicted_bound: bound,
        predicted_bound_avg: bound_avg,
        trace_gap: ((t1 - t2) / n as f64).norm(),
        d_inf: d.iter().map(|x| x.norm()).fold(0.0, f64::max),
        g,
    })
}

pub fn local_law_error(
    config: &EnsembleConfig,
    z: Complex64,
    eta: f64,
    trial: u64,
    tau_star: f64,
) -> Result<LocalLawReport, EnsembleError> {
    let sol = dyson::solve(&config.profile, eta, z.norm_sqr(), &SolveOptions::default())?;
    local_law_report(&sample(config, trial), &config.profile, &sol, z, tau_star)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenReport {
    pub trial: u64,
    pub z: Complex64,
    /// `eta_k = 2^k / n`.
    pub eta_grid: Vec<f64>,
    /// `#{i : |lambda_i(H^z)| <= eta_k}`.
    pub counts: Vec<usize>,
    pub count_eta: f64,
    /// `#{i : |lambda_i(H^z)| <= count_eta}`.
    pub count: usize,
    /// Smallest singular value of `X - z`.
    pub min_singular: f64,
    /// Largest `|lambda_i + lambda_{2n+1-i}|` normalised by the spectral norm.
    pub pairing_defect: f64,
    /// Number of eigenvalues of `X` with `|sigma|^2 <= bulk_tau`.
    pub bulk_count: usize,
    pub bulk_tau: f64,
    /// `max ||y||_inf` over unit bulk eigenvectors of `X`.
    pub max_linf: f64,
    /// Largest `||X y - sigma y||_2` among them.
    pub max_eig_residual: f64,
}

/// Dyadic grid `2^k/n` from `1/n` up to at most 1.
pub fn dyadic_eta_grid(n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut eta = 1.0 / n as f64;
    while eta <= 1.0 {
        out.push(eta);
        eta *= 2.0;
    }
    out
}

pub fn eigen_statistics(
    samp: &EnsembleSample,
    z: Complex64,
    count_eta: f64,
    bulk_tau: Option<f64>,
) -> Result<EigenReport, EnsembleError> {
    let x = &samp.x;
    let n = x.rows();
    let h = hermitize(x, z);
    let ev = hermitian_eigenvalues(&h)?;
    let eta_grid = dyadic_eta_grid(n);
    let counts = eta_grid.iter().map(|&eta| ev.iter().filter(|l| l.abs() <= eta).count()).collect();
    let count = ev.iter().filter(|l| l.abs() <= count_eta).count();
    let min_singular = ev.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let top = ev.iter().map(|l| l.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let m = ev.len();
    let pairing_defect = (0..m / 2).map(|i| (ev[i] + ev[m - 1 - i]).abs()).fold(0.0, f64::max) / top;

    let (mut bulk_count, mut max_linf, mut max_eig_residual) = (0, 0.0f64, 0.0f64);
    let bt = bulk_tau.unwrap_or(f64::NAN);
    if let Some(bt) = bulk_tau {
        let hess = HessenbergForm::new(x)?;
        for sigma in hess.eigenvalues()? {
            if sigma.norm_sqr() > bt {
                continue;
            }
            let y = hess.eigenvector(sigma)?;
            bulk_count += 1;
            max_linf = max_linf.max(y.iter().map(|c| c.norm()).fold(0.0, f64::max));
            let xy = x.matvec(&y);
            let r = xy.iter().zip(&y).map(|(a, &b)| (a - b * sigma).norm_sqr()).sum::<f64>().sqrt();
            max_eig_residual = max_eig_residual.max(r);
        }
    }
    Ok(EigenReport {
        trial: samp.trial,
        z,
        eta_grid,
        counts,
        count_eta,
        count,
        min_singular,
        pairing_defect,
        bulk_count,
        bulk_tau: bt,
        max_linf,
        max_eig_residual,
    })
}

/// Outcome of a batch of independent trials, in trial order.
#[derive(Debug, Clone)]
pub struct TrialBatch<T> {
    pub results: Vec<Result<T, String>>,
}

impl<T> TrialBatch<T> {
    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| r.is_err()).count()
    }

    pub fn successes(&self) -> impl Iterator<Item = &T> {
        self.results.iter().filter_map(|r| r.as_ref().ok())
    }

    /// Failures are tolerated up to `max_fraction` of the batch.
    pub fn check(&self, max_fraction: f64) -> Result<(), EnsembleError> {
        let failed = self.failed();
        let total = self.results.len();
        if total == 0 || failed as f64 > max_fraction * total as f64 || failed == total {
            let first = self
                .results
                .iter()
                .find_map(|r| r.as_ref().err().cloned())
                .unwrap_or_else(|| "no trials".into());
            return Err(EnsembleError::TooManyFailures { failed, total, first });
        }
        Ok(())
    }
}

/// Runs `f(trial)` for every trial in parallel on the current rayon pool.
pub fn run_trials<T, E, F>(trials: usize, f: F) -> TrialBatch<T>
where
    T: Send,
    E: std::fmt::Display,
    F: Fn(u64) -> Result<T, E> + Sync,
{
    let results = (0..trials as u64).into_par_iter().map(|t| f(t).map_err(|e| e.to_string())).collect();
    TrialBatch { results }
}

/// Eigenvalues of each trial matrix.
pub fn eigenvalue_pool(config: &EnsembleConfig) -> TrialBatch<Vec<Complex64>> {
    run_trials(config.trials, |t| -> Result<_, EnsembleError> {
        let s = sample(config, t);
        Ok(HessenbergForm::new(&s.x)?.eigenvalues()?)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusReport {
    pub n: usize,
    pub trials: usize,
    pub failed: usize,
    /// `rho(X)` per successful trial, in trial order.
    pub radii: Vec<f64>,
    pub max_abs_deviation: f64,
    pub mean_deviation: f64,
    /// Quantiles of `rho(X) - 1` at levels `QUANTILE_LEVELS`.
    pub quantiles: Vec<(f64, f64)>,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Linear-interpolation empirical quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn spectral_radius_experiment(config: &EnsembleConfig, max_fail_fraction: f64) -> Result<RadiusReport, EnsembleError> {
    if !config.profile.is_normalized() {
        return Err(EnsembleError::InvalidParameter("spectral radius experiment needs a normalised profile".into()));
    }
    let batch = eigenvalue_pool(config);
    batch.check(max_fail_fraction)?;
    let radii: Vec<f64> = batch.successes().map(|ev| ev.iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
    let mut dev: Vec<f64> = radii.iter().map(|r| r - 1.0).collect();
    dev.sort_by(f64::total_cmp);
    Ok(RadiusReport {
        n: config.n(),
        trials: config.trials,
        failed: batch.failed(),
        max_abs_deviation: dev.iter().map(|d| d.abs()).fold(0.0, f64::max),
        mean_deviation: dev.iter().sum::<f64>() / dev.len() as f64,
        quantiles: QUANTILE_LEVELS.iter().map(|&p| (p, quantile_sorted(&dev, p))).collect(),
        radii,
    })
}
