//! Hermitization: linear eigenvalue statistics through log-determinants.
//!
//! `(1/n) sum f(sigma_i) = (1/2 pi n) int Laplace(f) log|det(X - z)| d^2z`,
//! and `log|det(X - z)| = (1/2) log|det H^z|`, which in turn is written
//! through the Stieltjes transform of `H^z` on the imaginary axis.

use crate::density::{cumulative_mass, DensityOptions, RadialDensity};
use crate::dyson::{self, DysonError, DysonSolution, SolveOptions, VarianceProfile};
use crate::ensemble::{hermitize, run_trials, sample, EnsembleConfig, EnsembleError};
use crate::linalg::{
    general_eigenvalues, hermitian_eigenvalues, log_abs_det, ComplexMatrix, LinalgError,
};
use crate::quad::gauss_legendre_on;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GirkoError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dyson(#[from] DysonError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("H^z is singular: z is an eigenvalue of X")]
    Singular,
}

/// `n^{2a} f(n^a (z - z0))` with the bump `f(w) = (1 - |w|^2)^3` on the
/// unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Complex64,
    pub a: f64,
    /// The `n` of the rescaling.
    pub n: usize,
}

/// `||Laplace f||_1` of the unscaled bump, `32 pi / 9`.
pub const BUMP_LAPLACIAN_L1: f64 = 32.0 * PI / 9.0;

impl TestFunction {
    pub fn new(center: Complex64, a: f64, n: usize) -> Result<Self, GirkoError> {
        if !(0.0..0.5).contains(&a) {
            return Err(GirkoError::InvalidParameter(format!("scale exponent a = {a} must lie in [0, 1/2)")));
        }
        if n == 0 {
            return Err(GirkoError::InvalidParameter("n must be positive".into()));
        }
        Ok(Self { center, a, n })
    }

    fn stretch(&self) -> f64 {
        (self.n as f64).powf(self.a)
    }

    pub fn support_radius(&self) -> f64 {
        1.0 / self.stretch()
    }

    fn local(&self, z: Complex64) -> f64 {
        ((z - self.center) * self.stretch()).norm_sqr()
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        let r2 = self.local(z);
        if r2 >= 1.0 {
            return 0.0;
        }
        let s = self.stretch();
        s * s * (1.0 - r2).powi(3)
    }

    /// Closed-form `Laplace f = n^{4a} 12 (1 - r^2)(3 r^2 - 1)`.
    pub fn laplacian(&self, z: Complex64) -> f64 {
        let r2 = self.local(z);
        if r2 >= 1.0 {
            return 0.0;
        }
        let s2 = self.stretch().powi(2);
        s2 * s2 * 12.0 * (1.0 - r2) * (3.0 * r2 - 1.0)
    }

    /// `||Laplace f_{z0,a}||_1 = n^{2a} 32 pi / 9`.
    pub fn laplacian_l1(&self) -> f64 {
        self.stretch().powi(2) * BUMP_LAPLACIAN_L1
    }

    /// `int f` (always `pi/4`) and `int Laplace f` (always 0) by polar
    /// Gauss-Legendre around the center.
    pub fn polar_integrals(&self, k: usize) -> (f64, f64) {
        let phi = self.support_radius();
        let mut i_f = 0.0;
        let mut i_lap = 0.0;
        for (r, w) in gauss_legendre_on(0.0, phi, k) {
            let z = self.center + r;
            i_f += 2.0 * PI * r * w * self.eval(z);
            i_lap += 2.0 * PI * r * w * self.laplacian(z);
        }
        (i_f, i_lap)
    }

    /// `(1/n) sum f(sigma_i)`.
    pub fn linear_statistic(&self, eigenvalues: &[Complex64]) -> f64 {
        eigenvalues.iter().map(|&s| self.eval(s)).sum::<f64>() / eigenvalues.len() as f64
    }

    /// `int f(z) sigma(|z|^2) d^2z` in polar coordinates about the origin,
    /// with the radial integral split where the interpolant has its edge
    /// piece and at the spectral edge.
    pub fn integrate_radial(&self, sigma: &RadialDensity, radial_nodes: usize, angular_nodes: usize) -> f64 {
        let c = self.center.norm();
        let phi = self.support_radius();
        let lo = (c - phi).max(0.0);
        let hi = (c + phi).min(1.0);
        if lo >= hi {
            return 0.0;
        }
        let mut breaks = vec![lo];
        let inner = sigma.taus.iter().rev().nth(1).copied().unwrap_or(0.0).sqrt();
        if inner > lo && inner < hi {
            breaks.push(inner);
        }
        breaks.push(hi);
        let mut total = 0.0;
        for seg in breaks.windows(2) {
            for (r, w) in gauss_legendre_on(seg[0], seg[1], radial_nodes) {
                let mut ring = 0.0;
                for k in 0..angular_nodes {
                    let t = 2.0 * PI * k as f64 / angular_nodes as f64;
                    ring += self.eval(Complex64::from_polar(r, t));
                }
                total += w * r * sigma.eval(r * r) * ring * 2.0 * PI / angular_nodes as f64;
            }
        }
        total
    }
}

/// Cell-centered square grid over the support of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirkoGrid {
    pub center: Complex64,
    pub h: f64,
    pub per_side: usize,
    /// Offset applied to every node, a fraction of `h`.
    pub shift: (f64, f64),
}

pub const MIN_NODES_ACROSS: f64 = 24.0;
pub const MARGIN_CELLS: f64 = 2.0;

impl GirkoGrid {
    pub fn new(f: &TestFunction, h: f64) -> Result<Self, GirkoError> {
        let phi = f.support_radius();
        if !(h > 0.0) || 2.0 * phi / h < MIN_NODES_ACROSS {
            return Err(GirkoError::GridTooCoarse(format!(
                "spacing {h} gives fewer than {MIN_NODES_ACROSS} nodes across a support of diameter {}",
                2.0 * phi
            )));
        }
        let per_side = (2.0 * (phi + MARGIN_CELLS * h) / h).ceil() as usize;
        Ok(Self { center: f.center, h, per_side, shift: (0.0, 0.0) })
    }

    pub fn with_nodes_across(f: &TestFunction, nodes: usize) -> Result<Self, GirkoError> {
        Self::new(f, 2.0 * f.support_radius() / nodes as f64)
    }

    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        Self { shift: (dx, dy), ..*self }
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        let half = 0.5 * self.per_side as f64 * self.h;
        let x = -half + (j as f64 + 0.5 + self.shift.0) * self.h;
        let y = -half + (i as f64 + 0.5 + self.shift.1) * self.h;
        self.center + Complex64::new(x, y)
    }

    /// Nodes where `Laplace f` is nonzero, with the weight `h^2 Laplace f`.
    pub fn weighted_nodes(&self, f: &TestFunction) -> Vec<(Complex64, f64)> {
        let h2 = self.h * self.h;
        let mut out = Vec::new();
        for i in 0..self.per_side {
            for j in 0..self.per_side {
                let z = self.node(i, j);
                let l = f.laplacian(z);
                if l != 0.0 {
                    out.push((z, h2 * l));
                }
            }
        }
        out
    }

    fn min_distance(&self, f: &TestFunction, points: &[Complex64]) -> f64 {
        let mut best = f64::INFINITY;
        for (z, _) in self.weighted_nodes(f) {
            for &p in points {
                best = best.min((z - p).norm());
            }
        }
        best
    }

    /// Shifts the grid until no point is within `h/4` of a node. The
    /// offsets are a fixed low-discrepancy sequence, so the outcome is
    /// deterministic.
    pub fn avoiding(&self, f: &TestFunction, points: &[Complex64]) -> Result<Self, GirkoError> {
        const G1: f64 = 0.754_877_666_246_692_7;
        const G2: f64 = 0.569_840_290_998_053_2;
        for k in 0..64 {
            let s = if k == 0 {
                (0.0, 0.0)
            } else {
                ((k as f64 * G1).fract() - 0.5, (k as f64 * G2).fract() - 0.5)
            };
            let g = self.shifted(s.0, s.1);
            if g.min_distance(f, points) >= 0.25 * self.h {
                return Ok(g);
            }
        }
        Err(GirkoError::GridTooCoarse("no grid shift keeps every eigenvalue h/4 away from the nodes".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GirkoIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// `|rhs(h) - rhs(2h)| / 3`.
    pub error_estimate: f64,
    pub h: f64,
    pub nodes: usize,
    pub shift: (f64, f64),
    /// Largest `|log|det(X - z)| - (1/2) log|det H^z||` relative to
    /// `max(1, |log|det(X - z)||)` over the nodes.
    pub max_logdet_mismatch: f64,
}

/// The residual may exceed the quadrature error model by this factor
/// before the grid is declared too coarse.
pub const QUADRATURE_SAFETY: f64 = 10.0;

fn log_abs_det_or_singular(a: &ComplexMatrix) -> Result<f64, GirkoError> {
    match log_abs_det(a) {
        Ok(v) => Ok(v),
        Err(LinalgError::MinusInfinity { .. }) => Err(GirkoError::Singular),
        Err(e) => Err(e.into()),
    }
}

fn shifted_by(x: &ComplexMatrix, z: Complex64) -> ComplexMatrix {
    let mut a = x.clone();
    for i in 0..a.rows() {
        a[(i, i)] -= z;
    }
    a
}

fn grid_rhs(x: &ComplexMatrix, f: &TestFunction, grid: &GirkoGrid, check_hermitized: bool) -> Result<(f64, usize, f64), GirkoError> {
    let n = x.rows() as f64;
    let nodes = grid.weighted_nodes(f);
    let vals: Result<Vec<(f64, f64)>, GirkoError> = nodes
        .par_iter()
        .map(|&(z, w)| {
            let ld = log_abs_det_or_singular(&shifted_by(x, z))?;
            let mismatch = if check_hermitized {
                let lh = log_abs_det_or_singular(&hermitize(x, z))?;
                (ld - 0.5 * lh).abs() / ld.abs().max(1.0)
            } else {
                0.0
            };
            Ok((w * ld, mismatch))
        })
        .collect();
    let vals = vals?;
    let sum: f64 = vals.iter().map(|v| v.0).sum();
    let mismatch = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok((sum / (2.0 * PI * n), nodes.len(), mismatch))
}

/// Both sides of the log-transform identity. The right side is a
/// midpoint rule with the closed-form Laplacian; a second pass at spacing
/// `2h` gives the error estimate.
pub fn girko_identity(x: &ComplexMatrix, f: &TestFunction, grid: &GirkoGrid) -> Result<GirkoIdentity, GirkoError> {
    let eigs = general_eigenvalues(x)?;
    let lhs = f.linear_statistic(&eigs);
    let g = grid.avoiding(f, &eigs)?;
    let (rhs, nodes, mismatch) = grid_rhs(x, f, &g, true)?;
    let coarse = GirkoGrid::new(f, 2.0 * g.h).and_then(|c| c.avoiding(f, &eigs));
    let error_estimate = match coarse {
        Ok(c) => (rhs - grid_rhs(x, f, &c, false)?.0).abs() / 3.0,
        Err(_) => f64::INFINITY,
    };
    let residual = (lhs - rhs).abs();
    // A shifted coarse grid can make the Richardson estimate accidentally
    // small, so it is floored by the size of an h^2 midpoint error.
    let floor = g.h * g.h * f.laplacian_l1() / (2.0 * PI * x.rows() as f64);
    let model = QUADRATURE_SAFETY * error_estimate.max(floor);
    if residual > model {
        return Err(GirkoError::GridTooCoarse(format!(
            "residual {residual:e} exceeds the quadrature error model {model:e}"
        )));
    }
    Ok(GirkoIdentity { lhs, rhs, residual, error_estimate, h: g.h, nodes, shift: g.shift, max_logdet_mismatch: mismatch })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HermitizedLogdet {
    /// `log|det H^z|` from an LU factorisation.
    pub lhs: f64,
    /// `log|det(H^z - iT)| - 2n int_0^T Im m^z(i eta) d eta`.
    pub rhs: f64,
    pub difference: f64,
    pub shifted_logdet: f64,
    pub im_m_integral: f64,
    /// `log|det(X - z)|`, to compare with `lhs / 2`.
    pub log_det_x: f64,
    pub t_cut: f64,
}

/// `Im m^z(i eta)` and `eta Im m^z(i eta)` from the spectrum of `H^z`.
fn eta_im_m(lambdas: &[f64], eta: f64) -> f64 {
    let e2 = eta * eta;
    lambdas.iter().map(|l| e2 / (l * l + e2)).sum::<f64>() / lambdas.len() as f64
}

/// `int_0^T Im m(i eta) d eta` with one 16-point Gauss-Legendre panel per
/// decade of `eta`, starting three decades below the smallest `|lambda|`;
/// the piece below that is evaluated in closed form.
pub fn im_m_integral(lambdas: &[f64], t_cut: f64) -> f64 {
    let lmin = lambdas.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let lo = (1e-3 * lmin).min(1e-3 * t_cut);
    let m = lambdas.len() as f64;
    let below = lambdas.iter().map(|l| (lo * lo / (l * l)).ln_1p()).sum::<f64>() / (2.0 * m);
    let (a, b) = (lo.ln(), t_cut.ln());
    let panels = ((b - a) / std::f64::consts::LN_10).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut total = below;
    for p in 0..panels {
        let s = a + p as f64 * width;
        for (t, w) in gauss_legendre_on(s, s + width, 16) {
            total += w * eta_im_m(lambdas, t.exp());
        }
    }
    total
}

pub fn hermitized_logdet(x: &ComplexMatrix, z: Complex64, t_cut: f64) -> Result<HermitizedLogdet, GirkoError> {
    let h = hermitize(x, z);
    let m = h.rows();
    let lambdas = hermitian_eigenvalues(&h)?;
    let top = lambdas.iter().map(|l| l.abs()).fold(0.0, f64::max);
    if t_cut < 10.0 * top {
        return Err(GirkoError::InvalidParameter(format!("T_cut = {t_cut} is below 10 ||H^z|| = {}", 10.0 * top)));
    }
    if lambdas.iter().any(|&l| l == 0.0) {
        return Err(GirkoError::Singular);
    }
    let lhs = log_abs_det_or_singular(&h)?;
    let mut shifted = h.clone();
    for i in 0..m {
        shifted[(i, i)] -= Complex64::new(0.0, t_cut);
    }
    let shifted_logdet = log_abs_det(&shifted)?;
    let im = im_m_integral(&lambdas, t_cut);
    let rhs = shifted_logdet - m as f64 * im;
    let log_det_x = log_abs_det_or_singular(&shifted_by(x, z))?;
    Ok(HermitizedLogdet { lhs, rhs, difference: lhs - rhs, shifted_logdet, im_m_integral: im, log_det_x, t_cut })
}

/// `Lambda(eta) = <log((eta + S_d v)(eta + S_o v) + tau)> - <v S_o v>`,
/// whose `eta`-derivative is `2 <v1>`.
pub fn log_potential(profile: &VarianceProfile, sol: &DysonSolution) -> f64 {
    let n = profile.n();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    profile.apply_t(&sol.v1, &mut a);
    profile.apply(&sol.v2, &mut b);
    let logs: f64 = a.iter().zip(&b).map(|(x, y)| ((sol.eta + x) * (sol.eta + y) + sol.tau).ln()).sum();
    let quad: f64 = sol.v1.iter().zip(&b).map(|(v, y)| v * y).sum();
    (logs - quad) / n as f64
}

/// `int_T^inf (<v1> - 1/(1 + eta)) d eta = log(1 + T) - Lambda(T)/2`,
/// arranged so that nothing of order `log T` cancels.
pub fn tail_integral(profile: &VarianceProfile, sol: &DysonSolution) -> f64 {
    let n = profile.n();
    let t = sol.eta;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    profile.apply_t(&sol.v1, &mut a);
    profile.apply(&sol.v2, &mut b);
    let logs: f64 = a.iter().zip(&b).map(|(x, y)| ((x + y) / t + (x * y + sol.tau) / (t * t)).ln_1p()).sum();
    let quad: f64 = sol.v1.iter().zip(&b).map(|(v, y)| v * y).sum();
    (1.0 / t).ln_1p() + (quad - logs) / (2.0 * n as f64)
}

/// `int_lo^hi <v1> d eta` by Gauss-Legendre panels in `log eta`, one per
/// decade. Used to check the closed forms above.
pub fn v1_integral_numeric(profile: &VarianceProfile, tau: f64, lo: f64, hi: f64, opts: &SolveOptions) -> Result<f64, DysonError> {
    let (a, b) = (lo.ln(), hi.ln());
    let panels = ((b - a) / std::f64::consts::LN_10).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let s = a + p as f64 * width;
        for (t, w) in gauss_legendre_on(s, s + width, 16) {
            let eta = t.exp();
            total += w * eta * dyson::solve(profile, eta, tau, opts)?.mean_v1();
        }
    }
    Ok(total)
}

/// Dyson-side quantities that depend on `z` only through `tau = |z|^2`.
#[derive(Debug, Clone, Copy)]
struct DysonNode {
    /// `int_0^{eta_c} <v1>`.
    sub_cut: f64,
    lambda_cut: f64,
    lambda_one: f64,
    tail: f64,
}

fn dyson_node(profile: &VarianceProfile, tau: f64, eta_c: f64, t_cut: f64, points: usize, opts: &SolveOptions) -> Result<DysonNode, DysonError> {
    let at_cut = dyson::solve(profile, eta_c, tau, opts)?;
    // eta = eta_c s^3 smooths the eta^{1/3} behaviour near the edge
    let mut sub_cut = 0.0;
    let mut prev = at_cut.clone();
    for (s, w) in gauss_legendre_on(0.0, 1.0, points).into_iter().rev() {
        let eta = eta_c * s * s * s;
        let sol = dyson::solve_from(profile, eta, tau, opts, &prev.v1, &prev.v2)?;
        sub_cut += w * 3.0 * eta_c * s * s * sol.mean_v1();
        prev = sol;
    }
    Ok(DysonNode {
        sub_cut,
        lambda_cut: log_potential(profile, &at_cut),
        lambda_one: log_potential(profile, &dyson::solve(profile, 1.0, tau, opts)?),
        tail: tail_integral(profile, &dyson::solve(profile, t_cut, tau, opts)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterOptions {
    /// Defaults to `n^4`.
    pub t_cut: Option<f64>,
    /// `eta_c = n^{-1 + eps}`.
    pub eps: f64,
    pub nodes_across: usize,
    pub sub_cut_points: usize,
    pub density_points: usize,
    pub max_fail_fraction: f64,
    pub solve: SolveOptions,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            t_cut: None,
            eps: 0.25,
            nodes_across: 32,
            sub_cut_points: 12,
            density_points: 201,
            max_fail_fraction: 0.1,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MasterTrial {
    pub trial: u64,
    /// `(1/n) sum f(sigma_i)`.
    pub linear_statistic: f64,
    /// `(1/n) sum f(sigma_i) - int f sigma`.
    pub discrepancy: f64,
    pub term1: f64,
    pub term2: f64,
    /// Term 2 restricted to `[0, eta_c]`, `[eta_c, 1]` and `[1, T]`.
    pub term2_pieces: [f64; 3],
    pub term3: f64,
    /// `discrepancy - (term1 + term2 + term3)`: z-quadrature error.
    pub identity_gap: f64,
    pub min_singular: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MasterReport {
    pub n: usize,
    pub a: f64,
    pub center: Complex64,
    pub t_cut: f64,
    pub eta_cut: f64,
    pub h: f64,
    pub nodes: usize,
    pub integral_f_sigma: f64,
    /// `n^{-1+2a} ||Laplace f||_1` with the unscaled bump.
    pub target: f64,
    /// `||Laplace f||_1 n^{2a} / T`.
    pub term3_bound: f64,
    pub trials: Vec<MasterTrial>,
    pub failed: usize,
    pub max_abs_discrepancy: f64,
    pub max_ratio: f64,
}

/// `int f sigma` for a normalised profile.
pub fn integral_f_sigma(profile: &VarianceProfile, f: &TestFunction, density_points: usize) -> Result<f64, GirkoError> {
    let sigma = RadialDensity::compute(profile, density_points, &DensityOptions::default())?;
    Ok(f.integrate_radial(&sigma, 16, 256))
}

/// Per trial: the linear-statistic discrepancy against the density of
/// states, and the three terms it splits into. Dyson quantities are
/// shared between trials.
pub fn master_formula_audit(config: &EnsembleConfig, f: &TestFunction, opts: &MasterOptions) -> Result<MasterReport, GirkoError> {
    let profile = &config.profile;
    if !profile.is_normalized() {
        return Err(GirkoError::InvalidParameter("master formula audit needs a normalised profile".into()));
    }
    let n = config.n();
    let nf = n as f64;
    let t_cut = opts.t_cut.unwrap_or(nf.powi(4));
    let eta_c = nf.powf(-1.0 + opts.eps);
    let grid = GirkoGrid::with_nodes_across(f, opts.nodes_across)?;
    let nodes = grid.weighted_nodes(f);

    let mut taus: Vec<f64> = nodes.iter().map(|(z, _)| z.norm_sqr()).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let data: Result<Vec<(u64, DysonNode)>, DysonError> = taus
        .par_iter()
        .map(|&t| Ok((t.to_bits(), dyson_node(profile, t, eta_c, t_cut, opts.sub_cut_points, &opts.solve)?)))
        .collect();
    let cache: HashMap<u64, DysonNode> = data?.into_iter().collect();
    let fsigma = integral_f_sigma(profile, f, opts.density_points)?;

    let batch = run_trials(config.trials, |trial| -> Result<MasterTrial, GirkoError> {
        let x = sample(config, trial).x;
        let linear_statistic = f.linear_statistic(&general_eigenvalues(&x)?);
        let mut acc = [0.0f64; 5];
        let mut min_singular = f64::INFINITY;
        for &(z, w) in &nodes {
            let a = shifted_by(&x, z);
            let gram = a.adjoint().matmul(&a);
            let s2: Vec<f64> = hermitian_eigenvalues(&gram)?.into_iter().map(|l| l.max(0.0)).collect();
            if s2.iter().any(|&l| l == 0.0) {
                return Err(GirkoError::Singular);
            }
            min_singular = min_singular.min(s2[0].sqrt());
            let d = cache[&z.norm_sqr().to_bits()];
            let twon = 2.0 * nf;
            let t2 = t_cut * t_cut;
            let c2 = eta_c * eta_c;
            // log|det(H - iT)| less its constant 2n log T
            let t1: f64 = s2.iter().map(|l| (l / t2).ln_1p()).sum();
            let im_sub: f64 = s2.iter().map(|l| (c2 / l).ln_1p()).sum::<f64>() / twon;
            let im_mid: f64 = s2.iter().map(|l| l.ln_1p() - (l + c2).ln()).sum::<f64>() / twon;
            let im_up: f64 = s2.iter().map(|l| (l / t2).ln_1p() - l.ln_1p()).sum::<f64>() / twon;
            let p_sub = im_sub - d.sub_cut;
            let p_mid = im_mid - 0.5 * (d.lambda_one - d.lambda_cut);
            let p_up = im_up - (1.0 / t_cut).ln_1p() + d.tail + 0.5 * d.lambda_one;
            acc[0] += w * t1;
            acc[1] += w * p_sub;
            acc[2] += w * p_mid;
            acc[3] += w * p_up;
            acc[4] += w * d.tail;
        }
        let term1 = acc[0] / (4.0 * PI * nf);
        let pieces = [-acc[1] / (2.0 * PI), -acc[2] / (2.0 * PI), -acc[3] / (2.0 * PI)];
        let term2 = pieces.iter().sum();
        let term3 = acc[4] / (2.0 * PI);
        let discrepancy = linear_statistic - fsigma;
        Ok(MasterTrial {
            trial,
            linear_statistic,
            discrepancy,
            term1,
            term2,
            term2_pieces: pieces,
            term3,
            identity_gap: discrepancy - (term1 + term2 + term3),
            min_singular,
        })
    });
    batch.check(opts.max_fail_fraction)?;
    let trials: Vec<MasterTrial> = batch.successes().cloned().collect();
    let target = nf.powf(-1.0 + 2.0 * f.a) * BUMP_LAPLACIAN_L1;
    let max_abs_discrepancy = trials.iter().map(|t| t.discrepancy.abs()).fold(0.0, f64::max);
    Ok(MasterReport {
        n,
        a: f.a,
        center: f.center,
        t_cut,
        eta_cut: eta_c,
        h: grid.h,
        nodes: nodes.len(),
        integral_f_sigma: fsigma,
        target,
        term3_bound: f.laplacian_l1() / t_cut,
        failed: batch.failed(),
        max_ratio: max_abs_discrepancy / target,
        max_abs_discrepancy,
        trials,
    })
}

/// Linear-statistic discrepancies alone, without the term decomposition.
pub fn linear_statistic_discrepancies(config: &EnsembleConfig, f: &TestFunction, density_points: usize) -> Result<Vec<f64>, GirkoError> {
    let fsigma = integral_f_sigma(&config.profile, f, density_points)?;
    let batch = run_trials(config.trials, |t| -> Result<f64, GirkoError> {
        Ok(f.linear_statistic(&general_eigenvalues(&sample(config, t).x)?) - fsigma)
    });
    batch.check(0.1)?;
    Ok(batch.successes().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistOptions {
    /// Bins with upper edge at most this `|z|^2` are compared.
    pub bulk_tau: f64,
    /// Eigenvalues with `|sigma|^2 >= 1 + outside_gap` count as outside.
    pub outside_gap: f64,
    pub density: DensityOptions,
    pub max_fail_fraction: f64,
}

impl Default for HistOptions {
    fn default() -> Self {
        Self { bulk_tau: 0.8, outside_gap: 0.2, density: DensityOptions::default(), max_fail_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistBin {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub bin_center_r: f64,
    pub count: usize,
    /// Eigenvalues per unit area, normalised by the pooled count `n * trials`.
    pub empirical_density: f64,
    /// `sigma` at the bin center.
    pub sigma: f64,
    /// Mass of `sigma` in the bin divided by its area.
    pub expected_density: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub bulk: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistReport {
    pub n: usize,
    pub trials: usize,
    pub failed: usize,
    pub bins: Vec<HistBin>,
    pub total_eigenvalues: usize,
    pub outside_count: usize,
    pub outside_fraction: f64,
    pub outside_tau: f64,
    pub bulk_tau: f64,
    pub max_abs_z_bulk: f64,
    pub max_rel_dev_bulk: f64,
}

/// Radial histogram of the pooled eigenvalues in equal-area bins of
/// `|z|^2` over `[0, 1]`.
pub fn histogram_vs_sigma(config: &EnsembleConfig, radial_bins: usize, opts: &HistOptions) -> Result<HistReport, GirkoError> {
    let profile = &config.profile;
    if !profile.is_normalized() {
        return Err(GirkoError::InvalidParameter("histogram needs a normalised profile".into()));
    }
    if radial_bins == 0 {
        return Err(GirkoError::InvalidParameter("need at least one bin".into()));
    }
    let batch = crate::ensemble::eigenvalue_pool(config);
    batch.check(opts.max_fail_fraction)?;
    let mut counts = vec![0usize; radial_bins];
    let mut total = 0;
    let mut outside = 0;
    let outside_tau = 1.0 + opts.outside_gap;
    for ev in batch.successes() {
        for s in ev {
            total += 1;
            let t = s.norm_sqr();
            if t >= outside_tau {
                outside += 1;
            }
            if t < 1.0 {
                counts[((t * radial_bins as f64) as usize).min(radial_bins - 1)] += 1;
            }
        }
    }
    let width = 1.0 / radial_bins as f64;
    let edge_limit = 1.0 - opts.density.tau_star;
    let edges: Vec<f64> = (0..=radial_bins).map(|k| k as f64 * width).collect();
    let cum: Result<Vec<Option<f64>>, DysonError> = edges
        .par_iter()
        .map(|&t| if t <= edge_limit + 1e-12 { cumulative_mass(profile, t.min(edge_limit), &opts.density).map(Some) } else { Ok(None) })
        .collect();
    let cum = cum?;
    let mids: Vec<f64> = (0..radial_bins).map(|k| (k as f64 + 0.5) * width).collect();
    let sig: Result<Vec<f64>, DysonError> = mids
        .par_iter()
        .map(|&t| if t <= edge_limit { crate::density::sigma_derivative_form(profile, t, &opts.density) } else { Ok(f64::NAN) })
        .collect();
    let sig = sig?;
    let norm = total as f64;
    let area = PI * width;
    let mut bins = Vec::with_capacity(radial_bins);
    let (mut max_z, mut max_rel) = (0.0f64, 0.0f64);
    for k in 0..radial_bins {
        let c = counts[k];
        let emp = c as f64 / (norm * area);
        let expected = match (cum[k], cum[k + 1]) {
            (Some(a), Some(b)) => (b - a) / area,
            _ => f64::NAN,
        };
        let stderr = (c.max(1) as f64).sqrt() / (norm * area);
        let z = (emp - expected) / stderr;
        let bulk = edges[k + 1] <= opts.bulk_tau + 1e-12 && expected.is_finite();
        if bulk {
            max_z = max_z.max(z.abs());
            max_rel = max_rel.max(((emp - expected) / expected).abs());
        }
        bins.push(HistBin {
            tau_lo: edges[k],
            tau_hi: edges[k + 1],
            bin_center_r: mids[k].sqrt(),
            count: c,
            empirical_density: emp,
            sigma: sig[k],
            expected_density: expected,
            stderr,
            z_score: z,
            bulk,
        });
    }
    Ok(HistReport {
        n: config.n(),
        trials: config.trials,
        failed: batch.failed(),
        bins,
        total_eigenvalues: total,
        outside_count: outside,
        outside_fraction: if total > 0 { outside as f64 / norm } else { 0.0 },
        outside_tau,
        bulk_tau: opts.bulk_tau,
        max_abs_z_bulk: max_z,
        max_rel_dev_bulk: max_rel,
    })
}
