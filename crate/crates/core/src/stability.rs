//! The linearisation of the Dyson equation and its symmetrised pieces.
//!
//! `L y = y + v^2 S_o y - tau u^2 S_d y` factorises as
//! `L = V^{-1} (1 - T F) V` with
//!
//! * `V = diag(sqrt(v~/(u v)))`
//! * `F = V^{-1} S_o V^{-1}`, symmetric with zero diagonal blocks
//! * `T = [[-v1 v2/u, tau u], [tau u, -v1 v2/u]]` blockwise diagonal.

use crate::dyson::{DysonError, DysonSolution, VarianceProfile};
use crate::linalg::{lu_factor, symmetric_eigenvalues, LinalgError, RealMatrix};
use serde::{Deserialize, Serialize};

pub const F_PLUS_MAX_ITER: usize = 200;
pub const F_PLUS_TOL: f64 = 1e-12;

/// Dense `L` for stacked `v` and `u` (both of length `2n`). Valid at
/// `eta = 0` as well.
pub fn stability_matrix(profile: &VarianceProfile, _eta: f64, tau: f64, v: &[f64], u: &[f64]) -> RealMatrix {
    let n = profile.n();
    let s = profile.matrix();
    let mut l = RealMatrix::identity(2 * n);
    for i in 0..n {
        let (a, b) = (v[i] * v[i], tau * u[i] * u[i]);
        let (c, d) = (v[n + i] * v[n + i], tau * u[n + i] * u[n + i]);
        for j in 0..n {
            // row i: v1^2 (S v2-block) and tau u^2 (S^t v1-block)
            l[(i, n + j)] += a * s[(i, j)];
            l[(i, j)] -= b * s[(j, i)];
            // row n+i: v2^2 (S^t v1-block) and tau u^2 (S v2-block)
            l[(n + i, j)] += c * s[(j, i)];
            l[(n + i, n + j)] -= d * s[(i, j)];
        }
    }
    l
}

#[derive(Debug, Clone)]
pub struct StabilityOperators {
    pub eta: f64,
    pub tau: f64,
    pub l: RealMatrix,
    pub t: RealMatrix,
    pub f: RealMatrix,
    /// Diagonal of `V`.
    pub v_diag: Vec<f64>,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    pub norm_f: f64,
    pub a_vec: Vec<f64>,
    pub f_plus_iterations: usize,
}

/// Normalises to `<x^2> = 1`.
fn normalize_avg(x: &mut [f64]) {
    let s = (x.iter().map(|a| a * a).sum::<f64>() / x.len() as f64).sqrt();
    x.iter_mut().for_each(|a| *a /= s);
}

fn e_minus(x: &[f64]) -> Vec<f64> {
    let n = x.len() / 2;
    x.iter().enumerate().map(|(i, &a)| if i < n { a } else { -a }).collect()
}

pub fn build(profile: &VarianceProfile, sol: &DysonSolution) -> Result<StabilityOperators, DysonError> {
    if !(sol.eta > 0.0) {
        return Err(DysonError::InvalidParameter("stability operators need eta > 0".into()));
    }
    let n = profile.n();
    let m = 2 * n;
    let v = sol.v();
    let vt = sol.v_tilde();
    let u = sol.u_doubled();
    let tau = sol.tau;
    let l = stability_matrix(profile, sol.eta, tau, &v, &u);

    let v_diag: Vec<f64> = (0..m).map(|i| (vt[i] / (u[i] * v[i])).sqrt()).collect();
    let d: Vec<f64> = v_diag.iter().map(|x| 1.0 / x).collect();

    let mut t = RealMatrix::zeros(m, m);
    for i in 0..n {
        let diag = -sol.v1[i] * sol.v2[i] / sol.u[i];
        let off = tau * sol.u[i];
        t[(i, i)] = diag;
        t[(n + i, n + i)] = diag;
        t[(i, n + i)] = off;
        t[(n + i, i)] = off;
    }

    // F12 = D1 S D2
    let s = profile.matrix();
    let f12 = RealMatrix::from_fn(n, n, |i, j| d[i] * s[(i, j)] * d[n + j]);
    let mut f = RealMatrix::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            f[(i, n + j)] = f12[(i, j)];
            f[(n + j, i)] = f12[(i, j)];
        }
    }

    // Power iteration on F12^t F12: F itself has the pair +-||F|| on top.
    let mut b = vec![1.0; n];
    let mut lam = 0.0;
    let mut iters = 0;
    let mut converged = false;
    let f12t = f12.transpose();
    for it in 1..=F_PLUS_MAX_ITER {
        let y = f12t.matvec(&f12.matvec(&b));
        let bb: f64 = b.iter().map(|x| x * x).sum();
        let new_lam = y.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>() / bb;
        let r: f64 = y.iter().zip(&b).map(|(p, q)| (p - new_lam * q).powi(2)).sum::<f64>().sqrt() / bb.sqrt();
        let ny = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        b = y.into_iter().map(|x| x / ny).collect();
        iters = it;
        if r <= F_PLUS_TOL * new_lam && (new_lam - lam).abs() <= F_PLUS_TOL * new_lam {
            lam = new_lam;
            converged = true;
            break;
        }
        lam = new_lam;
    }
    if !converged {
        return Err(DysonError::Linalg(LinalgError::NoConvergence { what: "f+ power iteration", iterations: iters }));
    }
    let fb = f12.matvec(&b);
    let norm_f = lam.sqrt();
    let mut f_plus: Vec<f64> = fb.iter().map(|x| x / norm_f).collect();
    f_plus.extend_from_slice(&b);
    normalize_avg(&mut f_plus);
    let f_minus = e_minus(&f_plus);

    let vv: Vec<f64> = v.iter().zip(&v_diag).map(|(a, b)| a * b).collect();
    let mut a_vec = e_minus(&vv);
    normalize_avg(&mut a_vec);

    Ok(StabilityOperators {
        eta: sol.eta,
        tau,
        l,
        t,
        f,
        v_diag,
        f_plus,
        f_minus,
        norm_f,
        a_vec,
        f_plus_iterations: iters,
    })
}

/// `1 - eta <f+ sqrt(v/(eta + S_o v))> / <f+ sqrt(v (eta + S_o v))>`
pub fn norm_f_formula(ops: &StabilityOperators, profile: &VarianceProfile, sol: &DysonSolution) -> f64 {
    let v = sol.v();
    let sov = crate::dyson::apply_so(profile, &v);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..v.len() {
        let w = sol.eta + sov[i];
        num += ops.f_plus[i] * (v[i] / w).sqrt();
        den += ops.f_plus[i] * (v[i] * w).sqrt();
    }
    1.0 - sol.eta * num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub eta: f64,
    pub tau: f64,
    /// `max |L - V^{-1}(1 - T F) V|`
    pub factorization: f64,
    /// `|L^t (e_- v~/u) - eta e_-|_inf`
    pub adjoint_null: f64,
    /// `|F f- + |F| f-|_inf`
    pub f_minus_eigen: f64,
    /// Max deviation of sorted `spec(T)` from `{-1} u {2 tau u_i - 1}`.
    pub t_spectrum: f64,
    /// `|f- - a|_inf` and its ratio to `eta`.
    pub f_minus_vs_a: f64,
    pub f_minus_vs_a_over_eta: f64,
    pub norm_f: f64,
    pub norm_f_formula: f64,
    pub norm_f_gap: f64,
    pub t_symmetry: f64,
    pub t_inf_norm: f64,
    pub f_symmetry: f64,
    pub t_spectrum_max: f64,
}

pub fn verify_identities(ops: &StabilityOperators, profile: &VarianceProfile, sol: &DysonSolution) -> Result<IdentityReport, DysonError> {
    let m = ops.l.rows();
    let n = m / 2;
    let v = &ops.v_diag;

    // V^{-1} (I - T F) V
    let tf = ops.t.matmul(&ops.f);
    let mut rebuilt = RealMatrix::identity(m).sub(&tf);
    for i in 0..m {
        for j in 0..m {
            rebuilt[(i, j)] *= v[j] / v[i];
        }
    }
    let factorization = rebuilt.sub(&ops.l).max_abs();

    let vt = sol.v_tilde();
    let u = sol.u_doubled();
    let w: Vec<f64> = (0..m).map(|i| if i < n { vt[i] / u[i] } else { -vt[i] / u[i] }).collect();
    let ltw = ops.l.transpose().matvec(&w);
    let adjoint_null = (0..m)
        .map(|i| (ltw[i] - if i < n { sol.eta } else { -sol.eta }).abs())
        .fold(0.0, f64::max);

    let ff = ops.f.matvec(&ops.f_minus);
    let f_minus_eigen = ff.iter().zip(&ops.f_minus).map(|(a, b)| (a + ops.norm_f * b).abs()).fold(0.0, f64::max);

    let mut spec = symmetric_eigenvalues(&ops.t)?;
    // 2 tau u - 1, written through 1 - v v~/u = tau u
    let mut want: Vec<f64> = vec![-1.0; n];
    want.extend((0..n).map(|k| sol.tau * sol.u[k] - sol.v1[k] * sol.v2[k] / sol.u[k]));
    spec.sort_by(|a, b| a.partial_cmp(b).unwrap());
    want.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t_spectrum = spec.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let f_minus_vs_a = ops.f_minus.iter().zip(&ops.a_vec).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let formula = norm_f_formula(ops, profile, sol);
    Ok(IdentityReport {
        eta: sol.eta,
        tau: sol.tau,
        factorization,
        adjoint_null,
        f_minus_eigen,
        t_spectrum,
        f_minus_vs_a,
        f_minus_vs_a_over_eta: f_minus_vs_a / sol.eta,
        norm_f: ops.norm_f,
        norm_f_formula: formula,
        norm_f_gap: (formula - ops.norm_f).abs(),
        t_symmetry: ops.t.sub(&ops.t.transpose()).max_abs(),
        t_inf_norm: ops.t.norm_inf(),
        f_symmetry: ops.f.sub(&ops.f.transpose()).max_abs(),
        t_spectrum_max: *spec.last().unwrap_or(&f64::NAN),
    })
}

/// `1 - s3`, where `s3` is the largest singular value of `F` once the
/// pair `+-|F|` belonging to `f+`, `f-` is removed.
pub fn gap_probe(ops: &StabilityOperators) -> Result<f64, DysonError> {
    let ev = symmetric_eigenvalues(&ops.f)?;
    let mut mags: Vec<f64> = ev.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(1.0 - mags.get(2).copied().unwrap_or(0.0))
}

/// Smallest singular value of `1 - T F`.
pub fn min_singular_one_minus_tf(ops: &StabilityOperators) -> Result<f64, DysonError> {
    let m = ops.l.rows();
    let a = RealMatrix::identity(m).sub(&ops.t.matmul(&ops.f));
    let g = a.transpose().matmul(&a);
    let ev = symmetric_eigenvalues(&g)?;
    Ok(ev[0].max(0.0).sqrt())
}

/// `|(1 - T F)^{-1} Q|_2` with `Q` the orthogonal projection off `f-`.
pub fn restricted_inverse_norm(ops: &StabilityOperators) -> Result<f64, DysonError> {
    let m = ops.l.rows();
    let a = RealMatrix::identity(m).sub(&ops.t.matmul(&ops.f));
    let lu = lu_factor(&a)?;
    let fm = &ops.f_minus;
    let ff: f64 = fm.iter().map(|x| x * x).sum();
    let mut res = RealMatrix::zeros(m, m);
    for k in 0..m {
        let mut col: Vec<f64> = (0..m).map(|i| -fm[i] * fm[k] / ff).collect();
        col[k] += 1.0;
        lu.solve_in_place(&mut col)?;
        for i in 0..m {
            res[(i, k)] = col[i];
        }
    }
    let g = res.transpose().matmul(&res);
    let ev = symmetric_eigenvalues(&g)?;
    Ok(ev.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}
