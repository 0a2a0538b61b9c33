//! Test-only oracles, kept independent of the production kernels.
#![allow(dead_code)]

use circlaw::dyson::VarianceProfile;
use circlaw::linalg::{ComplexMatrix, Matrix, RealMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded_complex(n: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

pub fn seeded_positive(n: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, n, |_, _| 0.1 + rng.random::<f64>())
}

/// Singular values, descending, by one-sided Jacobi rotations.
pub fn jacobi_singular_values(a: &ComplexMatrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x.norm_sqr()).sum();
                let beta: f64 = cols[q].iter().map(|x| x.norm_sqr()).sum();
                let gamma: Complex64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g <= 1e-300 || g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                off = off.max(g / (alpha * beta).sqrt());
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let xp = cols[p][i];
                    let xq = cols[q][i] * phase.conj();
                    cols[p][i] = xp * c - xq * s;
                    cols[q][i] = (xp * s + xq * c) * phase;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `sigma_min(A - lambda)`.
pub fn min_singular_shifted(a: &ComplexMatrix, lambda: Complex64) -> f64 {
    let n = a.rows();
    let b = Matrix::from_fn(n, n, |i, j| if i == j { a[(i, j)] - lambda } else { a[(i, j)] });
    *jacobi_singular_values(&b).last().unwrap()
}

/// The `eta = 0` solution for a symmetric two-block profile. By the swap
/// symmetry `v1 = v2 = w` with two distinct values `(w_in, w_out)`, and
/// `w = A / (A^2 + tau)` with `A = S w`. Plain Newton on the 2x2 system
/// with a finite-difference Jacobian.
pub fn two_block_limit(profile: &VarianceProfile, k: usize, tau: f64) -> (f64, f64) {
    let n = profile.n();
    let s = profile.matrix();
    // block sums of S
    let m = [
        [s[(0, 0)] * k as f64, s[(0, n - 1)] * (n - k) as f64],
        [s[(n - 1, 0)] * k as f64, s[(n - 1, n - 1)] * (n - k) as f64],
    ];
    let resid = |w: [f64; 2]| {
        let mut r = [0.0; 2];
        for p in 0..2 {
            let a = m[p][0] * w[0] + m[p][1] * w[1];
            r[p] = w[p] - a / (a * a + tau);
        }
        r
    };
    let mut w = [(1.0 - tau).sqrt(); 2];
    for _ in 0..100 {
        let r = resid(w);
        if r[0].abs().max(r[1].abs()) < 1e-15 {
            break;
        }
        let h = 1e-7;
        let mut j = [[0.0; 2]; 2];
        for q in 0..2 {
            let mut wp = w;
            let mut wm = w;
            wp[q] += h;
            wm[q] -= h;
            let (rp, rm) = (resid(wp), resid(wm));
            for p in 0..2 {
                j[p][q] = (rp[p] - rm[p]) / (2.0 * h);
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let d0 = (r[0] * j[1][1] - r[1] * j[0][1]) / det;
        let d1 = (j[0][0] * r[1] - j[1][0] * r[0]) / det;
        w = [w[0] - d0, w[1] - d1];
    }
    (w[0], w[1])
}

/// Positive root of `1 = eta v + v^2 + tau v / (eta + v)` by bisection.
pub fn scalar_dyson(eta: f64, tau: f64) -> f64 {
    let g = |v: f64| eta * v + v * v + tau * v / (eta + v) - 1.0;
    // g is increasing, g(0) = -1 and g(2) > 0
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
