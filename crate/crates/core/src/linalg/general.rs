//! Eigenvalues of general complex matrices: radix-2 balancing,
//! Householder reduction to Hessenberg form, then single-shift QR.
//! Eigenvectors, when needed, come from inverse iteration on the
//! Hessenberg form.

use super::{LinalgError, Matrix, Scalar};
use num_complex::Complex64;

const QR_ITERATIONS_PER_EIGENVALUE: usize = 100;

struct Reflector {
    start: usize,
    v: Vec<Complex64>,
    beta: f64,
}

/// Balanced Hessenberg form `D^{-1} A D = Q H Q^*`.
pub struct HessenbergForm {
    h: Matrix<Complex64>,
    reflectors: Vec<Reflector>,
    scale: Vec<f64>,
    norm: f64,
}

fn balance(a: &mut Matrix<Complex64>) -> Vec<f64> {
    let n = a.rows();
    let mut d = vec![1.0; n];
    let l1 = |z: Complex64| z.re.abs() + z.im.abs();
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += l1(a[(j, i)]);
                    r += l1(a[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / 2.0;
            while c < g {
                f *= 2.0;
                c *= 4.0;
            }
            g = r * 2.0;
            while c >= g {
                f /= 2.0;
                c /= 4.0;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    a[(i, j)] = a[(i, j)] / f;
                    a[(j, i)] = a[(j, i)] * f;
                }
            }
        }
        if done {
            return d;
        }
    }
}

fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    if y == Complex64::new(0.0, 0.0) {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if x == Complex64::new(0.0, 0.0) {
        return (0.0, Complex64::new(1.0, 0.0));
    }
    let ax = x.norm();
    let nrm = ax.hypot(y.norm());
    (ax / nrm, (x / ax) * y.conj() / nrm)
}

fn wilkinson(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let p = (a - d) * 0.5;
    let bc = b * c;
    let mut disc = (p * p + bc).sqrt();
    if (p.conj() * disc).re < 0.0 {
        disc = -disc;
    }
    let den = p + disc;
    if den.norm() == 0.0 {
        d
    } else {
        d - bc / den
    }
}

impl HessenbergForm {
    pub fn new(a: &Matrix<Complex64>) -> Result<Self, LinalgError> {
        let n = a.ensure_square()?;
        a.ensure_finite()?;
        let mut h = a.clone();
        let scale = balance(&mut h);
        let mut reflectors = Vec::new();
        for k in 0..n.saturating_sub(2) {
            let tail_max = (k + 2..n).map(|i| h[(i, k)].norm()).fold(0.0, f64::max);
            if tail_max < super::NEGLIGIBLE_TAIL {
                for i in k + 2..n {
                    h[(i, k)] = Complex64::new(0.0, 0.0);
                }
                continue;
            }
            let scale = tail_max.max(h[(k + 1, k)].norm());
            let mut v: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)] / scale).collect();
            let sigma = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let alpha_s = -(v[0].phase().scale(sigma));
            let alpha = alpha_s * scale;
            v[0] -= alpha_s;
            let beta = 2.0 / v.iter().map(|z| z.norm_sqr()).sum::<f64>();
            // left: rows k+1.., columns k..
            for j in k + 1..n {
                let mut s = Complex64::new(0.0, 0.0);
                for (ii, vi) in v.iter().enumerate() {
                    s += vi.conj() * h[(k + 1 + ii, j)];
                }
                s *= beta;
                for (ii, vi) in v.iter().enumerate() {
                    h[(k + 1 + ii, j)] -= vi * s;
                }
            }
            h[(k + 1, k)] = alpha;
            for i in k + 2..n {
                h[(i, k)] = Complex64::new(0.0, 0.0);
            }
            // right: all rows, columns k+1..
            for i in 0..n {
                let row = &mut h.row_mut(i)[k + 1..];
                let mut s = Complex64::new(0.0, 0.0);
                for (r, vi) in row.iter().zip(&v) {
                    s += r * vi;
                }
                s *= beta;
                for (r, vi) in row.iter_mut().zip(&v) {
                    *r -= s * vi.conj();
                }
            }
            reflectors.push(Reflector { start: k + 1, v, beta });
        }
        let norm = h.norm_frobenius();
        Ok(HessenbergForm { h, reflectors, scale, norm })
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn hessenberg(&self) -> &Matrix<Complex64> {
        &self.h
    }

    pub fn balancing(&self) -> &[f64] {
        &self.scale
    }

    /// All eigenvalues via shifted QR, in deflation order (bottom-up).
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>, LinalgError> {
        let n = self.dim();
        let mut h = self.h.clone();
        let mut eig = vec![Complex64::new(0.0, 0.0); n];
        if n == 0 {
            return Ok(eig);
        }
        let eps = f64::EPSILON;
        let tiny = f64::MIN_POSITIVE * (n as f64) / eps;
        let mut m = n - 1;
        let mut iter = 0usize;
        while m > 0 {
            let mut l = m;
            while l > 0 {
                let sub = h[(l, l - 1)].norm();
                let diag = h[(l, l)].norm() + h[(l - 1, l - 1)].norm();
                let thresh = if diag == 0.0 { eps * self.norm } else { eps * diag };
                if sub <= thresh.max(tiny) {
                    h[(l, l - 1)] = Complex64::new(0.0, 0.0);
                    break;
                }
                l -= 1;
            }
            if l == m {
                eig[m] = h[(m, m)];
                m -= 1;
                iter = 0;
                continue;
            }
            iter += 1;
            if iter > QR_ITERATIONS_PER_EIGENVALUE {
                return Err(LinalgError::NoConvergence { what: "Hessenberg QR", iterations: iter - 1 });
            }
            let mu = if iter % 10 == 0 {
                // exceptional shift to break cycles
                let e = h[(m, m - 1)].norm() + if m >= 2 { h[(m - 1, m - 2)].norm() } else { 0.0 };
                h[(m, m)] + Complex64::new(0.75 * e, 0.0)
            } else {
                wilkinson(h[(m - 1, m - 1)], h[(m - 1, m)], h[(m, m - 1)], h[(m, m)])
            };
            for k in l..m {
                let (x, y) = if k == l {
                    (h[(l, l)] - mu, h[(l + 1, l)])
                } else {
                    (h[(k, k - 1)], h[(k + 1, k - 1)])
                };
                let (c, s) = givens(x, y);
                let j0 = if k == l { l } else { k - 1 };
                for j in j0..=m {
                    let a = h[(k, j)];
                    let b = h[(k + 1, j)];
                    h[(k, j)] = a * c + s * b;
                    h[(k + 1, j)] = -s.conj() * a + b * c;
                }
                if k > l {
                    h[(k + 1, k - 1)] = Complex64::new(0.0, 0.0);
                }
                let imax = (k + 2).min(m);
                for i in l..=imax {
                    let a = h[(i, k)];
                    let b = h[(i, k + 1)];
                    h[(i, k)] = a * c + b * s.conj();
                    h[(i, k + 1)] = -a * s + b * c;
                }
            }
        }
        eig[0] = h[(0, 0)];
        Ok(eig)
    }

    /// Unit eigenvector of the original matrix for an eigenvalue
    /// estimate `lambda`, by inverse iteration.
    pub fn eigenvector(&self, lambda: Complex64) -> Result<Vec<Complex64>, LinalgError> {
        let n = self.dim();
        let zero = Complex64::new(0.0, 0.0);
        let shift = lambda + Complex64::new(self.norm.max(1.0) * 1e-13, 0.0);
        // Hessenberg LU with adjacent-row pivoting
        let mut m = self.h.clone();
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        let floor = f64::EPSILON * self.norm.max(1.0);
        let mut swaps = vec![false; n];
        let mut mult = vec![zero; n];
        for k in 0..n {
            if k + 1 < n && m[(k + 1, k)].norm() > m[(k, k)].norm() {
                swaps[k] = true;
                for j in k..n {
                    let t = m[(k, j)];
                    m[(k, j)] = m[(k + 1, j)];
                    m[(k + 1, j)] = t;
                }
            }
            if m[(k, k)].norm() < floor {
                m[(k, k)] = Complex64::new(floor, 0.0);
            }
            if k + 1 < n {
                let l = m[(k + 1, k)] / m[(k, k)];
                mult[k] = l;
                m[(k + 1, k)] = zero;
                if l != zero {
                    for j in k + 1..n {
                        let t = m[(k, j)];
                        m[(k + 1, j)] -= l * t;
                    }
                }
            }
        }
        let solve = |b: &mut [Complex64]| {
            for k in 0..n.saturating_sub(1) {
                if swaps[k] {
                    b.swap(k, k + 1);
                }
                let t = b[k];
                b[k + 1] -= mult[k] * t;
            }
            for i in (0..n).rev() {
                let mut acc = b[i];
                for j in i + 1..n {
                    acc -= m[(i, j)] * b[j];
                }
                b[i] = acc / m[(i, i)];
            }
        };
        let mut w = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
        for _ in 0..3 {
            solve(&mut w);
            let nrm = super::norm2(&w);
            if !nrm.is_finite() || nrm == 0.0 {
                return Err(LinalgError::NoConvergence { what: "inverse iteration", iterations: 3 });
            }
            w.iter_mut().for_each(|z| *z /= nrm);
        }
        for r in self.reflectors.iter().rev() {
            let seg = &mut w[r.start..];
            let mut s = zero;
            for (vi, yi) in r.v.iter().zip(seg.iter()) {
                s += vi.conj() * yi;
            }
            s *= r.beta;
            for (yi, vi) in seg.iter_mut().zip(&r.v) {
                *yi -= vi * s;
            }
        }
        for (wi, d) in w.iter_mut().zip(&self.scale) {
            *wi *= *d;
        }
        let nrm = super::norm2(&w);
        w.iter_mut().for_each(|z| *z /= nrm);
        Ok(w)
    }
}

/// Eigenvalues of a general complex matrix.
pub fn general_eigenvalues(a: &Matrix<Complex64>) -> Result<Vec<Complex64>, LinalgError> {
    HessenbergForm::new(a)?.eigenvalues()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lcg_matrix(n: usize, seed: u64) -> Matrix<Complex64> {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        Matrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn triangular_eigenvalues_are_diagonal() {
        let a = Matrix::from_vec(
            3,
            3,
            vec![c(0.2, 0.0), c(1.0, 1.0), c(5.0, 0.0), c(0.0, 0.0), c(-0.1, 0.3), c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.4, 0.0)],
        )
        .unwrap();
        let mut ev = general_eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        let want = [c(-0.1, 0.3), c(0.2, 0.0), c(0.4, 0.0)];
        for (x, y) in ev.iter().zip(&want) {
            assert!((x - y).norm() < 1e-13, "{x} vs {y}");
        }
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let a = Matrix::from_vec(2, 2, vec![c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let mut ev = general_eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert!((ev[0] - c(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn trace_and_vectors_random() {
        for &n in &[5usize, 30, 80] {
            let a = lcg_matrix(n, 11 + n as u64);
            let hf = HessenbergForm::new(&a).unwrap();
            let ev = hf.eigenvalues().unwrap();
            let s: Complex64 = ev.iter().sum();
            assert!((s - a.trace()).norm() < 1e-10 * n as f64 * a.max_abs());
            for &lam in ev.iter().take(5) {
                let y = hf.eigenvector(lam).unwrap();
                let ay = a.matvec(&y);
                let r: f64 = ay.iter().zip(&y).map(|(p, q)| (p - lam * q).norm_sqr()).sum::<f64>().sqrt();
                assert!(r < 1e-9, "n={n} residual {r}");
            }
        }
    }

    #[test]
    fn badly_scaled_matrix_is_balanced() {
        let a = Matrix::from_vec(2, 2, vec![c(1.0, 0.0), c(1e10, 0.0), c(1e-10, 0.0), c(2.0, 0.0)]).unwrap();
        let mut ev = general_eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        // eigenvalues of [[1,1],[1,2]]
        let r5 = 5f64.sqrt();
        assert!((ev[0].re - (3.0 - r5) / 2.0).abs() < 1e-12);
        assert!((ev[1].re - (3.0 + r5) / 2.0).abs() < 1e-12);
    }
}
