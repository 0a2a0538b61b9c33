//! Hermitian eigensolver: Householder tridiagonalisation, a diagonal
//! phase change to make the tridiagonal real, then implicit QL.

use super::{LinalgError, Matrix, Scalar};
use num_complex::Complex64;

const SWEEPS_PER_EIGENVALUE: usize = 30;

struct Reflector<T> {
    /// Index of the first component the reflector acts on.
    start: usize,
    v: Vec<T>,
    beta: f64,
}

struct Tridiagonal<T> {
    d: Vec<f64>,
    e: Vec<f64>,
    phases: Vec<T>,
    reflectors: Vec<Reflector<T>>,
}

fn tridiagonalize<T: Scalar>(a: &Matrix<T>, keep_reflectors: bool) -> Result<Tridiagonal<T>, LinalgError> {
    let n = a.ensure_square()?;
    a.ensure_finite()?;
    let mut a = a.clone();
    let mut reflectors = Vec::new();
    let mut p = vec![T::zero(); n];
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let tail_max = (k + 2..n).map(|i| a[(i, k)].modulus()).fold(0.0, f64::max);
        if tail_max < super::NEGLIGIBLE_TAIL {
            continue;
        }
        // work with the column scaled to unit max so squares cannot underflow
        let scale = tail_max.max(a[(k + 1, k)].modulus());
        let mut v: Vec<T> = (k + 1..n).map(|i| a[(i, k)].scale(1.0 / scale)).collect();
        let sigma = v.iter().map(|x| x.modulus_sqr()).sum::<f64>().sqrt();
        let alpha_s = -(v[0].phase().scale(sigma));
        let alpha = alpha_s.scale(scale);
        v[0] -= alpha_s;
        let vv: f64 = v.iter().map(|x| x.modulus_sqr()).sum();
        let beta = 2.0 / vv;

        // p = beta * B v on the trailing block
        for (ii, pi) in p[..m].iter_mut().enumerate() {
            let row = &a.row(k + 1 + ii)[k + 1..];
            let mut acc = T::zero();
            for (r, &vj) in row.iter().zip(&v) {
                acc += *r * vj;
            }
            *pi = acc.scale(beta);
        }
        let vp: T = v.iter().zip(&p[..m]).fold(T::zero(), |s, (&vi, &pi)| s + vi.conjugate() * pi);
        let kk = vp.scale(0.5 * beta);
        let w: Vec<T> = p[..m].iter().zip(&v).map(|(&pi, &vi)| pi - kk * vi).collect();
        for ii in 0..m {
            let vi = v[ii];
            let wi = w[ii];
            let row = &mut a.row_mut(k + 1 + ii)[k + 1..];
            for jj in 0..m {
                row[jj] -= vi * w[jj].conjugate() + wi * v[jj].conjugate();
            }
        }
        a[(k + 1, k)] = alpha;
        a[(k, k + 1)] = alpha.conjugate();
        for i in k + 2..n {
            a[(i, k)] = T::zero();
            a[(k, i)] = T::zero();
        }
        if keep_reflectors {
            reflectors.push(Reflector { start: k + 1, v, beta });
        }
    }
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)].real()).collect();
    let mut e = vec![0.0; n];
    let mut phases = vec![T::one(); n];
    for i in 0..n.saturating_sub(1) {
        let off = a[(i + 1, i)];
        e[i] = off.modulus();
        phases[i + 1] = phases[i] * off.phase();
    }
    Ok(Tridiagonal { d, e, phases, reflectors })
}

/// Implicit QL on a symmetric tridiagonal (`d` diagonal, `e[i]` couples
/// `i` and `i+1`). If `zt` is given its rows are rotated along, so rows
/// of the identity end up as eigenvectors. Eigenvalues returned ascending.
fn tql(d: &mut [f64], e: &mut [f64], mut zt: Option<&mut Matrix<f64>>) -> Result<(), LinalgError> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > SWEEPS_PER_EIGENVALUE {
                    return Err(LinalgError::NoConvergence { what: "tridiagonal QL", iterations: iter - 1 });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = zt.as_deref_mut() {
                        let cols = z.cols();
                        let data = z.as_mut_slice();
                        let (lo, hi) = data.split_at_mut((i + 1) * cols);
                        let ri = &mut lo[i * cols..];
                        let ri1 = &mut hi[..cols];
                        for k in 0..cols {
                            let hk = ri1[k];
                            ri1[k] = s * ri[k] + c * hk;
                            ri[k] = c * ri[k] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // selection sort keeps the pairing with eigenvector rows
    for i in 0..n - 1 {
        let mut k = i;
        for j in i + 1..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            if let Some(z) = zt.as_deref_mut() {
                let cols = z.cols();
                let data = z.as_mut_slice();
                for c in 0..cols {
                    data.swap(i * cols + c, k * cols + c);
                }
            }
        }
    }
    Ok(())
}

/// Eigenvalues (ascending) of a Hermitian or real symmetric matrix.
/// Only the lower triangle is trusted to be consistent with the upper.
pub fn symmetric_eigenvalues<T: Scalar>(a: &Matrix<T>) -> Result<Vec<f64>, LinalgError> {
    let mut t = tridiagonalize(a, false)?;
    tql(&mut t.d, &mut t.e, None)?;
    Ok(t.d)
}

/// Eigenvalues (ascending) and unit eigenvectors as the columns of the
/// returned matrix.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<f64>, Matrix<T>), LinalgError> {
    let n = a.ensure_square()?;
    let mut t = tridiagonalize(a, true)?;
    let mut zt = Matrix::<f64>::identity(n);
    tql(&mut t.d, &mut t.e, Some(&mut zt))?;
    let mut vt = Matrix::<T>::zeros(n, n);
    for j in 0..n {
        let y = vt.row_mut(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = t.phases[i].scale(zt[(j, i)]);
        }
        for r in t.reflectors.iter().rev() {
            let seg = &mut y[r.start..];
            let s = r.v.iter().zip(seg.iter()).fold(T::zero(), |acc, (&vi, &yi)| acc + vi.conjugate() * yi);
            let s = s.scale(r.beta);
            for (yi, &vi) in seg.iter_mut().zip(&r.v) {
                *yi -= vi * s;
            }
        }
    }
    Ok((t.d, vt.transpose()))
}

pub fn hermitian_eigenvalues(a: &Matrix<Complex64>) -> Result<Vec<f64>, LinalgError> {
    symmetric_eigenvalues(a)
}

pub fn hermitian_eigen(a: &Matrix<Complex64>) -> Result<(Vec<f64>, Matrix<Complex64>), LinalgError> {
    symmetric_eigen(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> Matrix<Complex64> {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = Complex64::new(next(), 0.0);
            for j in 0..i {
                let z = Complex64::new(next(), next());
                a[(i, j)] = z;
                a[(j, i)] = z.conj();
            }
        }
        a
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn residual_and_orthonormality() {
        for &n in &[1usize, 2, 3, 7, 40] {
            let a = random_hermitian(n, n as u64 + 3);
            let (ev, v) = hermitian_eigen(&a).unwrap();
            let av = a.matmul(&v);
            for j in 0..n {
                for i in 0..n {
                    assert!((av[(i, j)] - v[(i, j)] * ev[j]).norm() < 1e-12, "n={n}");
                }
            }
            let g = v.adjoint().matmul(&v);
            assert!(g.sub(&Matrix::identity(n)).max_abs() < 1e-12);
            let tr: f64 = a.diagonal().iter().map(|z| z.re).sum();
            assert!((ev.iter().sum::<f64>() - tr).abs() < 1e-11);
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
            let ev2 = hermitian_eigenvalues(&a).unwrap();
            for (x, y) in ev.iter().zip(&ev2) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn already_diagonal_and_degenerate() {
        let a = Matrix::from_diag(&[3.0, -1.0, 3.0, 0.0]);
        let (ev, v) = symmetric_eigen(&a).unwrap();
        assert_eq!(ev, vec![-1.0, 0.0, 3.0, 3.0]);
        let g = v.transpose().matmul(&v);
        assert!(g.sub(&Matrix::identity(4)).max_abs() < 1e-14);
    }
}
