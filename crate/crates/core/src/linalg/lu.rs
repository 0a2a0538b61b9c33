use super::{LinalgError, Matrix, Scalar};

/// `P A = L U` with unit lower `L` packed below the diagonal of `lu`.
#[derive(Debug, Clone)]
pub struct LuFactorization<T> {
    lu: Matrix<T>,
    /// `perm[i]` is the original row now in position `i`.
    perm: Vec<usize>,
    /// Sign of the permutation, +1 or -1.
    sign: f64,
}

/// Gaussian elimination with partial pivoting.
///
/// Ties in pivot magnitude go to the lowest row index, so the
/// factorisation is reproducible bit for bit.
pub fn lu_factor<T: Scalar>(a: &Matrix<T>) -> Result<LuFactorization<T>, LinalgError> {
    let n = a.ensure_square()?;
    a.ensure_finite()?;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].modulus();
        for i in k + 1..n {
            let m = lu[(i, k)].modulus();
            if m > best {
                best = m;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(LinalgError::ExactSingular { col: k });
        }
        if p != k {
            let cols = lu.cols();
            let data = lu.as_mut_slice();
            for j in 0..cols {
                data.swap(k * cols + j, p * cols + j);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[(k, k)];
        let (head, tail) = lu.as_mut_slice().split_at_mut((k + 1) * n);
        let krow = &head[k * n..];
        for row in tail.chunks_exact_mut(n) {
            let l = row[k] / pivot;
            row[k] = l;
            if l == T::zero() {
                continue;
            }
            for j in k + 1..n {
                row[j] -= l * krow[j];
            }
        }
    }
    Ok(LuFactorization { lu, perm, sign })
}

impl<T: Scalar> LuFactorization<T> {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn permutation_sign(&self) -> f64 {
        self.sign
    }

    pub fn packed(&self) -> &Matrix<T> {
        &self.lu
    }

    pub fn lower(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.lu[(i, j)],
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Less => T::zero(),
        })
    }

    pub fn upper(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| if i <= j { self.lu[(i, j)] } else { T::zero() })
    }

    /// Smallest `|u_ii|`, a cheap singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim()).map(|i| self.lu[(i, i)].modulus()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_pivot(&self) -> f64 {
        (0..self.dim()).map(|i| self.lu[(i, i)].modulus()).fold(0.0, f64::max)
    }

    /// `log |det A|` as a sum of `log |u_ii|`, which never overflows.
    pub fn log_abs_det(&self) -> Result<f64, LinalgError> {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let m = self.lu[(i, i)].modulus();
            if m == 0.0 {
                return Err(LinalgError::MinusInfinity { index: i });
            }
            s += m.ln();
        }
        Ok(s)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut [T]) -> Result<(), LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
        }
        let pb: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&pb);
        for i in 0..n {
            let row = self.lu.row(i);
            let mut acc = b[i];
            for j in 0..i {
                acc -= row[j] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= row[j] * b[j];
            }
            b[i] = acc / row[i];
        }
        Ok(())
    }

    /// Diagonal of `A^{-1}`, one solve per column.
    pub fn inverse_diagonal(&self) -> Result<Vec<T>, LinalgError> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n);
        let mut e = vec![T::zero(); n];
        for k in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[k] = T::one();
            self.solve_in_place(&mut e)?;
            out.push(e[k]);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Matrix<T>, LinalgError> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for k in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[k] = T::one();
            self.solve_in_place(&mut e)?;
            for i in 0..n {
                inv[(i, k)] = e[i];
            }
        }
        Ok(inv)
    }
}

pub fn log_abs_det<T: Scalar>(a: &Matrix<T>) -> Result<f64, LinalgError> {
    match lu_factor(a) {
        Ok(f) => f.log_abs_det(),
        Err(LinalgError::ExactSingular { col }) => Err(LinalgError::MinusInfinity { index: col }),
        Err(e) => Err(e),
    }
}

pub fn solve_linear<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    lu_factor(a)?.solve(b)
}
