use super::{LinalgError, RealMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_ITER: usize = 100_000;
const STALL_ITERS: usize = 25;
const STALL_ACCEPT: f64 = 1e-10;
/// Components this far below the largest are left out of the bracket.
const NEGLIGIBLE_COMPONENT: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub radius: f64,
    /// Perron vector normalised to mean one.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Spectral radius and Perron vector of an entrywise nonnegative matrix.
///
/// Stops once the Collatz-Wielandt bracket `min (Ax)_i/x_i <= rho <=
/// max (Ax)_i/x_i` is narrower than `tol * rho`, or has stopped shrinking
/// below `1e-10 * rho` because of rounding. Components that have decayed
/// below `1e-14` of the largest are left out of the bracket, which lets
/// reducible matrices with a dominant block converge as well.
pub fn power_iteration_radius(a: &RealMatrix, seed: u64, tol: f64) -> Result<PowerResult, LinalgError> {
    let n = a.ensure_square()?;
    a.ensure_finite()?;
    if n == 0 {
        return Ok(PowerResult { radius: 0.0, vector: vec![], iterations: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for it in 1..=MAX_ITER {
        let y = a.matvec(&x);
        let floor = NEGLIGIBLE_COMPONENT * x.iter().cloned().fold(0.0, f64::max);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (yi, xi) in y.iter().zip(&x) {
            if *xi <= floor {
                continue;
            }
            let q = yi / xi;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        if mean == 0.0 {
            return Ok(PowerResult { radius: 0.0, vector: x, iterations: it });
        }
        x = y.into_iter().map(|v| v / mean).collect();
        let gap = (hi - lo) / hi;
        // a bracket stuck at the rounding floor counts as converged
        if gap < best {
            best = gap;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if gap <= tol || (gap <= STALL_ACCEPT && stalled >= STALL_ITERS) {
            return Ok(PowerResult { radius: 0.5 * (lo + hi), vector: x, iterations: it });
        }
        if x.iter().any(|&v| !(v >= 0.0)) {
            // not a nonnegative matrix
            return Err(LinalgError::NoConvergence { what: "power iteration", iterations: it });
        }
    }
    Err(LinalgError::NoConvergence { what: "power iteration", iterations: MAX_ITER })
}
