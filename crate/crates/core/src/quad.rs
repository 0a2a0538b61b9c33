//! Gauss-Legendre rules.

/// Nodes and weights of the `k`-point rule on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    let kf = k as f64;
    for i in 0..k.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_k
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(k, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(k, t);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[k - 1 - i] = t;
        w[i] = wi;
        w[k - 1 - i] = wi;
    }
    if k % 2 == 1 {
        x[k / 2] = 0.0;
    }
    (x, w)
}

/// `P_k(t)` and `P_k'(t)` by the three-term recurrence.
fn legendre(k: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * t * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// The `k`-point rule mapped to `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, k: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(k);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(&xi, &wi)| (c + r * xi, r * wi)).collect()
}
