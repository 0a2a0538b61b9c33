use crate::linalg::{power_iteration_radius, LinalgError, RealMatrix};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("profile parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read profile: {0}")]
    Io(String),
    #[error("profile must be square and non-empty, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("entry s[{row}][{col}] = {value} is not strictly positive and finite")]
    NotFlat { row: usize, col: usize, value: f64 },
    #[error("flatness bounds violated: n*s ranges over [{lower}, {upper}], allowed [{lo}, {hi}]")]
    Bounds { lower: f64, upper: f64, lo: f64, hi: f64 },
    #[error("unknown smooth profile id '{0}'")]
    UnknownSmooth(String),
    #[error("invalid generator parameter: {0}")]
    Generator(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Generator description, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileSpec {
    Constant,
    TwoBlock { a: f64, b: f64, split: f64 },
    Smooth { id: String },
    File { path: String },
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Constant
    }
}

impl ProfileSpec {
    /// Default block profile: variance `a` inside the leading block, `b`
    /// everywhere else.
    pub fn two_block_default() -> Self {
        ProfileSpec::TwoBlock { a: 3.0, b: 1.0, split: 0.5 }
    }

    /// Builds and normalises the profile.
    pub fn build(&self, n: usize) -> Result<VarianceProfile, ProfileError> {
        let p = match self {
            ProfileSpec::Constant => VarianceProfile::constant(n)?,
            ProfileSpec::TwoBlock { a, b, split } => VarianceProfile::two_block(n, *a, *b, *split)?,
            ProfileSpec::Smooth { id } => VarianceProfile::smooth(n, id)?,
            ProfileSpec::File { path } => VarianceProfile::from_csv_path(path)?,
        };
        p.normalize()
    }

    /// Parses the short command-line form: `constant`, `twoblock`,
    /// `twoblock:a,b,split`, `smooth:<id>` or a path to a CSV file.
    pub fn parse_short(s: &str) -> Result<Self, ProfileError> {
        let bad = |m: &str| ProfileError::Parse { line: 0, message: m.to_string() };
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match head {
            "constant" => Ok(ProfileSpec::Constant),
            "twoblock" | "two-block" => match rest {
                None => Ok(Self::two_block_default()),
                Some(r) => {
                    let v: Result<Vec<f64>, _> = r.split(',').map(|t| t.trim().parse::<f64>()).collect();
                    match v.map_err(|e| bad(&format!("two-block parameters: {e}")))?.as_slice() {
                        &[a, b, split] => Ok(ProfileSpec::TwoBlock { a, b, split }),
                        _ => Err(bad("two-block needs a,b,split")),
                    }
                }
            },
            "smooth" => Ok(ProfileSpec::Smooth { id: rest.unwrap_or("linear").to_string() }),
            "file" => Ok(ProfileSpec::File { path: rest.unwrap_or("").to_string() }),
            _ => Ok(ProfileSpec::File { path: s.to_string() }),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ProfileSpec::Constant => "constant".into(),
            ProfileSpec::TwoBlock { a, b, split } => format!("twoblock:{a},{b},{split}"),
            ProfileSpec::Smooth { id } => format!("smooth:{id}"),
            ProfileSpec::File { path } => path.clone(),
        }
    }
}

/// The variance matrix `S`, stored together with its transpose so both
/// `S x` and `S^t x` are row-contiguous.
#[derive(Debug, Clone)]
pub struct VarianceProfile {
    s: RealMatrix,
    st: RealMatrix,
    s_lower: f64,
    s_upper: f64,
    rho: f64,
    scale: f64,
    normalized: bool,
}

/// A profile with `|rho(S) - 1|` below this counts as normalized.
const RHO_TOL: f64 = 1e-13;

const SMOOTH_IDS: [&str; 3] = ["linear", "band", "rank-one"];

impl VarianceProfile {
    /// Validates flatness: every entry strictly positive and finite.
    pub fn new(s: RealMatrix) -> Result<Self, ProfileError> {
        if !s.is_square() || s.rows() == 0 {
            return Err(ProfileError::Shape { rows: s.rows(), cols: s.cols() });
        }
        let n = s.rows();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = s[(i, j)];
                if !(x.is_finite() && x > 0.0) {
                    return Err(ProfileError::NotFlat { row: i, col: j, value: x });
                }
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        let st = s.transpose();
        let rho = power_iteration_radius(&s, 0x5eed, 1e-14)?.radius;
        Ok(VarianceProfile {
            s,
            st,
            s_lower: lo * n as f64,
            s_upper: hi * n as f64,
            rho,
            scale: 1.0,
            normalized: (rho - 1.0).abs() <= RHO_TOL,
        })
    }

    /// Rejects profiles whose `n s_ij` leave `[lo, hi]`.
    pub fn check_flatness(&self, lo: f64, hi: f64) -> Result<(), ProfileError> {
        if self.s_lower < lo || self.s_upper > hi {
            return Err(ProfileError::Bounds { lower: self.s_lower, upper: self.s_upper, lo, hi });
        }
        Ok(())
    }

    /// All entries `1/n`.
    pub fn constant(n: usize) -> Result<Self, ProfileError> {
        if n == 0 {
            return Err(ProfileError::Generator("n must be positive".into()));
        }
        Self::new(RealMatrix::from_fn(n, n, |_, _| 1.0 / n as f64))
    }

    /// `s_ij = a/n` when both indices lie in the leading block of size
    /// `round(split n)`, `b/n` otherwise.
    pub fn two_block(n: usize, a: f64, b: f64, split: f64) -> Result<Self, ProfileError> {
        if n == 0 || !(0.0..=1.0).contains(&split) || !(a > 0.0) || !(b > 0.0) {
            return Err(ProfileError::Generator(format!("two-block needs n>0, a,b>0, split in [0,1]; got a={a}, b={b}, split={split}")));
        }
        let k = (split * n as f64).round() as usize;
        Self::new(RealMatrix::from_fn(n, n, |i, j| if i < k && j < k { a / n as f64 } else { b / n as f64 }))
    }

    /// Smooth profiles on the grid `x_i = (i + 1/2)/n`:
    /// * `linear`: `1 + x_i + x_j`
    /// * `band`: `1 + 2 exp(-10 (x_i - x_j)^2)`
    /// * `rank-one`: `(1 + x_i)(2 - x_j)`, not symmetric
    pub fn smooth(n: usize, id: &str) -> Result<Self, ProfileError> {
        if n == 0 {
            return Err(ProfileError::Generator("n must be positive".into()));
        }
        let x = |i: usize| (i as f64 + 0.5) / n as f64;
        let f: Box<dyn Fn(f64, f64) -> f64> = match id {
            "linear" => Box::new(|a, b| 1.0 + a + b),
            "band" => Box::new(|a, b| 1.0 + 2.0 * (-10.0 * (a - b) * (a - b)).exp()),
            "rank-one" => Box::new(|a, b| (1.0 + a) * (2.0 - b)),
            _ => return Err(ProfileError::UnknownSmooth(id.to_string())),
        };
        Self::new(RealMatrix::from_fn(n, n, |i, j| f(x(i), x(j)) / n as f64))
    }

    pub fn smooth_ids() -> &'static [&'static str] {
        &SMOOTH_IDS
    }

    /// Reads an `n x n` CSV of raw `s_ij` values. `#` starts a comment.
    pub fn from_csv_str(text: &str) -> Result<Self, ProfileError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ProfileError::Parse {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 1);
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let row: Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
            let row = row.map_err(|e| ProfileError::Parse { line, message: e.to_string() })?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(ProfileError::Parse {
                        line,
                        message: format!("expected {} columns, found {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 {
            return Err(ProfileError::Parse { line: 1, message: "empty profile".into() });
        }
        if rows[0].len() != n {
            return Err(ProfileError::Parse { line: 1, message: format!("{} rows but {} columns", n, rows[0].len()) });
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let m = RealMatrix::from_vec(n, n, data).map_err(|e| ProfileError::Parse { line: 0, message: e.to_string() })?;
        Self::new(m)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| ProfileError::Io(format!("{}: {e}", p.display())))?;
        Self::from_csv_str(&text)
    }

    /// Rescales so that `rho(S) = 1`, recording the factor. A profile
    /// whose radius is already one is returned unchanged.
    pub fn normalize(&self) -> Result<Self, ProfileError> {
        if self.normalized {
            return Ok(self.clone());
        }
        let lam = self.rho;
        let s = self.s.scaled(1.0 / lam);
        let mut p = Self::new(s)?;
        p.scale = self.scale * lam;
        p.normalized = true;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.s.rows()
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.s
    }

    pub fn transpose_matrix(&self) -> &RealMatrix {
        &self.st
    }

    /// `(s_*, s^*)`: smallest and largest `n s_ij`.
    pub fn flatness(&self) -> (f64, f64) {
        (self.s_lower, self.s_upper)
    }

    /// Spectral radius of the stored matrix.
    pub fn spectral_radius(&self) -> f64 {
        self.rho
    }

    /// The factor `lambda` removed by `normalize`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self, ProfileError> {
        Self::new(self.s.scaled(lambda))
    }

    /// `S x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        matvec_into(&self.s, x, out);
    }

    /// `S^t x`
    pub fn apply_t(&self, x: &[f64], out: &mut [f64]) {
        matvec_into(&self.st, x, out);
    }

    /// Positive vectors with `S^t s1 = s1`, `S s2 = s2`, each of mean one.
    pub fn perron_vectors(&self) -> Result<(Vec<f64>, Vec<f64>), ProfileError> {
        let s1 = power_iteration_radius(&self.st, 1, 1e-14)?.vector;
        let s2 = power_iteration_radius(&self.s, 2, 1e-14)?.vector;
        Ok((s1, s2))
    }
}

fn matvec_into(a: &RealMatrix, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = a.row(i).iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_records_scale() {
        let p = VarianceProfile::new(RealMatrix::from_fn(3, 3, |_, _| 4.0 / 3.0)).unwrap();
        assert!((p.spectral_radius() - 4.0).abs() < 1e-12);
        let q = p.normalize().unwrap();
        assert!((q.scale() - 4.0).abs() < 1e-12);
        assert!((q.spectral_radius() - 1.0).abs() < 1e-12);
        assert!((q.matrix()[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        let r = q.normalize().unwrap();
        assert_eq!(r.matrix(), q.matrix());
    }

    #[test]
    fn block_radius() {
        let p = VarianceProfile::two_block(10, 3.0, 1.0, 0.5).unwrap().normalize().unwrap();
        assert!((p.spectral_radius() - 1.0).abs() < 1e-10);
        // reduced 2x2 matrix [[a k, b (n-k)], [b k, b (n-k)]] / n
        let m = RealMatrix::from_vec(2, 2, vec![1.5, 0.5, 0.5, 0.5]).unwrap();
        let rho = power_iteration_radius(&m, 0, 1e-15).unwrap().radius;
        assert!((p.scale() - rho).abs() < 1e-10);
    }

    #[test]
    fn csv_parsing() {
        let p = VarianceProfile::from_csv_str("# comment\n1, 2\n3,4\n").unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.matrix()[(1, 0)], 3.0);
        assert!(matches!(VarianceProfile::from_csv_str("1,2\n3,x\n"), Err(ProfileError::Parse { .. })));
        assert!(matches!(VarianceProfile::from_csv_str("1,2\n3\n"), Err(ProfileError::Parse { .. })));
        assert!(matches!(VarianceProfile::from_csv_str("1,2,3\n3,4,5\n"), Err(ProfileError::Parse { .. })));
        assert!(matches!(VarianceProfile::from_csv_str("1,0\n3,4\n"), Err(ProfileError::NotFlat { .. })));
    }

    #[test]
    fn short_spec_forms() {
        assert_eq!(ProfileSpec::parse_short("constant").unwrap(), ProfileSpec::Constant);
        assert_eq!(
            ProfileSpec::parse_short("twoblock:2,1,0.25").unwrap(),
            ProfileSpec::TwoBlock { a: 2.0, b: 1.0, split: 0.25 }
        );
        assert_eq!(ProfileSpec::parse_short("smooth:band").unwrap(), ProfileSpec::Smooth { id: "band".into() });
        assert!(ProfileSpec::Smooth { id: "nope".into() }.build(4).is_err());
    }
}
