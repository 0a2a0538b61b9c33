//! Run configuration. A TOML file supplies defaults for an experiment,
//! command-line flags override it, and the resolved [`RunConfig`] is
//! echoed into every artifact.

use crate::density::Method;
use crate::dyson::{ProfileError, ProfileSpec, SolveOptions};
use crate::ensemble::EntryLaw;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for {name}: {message}")]
    Invalid { name: &'static str, message: String },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

fn invalid(name: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { name, message: message.into() }
}

/// A profile either in the short command-line form or as a table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ProfileSource {
    Short(String),
    Spec(ProfileSpec),
}

impl ProfileSource {
    pub fn resolve(&self) -> Result<ProfileSpec, ProfileError> {
        match self {
            ProfileSource::Short(s) => ProfileSpec::parse_short(s),
            ProfileSource::Spec(p) => Ok(p.clone()),
        }
    }
}

/// `z` as a real number, `[re, im]` or the flag syntax `"re[,im]"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ComplexSource {
    Real(f64),
    Pair([f64; 2]),
    Text(String),
}

impl ComplexSource {
    pub fn resolve(&self, name: &'static str) -> Result<Complex64, ConfigError> {
        match self {
            ComplexSource::Real(x) => Ok(Complex64::new(*x, 0.0)),
            ComplexSource::Pair([re, im]) => Ok(Complex64::new(*re, *im)),
            ComplexSource::Text(s) => parse_complex(name, s),
        }
    }
}

pub fn parse_complex(name: &'static str, s: &str) -> Result<Complex64, ConfigError> {
    let parts: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match parts.map_err(|e| invalid(name, format!("'{s}': {e}")))?.as_slice() {
        &[re] => Ok(Complex64::new(re, 0.0)),
        &[re, im] => Ok(Complex64::new(re, im)),
        _ => Err(invalid(name, format!("'{s}': expected re or re,im"))),
    }
}

/// `eta` given as a number or as `"auto"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EtaSource {
    Value(f64),
    Text(String),
}

impl EtaSource {
    /// `None` stands for `auto`.
    pub fn resolve(&self) -> Result<Option<f64>, ConfigError> {
        match self {
            EtaSource::Value(x) => Ok(Some(*x)),
            EtaSource::Text(s) if s == "auto" => Ok(None),
            EtaSource::Text(s) => s.parse().map(Some).map_err(|e| invalid("eta", format!("'{s}': {e}"))),
        }
    }
}

/// `a:b:k`, `k` equally spaced points from `a` to `b` inclusive.
pub fn parse_tau_grid(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = |m: String| invalid("tau-grid", format!("'{s}': {m}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:end:count".into()));
    }
    let a: f64 = parts[0].trim().parse().map_err(|e| bad(format!("{e}")))?;
    let b: f64 = parts[1].trim().parse().map_err(|e| bad(format!("{e}")))?;
    let k: usize = parts[2].trim().parse().map_err(|e| bad(format!("{e}")))?;
    if k == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad("need finite bounds and at least one point".into()));
    }
    if k == 1 {
        return Ok(vec![a]);
    }
    Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect())
}

/// Acceptance caps used by `--check`. The defaults are desk-scale
/// engineering constants, not sharp theoretical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    /// Local law: error over predicted bound.
    pub local_law: f64,
    pub trace_symmetry: f64,
    /// Spectral radius: `max |rho(X) - 1|`.
    pub radius_band: f64,
    /// Histogram: largest bulk z-score.
    pub histogram_z: f64,
    /// Histogram: eigenvalues allowed with `|sigma|^2 >= 1 + gap`.
    pub histogram_outside: usize,
    /// Girko audit: discrepancy over its target rate.
    pub master_ratio: f64,
    /// Delocalization slack: `||y||_inf <= n^{-1/2 + eps}`.
    pub delocalization_eps: f64,
    /// Eigenvalue count near zero over `n eta`.
    pub count_ratio: f64,
    /// Required fraction of trials with smallest singular value `>= n^{-2}`.
    pub min_singular_fraction: f64,
    pub identity: f64,
    pub norm_f: f64,
    pub cross_method: f64,
    pub total_mass: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            local_law: 10.0,
            trace_symmetry: 1e-10,
            radius_band: 0.15,
            histogram_z: 3.0,
            histogram_outside: 0,
            master_ratio: 10.0,
            delocalization_eps: 0.25,
            count_ratio: 10.0,
            min_singular_fraction: 0.95,
            identity: 1e-9,
            norm_f: 1e-8,
            cross_method: 1e-4,
            total_mass: 5e-3,
        }
    }
}

/// Contents of a `--config` file. Every key mirrors a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<ProfileSource>,
    pub n: Option<usize>,
    pub out: Option<PathBuf>,
    pub check: Option<bool>,
    pub tau_star: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub eta: Option<EtaSource>,
    pub tau: Option<f64>,
    pub limit: Option<bool>,
    pub tau_grid: Option<String>,
    pub method: Option<Method>,
    pub points: Option<Vec<[f64; 2]>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub law: Option<String>,
    pub z: Option<ComplexSource>,
    pub z0: Option<ComplexSource>,
    pub a: Option<f64>,
    pub t_cut: Option<f64>,
    pub nodes_across: Option<usize>,
    pub eps: Option<f64>,
    pub bins: Option<usize>,
    pub bulk_tau: Option<f64>,
    pub outside_gap: Option<f64>,
    pub count_eta: Option<f64>,
    pub caps: Option<Caps>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }
}

pub fn parse_law(s: &str) -> Result<EntryLaw, ConfigError> {
    EntryLaw::parse(s).ok_or_else(|| invalid("law", format!("unknown entry law '{s}'")))
}

/// Sampling parameters shared by the Monte-Carlo commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampling {
    pub trials: usize,
    pub seed: u64,
    pub entry_law: EntryLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Solve {
        eta: Option<f64>,
        tau: f64,
        limit: bool,
    },
    Density {
        tau_grid: Vec<f64>,
        method: Method,
    },
    StabilityAudit {
        points: Vec<[f64; 2]>,
    },
    LocalLaw {
        #[serde(flatten)]
        sampling: Sampling,
        z: Complex64,
        eta: f64,
        eta_auto: bool,
    },
    Radius {
        #[serde(flatten)]
        sampling: Sampling,
    },
    Histogram {
        #[serde(flatten)]
        sampling: Sampling,
        bins: usize,
        bulk_tau: f64,
        outside_gap: f64,
    },
    GirkoAudit {
        #[serde(flatten)]
        sampling: Sampling,
        z0: Complex64,
        a: f64,
        t_cut: f64,
        nodes_across: usize,
        eps: f64,
    },
    EigenStats {
        #[serde(flatten)]
        sampling: Sampling,
        z: Complex64,
        count_eta: f64,
        bulk_tau: f64,
    },
}

/// The resolved configuration of one run. Thread count is deliberately
/// absent: results do not depend on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub profile: ProfileSpec,
    pub n: usize,
    pub out: Option<PathBuf>,
    pub check: bool,
    pub tau_star: f64,
    pub solve: SolveOptions,
    pub caps: Caps,
    pub params: Params,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_grid_endpoints() {
        let g = parse_tau_grid("0:0.9:10").unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.0);
        assert!((g[9] - 0.9).abs() < 1e-15);
        assert!(parse_tau_grid("0:1").is_err());
        assert!(parse_tau_grid("0:1:0").is_err());
    }

    #[test]
    fn file_config_forms() {
        let c = FileConfig::parse(
            "profile = \"twoblock:3,1,0.5\"\nn = 40\neta = \"auto\"\nz = [0.3, 0.1]\n[caps]\nlocal_law = 5.0\n",
        )
        .unwrap();
        assert_eq!(c.profile.unwrap().resolve().unwrap(), ProfileSpec::TwoBlock { a: 3.0, b: 1.0, split: 0.5 });
        assert_eq!(c.eta.unwrap().resolve().unwrap(), None);
        assert_eq!(c.z.unwrap().resolve("z").unwrap(), Complex64::new(0.3, 0.1));
        let caps = c.caps.unwrap();
        assert_eq!(caps.local_law, 5.0);
        assert_eq!(caps.radius_band, 0.15);

        let t = FileConfig::parse("[profile]\nkind = \"smooth\"\nid = \"linear\"\n").unwrap();
        assert_eq!(t.profile.unwrap().resolve().unwrap(), ProfileSpec::Smooth { id: "linear".into() });
        assert!(FileConfig::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn complex_flag_syntax() {
        assert_eq!(parse_complex("z", "0.3").unwrap(), Complex64::new(0.3, 0.0));
        assert_eq!(parse_complex("z", "-1, 2").unwrap(), Complex64::new(-1.0, 2.0));
        assert!(parse_complex("z", "1,2,3").is_err());
    }
}
