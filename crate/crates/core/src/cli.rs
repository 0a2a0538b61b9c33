//! The `circlaw` command-line driver.
//!
//! Every run resolves a [`RunConfig`] (config file, then flags), executes
//! on a dedicated thread pool and writes a JSON report to stdout. With
//! `--out DIR` the report and a CSV table are also written to `DIR`.
//! Failures are reported on stderr as one JSON line.

use crate::config::{
    parse_complex, parse_law, parse_tau_grid, Caps, ConfigError, FileConfig, Params, RunConfig, Sampling,
};
use crate::density::{density_profile, DensityOptions, Method};
use crate::dyson::{self, DysonError, LimitOptions, ProfileError, ProfileSpec, SolveOptions, VarianceProfile};
use crate::ensemble::{
    self, eigen_statistics, local_law_bound, local_law_report, quantile_sorted, run_trials, sample,
    spectral_radius_experiment, EnsembleConfig, EnsembleError, EntryLaw, TrialBatch,
};
use crate::girko::{histogram_vs_sigma, master_formula_audit, GirkoError, HistOptions, MasterOptions, TestFunction};
use crate::report::{csv_string, fmt_f64, to_json_line, to_json_string, Envelope, FORMAT_VERSION};
use crate::stability;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Runs that fail on more than this fraction of trials are errors.
pub const MAX_FAIL_FRACTION: f64 = 0.1;

const DEFAULT_N: usize = 100;
const DEFAULT_TRIALS: usize = 20;
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "circlaw", version, about = "Dyson equation solver and circular-law experiments for matrices with a variance profile")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "CIRCLAW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML file with default values for any of the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// constant, twoblock[:a,b,split], smooth:<id>, or a CSV file.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Directory for the JSON and CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 4 if an acceptance cap is violated.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    tau_star: Option<f64>,
    /// Dyson solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
struct SamplingArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian, bernoulli or disk.
    #[arg(long)]
    law: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Dyson equation at one (eta, tau).
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Solve the eta = 0 equation instead.
        #[arg(long)]
        limit: bool,
    },
    /// Density of states on a grid of tau = |z|^2.
    Density {
        #[command(flatten)]
        common: Common,
        /// start:end:count
        #[arg(long)]
        tau_grid: Option<String>,
        /// derivative, integral or both.
        #[arg(long)]
        method: Option<String>,
    },
    /// Check the stability-operator identities at sample points.
    StabilityAudit {
        #[command(flatten)]
        common: Common,
        /// Comma separated eta:tau pairs.
        #[arg(long)]
        points: Option<String>,
    },
    /// Random-matrix experiments.
    #[command(subcommand)]
    Montecarlo(Montecarlo),
}

#[derive(Debug, Subcommand)]
enum Montecarlo {
    /// Resolvent diagonal against the Dyson solution.
    Locallaw {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// re[,im]
        #[arg(long)]
        z: Option<String>,
        /// A number, or auto for n^{-1/2}.
        #[arg(long)]
        eta: Option<String>,
    },
    /// Spectral radius of X.
    Radius {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Radial eigenvalue histogram against the density of states.
    Histogram {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        bulk_tau: Option<f64>,
        #[arg(long)]
        outside_gap: Option<f64>,
    },
    /// Linear statistic of a test function, split into its three terms.
    GirkoAudit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Center of the test function, re[,im].
        #[arg(long)]
        z0: Option<String>,
        /// Scale exponent in [0, 1/2).
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        t_cut: Option<f64>,
        #[arg(long)]
        nodes_across: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Small singular values, eigenvalue counts and bulk eigenvectors.
    Eigenstats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long)]
        z: Option<String>,
        /// Defaults to 5/n.
        #[arg(long)]
        count_eta: Option<f64>,
        #[arg(long)]
        bulk_tau: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub code: i32,
}

impl CliError {
    fn input(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), code: EXIT_INPUT }
    }

    fn numeric(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), code: EXIT_NUMERIC }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        let m = e.to_string();
        match e {
            ProfileError::Parse { .. } => Self::input("profile-parse", m),
            ProfileError::Io(_) => Self::input("profile-io", m),
            ProfileError::Linalg(_) => Self::numeric("numeric", m),
            _ => Self::input("profile-invalid", m),
        }
    }
}

impl From<DysonError> for CliError {
    fn from(e: DysonError) -> Self {
        let m = e.to_string();
        match e {
            DysonError::Profile(p) => p.into(),
            DysonError::NoConvergence { .. } => Self::numeric("no-convergence", m),
            DysonError::EdgeTooClose { .. } => Self::input("edge-too-close", m),
            DysonError::SingularStability { .. } => Self::numeric("singular-stability", m),
            DysonError::InvalidParameter(_) => Self::input("invalid-parameter", m),
            DysonError::Linalg(_) => Self::numeric("numeric", m),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        let m = e.to_string();
        match e {
            EnsembleError::Dyson(d) => d.into(),
            EnsembleError::Linalg(_) => Self::numeric("numeric", m),
            EnsembleError::InvalidParameter(_) => Self::input("invalid-parameter", m),
            EnsembleError::TooManyFailures { .. } => Self::numeric("too-many-failures", m),
        }
    }
}

impl From<GirkoError> for CliError {
    fn from(e: GirkoError) -> Self {
        let m = e.to_string();
        match e {
            GirkoError::Dyson(d) => d.into(),
            GirkoError::Ensemble(x) => x.into(),
            GirkoError::Linalg(_) => Self::numeric("numeric", m),
            GirkoError::InvalidParameter(_) => Self::input("invalid-parameter", m),
            GirkoError::GridTooCoarse(_) => Self::numeric("grid-too-coarse", m),
            GirkoError::Singular => Self::numeric("singular", m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let m = e.to_string();
        match e {
            ConfigError::Io { .. } => Self::input("config-io", m),
            ConfigError::Parse(_) => Self::input("config-parse", m),
            ConfigError::Invalid { .. } => Self::input("invalid-argument", m),
            ConfigError::Profile(p) => p.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input("output-io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::numeric("serialization", e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: &'a str,
    exit_code: i32,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    format_version: &'static str,
    error: ErrorBody<'a>,
}

/// Runs the driver on `args` (program name first) and returns the exit
/// status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            return report_error(stderr, &CliError::input("usage", e.to_string().trim_end()));
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return report_error(stderr, &CliError::input("threads", e.to_string())),
    };
    let mut buf: Vec<u8> = Vec::new();
    let res = pool.install(|| dispatch(&cli.command, &mut buf));
    if let Err(e) = stdout.write_all(&buf) {
        return report_error(stderr, &e.into());
    }
    match res {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            let e = CliError { kind: "check-failed", message: "an acceptance cap was violated".into(), code: EXIT_CHECK };
            report_error(stderr, &e)
        }
        Err(e) => report_error(stderr, &e),
    }
}

fn report_error(stderr: &mut dyn Write, e: &CliError) -> i32 {
    let r = ErrorReport {
        format_version: FORMAT_VERSION,
        error: ErrorBody { kind: e.kind, message: &e.message, exit_code: e.code },
    };
    let line = to_json_line(&r).unwrap_or_else(|_| format!("{{\"error\":{{\"kind\":\"{}\"}}}}", e.kind));
    let _ = writeln!(stderr, "{line}");
    e.code
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    cap: f64,
    /// `"<="` or `">="`.
    relation: &'static str,
    pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, cap: f64) -> Self {
        Check { name, value, cap, relation: "<=", pass: value <= cap }
    }

    fn at_least(name: &'static str, value: f64, cap: f64) -> Self {
        Check { name, value, cap, relation: ">=", pass: value >= cap }
    }
}

#[derive(Serialize)]
struct Outcome<R: Serialize> {
    report: R,
    checks: Vec<Check>,
    passed: bool,
}

/// Everything but the command-specific parameters.
struct Base {
    file: FileConfig,
    profile: ProfileSpec,
    n: usize,
    out: Option<PathBuf>,
    check: bool,
    tau_star: f64,
    solve: SolveOptions,
    caps: Caps,
}

impl Base {
    fn resolve(c: &Common) -> Result<Self, CliError> {
        let file = match &c.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let profile = match (&c.profile, &file.profile) {
            (Some(s), _) => ProfileSpec::parse_short(s)?,
            (None, Some(src)) => src.resolve()?,
            (None, None) => ProfileSpec::Constant,
        };
        let n = c.n.or(file.n).unwrap_or(DEFAULT_N);
        if n == 0 {
            return Err(CliError::input("invalid-argument", "n must be positive"));
        }
        let defaults = SolveOptions::default();
        let solve = SolveOptions {
            tol: c.tol.or(file.tol).unwrap_or(defaults.tol),
            max_iter: c.max_iter.or(file.max_iter).unwrap_or(defaults.max_iter),
            ..defaults
        };
        let tau_star = c.tau_star.or(file.tau_star).unwrap_or(LimitOptions::default().tau_star);
        if !(tau_star > 0.0 && tau_star < 1.0) {
            return Err(CliError::input("invalid-argument", format!("tau_star = {tau_star} must lie in (0, 1)")));
        }
        Ok(Base {
            profile,
            n,
            out: c.out.clone().or(file.out.clone()),
            check: c.check || file.check.unwrap_or(false),
            tau_star,
            solve,
            caps: file.caps.unwrap_or_default(),
            file,
        })
    }

    fn sampling(&self, s: &SamplingArgs) -> Result<Sampling, CliError> {
        let entry_law = match s.law.as_deref().or(self.file.law.as_deref()) {
            Some(l) => parse_law(l)?,
            None => EntryLaw::default(),
        };
        let trials = s.trials.or(self.file.trials).unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(CliError::input("invalid-argument", "need at least one trial"));
        }
        Ok(Sampling { trials, seed: s.seed.or(self.file.seed).unwrap_or(DEFAULT_SEED), entry_law })
    }

    fn complex(&self, name: &'static str, flag: &Option<String>, file: &Option<crate::config::ComplexSource>, default: Complex64) -> Result<Complex64, CliError> {
        Ok(match (flag, file) {
            (Some(s), _) => parse_complex(name, s)?,
            (None, Some(src)) => src.resolve(name)?,
            (None, None) => default,
        })
    }

    fn finish(self, command: &str, params: Params) -> RunConfig {
        RunConfig {
            command: command.into(),
            profile: self.profile,
            n: self.n,
            out: self.out,
            check: self.check,
            tau_star: self.tau_star,
            solve: self.solve,
            caps: self.caps,
            params,
        }
    }
}

fn build_profile(cfg: &RunConfig) -> Result<VarianceProfile, CliError> {
    Ok(cfg.profile.build(cfg.n)?)
}

fn ensemble_config(profile: VarianceProfile, s: &Sampling) -> EnsembleConfig {
    EnsembleConfig::new(profile, s.entry_law, s.seed, s.trials)
}

fn density_options(cfg: &RunConfig) -> DensityOptions {
    DensityOptions { tau_star: cfg.tau_star, solve: cfg.solve, ..DensityOptions::default() }
}

/// Writes the JSON report to stdout and, with an output directory, the
/// JSON and CSV artifacts. Returns whether every check passed.
fn emit<R: Serialize>(
    cfg: &RunConfig,
    stem: &str,
    report: R,
    checks: Vec<Check>,
    table: (&[&str], Vec<Vec<String>>),
    stdout: &mut dyn Write,
) -> Result<bool, CliError> {
    let passed = checks.iter().all(|c| c.pass);
    let json = to_json_string(&Envelope::new(cfg, Outcome { report, checks, passed }))?;
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), &json)?;
        std::fs::write(dir.join(format!("{stem}.csv")), csv_string(cfg, table.0, &table.1)?)?;
    }
    stdout.write_all(json.as_bytes())?;
    Ok(passed || !cfg.check)
}

fn failures<T>(batch: &TrialBatch<T>) -> Vec<TrialFailure> {
    batch
        .results
        .iter()
        .enumerate()
        .filter_map(|(t, r)| r.as_ref().err().map(|m| TrialFailure { trial: t as u64, message: m.clone() }))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct TrialFailure {
    trial: u64,
    message: String,
}

fn dispatch(cmd: &Command, stdout: &mut dyn Write) -> Result<bool, CliError> {
    match cmd {
        Command::Solve { common, eta, tau, limit } => cmd_solve(common, *eta, *tau, *limit, stdout),
        Command::Density { common, tau_grid, method } => cmd_density(common, tau_grid, method, stdout),
        Command::StabilityAudit { common, points } => cmd_stability(common, points, stdout),
        Command::Montecarlo(mc) => match mc {
            Montecarlo::Locallaw { common, sampling, z, eta } => cmd_locallaw(common, sampling, z, eta, stdout),
            Montecarlo::Radius { common, sampling } => cmd_radius(common, sampling, stdout),
            Montecarlo::Histogram { common, sampling, bins, bulk_tau, outside_gap } => {
                cmd_histogram(common, sampling, *bins, *bulk_tau, *outside_gap, stdout)
            }
            Montecarlo::GirkoAudit { common, sampling, z0, a, t_cut, nodes_across, eps } => {
                cmd_girko(common, sampling, z0, *a, *t_cut, *nodes_across, *eps, stdout)
            }
            Montecarlo::Eigenstats { common, sampling, z, count_eta, bulk_tau } => {
                cmd_eigenstats(common, sampling, z, *count_eta, *bulk_tau, stdout)
            }
        },
    }
}

#[derive(Serialize)]
struct SolveReport {
    eta: f64,
    tau: f64,
    iterations: usize,
    residual: f64,
    mean_v1: f64,
    mean_v2: f64,
    mean_u: f64,
    regime: dyson::RegimeReport,
    v1: Vec<f64>,
    v2: Vec<f64>,
    u: Vec<f64>,
}

/// Comparability band for `v` against its regime scale.
const REGIME_BAND: (f64, f64) = (0.05, 20.0);

fn cmd_solve(c: &Common, eta: Option<f64>, tau: Option<f64>, limit: bool, stdout: &mut dyn Write) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let limit = limit || base.file.limit.unwrap_or(false);
    let eta = match eta {
        Some(e) => Some(e),
        None => base.file.eta.as_ref().map(|e| e.resolve()).transpose()?.flatten(),
    };
    let tau = tau.or(base.file.tau).unwrap_or(0.0);
    if !limit && eta.is_none() {
        return Err(CliError::input("missing-argument", "solve needs --eta or --limit"));
    }
    let cfg = base.finish("solve", Params::Solve { eta: if limit { None } else { eta }, tau, limit });
    let profile = build_profile(&cfg)?;
    let sol = if limit {
        let lim = LimitOptions { tau_star: cfg.tau_star, ..LimitOptions::default() };
        dyson::solve_limit(&profile, tau, &lim, &cfg.solve)?
    } else {
        dyson::solve(&profile, eta.unwrap_or(f64::NAN), tau, &cfg.solve)?
    };
    let regime = dyson::regime_check(&sol, REGIME_BAND);
    let checks = vec![
        Check::at_most("residual", sol.residual, cfg.solve.tol),
        Check::at_least("regime_min_ratio", regime.min_ratio, REGIME_BAND.0),
        Check::at_most("regime_max_ratio", regime.max_ratio, REGIME_BAND.1),
    ];
    let rows = (0..sol.n())
        .map(|i| vec![i.to_string(), fmt_f64(sol.v1[i]), fmt_f64(sol.v2[i]), fmt_f64(sol.u[i])])
        .collect();
    let report = SolveReport {
        eta: sol.eta,
        tau: sol.tau,
        iterations: sol.iterations,
        residual: sol.residual,
        mean_v1: sol.mean_v1(),
        mean_v2: dyson::mean(&sol.v2),
        mean_u: sol.mean_u(),
        regime,
        v1: sol.v1.clone(),
        v2: sol.v2.clone(),
        u: sol.u.clone(),
    };
    emit(&cfg, "solve", report, checks, (&["i", "v1", "v2", "u"], rows), stdout)
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    match s {
        "derivative" => Ok(Method::Derivative),
        "integral" => Ok(Method::Integral),
        "both" => Ok(Method::Both),
        _ => Err(CliError::input("invalid-argument", format!("unknown method '{s}'"))),
    }
}

fn cmd_density(c: &Common, grid: &Option<String>, method: &Option<String>, stdout: &mut dyn Write) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let spec = grid.clone().or(base.file.tau_grid.clone()).unwrap_or_else(|| "0:0.9:10".into());
    let tau_grid = parse_tau_grid(&spec)?;
    let method = match method {
        Some(m) => parse_method(m)?,
        None => base.file.method.unwrap_or(Method::Both),
    };
    let cfg = base.finish("density", Params::Density { tau_grid: tau_grid.clone(), method });
    let profile = build_profile(&cfg)?;
    let dp = density_profile(&profile, &tau_grid, method, &density_options(&cfg))?;
    let mut checks = vec![Check::at_most("total_mass_deviation", (dp.total_mass - 1.0).abs(), cfg.caps.total_mass)];
    if let Some(g) = dp.max_cross_method_gap {
        checks.push(Check::at_most("max_cross_method_gap", g, cfg.caps.cross_method));
    }
    let mut header = vec!["tau", "sigma"];
    if dp.sigma_integral.is_some() {
        header.push("sigma_integral");
    }
    header.push("cumulative");
    let rows = (0..tau_grid.len())
        .map(|k| {
            let mut r = vec![fmt_f64(dp.tau_grid[k]), fmt_f64(dp.sigma_vals[k])];
            if let Some(si) = &dp.sigma_integral {
                r.push(fmt_f64(si[k]));
            }
            r.push(fmt_f64(dp.cumulative[k]));
            r
        })
        .collect();
    emit(&cfg, "density", dp, checks, (&header, rows), stdout)
}

/// Default audit points: `eta` in `{1e-3, 1e-2, 1e-1, 1}` times `tau` in `{0.3, 0.9, 2}`.
pub fn default_stability_points() -> Vec<[f64; 2]> {
    let mut p = Vec::new();
    for eta in [1e-3, 1e-2, 1e-1, 1.0] {
        for tau in [0.3, 0.9, 2.0] {
            p.push([eta, tau]);
        }
    }
    p
}

fn parse_points(s: &str) -> Result<Vec<[f64; 2]>, CliError> {
    s.split(',')
        .map(|pair| {
            let (e, t) = pair
                .split_once(':')
                .ok_or_else(|| CliError::input("invalid-argument", format!("point '{pair}' is not eta:tau")))?;
            let parse = |x: &str| {
                x.trim().parse::<f64>().map_err(|err| CliError::input("invalid-argument", format!("point '{pair}': {err}")))
            };
            Ok([parse(e)?, parse(t)?])
        })
        .collect()
}

#[derive(Serialize)]
struct StabilityPoint {
    identities: stability::IdentityReport,
    gap: f64,
    f_plus_iterations: usize,
}

#[derive(Serialize)]
struct StabilityReport {
    points: Vec<StabilityPoint>,
    max_factorization: f64,
    max_adjoint_null: f64,
    max_f_minus_eigen: f64,
    max_t_spectrum: f64,
    max_norm_f_gap: f64,
}

fn cmd_stability(c: &Common, points: &Option<String>, stdout: &mut dyn Write) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let pts = match points {
        Some(s) => parse_points(s)?,
        None => base.file.points.clone().unwrap_or_else(default_stability_points),
    };
    if pts.iter().any(|p| !(p[0] > 0.0)) {
        return Err(CliError::input("invalid-argument", "stability audit needs eta > 0"));
    }
    let cfg = base.finish("stability-audit", Params::StabilityAudit { points: pts.clone() });
    let profile = build_profile(&cfg)?;
    let res: Result<Vec<StabilityPoint>, DysonError> = pts
        .par_iter()
        .map(|&[eta, tau]| {
            let sol = dyson::solve(&profile, eta, tau, &cfg.solve)?;
            let ops = stability::build(&profile, &sol)?;
            let identities = stability::verify_identities(&ops, &profile, &sol)?;
            Ok(StabilityPoint { identities, gap: stability::gap_probe(&ops)?, f_plus_iterations: ops.f_plus_iterations })
        })
        .collect();
    let points = res?;
    let max = |g: fn(&stability::IdentityReport) -> f64| points.iter().map(|p| g(&p.identities)).fold(0.0, f64::max);
    let report = StabilityReport {
        max_factorization: max(|r| r.factorization),
        max_adjoint_null: max(|r| r.adjoint_null),
        max_f_minus_eigen: max(|r| r.f_minus_eigen),
        max_t_spectrum: max(|r| r.t_spectrum),
        max_norm_f_gap: max(|r| r.norm_f_gap),
        points,
    };
    let caps = cfg.caps;
    let checks = vec![
        Check::at_most("factorization", report.max_factorization, caps.identity),
        Check::at_most("adjoint_null", report.max_adjoint_null, caps.identity),
        Check::at_most("f_minus_eigen", report.max_f_minus_eigen, caps.identity),
        Check::at_most("t_spectrum", report.max_t_spectrum, caps.identity),
        Check::at_most("norm_f_gap", report.max_norm_f_gap, caps.norm_f),
    ];
    let rows = report
        .points
        .iter()
        .map(|p| {
            let r = &p.identities;
            [r.eta, r.tau, r.factorization, r.adjoint_null, r.f_minus_eigen, r.t_spectrum, r.norm_f, r.norm_f_gap, p.gap]
                .iter()
                .map(|&x| fmt_f64(x))
                .collect()
        })
        .collect();
    let header =
        ["eta", "tau", "factorization", "adjoint_null", "f_minus_eigen", "t_spectrum", "norm_f", "norm_f_gap", "gap"];
    emit(&cfg, "stability-audit", report, checks, (&header, rows), stdout)
}

#[derive(Serialize)]
struct LocalLawTrial {
    trial: u64,
    err_inf: f64,
    err_avg: f64,
    ratio_inf: f64,
    ratio_avg: f64,
    trace_gap: f64,
    d_inf: f64,
}

#[derive(Serialize)]
struct LocalLawSummary {
    z: Complex64,
    eta: f64,
    tau: f64,
    regime: ensemble::LocalRegime,
    predicted_bound: f64,
    predicted_bound_avg: f64,
    trials: Vec<LocalLawTrial>,
    failed: usize,
    failures: Vec<TrialFailure>,
    max_ratio_inf: f64,
    max_ratio_avg: f64,
    /// Level `1 - 1/T` of the empirical quantile below.
    quantile_level: f64,
    ratio_inf_quantile: f64,
    ratio_avg_quantile: f64,
    /// `n^{1/4}`, the desk-scale stand-in for stochastic domination.
    domination_cap: f64,
    max_trace_gap: f64,
    max_err_over_d: f64,
}

fn cmd_locallaw(
    c: &Common,
    s: &SamplingArgs,
    z: &Option<String>,
    eta: &Option<String>,
    stdout: &mut dyn Write,
) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let sampling = base.sampling(s)?;
    let z = base.complex("z", z, &base.file.z, Complex64::new(0.3, 0.0))?;
    let eta_in = match eta {
        Some(text) => crate::config::EtaSource::Text(text.clone()).resolve()?,
        None => base.file.eta.as_ref().map(|e| e.resolve()).transpose()?.flatten(),
    };
    let nf = base.n as f64;
    let eta_auto = eta_in.is_none();
    let eta = eta_in.unwrap_or(1.0 / nf.sqrt());
    if !(eta > 0.0) {
        return Err(CliError::input("invalid-argument", format!("eta = {eta} must be positive")));
    }
    let cfg = base.finish("montecarlo locallaw", Params::LocalLaw { sampling, z, eta, eta_auto });
    let tau = z.norm_sqr();
    let (regime, bound, bound_avg) = local_law_bound(cfg.n, eta, tau, cfg.tau_star)?;
    let profile = build_profile(&cfg)?;
    let sol = dyson::solve(&profile, eta, tau, &cfg.solve)?;
    let ec = ensemble_config(profile, &sampling);
    let batch = run_trials(sampling.trials, |t| local_law_report(&sample(&ec, t), &ec.profile, &sol, z, cfg.tau_star));
    batch.check(MAX_FAIL_FRACTION)?;
    let trials: Vec<LocalLawTrial> = batch
        .successes()
        .map(|r| LocalLawTrial {
            trial: r.trial,
            err_inf: r.err_inf,
            err_avg: r.err_avg,
            ratio_inf: r.ratio_inf(),
            ratio_avg: r.ratio_avg(),
            trace_gap: r.trace_gap,
            d_inf: r.d_inf,
        })
        .collect();
    let level = 1.0 - 1.0 / sampling.trials as f64;
    let quantile = |g: fn(&LocalLawTrial) -> f64| {
        let mut v: Vec<f64> = trials.iter().map(g).collect();
        v.sort_by(f64::total_cmp);
        quantile_sorted(&v, level)
    };
    let max = |g: fn(&LocalLawTrial) -> f64| trials.iter().map(g).fold(0.0, f64::max);
    let summary = LocalLawSummary {
        z,
        eta,
        tau,
        regime,
        predicted_bound: bound,
        predicted_bound_avg: bound_avg,
        failed: batch.failed(),
        failures: failures(&batch),
        max_ratio_inf: max(|t| t.ratio_inf),
        max_ratio_avg: max(|t| t.ratio_avg),
        quantile_level: level,
        ratio_inf_quantile: quantile(|t| t.ratio_inf),
        ratio_avg_quantile: quantile(|t| t.ratio_avg),
        domination_cap: nf.powf(0.25),
        max_trace_gap: max(|t| t.trace_gap),
        max_err_over_d: max(|t| t.err_inf / t.d_inf),
        trials,
    };
    let caps = cfg.caps;
    let checks = vec![
        Check::at_most("max_ratio_inf", summary.max_ratio_inf, caps.local_law),
        Check::at_most("max_ratio_avg", summary.max_ratio_avg, caps.local_law),
        Check::at_most("max_trace_gap", summary.max_trace_gap, caps.trace_symmetry),
    ];
    let rows = summary
        .trials
        .iter()
        .map(|t| {
            let mut r = vec![t.trial.to_string()];
            r.extend([t.err_inf, t.err_avg, t.ratio_inf, t.ratio_avg, t.trace_gap, t.d_inf].iter().map(|&x| fmt_f64(x)));
            r
        })
        .collect();
    let header = ["trial", "err_inf", "err_avg", "ratio_inf", "ratio_avg", "trace_gap", "d_inf"];
    emit(&cfg, "locallaw", summary, checks, (&header, rows), stdout)
}

fn cmd_radius(c: &Common, s: &SamplingArgs, stdout: &mut dyn Write) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let sampling = base.sampling(s)?;
    let cfg = base.finish("montecarlo radius", Params::Radius { sampling });
    let ec = ensemble_config(build_profile(&cfg)?, &sampling);
    let report = spectral_radius_experiment(&ec, MAX_FAIL_FRACTION)?;
    let checks = vec![Check::at_most("max_abs_deviation", report.max_abs_deviation, cfg.caps.radius_band)];
    let rows = report.radii.iter().enumerate().map(|(i, r)| vec![i.to_string(), fmt_f64(*r), fmt_f64(r - 1.0)]).collect();
    emit(&cfg, "radius", report, checks, (&["index", "radius", "deviation"], rows), stdout)
}

fn cmd_histogram(
    c: &Common,
    s: &SamplingArgs,
    bins: Option<usize>,
    bulk_tau: Option<f64>,
    outside_gap: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let sampling = base.sampling(s)?;
    let defaults = HistOptions::default();
    let bins = bins.or(base.file.bins).unwrap_or(20);
    let bulk_tau = bulk_tau.or(base.file.bulk_tau).unwrap_or(defaults.bulk_tau);
    let outside_gap = outside_gap.or(base.file.outside_gap).unwrap_or(defaults.outside_gap);
    let cfg = base.finish("montecarlo histogram", Params::Histogram { sampling, bins, bulk_tau, outside_gap });
    let ec = ensemble_config(build_profile(&cfg)?, &sampling);
    let opts = HistOptions { bulk_tau, outside_gap, density: density_options(&cfg), max_fail_fraction: MAX_FAIL_FRACTION };
    let report = histogram_vs_sigma(&ec, bins, &opts)?;
    let checks = vec![
        Check::at_most("max_abs_z_bulk", report.max_abs_z_bulk, cfg.caps.histogram_z),
        Check::at_most("outside_count", report.outside_count as f64, cfg.caps.histogram_outside as f64),
    ];
    let rows = report
        .bins
        .iter()
        .map(|b| {
            let mut r: Vec<String> =
                [b.bin_center_r, b.empirical_density, b.sigma, b.stderr, b.tau_lo, b.tau_hi].iter().map(|&x| fmt_f64(x)).collect();
            r.push(b.count.to_string());
            r.push(fmt_f64(b.expected_density));
            r.push(fmt_f64(b.z_score));
            r.push(b.bulk.to_string());
            r
        })
        .collect();
    let header = [
        "bin_center_r",
        "empirical_density",
        "sigma",
        "stderr",
        "tau_lo",
        "tau_hi",
        "count",
        "expected_density",
        "z_score",
        "bulk",
    ];
    emit(&cfg, "histogram", report, checks, (&header, rows), stdout)
}

#[allow(clippy::too_many_arguments)]
fn cmd_girko(
    c: &Common,
    s: &SamplingArgs,
    z0: &Option<String>,
    a: Option<f64>,
    t_cut: Option<f64>,
    nodes_across: Option<usize>,
    eps: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let sampling = base.sampling(s)?;
    let defaults = MasterOptions::default();
    let z0 = base.complex("z0", z0, &base.file.z0, Complex64::new(0.0, 0.0))?;
    let a = a.or(base.file.a).unwrap_or(0.0);
    let t_cut = t_cut.or(base.file.t_cut).unwrap_or((base.n as f64).powi(4));
    let nodes_across = nodes_across.or(base.file.nodes_across).unwrap_or(defaults.nodes_across);
    let eps = eps.or(base.file.eps).unwrap_or(defaults.eps);
    let cfg = base.finish("montecarlo girko-audit", Params::GirkoAudit { sampling, z0, a, t_cut, nodes_across, eps });
    let f = TestFunction::new(z0, a, cfg.n)?;
    let ec = ensemble_config(build_profile(&cfg)?, &sampling);
    let opts = MasterOptions {
        t_cut: Some(t_cut),
        eps,
        nodes_across,
        max_fail_fraction: MAX_FAIL_FRACTION,
        solve: cfg.solve,
        ..defaults
    };
    let report = master_formula_audit(&ec, &f, &opts)?;
    let checks = vec![Check::at_most("max_ratio", report.max_ratio, cfg.caps.master_ratio)];
    let rows = report
        .trials
        .iter()
        .map(|t| {
            let mut r = vec![t.trial.to_string()];
            r.extend(
                [t.linear_statistic, t.discrepancy, t.term1, t.term2, t.term3, t.identity_gap, t.min_singular]
                    .iter()
                    .map(|&x| fmt_f64(x)),
            );
            r
        })
        .collect();
    let header = ["trial", "linear_statistic", "discrepancy", "term1", "term2", "term3", "identity_gap", "min_singular"];
    emit(&cfg, "girko-audit", report, checks, (&header, rows), stdout)
}

#[derive(Serialize)]
struct EigenSummary {
    z: Complex64,
    count_eta: f64,
    bulk_tau: f64,
    trials: Vec<ensemble::EigenReport>,
    failed: usize,
    failures: Vec<TrialFailure>,
    /// `max count / (n eta)`.
    max_count_ratio: f64,
    /// Fraction of trials with smallest singular value at least `n^{-2}`.
    singular_fraction: f64,
    min_singular: f64,
    max_linf: f64,
    delocalization_bound: f64,
    max_pairing_defect: f64,
    max_eig_residual: f64,
}

fn cmd_eigenstats(
    c: &Common,
    s: &SamplingArgs,
    z: &Option<String>,
    count_eta: Option<f64>,
    bulk_tau: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<bool, CliError> {
    let base = Base::resolve(c)?;
    let sampling = base.sampling(s)?;
    let nf = base.n as f64;
    let z = base.complex("z", z, &base.file.z, Complex64::new(0.3, 0.0))?;
    let count_eta = count_eta.or(base.file.count_eta).unwrap_or(5.0 / nf);
    let bulk_tau = bulk_tau.or(base.file.bulk_tau).unwrap_or(0.8);
    let cfg = base.finish("montecarlo eigenstats", Params::EigenStats { sampling, z, count_eta, bulk_tau });
    let ec = ensemble_config(build_profile(&cfg)?, &sampling);
    let batch = run_trials(sampling.trials, |t| eigen_statistics(&sample(&ec, t), z, count_eta, Some(bulk_tau)));
    batch.check(MAX_FAIL_FRACTION)?;
    let trials: Vec<ensemble::EigenReport> = batch.successes().cloned().collect();
    let m = trials.len() as f64;
    let max = |g: fn(&ensemble::EigenReport) -> f64| trials.iter().map(g).fold(0.0, f64::max);
    let summary = EigenSummary {
        z,
        count_eta,
        bulk_tau,
        failed: batch.failed(),
        failures: failures(&batch),
        max_count_ratio: trials.iter().map(|t| t.count as f64 / (nf * count_eta)).fold(0.0, f64::max),
        singular_fraction: trials.iter().filter(|t| t.min_singular >= nf.powi(-2)).count() as f64 / m,
        min_singular: trials.iter().map(|t| t.min_singular).fold(f64::INFINITY, f64::min),
        max_linf: max(|t| t.max_linf),
        delocalization_bound: nf.powf(-0.5 + cfg.caps.delocalization_eps),
        max_pairing_defect: max(|t| t.pairing_defect),
        max_eig_residual: max(|t| t.max_eig_residual),
        trials,
    };
    let caps = cfg.caps;
    let checks = vec![
        Check::at_most("max_count_ratio", summary.max_count_ratio, caps.count_ratio),
        Check::at_least("singular_fraction", summary.singular_fraction, caps.min_singular_fraction),
        Check::at_most("max_linf", summary.max_linf, summary.delocalization_bound),
    ];
    let rows = summary
        .trials
        .iter()
        .map(|t| {
            vec![
                t.trial.to_string(),
                t.count.to_string(),
                fmt_f64(t.min_singular),
                t.bulk_count.to_string(),
                fmt_f64(t.max_linf),
                fmt_f64(t.pairing_defect),
                fmt_f64(t.max_eig_residual),
            ]
        })
        .collect();
    let header = ["trial", "count", "min_singular", "bulk_count", "max_linf", "pairing_defect", "max_eig_residual"];
    emit(&cfg, "eigenstats", summary, checks, (&header, rows), stdout)
}
