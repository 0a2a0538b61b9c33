//! C interface to the Dyson solver and the density of states.
//!
//! Profiles and solutions are opaque handles, released with the matching
//! `*_free`. Every fallible call returns a
//! [`CirclawStatus`]; on failure `circlaw_last_error()` describes the
//! error until the next call on the same thread.

use circlaw::density::{self, DensityOptions};
use circlaw::dyson::{self, DysonError, DysonSolution, LimitOptions, ProfileError, ProfileSpec, SolveOptions, VarianceProfile};
use circlaw::linalg::RealMatrix;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CirclawStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ProfileParse = 3,
    ProfileInvalid = 4,
    NoConvergence = 5,
    EdgeTooClose = 6,
    Numeric = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CirclawSigmaMethod {
    Derivative = 0,
    Integral = 1,
}

/// Normalised variance profile.
pub struct CirclawProfile {
    inner: VarianceProfile,
}

/// Solution of the Dyson equation at one `(eta, tau)`.
pub struct CirclawSolution {
    inner: DysonSolution,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CirclawSolutionInfo {
    pub n: usize,
    pub eta: f64,
    pub tau: f64,
    pub residual: f64,
    pub iterations: usize,
    pub mean_v1: f64,
    pub mean_u: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CirclawStatus, String);

impl From<ProfileError> for Failure {
    fn from(e: ProfileError) -> Self {
        let s = match e {
            ProfileError::Parse { .. } => CirclawStatus::ProfileParse,
            ProfileError::Io(_) => CirclawStatus::InvalidArgument,
            ProfileError::Linalg(_) => CirclawStatus::Numeric,
            _ => CirclawStatus::ProfileInvalid,
        };
        Failure(s, e.to_string())
    }
}

impl From<DysonError> for Failure {
    fn from(e: DysonError) -> Self {
        let m = e.to_string();
        match e {
            DysonError::Profile(p) => p.into(),
            DysonError::NoConvergence { .. } => Failure(CirclawStatus::NoConvergence, m),
            DysonError::EdgeTooClose { .. } => Failure(CirclawStatus::EdgeTooClose, m),
            DysonError::InvalidParameter(_) => Failure(CirclawStatus::InvalidArgument, m),
            DysonError::SingularStability { .. } | DysonError::Linalg(_) => Failure(CirclawStatus::Numeric, m),
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CirclawStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CirclawStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CirclawStatus::Ok
        }
        Ok(Err(Failure(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            CirclawStatus::Panic
        }
    }
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn profile_ref<'a>(p: *const CirclawProfile) -> Result<&'a VarianceProfile, Failure> {
    p.as_ref().map(|p| &p.inner).ok_or_else(|| null("profile"))
}

unsafe fn solution_ref<'a>(s: *const CirclawSolution) -> Result<&'a DysonSolution, Failure> {
    s.as_ref().map(|s| &s.inner).ok_or_else(|| null("solution"))
}

fn new_profile(spec: ProfileSpec, n: usize, out: *mut *mut CirclawProfile) -> CirclawStatus {
    guard(|| {
        let inner = spec.build(n)?;
        unsafe { write_out(out, CirclawProfile { inner }) }
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn circlaw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, nul-terminated version string.
#[no_mangle]
pub extern "C" fn circlaw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Constant profile `s_ij = 1/n`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn circlaw_profile_constant(n: usize, out: *mut *mut CirclawProfile) -> CirclawStatus {
    new_profile(ProfileSpec::Constant, n, out)
}

/// Two-block profile, normalised to spectral radius one.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn circlaw_profile_two_block(
    n: usize,
    a: f64,
    b: f64,
    split: f64,
    out: *mut *mut CirclawProfile,
) -> CirclawStatus {
    new_profile(ProfileSpec::TwoBlock { a, b, split }, n, out)
}

/// Profile read from a CSV file, then normalised.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn circlaw_profile_from_csv(path: *const c_char, out: *mut *mut CirclawProfile) -> CirclawStatus {
    if path.is_null() {
        return guard(|| Err(null("path")));
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p.to_string(),
        Err(e) => return guard(|| Err(Failure(CirclawStatus::InvalidArgument, format!("path is not UTF-8: {e}")))),
    };
    guard(|| {
        let inner = VarianceProfile::from_csv_path(&path)?.normalize()?;
        write_out(out, CirclawProfile { inner })
    })
}

/// Profile from `n * n` row-major entries, then normalised.
///
/// # Safety
/// `data` must point to `n * n` readable doubles; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn circlaw_profile_from_matrix(
    n: usize,
    data: *const f64,
    out: *mut *mut CirclawProfile,
) -> CirclawStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = n.checked_mul(n).ok_or_else(|| Failure(CirclawStatus::InvalidArgument, "n * n overflows".into()))?;
        let entries = std::slice::from_raw_parts(data, len).to_vec();
        let m = RealMatrix::from_vec(n, n, entries).map_err(|e| Failure(CirclawStatus::InvalidArgument, e.to_string()))?;
        let inner = VarianceProfile::new(m)?.normalize()?;
        write_out(out, CirclawProfile { inner })
    })
}

/// Dimension of the profile, or 0 for a null handle.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn circlaw_profile_n(profile: *const CirclawProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.inner.n())
}

/// # Safety
/// `profile` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn circlaw_profile_free(profile: *mut CirclawProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Solves the Dyson equation at `eta > 0`, `tau >= 0`.
///
/// # Safety
/// `profile` must be a live handle; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn circlaw_solve(
    profile: *const CirclawProfile,
    eta: f64,
    tau: f64,
    out: *mut *mut CirclawSolution,
) -> CirclawStatus {
    guard(|| {
        let p = profile_ref(profile)?;
        let inner = dyson::solve(p, eta, tau, &SolveOptions::default())?;
        write_out(out, CirclawSolution { inner })
    })
}

/// Solves the `eta = 0` equation for `tau <= 1 - tau_star`.
///
/// # Safety
/// As [`circlaw_solve`].
#[no_mangle]
pub unsafe extern "C" fn circlaw_solve_limit(
    profile: *const CirclawProfile,
    tau: f64,
    tau_star: f64,
    out: *mut *mut CirclawSolution,
) -> CirclawStatus {
    guard(|| {
        let p = profile_ref(profile)?;
        let lim = LimitOptions { tau_star, ..LimitOptions::default() };
        let inner = dyson::solve_limit(p, tau, &lim, &SolveOptions::default())?;
        write_out(out, CirclawSolution { inner })
    })
}

/// # Safety
/// `solution` must be a live handle and `info` writable.
#[no_mangle]
pub unsafe extern "C" fn circlaw_solution_info(
    solution: *const CirclawSolution,
    info: *mut CirclawSolutionInfo,
) -> CirclawStatus {
    guard(|| {
        let s = solution_ref(solution)?;
        let info = info.as_mut().ok_or_else(|| null("info"))?;
        *info = CirclawSolutionInfo {
            n: s.n(),
            eta: s.eta,
            tau: s.tau,
            residual: s.residual,
            iterations: s.iterations,
            mean_v1: s.mean_v1(),
            mean_u: s.mean_u(),
        };
        Ok(())
    })
}

unsafe fn copy_vector(
    solution: *const CirclawSolution,
    pick: fn(&DysonSolution) -> &[f64],
    buf: *mut f64,
    len: usize,
) -> CirclawStatus {
    guard(|| {
        let s = solution_ref(solution)?;
        let v = pick(s);
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len < v.len() {
            return Err(Failure(CirclawStatus::BufferTooSmall, format!("buffer holds {len}, need {}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Copies `v1` (length `n`) into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn circlaw_solution_v1(solution: *const CirclawSolution, buf: *mut f64, len: usize) -> CirclawStatus {
    copy_vector(solution, |s| &s.v1, buf, len)
}

/// # Safety
/// As [`circlaw_solution_v1`].
#[no_mangle]
pub unsafe extern "C" fn circlaw_solution_v2(solution: *const CirclawSolution, buf: *mut f64, len: usize) -> CirclawStatus {
    copy_vector(solution, |s| &s.v2, buf, len)
}

/// # Safety
/// As [`circlaw_solution_v1`].
#[no_mangle]
pub unsafe extern "C" fn circlaw_solution_u(solution: *const CirclawSolution, buf: *mut f64, len: usize) -> CirclawStatus {
    copy_vector(solution, |s| &s.u, buf, len)
}

/// # Safety
/// `solution` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn circlaw_solution_free(solution: *mut CirclawSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

fn density_options(tau_star: f64) -> DensityOptions {
    DensityOptions { tau_star, ..DensityOptions::default() }
}

/// Density of states at `|z|^2 = tau`.
///
/// # Safety
/// `profile` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn circlaw_sigma(
    profile: *const CirclawProfile,
    tau: f64,
    tau_star: f64,
    method: CirclawSigmaMethod,
    out: *mut f64,
) -> CirclawStatus {
    guard(|| {
        let p = profile_ref(profile)?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        let opts = density_options(tau_star);
        *out = match method {
            CirclawSigmaMethod::Derivative => density::sigma_derivative_form(p, tau, &opts)?,
            CirclawSigmaMethod::Integral => density::sigma_integral_form(p, tau, &opts)?.value,
        };
        Ok(())
    })
}

/// Mass of the density of states on the disk `|z|^2 <= tau`.
///
/// # Safety
/// As [`circlaw_sigma`].
#[no_mangle]
pub unsafe extern "C" fn circlaw_cumulative_mass(
    profile: *const CirclawProfile,
    tau: f64,
    tau_star: f64,
    out: *mut f64,
) -> CirclawStatus {
    guard(|| {
        let p = profile_ref(profile)?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = density::cumulative_mass(p, tau, &density_options(tau_star))?;
        Ok(())
    })
}

/// Boundary value of the density at the spectral edge.
///
/// # Safety
/// As [`circlaw_sigma`].
#[no_mangle]
pub unsafe extern "C" fn circlaw_jump_height(profile: *const CirclawProfile, out: *mut f64) -> CirclawStatus {
    guard(|| {
        let p = profile_ref(profile)?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = density::jump_height(p)?;
        Ok(())
    })
}
