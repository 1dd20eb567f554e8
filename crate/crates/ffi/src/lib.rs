//! C ABI over `pd_lab`.
//!
//! Every function returns a [`PdlStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`pdl_last_error`]. Handles are opaque and must be released with their
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pd_lab::exact_laws::{homozygosity_moment, moment_pk, DensityGrid, MomentQuery};
use pd_lab::rates::{legendre_transform, rate_i, rate_ik, solve_c0};
use pd_lab::sampling::{sample_ranked, SamplerConfig};
use pd_lab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdlStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Numeric = 3,
    Unsupported = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
        e.push(0);
    });
}

fn fail(status: PdlStatus, msg: &str) -> PdlStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> PdlStatus {
    let status = match e {
        Error::Domain(_) => PdlStatus::Domain,
        Error::Numeric { .. } => PdlStatus::Numeric,
        Error::Unsupported(_) => PdlStatus::Unsupported,
    };
    fail(status, &e.to_string())
}

fn guard<F: FnOnce() -> PdlStatus>(f: F) -> PdlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PdlStatus::Panic, &msg)
        }
    }
}

fn write<T>(out: *mut T, value: T) -> PdlStatus {
    if out.is_null() {
        return fail(PdlStatus::NullPointer, "output pointer is null");
    }
    // SAFETY: non-null and, per the API contract, valid for writes.
    unsafe { out.write(value) };
    PdlStatus::Ok
}

fn finish<T>(r: pd_lab::Result<T>, out: *mut T) -> PdlStatus {
    match r {
        Ok(v) => write(out, v),
        Err(e) => from_error(e),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pdl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pdl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let msg = if e.is_empty() { &[][..] } else { &e[..e.len() - 1] };
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Short name of a status code, as a static string.
#[no_mangle]
pub extern "C" fn pdl_status_name(status: PdlStatus) -> *const c_char {
    let s: &'static CStr = match status {
        PdlStatus::Ok => c"ok",
        PdlStatus::NullPointer => c"null pointer",
        PdlStatus::Domain => c"domain error",
        PdlStatus::Numeric => c"numeric error",
        PdlStatus::Unsupported => c"unsupported",
        PdlStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// `I(x) = ln 1/(1−x)`; `+∞` outside `[0, 1)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_rate_i(x: f64, out: *mut f64) -> PdlStatus {
    guard(|| write(out, rate_i(x).to_f64()))
}

/// `I_k(x) = ln 1/(1−kx)` on `[0, 1/k)`; `+∞` elsewhere.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_rate_ik(k: usize, x: f64, out: *mut f64) -> PdlStatus {
    guard(|| write(out, rate_ik(k, x).to_f64()))
}

/// Numerical Legendre transform of the cumulant function at `x ∈ [0, 1)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_legendre_transform(x: f64, out: *mut f64) -> PdlStatus {
    guard(|| finish(legendre_transform(x), out))
}

/// Critical constant `c₀` of the homozygote-advantage transition.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_solve_c0(out: *mut f64) -> PdlStatus {
    guard(|| finish(solve_c0().map(|s| s.root), out))
}

/// `E[P_k(θ)^n]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_moment_pk(k: usize, n: u32, theta: f64, out: *mut f64) -> PdlStatus {
    guard(|| finish(moment_pk(MomentQuery { k, n, theta }), out))
}

/// `E[H_m(θ)]` for `m ≥ 2`, `θ ≥ 0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_homozygosity_moment(m: u32, theta: f64, out: *mut f64) -> PdlStatus {
    guard(|| {
        if m < 2 {
            return fail(PdlStatus::Domain, "homozygosity order must be at least 2");
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return fail(PdlStatus::Domain, "theta must be finite and nonnegative");
        }
        write(out, homozygosity_moment(m, theta))
    })
}

/// Density and tail of the largest frequency at a fixed θ.
pub struct PdlDensityGrid(DensityGrid);

/// Builds a grid; `resolution = 0` selects the default.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_grid_new(theta: f64, resolution: usize, out: *mut *mut PdlDensityGrid) -> PdlStatus {
    guard(|| {
        if out.is_null() {
            return fail(PdlStatus::NullPointer, "output pointer is null");
        }
        let res = if resolution == 0 {
            pd_lab::exact_laws::DEFAULT_RESOLUTION
        } else {
            resolution
        };
        match DensityGrid::build(theta, res) {
            Ok(g) => write(out, Box::into_raw(Box::new(PdlDensityGrid(g)))),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `grid` must be null or a handle from [`pdl_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdl_grid_free(grid: *mut PdlDensityGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

unsafe fn grid_query(grid: *const PdlDensityGrid, out: *mut f64, f: impl FnOnce(&DensityGrid) -> f64) -> PdlStatus {
    guard(|| match grid.as_ref() {
        None => fail(PdlStatus::NullPointer, "grid handle is null"),
        Some(g) => write(out, f(&g.0)),
    })
}

/// `P{P1 ≥ x}`.
///
/// # Safety
/// `grid` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_grid_tail(grid: *const PdlDensityGrid, x: f64, out: *mut f64) -> PdlStatus {
    grid_query(grid, out, |g| g.tail(x))
}

/// Density of P1 at `p`.
///
/// # Safety
/// `grid` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_grid_density(grid: *const PdlDensityGrid, p: f64, out: *mut f64) -> PdlStatus {
    grid_query(grid, out, |g| g.density(p))
}

/// Total mass of the tabulated density (1 up to quadrature error).
///
/// # Safety
/// `grid` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_grid_normalization(grid: *const PdlDensityGrid, out: *mut f64) -> PdlStatus {
    grid_query(grid, out, |g| g.normalization())
}

/// Reproducible stream of ranked PD(θ) samples.
pub struct PdlSampler {
    config: SamplerConfig,
    next_stream: u64,
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_sampler_new(theta: f64, seed: u64, out: *mut *mut PdlSampler) -> PdlStatus {
    guard(|| {
        if out.is_null() {
            return fail(PdlStatus::NullPointer, "output pointer is null");
        }
        let config = SamplerConfig::new(theta, seed);
        if let Err(e) = config.validate() {
            return from_error(e);
        }
        write(out, Box::into_raw(Box::new(PdlSampler { config, next_stream: 0 })))
    })
}

/// # Safety
/// `sampler` must be null or a handle from [`pdl_sampler_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdl_sampler_free(sampler: *mut PdlSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Draws the next sample and writes its `cap` largest frequencies (zero-padded)
/// into `ranked` and the leftover mass into `residual`.
///
/// # Safety
/// `sampler` must be a live handle, `ranked` valid for `cap` writes and
/// `residual` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pdl_sampler_next(
    sampler: *mut PdlSampler,
    ranked: *mut f64,
    cap: usize,
    residual: *mut f64,
) -> PdlStatus {
    guard(|| {
        let Some(s) = sampler.as_mut() else {
            return fail(PdlStatus::NullPointer, "sampler handle is null");
        };
        if ranked.is_null() && cap > 0 {
            return fail(PdlStatus::NullPointer, "ranked buffer is null");
        }
        if residual.is_null() {
            return fail(PdlStatus::NullPointer, "residual pointer is null");
        }
        let cfg = s.config.with_stream(s.next_stream);
        let sample = match sample_ranked(&cfg) {
            Ok(v) => v,
            Err(e) => return from_error(e),
        };
        s.next_stream += 1;
        for i in 0..cap {
            ranked.add(i).write(sample.rank(i + 1));
        }
        residual.write(sample.residual);
        PdlStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_round_trip() {
        let mut v = 0.0;
        let s = unsafe { pdl_legendre_transform(2.0, &mut v) };
        assert_eq!(s, PdlStatus::Domain);
        let mut buf = [0 as c_char; 8];
        let n = unsafe { pdl_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 7);
        let short = unsafe { CStr::from_ptr(buf.as_ptr()) };
        assert_eq!(short.to_bytes().len(), 7);
    }
}
