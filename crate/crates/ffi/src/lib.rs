//! C ABI over the core library: opaque handles, status codes, no panics
//! across the boundary. Callers own output buffers; every function
//! validates pointers and dimensions before touching them.

use std::panic::{catch_unwind, AssertUnwindSafe};

use hypnorm::geometry::{self, Curvature, PoincarePoint};
use hypnorm::hypnorm::{apply_norm, omega, NormConfig, Placement};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypStatus {
    HypOk = 0,
    /// A required pointer was null.
    HypNullPointer = 1,
    /// A parameter was out of range (curvature, scale, placement, dim).
    HypInvalidArgument = 2,
    /// The computation produced a non-finite value.
    HypNumericError = 3,
    /// The verification suite found a failing identity.
    HypVerifyFailed = 4,
    /// A panic was caught at the boundary.
    HypInternalError = 5,
}

/// Opaque normalization context holding curvature, scale, placement.
pub struct HypNormHandle {
    cfg: NormConfig,
}

fn placement_from(raw: i32) -> Option<Placement> {
    match raw {
        0 => Some(Placement::PerLayer),
        1 => Some(Placement::Final),
        2 => Some(Placement::Middle),
        _ => None,
    }
}

fn guard<F: FnOnce() -> HypStatus>(f: F) -> HypStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => HypStatus::HypInternalError,
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize) -> Option<&'a [f64]> {
    if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize) -> Option<&'a mut [f64]> {
    if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(p, len))
    }
}

/// Creates a normalization context. Placement: 0 per-layer, 1 final,
/// 2 middle. Returns null on invalid parameters.
#[no_mangle]
pub extern "C" fn hyp_norm_new(curvature: f64, scale: f64, placement: i32) -> *mut HypNormHandle {
    let Some(p) = placement_from(placement) else {
        return std::ptr::null_mut();
    };
    match NormConfig::new(curvature, scale, p) {
        Ok(cfg) => Box::into_raw(Box::new(HypNormHandle { cfg })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Frees a context created by `hyp_norm_new`. Null is a no-op.
///
/// # Safety
/// `handle` must be null or a pointer returned by `hyp_norm_new` that
/// has not been freed already.
#[no_mangle]
pub unsafe extern "C" fn hyp_norm_free(handle: *mut HypNormHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// out = s·ω(x)·x for one feature vector of length `dim`.
///
/// # Safety
/// `x` and `out` must point to `dim` readable/writable doubles;
/// `handle` must be a live context.
#[no_mangle]
pub unsafe extern "C" fn hyp_norm_apply(
    handle: *const HypNormHandle,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HypStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else {
            return HypStatus::HypNullPointer;
        };
        let (Some(xs), Some(os)) = (slice_in(x, dim), slice_out(out, dim)) else {
            return HypStatus::HypNullPointer;
        };
        if xs.iter().any(|v| !v.is_finite()) {
            return HypStatus::HypNumericError;
        }
        let y = apply_norm(xs, &h.cfg);
        os.copy_from_slice(&y);
        HypStatus::HypOk
    })
}

/// Writes ω(x) for one vector into `out`.
///
/// # Safety
/// `x` must point to `dim` readable doubles; `out` to one writable.
#[no_mangle]
pub unsafe extern "C" fn hyp_omega(
    curvature: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HypStatus {
    guard(|| {
        let Ok(c) = Curvature::new(curvature) else {
            return HypStatus::HypInvalidArgument;
        };
        let Some(xs) = slice_in(x, dim) else {
            return HypStatus::HypNullPointer;
        };
        if out.is_null() {
            return HypStatus::HypNullPointer;
        }
        if xs.iter().any(|v| !v.is_finite()) {
            return HypStatus::HypNumericError;
        }
        *out = omega(xs, c);
        HypStatus::HypOk
    })
}

unsafe fn two_points(
    curvature: f64,
    a: *const f64,
    b: *const f64,
    dim: usize,
) -> Result<(PoincarePoint, PoincarePoint), HypStatus> {
    let c = Curvature::new(curvature).map_err(|_| HypStatus::HypInvalidArgument)?;
    let (Some(av), Some(bv)) = (slice_in(a, dim), slice_in(b, dim)) else {
        return Err(HypStatus::HypNullPointer);
    };
    if av.iter().chain(bv).any(|v| !v.is_finite()) {
        return Err(HypStatus::HypNumericError);
    }
    Ok((
        PoincarePoint::project(av.to_vec(), c),
        PoincarePoint::project(bv.to_vec(), c),
    ))
}

/// Möbius addition a ⊕_c b; inputs are projected into the ball first.
///
/// # Safety
/// `a`, `b`, `out` must each point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hyp_mobius_add(
    curvature: f64,
    a: *const f64,
    b: *const f64,
    dim: usize,
    out: *mut f64,
) -> HypStatus {
    guard(|| {
        let (pa, pb) = match two_points(curvature, a, b, dim) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let Some(os) = slice_out(out, dim) else {
            return HypStatus::HypNullPointer;
        };
        match geometry::mobius_add(&pa, &pb) {
            Ok(p) => {
                os.copy_from_slice(p.coords());
                HypStatus::HypOk
            }
            Err(_) => HypStatus::HypNumericError,
        }
    })
}

/// exp₀ᶜ of a tangent vector.
///
/// # Safety
/// `x` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hyp_exp_map_origin(
    curvature: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HypStatus {
    guard(|| {
        let Ok(c) = Curvature::new(curvature) else {
            return HypStatus::HypInvalidArgument;
        };
        let (Some(xs), Some(os)) = (slice_in(x, dim), slice_out(out, dim)) else {
            return HypStatus::HypNullPointer;
        };
        if xs.iter().any(|v| !v.is_finite()) {
            return HypStatus::HypNumericError;
        }
        os.copy_from_slice(geometry::exp_map_origin(xs, c).coords());
        HypStatus::HypOk
    })
}

/// log₀ᶜ of a ball point (projected into the ball first).
///
/// # Safety
/// `p` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hyp_log_map_origin(
    curvature: f64,
    p: *const f64,
    dim: usize,
    out: *mut f64,
) -> HypStatus {
    guard(|| {
        let Ok(c) = Curvature::new(curvature) else {
            return HypStatus::HypInvalidArgument;
        };
        let (Some(ps), Some(os)) = (slice_in(p, dim), slice_out(out, dim)) else {
            return HypStatus::HypNullPointer;
        };
        if ps.iter().any(|v| !v.is_finite()) {
            return HypStatus::HypNumericError;
        }
        let point = PoincarePoint::project(ps.to_vec(), c);
        os.copy_from_slice(&geometry::log_map_origin(&point).coords);
        HypStatus::HypOk
    })
}

/// Geodesic distance between two ball points.
///
/// # Safety
/// `a` and `b` must point to `dim` doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn hyp_distance(
    curvature: f64,
    a: *const f64,
    b: *const f64,
    dim: usize,
    out: *mut f64,
) -> HypStatus {
    guard(|| {
        let (pa, pb) = match two_points(curvature, a, b, dim) {
            Ok(p) => p,
            Err(s) => return s,
        };
        if out.is_null() {
            return HypStatus::HypNullPointer;
        }
        match geometry::hyperbolic_distance(&pa, &pb) {
            Ok(d) => {
                *out = d;
                HypStatus::HypOk
            }
            Err(_) => HypStatus::HypNumericError,
        }
    })
}

/// Runs the full identity verification suite with the given seed.
#[no_mangle]
pub extern "C" fn hyp_verify_run(seed: u64) -> HypStatus {
    guard(|| match hypnorm::verify::run_all(seed) {
        Ok(report) if report.passed => HypStatus::HypOk,
        Ok(_) => HypStatus::HypVerifyFailed,
        Err(_) => HypStatus::HypNumericError,
    })
}
