//! C interface to `coopalloc`.
//!
//! Instances and allocations are opaque heap objects owned by the caller and
//! released with the matching `_free` function. Every fallible call returns a
//! [`CoopStatus`]; on failure a description is available from
//! [`coop_last_error_message`] on the same thread. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coopalloc::{jspa, Allocation, Error, Instance};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoopStatus {
    Ok = 0,
    /// No allocation meets every demand within the power budgets.
    Infeasible = 1,
    InvalidInput = 2,
    NullPointer = 3,
    Internal = 4,
    Panic = 5,
}

/// A validated problem instance.
pub struct CoopInstance(Instance);

/// The result of [`coop_optimize`].
pub struct CoopAllocation(Allocation);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> CoopStatus {
    match err {
        Error::Solver(_) | Error::NonTermination { .. } => CoopStatus::Internal,
        _ => CoopStatus::InvalidInput,
    }
}

/// Runs `f`, turning panics and errors into status codes.
fn guard(f: impl FnOnce() -> Result<CoopStatus, (CoopStatus, String)>) -> CoopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CoopStatus::Panic
        }
    }
}

fn null(what: &str) -> (CoopStatus, String) {
    (CoopStatus::NullPointer, format!("{what} is null"))
}

fn core_err(err: Error) -> (CoopStatus, String) {
    (status_of(&err), err.to_string())
}

/// Builds an instance from `gamma` (row-major, `num_bs * num_ue` entries,
/// BS-major) and `rate` (`num_ue` entries). On success `*out` owns the new
/// instance.
///
/// # Safety
/// `gamma` and `rate` must point to arrays of the stated lengths and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn coop_instance_new(
    num_bs: usize,
    num_ue: usize,
    gamma: *const f64,
    rate: *const f64,
    out: *mut *mut CoopInstance,
) -> CoopStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if gamma.is_null() {
            return Err(null("gamma"));
        }
        if rate.is_null() {
            return Err(null("rate"));
        }
        if num_bs == 0 || num_ue == 0 {
            return Err((CoopStatus::InvalidInput, format!("empty instance {num_bs}x{num_ue}")));
        }
        let len = num_bs
            .checked_mul(num_ue)
            .ok_or((CoopStatus::InvalidInput, "instance size overflows".to_string()))?;
        let flat = std::slice::from_raw_parts(gamma, len);
        let rows = flat.chunks(num_ue).map(<[f64]>::to_vec).collect();
        let rates = std::slice::from_raw_parts(rate, num_ue).to_vec();
        let inst = Instance::new(rows, rates).map_err(core_err)?;
        *out = Box::into_raw(Box::new(CoopInstance(inst)));
        Ok(CoopStatus::Ok)
    })
}

/// Releases an instance. Null is ignored.
///
/// # Safety
/// `inst` must come from [`coop_instance_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn coop_instance_free(inst: *mut CoopInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Computes the minimum-power allocation. `*out` receives an allocation
/// whenever the status is `Ok` or `Infeasible`; in the latter case it holds
/// no power and [`coop_allocation_is_feasible`] returns false.
///
/// # Safety
/// `inst` must be a live instance and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coop_optimize(inst: *const CoopInstance, out: *mut *mut CoopAllocation) -> CoopStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let inst = inst.as_ref().ok_or_else(|| null("inst"))?;
        let alloc = jspa::optimize(&inst.0).map_err(core_err)?;
        let feasible = alloc.feasible;
        *out = Box::into_raw(Box::new(CoopAllocation(alloc)));
        if feasible {
            Ok(CoopStatus::Ok)
        } else {
            set_error("no allocation meets every demand within the power budgets");
            Ok(CoopStatus::Infeasible)
        }
    })
}

/// Total transmit power normalized by the per-BS budget; NaN for null and
/// infinity for an infeasible allocation.
///
/// # Safety
/// `alloc` must be null or a live allocation.
#[no_mangle]
pub unsafe extern "C" fn coop_allocation_z(alloc: *const CoopAllocation) -> f64 {
    alloc.as_ref().map_or(f64::NAN, |a| a.0.z)
}

/// # Safety
/// `alloc` must be null or a live allocation.
#[no_mangle]
pub unsafe extern "C" fn coop_allocation_is_feasible(alloc: *const CoopAllocation) -> bool {
    alloc.as_ref().is_some_and(|a| a.0.feasible)
}

/// Writes the normalized power BS `bs` spends on UE `ue` to `*out`.
///
/// # Safety
/// `alloc` must be a live allocation and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coop_allocation_power(
    alloc: *const CoopAllocation,
    bs: usize,
    ue: usize,
    out: *mut f64,
) -> CoopStatus {
    guard(|| {
        let a = alloc.as_ref().ok_or_else(|| null("alloc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = a.0.x.get(bs).and_then(|row| row.get(ue)).ok_or_else(|| {
            (CoopStatus::InvalidInput, format!("index ({bs}, {ue}) out of range"))
        })?;
        *out = *v;
        Ok(CoopStatus::Ok)
    })
}

/// Writes UE `ue`'s share of the band to `*out`.
///
/// # Safety
/// `alloc` must be a live allocation and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coop_allocation_bandwidth(alloc: *const CoopAllocation, ue: usize, out: *mut f64) -> CoopStatus {
    guard(|| {
        let a = alloc.as_ref().ok_or_else(|| null("alloc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = a.0.y.get(ue).ok_or_else(|| (CoopStatus::InvalidInput, format!("UE {ue} out of range")))?;
        *out = *v;
        Ok(CoopStatus::Ok)
    })
}

/// Releases an allocation. Null is ignored.
///
/// # Safety
/// `alloc` must come from [`coop_optimize`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn coop_allocation_free(alloc: *mut CoopAllocation) {
    if !alloc.is_null() {
        drop(Box::from_raw(alloc));
    }
}

/// Normalized power a single link of SNR `gamma` needs to carry `rate`
/// bit/s/Hz on bandwidth share `y`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coop_required_power(rate: f64, y: f64, gamma: f64, out: *mut f64) -> CoopStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = coopalloc::required_power(rate, y, gamma).map_err(core_err)?;
        Ok(CoopStatus::Ok)
    })
}

/// Message for the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn coop_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
