use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use coopalloc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(coop_last_error_message()) }.to_string_lossy().into_owned()
}

fn instance(m: usize, n: usize, gamma: &[f64], rate: &[f64]) -> (CoopStatus, *mut CoopInstance) {
    let mut inst = ptr::null_mut();
    let status = unsafe { coop_instance_new(m, n, gamma.as_ptr(), rate.as_ptr(), &mut inst) };
    (status, inst)
}

#[test]
fn optimize_matches_the_library() {
    let gamma = [3.0, 0.5, 1.0, 0.4, 2.0, 1.5];
    let rate = [0.4, 0.3, 0.2];
    let (status, inst) = instance(2, 3, &gamma, &rate);
    assert_eq!(status, CoopStatus::Ok);
    let mut alloc = ptr::null_mut();
    assert_eq!(unsafe { coop_optimize(inst, &mut alloc) }, CoopStatus::Ok);

    let rows = vec![gamma[..3].to_vec(), gamma[3..].to_vec()];
    let want = coopalloc::jspa::optimize(&coopalloc::Instance::new(rows, rate.to_vec()).unwrap()).unwrap();
    unsafe {
        assert!(coop_allocation_is_feasible(alloc));
        assert_eq!(coop_allocation_z(alloc), want.z);
        let mut total = 0.0;
        for ue in 0..3 {
            let mut y = f64::NAN;
            assert_eq!(coop_allocation_bandwidth(alloc, ue, &mut y), CoopStatus::Ok);
            assert_eq!(y, want.y[ue]);
            total += y;
            for bs in 0..2 {
                let mut x = f64::NAN;
                assert_eq!(coop_allocation_power(alloc, bs, ue, &mut x), CoopStatus::Ok);
                assert_eq!(x, want.x[bs][ue]);
            }
        }
        assert!((total - 1.0).abs() < 1e-9);
        coop_allocation_free(alloc);
        coop_instance_free(inst);
    }
}

#[test]
fn infeasible_demand_still_returns_an_allocation() {
    let (status, inst) = instance(1, 2, &[1.0, 1.0], &[5.0, 5.0]);
    assert_eq!(status, CoopStatus::Ok);
    let mut alloc = ptr::null_mut();
    unsafe {
        assert_eq!(coop_optimize(inst, &mut alloc), CoopStatus::Infeasible);
        assert!(!alloc.is_null());
        assert!(!coop_allocation_is_feasible(alloc));
        assert!(coop_allocation_z(alloc).is_infinite());
        assert!(!last_error().is_empty());
        coop_allocation_free(alloc);
        coop_instance_free(inst);
    }
}

#[test]
fn invalid_and_null_inputs_are_reported() {
    let (status, inst) = instance(1, 2, &[1.0, -1.0], &[0.1, 0.1]);
    assert_eq!(status, CoopStatus::InvalidInput);
    assert!(inst.is_null());
    assert!(!last_error().is_empty());

    let (status, _) = instance(0, 2, &[], &[0.1, 0.1]);
    assert_eq!(status, CoopStatus::InvalidInput);

    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(coop_instance_new(1, 1, ptr::null(), [0.1].as_ptr(), &mut out), CoopStatus::NullPointer);
        assert!(last_error().contains("gamma"));
        assert_eq!(coop_optimize(ptr::null(), &mut ptr::null_mut()), CoopStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(coop_allocation_power(ptr::null(), 0, 0, &mut v), CoopStatus::NullPointer);
        assert!(coop_allocation_z(ptr::null()).is_nan());
        assert!(!coop_allocation_is_feasible(ptr::null()));
        coop_instance_free(ptr::null_mut());
        coop_allocation_free(ptr::null_mut());
    }
}

#[test]
fn out_of_range_indices_are_invalid() {
    let (_, inst) = instance(1, 1, &[2.0], &[0.5]);
    let mut alloc = ptr::null_mut();
    unsafe {
        assert_eq!(coop_optimize(inst, &mut alloc), CoopStatus::Ok);
        let mut v = 0.0;
        assert_eq!(coop_allocation_power(alloc, 1, 0, &mut v), CoopStatus::InvalidInput);
        assert_eq!(coop_allocation_bandwidth(alloc, 3, &mut v), CoopStatus::InvalidInput);
        assert_eq!(coop_allocation_bandwidth(alloc, 0, &mut v), CoopStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        coop_allocation_free(alloc);
        coop_instance_free(inst);
    }
}

#[test]
fn required_power_closed_form() {
    let mut g = 0.0;
    unsafe {
        assert_eq!(coop_required_power(1.0, 1.0, 2.0, &mut g), CoopStatus::Ok);
        assert!((g - 0.5).abs() < 1e-15);
        assert_eq!(coop_required_power(1.0, 0.0, 2.0, &mut g), CoopStatus::InvalidInput);
        assert!(!last_error().is_empty());
        assert_eq!(coop_required_power(1.0, 1.0, 2.0, ptr::null_mut()), CoopStatus::NullPointer);
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("coopalloc.h");
    let text = std::fs::read_to_string(&header).expect("header is generated by the build script");
    for name in [
        "coop_instance_new",
        "coop_instance_free",
        "coop_optimize",
        "coop_allocation_z",
        "coop_allocation_is_feasible",
        "coop_allocation_power",
        "coop_allocation_bandwidth",
        "coop_allocation_free",
        "coop_required_power",
        "coop_last_error_message",
        "COOP_STATUS_PANIC = 5",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "coopalloc.h"
int main(void) {
    double g[2] = {1.0, 2.0}, r[2] = {0.1, 0.2}, z;
    CoopInstance *inst = NULL;
    CoopAllocation *alloc = NULL;
    if (coop_instance_new(1, 2, g, r, &inst) != COOP_STATUS_OK) return 1;
    CoopStatus s = coop_optimize(inst, &alloc);
    z = coop_allocation_z(alloc);
    coop_allocation_free(alloc);
    coop_instance_free(inst);
    return s == COOP_STATUS_OK && z > 0.0 ? 0 : (int)s;
}
"#,
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
        .expect("a C compiler is on PATH");
    assert!(status.success());
}
