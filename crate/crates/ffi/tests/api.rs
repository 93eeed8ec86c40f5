use std::ffi::{CStr, CString};
use std::ptr;

use bpg_lab::bq::{integral_posterior, GpDataset, IntegralPrior};
use bpg_lab_ffi::*;
use nalgebra::{DMatrix, DVector};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = bpg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn preset(name: &str) -> *mut BpgExperiment {
    let mut exp = ptr::null_mut();
    let status = unsafe { bpg_experiment_from_preset(c(name).as_ptr(), &mut exp) };
    assert_eq!(status, BpgStatus::Ok);
    assert!(!exp.is_null());
    exp
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(bpg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn preset_names_round_trip() {
    let n = bpg_preset_count();
    assert!(n > 0);
    for i in 0..n {
        let mut name = ptr::null_mut();
        assert_eq!(unsafe { bpg_preset_name(i, &mut name) }, BpgStatus::Ok);
        let s = unsafe { CStr::from_ptr(name) }
            .to_str()
            .unwrap()
            .to_string();
        unsafe { bpg_string_free(name) };
        let exp = preset(&s);
        unsafe { bpg_experiment_free(exp) };
    }
    let mut name = ptr::null_mut();
    assert_eq!(
        unsafe { bpg_preset_name(n, &mut name) },
        BpgStatus::InvalidArgument
    );
}

#[test]
fn unknown_preset_reports_config_error() {
    let mut exp = ptr::null_mut();
    let status = unsafe { bpg_experiment_from_preset(c("no-such-preset").as_ptr(), &mut exp) };
    assert_eq!(status, BpgStatus::Config);
    assert!(exp.is_null());
    assert!(last_error().contains("no-such-preset"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { bpg_experiment_from_preset(ptr::null(), &mut exp) },
        BpgStatus::NullPointer
    );
    assert!(last_error().contains("name"));
    let mut dim = 0usize;
    assert_eq!(
        unsafe { bpg_experiment_dim(ptr::null(), &mut dim) },
        BpgStatus::NullPointer
    );
    unsafe { bpg_experiment_free(ptr::null_mut()) };
    unsafe { bpg_string_free(ptr::null_mut()) };
}

#[test]
fn failed_set_leaves_experiment_usable() {
    let exp = preset("lqr-grad");
    let status =
        unsafe { bpg_experiment_set(exp, c("estimators").as_ptr(), c("nonsense").as_ptr()) };
    assert_eq!(status, BpgStatus::Config);
    let mut dim = 0;
    assert_eq!(unsafe { bpg_experiment_dim(exp, &mut dim) }, BpgStatus::Ok);
    assert_eq!(dim, 2);
    unsafe { bpg_experiment_free(exp) };
}

#[test]
fn estimates_are_reproducible_and_carry_covariance() {
    let exp = preset("lqr-grad");
    let mut theta = [0.0; 2];
    assert_eq!(
        unsafe { bpg_experiment_initial_theta(exp, 0, theta.as_mut_ptr(), 2) },
        BpgStatus::Ok
    );
    let run = |tag: &str, cov: bool| {
        let mut mean = [0.0; 2];
        let mut cov_buf = [f64::NAN; 4];
        let mut has = true;
        let status = unsafe {
            bpg_experiment_estimate(
                exp,
                c(tag).as_ptr(),
                theta.as_ptr(),
                2,
                10,
                3,
                mean.as_mut_ptr(),
                if cov {
                    cov_buf.as_mut_ptr()
                } else {
                    ptr::null_mut()
                },
                &mut has,
            )
        };
        assert_eq!(status, BpgStatus::Ok, "{tag}: {}", last_error());
        (mean, cov_buf, has)
    };
    let (a, _, _) = run("bq2", false);
    let (b, cov, has) = run("bq2", true);
    assert_eq!(a, b);
    assert!(has);
    assert_eq!(cov[1], cov[2]);
    assert!(cov[0] > 0.0 && cov[3] > 0.0);
    let (_, mc_cov, has_mc) = run("mc", true);
    assert!(has_mc);
    assert!(mc_cov.iter().all(|v| v.is_finite()));
    unsafe { bpg_experiment_free(exp) };
}

#[test]
fn estimate_checks_dimension_and_tag() {
    let exp = preset("lqr-grad");
    let theta = [-0.2, 1.0, 0.0];
    let mut mean = [0.0; 3];
    let estimate = |tag: &str, len: usize, mean: &mut [f64]| unsafe {
        bpg_experiment_estimate(
            exp,
            c(tag).as_ptr(),
            theta.as_ptr(),
            len,
            5,
            0,
            mean.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(estimate("mc", 3, &mut mean), BpgStatus::DimensionMismatch);
    assert_eq!(estimate("bogus", 2, &mut mean), BpgStatus::Config);
    assert!(last_error().contains("bogus"));
    unsafe { bpg_experiment_free(exp) };
}

#[test]
fn grad_compare_csv_through_handle() {
    let exp = preset("bandit-grad");
    for (k, v) in [("repetitions", "3"), ("M", "5"), ("estimators", "mc, bq1")] {
        assert_eq!(
            unsafe { bpg_experiment_set(exp, c(k).as_ptr(), c(v).as_ptr()) },
            BpgStatus::Ok
        );
    }
    let mut out = ptr::null_mut();
    let status = unsafe { bpg_experiment_grad_compare_csv(exp, &mut out) };
    assert_eq!(status, BpgStatus::Ok, "{}", last_error());
    let csv = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { bpg_string_free(out) };
    unsafe { bpg_experiment_free(exp) };
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "estimator,M,rep,mse,angular_error_deg");
    assert!(lines.iter().any(|l| l.contains("bq1")));
}

#[test]
fn integral_posterior_matches_core() {
    let n = 3;
    let kernel = [2.0, 0.5, 0.1, 0.5, 2.0, 0.3, 0.1, 0.3, 2.0];
    let noise = [0.1, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.1];
    let y = [1.0, -0.5, 2.0];
    let b = [0.7, 0.4, 0.9];
    let (mut mean, mut var) = (0.0, 0.0);
    let status = unsafe {
        bpg_integral_posterior(
            n,
            kernel.as_ptr(),
            noise.as_ptr(),
            y.as_ptr(),
            b.as_ptr(),
            0.25,
            3.0,
            &mut mean,
            &mut var,
        )
    };
    assert_eq!(status, BpgStatus::Ok);
    let data = GpDataset::new(
        DMatrix::from_row_slice(n, n, &kernel),
        DMatrix::from_row_slice(n, n, &noise),
        DVector::from_column_slice(&y),
    );
    let prior = IntegralPrior {
        rho0: 0.25,
        b: DVector::from_column_slice(&b),
        b0: 3.0,
    };
    let (m, v) = integral_posterior(&prior, &data).unwrap();
    assert_eq!((mean, var), (m, v));
}

#[test]
fn integral_posterior_rejects_indefinite_kernel() {
    let kernel = [1.0, 3.0, 3.0, 1.0];
    let noise = [0.0; 4];
    let y = [1.0, 1.0];
    let b = [1.0, 1.0];
    let (mut mean, mut var) = (0.0, 0.0);
    let status = unsafe {
        bpg_integral_posterior(
            2,
            kernel.as_ptr(),
            noise.as_ptr(),
            y.as_ptr(),
            b.as_ptr(),
            0.0,
            1.0,
            &mut mean,
            &mut var,
        )
    };
    assert_eq!(status, BpgStatus::NotPositiveDefinite);
}

#[test]
fn header_declares_every_entry_point() {
    let header = include_str!("../include/bpg_lab.h");
    for name in [
        "bpg_version",
        "bpg_last_error",
        "bpg_string_free",
        "bpg_preset_count",
        "bpg_preset_name",
        "bpg_experiment_from_preset",
        "bpg_experiment_from_text",
        "bpg_experiment_set",
        "bpg_experiment_free",
        "bpg_experiment_dim",
        "bpg_experiment_initial_theta",
        "bpg_experiment_estimate",
        "bpg_experiment_grad_compare_csv",
        "bpg_experiment_optimize_csv",
        "bpg_integral_posterior",
        "typedef struct BpgExperiment BpgExperiment",
        "BPG_STATUS_NOT_POSITIVE_DEFINITE = 5",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c99() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/bpg_lab.h");
    let Ok(status) = std::process::Command::new("cc")
        .args([
            "-fsyntax-only",
            "-std=c99",
            "-Wall",
            "-Werror",
            "-x",
            "c",
            header,
        ])
        .status()
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    assert!(status.success());
}
