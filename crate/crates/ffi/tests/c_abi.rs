use std::ffi::{CStr, CString};
use std::ptr;

use sparsecast_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sc_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn correlated_panel(rows: usize) -> Vec<f64> {
    (0..rows)
        .flat_map(|i| {
            let t = i as f64;
            let a = (0.3 * t).sin() + 0.05 * (1.7 * t).cos();
            [a, 2.0 * a + 0.1 * (0.9 * t).sin(), (0.11 * t).cos()]
        })
        .collect()
}

#[test]
fn matrix_round_trip_and_missing_cells() {
    let mut values = [1.0, 2.0, f64::NAN, 4.0];
    let mut m = ptr::null_mut();
    let st = unsafe { sc_matrix_from_values(values.as_ptr(), 2, 2, &mut m) };
    assert_eq!(st, ScStatus::Ok);
    // the handle owns a copy
    values[0] = 99.0;
    std::hint::black_box(&values);
    assert_eq!(unsafe { sc_matrix_rows(m) }, 2);
    assert_eq!(unsafe { sc_matrix_cols(m) }, 2);
    let (mut v, mut seen) = (0.0, false);
    assert_eq!(unsafe { sc_matrix_get(m, 0, 0, &mut v, &mut seen) }, ScStatus::Ok);
    assert_eq!((v, seen), (1.0, true));
    assert_eq!(unsafe { sc_matrix_get(m, 1, 0, &mut v, &mut seen) }, ScStatus::Ok);
    assert!(v.is_nan() && !seen);
    let st = unsafe { sc_matrix_get(m, 2, 0, &mut v, &mut seen) };
    assert_eq!(st, ScStatus::InvalidArgument);
    assert!(last_error().contains("outside"));
    unsafe { sc_matrix_free(m) };
}

#[test]
fn null_pointers_are_reported() {
    let mut m = ptr::null_mut();
    let st = unsafe { sc_matrix_from_values(ptr::null(), 2, 2, &mut m) };
    assert_eq!(st, ScStatus::NullPointer);
    assert!(last_error().contains("values"));
    assert!(m.is_null());
    let st = unsafe { sc_compute_lambda(10, ptr::null_mut()) };
    assert_eq!(st, ScStatus::NullPointer);
    unsafe {
        sc_matrix_free(ptr::null_mut());
        sc_copula_free(ptr::null_mut());
        sc_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { sc_matrix_rows(ptr::null()) }, 0);
}

#[test]
fn empty_panel_is_an_input_error() {
    let mut m = ptr::null_mut();
    let st = unsafe { sc_matrix_from_values(ptr::null(), 0, 3, &mut m) };
    assert_eq!(st, ScStatus::Input);
    assert!(!last_error().is_empty());
}

#[test]
fn mask_fit_impute_pipeline() {
    let rows = 200;
    let values = correlated_panel(rows);
    let mut full = ptr::null_mut();
    assert_eq!(
        unsafe { sc_matrix_from_values(values.as_ptr(), rows, 3, &mut full) },
        ScStatus::Ok
    );
    let mut masked = ptr::null_mut();
    assert_eq!(unsafe { sc_apply_mask(full, 0.1, 7, &mut masked) }, ScStatus::Ok);
    let missing = (0..rows)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let (mut v, mut seen) = (0.0, false);
            unsafe { sc_matrix_get(masked, i, j, &mut v, &mut seen) };
            !seen
        })
        .count();
    assert_eq!(missing, 60);

    let mut cop = ptr::null_mut();
    assert_eq!(unsafe { sc_copula_fit(masked, 0, 0.0, &mut cop) }, ScStatus::Ok);
    assert_eq!(unsafe { sc_copula_dim(cop) }, 3);
    let mut sigma = [0.0; 9];
    assert_eq!(unsafe { sc_copula_sigma(cop, sigma.as_mut_ptr(), 9) }, ScStatus::Ok);
    for j in 0..3 {
        assert!((sigma[j * 4] - 1.0).abs() < 1e-12);
    }
    assert!(sigma[1] > 0.9, "strong dependence recovered: {}", sigma[1]);
    assert_eq!(
        unsafe { sc_copula_sigma(cop, sigma.as_mut_ptr(), 4) },
        ScStatus::Alignment
    );

    let mut done = ptr::null_mut();
    assert_eq!(unsafe { sc_copula_impute(cop, masked, &mut done) }, ScStatus::Ok);
    for i in 0..rows {
        for j in 0..3 {
            let (mut v, mut seen) = (0.0, false);
            unsafe { sc_matrix_get(done, i, j, &mut v, &mut seen) };
            assert!(seen && v.is_finite());
        }
    }

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { sc_copula_to_json(cop, &mut json) }, ScStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["sigma"].as_array().unwrap().len(), 9);
    unsafe {
        sc_string_free(json);
        sc_matrix_free(done);
        sc_copula_free(cop);
        sc_matrix_free(masked);
        sc_matrix_free(full);
    }
}

#[test]
fn bad_mask_fraction_is_an_argument_error() {
    let values = [1.0, 2.0, 3.0, 4.0];
    let mut m = ptr::null_mut();
    unsafe { sc_matrix_from_values(values.as_ptr(), 2, 2, &mut m) };
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sc_apply_mask(m, 1.5, 0, &mut out) }, ScStatus::InvalidArgument);
    assert!(out.is_null());
    unsafe { sc_matrix_free(m) };
}

#[test]
fn csv_loading_and_io_errors() {
    let dir = std::env::temp_dir().join(format!("sc-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("panel.csv");
    std::fs::write(&path, "time,a,b\n2000-01-01,1,2\n2000-02-01,,4\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sc_matrix_load_csv(c.as_ptr(), &mut m) }, ScStatus::Ok);
    assert_eq!(unsafe { sc_matrix_rows(m) }, 2);
    let (mut v, mut seen) = (0.0, true);
    unsafe { sc_matrix_get(m, 1, 0, &mut v, &mut seen) };
    assert!(!seen);
    unsafe { sc_matrix_free(m) };

    let missing = CString::new(dir.join("absent.csv").to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sc_matrix_load_csv(missing.as_ptr(), &mut m) }, ScStatus::Io);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn ensemble_primitives() {
    let mut lambda = 0.0;
    assert_eq!(unsafe { sc_compute_lambda(2, &mut lambda) }, ScStatus::Ok);
    assert!((lambda - (1.0 / 2f64.ln()).sqrt()).abs() < 1e-12);
    assert_eq!(unsafe { sc_compute_lambda(1, &mut lambda) }, ScStatus::InvalidArgument);

    let ce = [1.0, 2.0, 3.0];
    let lam = [1.0; 3];
    let mut w = [0.0; 3];
    assert_eq!(
        unsafe { sc_update_weights(ce.as_ptr(), lam.as_ptr(), 3, w.as_mut_ptr()) },
        ScStatus::Ok
    );
    let z: f64 = ce.iter().map(|c| (-c).exp()).sum();
    for (wi, c) in w.iter().zip(ce) {
        assert!((wi - (-c).exp() / z).abs() < 1e-12);
    }
    let preds = [10.0, 20.0, 30.0];
    let mut agg = 0.0;
    assert_eq!(
        unsafe { sc_aggregate(preds.as_ptr(), w.as_ptr(), 3, &mut agg) },
        ScStatus::Ok
    );
    let expect: f64 = preds.iter().zip(&w).map(|(p, w)| p * w).sum();
    assert!((agg - expect).abs() < 1e-9);
}

#[test]
fn evaluation_primitives() {
    let a = [100.0, 200.0];
    let p = [110.0, 190.0];
    let mut m = 0.0;
    assert_eq!(unsafe { sc_mape(a.as_ptr(), p.as_ptr(), 2, &mut m) }, ScStatus::Ok);
    assert!((m - 7.5).abs() < 1e-12);
    let zero = [0.0, 1.0];
    assert_eq!(
        unsafe { sc_mape(zero.as_ptr(), p.as_ptr(), 2, &mut m) },
        ScStatus::InvalidArgument
    );

    let x = [1.0, 2.0, 3.0];
    let y = [2.0, 4.0, 6.0];
    let (mut w, mut pv, mut deg) = (0.0, 0.0, true);
    assert_eq!(
        unsafe { sc_wilcoxon(x.as_ptr(), y.as_ptr(), 3, &mut w, &mut pv, &mut deg) },
        ScStatus::Ok
    );
    assert!(!deg);
    assert!((pv - 0.25).abs() < 1e-12);

    let grid = [1.0, 2.0, 3.0, 3.0, 2.0, 1.0];
    let mut ranks = [0.0; 3];
    assert_eq!(
        unsafe { sc_friedman_rank(grid.as_ptr(), 2, 3, ranks.as_mut_ptr()) },
        ScStatus::Ok
    );
    assert_eq!(ranks, [2.0, 2.0, 2.0]);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sparsecast.h")).unwrap();
    for name in [
        "sc_last_error_message",
        "sc_matrix_from_values",
        "sc_matrix_load_csv",
        "sc_matrix_free",
        "sc_matrix_get",
        "sc_apply_mask",
        "sc_copula_fit",
        "sc_copula_sigma",
        "sc_copula_impute",
        "sc_copula_to_json",
        "sc_string_free",
        "sc_compute_lambda",
        "sc_update_weights",
        "sc_aggregate",
        "sc_mape",
        "sc_wilcoxon",
        "sc_friedman_rank",
        "SC_STATUS_NULL_POINTER",
        "typedef struct ScMatrix ScMatrix",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
