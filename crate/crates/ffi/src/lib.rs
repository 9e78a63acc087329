//! C ABI over `sparsecast`.
//!
//! Panels and copula models cross the boundary as opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns an [`ScStatus`]; on failure, [`sc_last_error_message`] describes
//! the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use sparsecast::copula::{em_fit, impute, CopulaModel, EmConfig};
use sparsecast::dataset::{apply_mask, load_csv_continuous, monthly_index, ColumnKind, ObservationMatrix};
use sparsecast::{ensemble, evaluation, Error};

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Input = 4,
    Precondition = 5,
    Numerical = 6,
    Alignment = 7,
    Io = 8,
    Panic = 9,
}

impl ScStatus {
    fn from_error(e: &Error) -> Self {
        match e.category() {
            "parse" => ScStatus::Parse,
            "input" => ScStatus::Input,
            "precondition" => ScStatus::Precondition,
            "numerical" => ScStatus::Numerical,
            "alignment" => ScStatus::Alignment,
            "io" => ScStatus::Io,
            _ => ScStatus::InvalidArgument,
        }
    }
}

/// Opaque observation panel.
pub struct ScMatrix(ObservationMatrix);

/// Opaque fitted copula.
pub struct ScCopula(CopulaModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            ScStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            ScStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            ScStatus::from_error(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            ScStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: the caller passes either null or a valid pointer.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: as for `borrow`.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

unsafe fn input<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees `n` readable values.
    Ok(unsafe { slice::from_raw_parts(p, n) })
}

unsafe fn output<'a>(p: *mut f64, n: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees `n` writable values.
    Ok(unsafe { slice::from_raw_parts_mut(p, n) })
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a continuous panel from `rows × cols` row-major values; NaN marks a
/// missing cell. Columns are named `x1..xq` on a monthly index from 2000.
///
/// # Safety
/// `values` must hold `rows * cols` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_matrix_from_values(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut ScMatrix,
) -> ScStatus {
    guard(|| {
        let slot = unsafe { self::out(out, "out") }?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidArgument("size overflow".into()))?;
        let v = unsafe { input(values, n, "values") }?;
        let m = ObservationMatrix::new(
            v.to_vec(),
            v.iter().map(|x| !x.is_nan()).collect(),
            vec![ColumnKind::Continuous; cols],
            (1..=cols).map(|j| format!("x{j}")).collect(),
            monthly_index(2000, rows),
        )?;
        *slot = boxed(ScMatrix(m));
        Ok(())
    })
}

/// Loads a CSV (timestamp column first) with every other column continuous.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_matrix_load_csv(path: *const c_char, out: *mut *mut ScMatrix) -> ScStatus {
    guard(|| {
        let slot = unsafe { self::out(out, "out") }?;
        let path = unsafe { borrow(path, "path") }?;
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
        *slot = boxed(ScMatrix(load_csv_continuous(Path::new(path))?));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_matrix_free(m: *mut ScMatrix) {
    if !m.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_matrix_rows(m: *const ScMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_matrix_cols(m: *const ScMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.cols())
}

/// Reads cell `(i, j)`; `*value` is NaN and `*observed` false when missing.
///
/// # Safety
/// `m` must be a live handle; `value` and `observed` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_matrix_get(
    m: *const ScMatrix,
    i: usize,
    j: usize,
    value: *mut f64,
    observed: *mut bool,
) -> ScStatus {
    guard(|| {
        let m = unsafe { borrow(m, "matrix") }?;
        let value = unsafe { out(value, "value") }?;
        let observed = unsafe { out(observed, "observed") }?;
        if i >= m.0.rows() || j >= m.0.cols() {
            return Err(
                Error::InvalidArgument(format!("cell ({i}, {j}) outside {} x {}", m.0.rows(), m.0.cols())).into(),
            );
        }
        *value = m.0.get(i, j).unwrap_or(f64::NAN);
        *observed = m.0.is_observed(i, j);
        Ok(())
    })
}

/// Erases `round(fraction × observed)` cells chosen by `seed` into a new panel.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_apply_mask(
    m: *const ScMatrix,
    fraction: f64,
    seed: u64,
    out: *mut *mut ScMatrix,
) -> ScStatus {
    guard(|| {
        let m = unsafe { borrow(m, "matrix") }?;
        let slot = unsafe { self::out(out, "out") }?;
        let (masked, _) = apply_mask(&m.0, fraction, seed)?;
        *slot = boxed(ScMatrix(masked));
        Ok(())
    })
}

/// Fits the copula by EM. `max_iters = 0` or `tol <= 0` select the defaults.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_copula_fit(
    m: *const ScMatrix,
    max_iters: usize,
    tol: f64,
    out: *mut *mut ScCopula,
) -> ScStatus {
    guard(|| {
        let m = unsafe { borrow(m, "matrix") }?;
        let slot = unsafe { self::out(out, "out") }?;
        let mut cfg = EmConfig::default();
        if max_iters > 0 {
            cfg.max_iters = max_iters;
        }
        if tol > 0.0 {
            cfg.tol = tol;
        }
        *slot = boxed(ScCopula(em_fit(&m.0, &cfg)?));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_copula_free(c: *mut ScCopula) {
    if !c.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(c) });
    }
}

/// Number of columns the copula was fit on.
///
/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_copula_dim(c: *const ScCopula) -> usize {
    unsafe { c.as_ref() }.map_or(0, |c| c.0.sigma.nrows())
}

/// Copies the correlation matrix, row-major, into `out` (`len` must be q²).
///
/// # Safety
/// `c` must be a live handle and `out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_copula_sigma(c: *const ScCopula, out: *mut f64, len: usize) -> ScStatus {
    guard(|| {
        let c = unsafe { borrow(c, "copula") }?;
        let q = c.0.sigma.nrows();
        if len != q * q {
            return Err(Error::LengthMismatch(format!("buffer of {len} for a {q} x {q} matrix")).into());
        }
        let dst = unsafe { output(out, len, "out") }?;
        for i in 0..q {
            for j in 0..q {
                dst[i * q + j] = c.0.sigma[(i, j)];
            }
        }
        Ok(())
    })
}

/// Fills the missing cells of `m` into a new panel.
///
/// # Safety
/// `c` and `m` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_copula_impute(c: *const ScCopula, m: *const ScMatrix, out: *mut *mut ScMatrix) -> ScStatus {
    guard(|| {
        let c = unsafe { borrow(c, "copula") }?;
        let m = unsafe { borrow(m, "matrix") }?;
        let slot = unsafe { self::out(out, "out") }?;
        *slot = boxed(ScMatrix(impute(&c.0, &m.0)?.completed));
        Ok(())
    })
}

/// Serializes the model as JSON; release the string with [`sc_string_free`].
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_copula_to_json(c: *const ScCopula, out: *mut *mut c_char) -> ScStatus {
    guard(|| {
        let c = unsafe { borrow(c, "copula") }?;
        let slot = unsafe { self::out(out, "out") }?;
        let text = serde_json::to_string(&c.0).map_err(Error::from)?;
        *slot = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: the string came from `CString::into_raw`.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// `√(1 / ln rounds)`; fails for `rounds < 2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_compute_lambda(rounds: usize, out: *mut f64) -> ScStatus {
    guard(|| {
        let slot = unsafe { self::out(out, "out") }?;
        *slot = ensemble::compute_lambda(rounds)?;
        Ok(())
    })
}

/// Softmin weights of `n` models into `weights`.
///
/// # Safety
/// `ce`, `lambda` and `weights` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_update_weights(
    ce: *const f64,
    lambda: *const f64,
    n: usize,
    weights: *mut f64,
) -> ScStatus {
    guard(|| {
        let ce = unsafe { input(ce, n, "ce") }?;
        let lambda = unsafe { input(lambda, n, "lambda") }?;
        let dst = unsafe { output(weights, n, "weights") }?;
        dst.copy_from_slice(&ensemble::update_weights(ce, lambda)?);
        Ok(())
    })
}

/// Weighted sum of `n` forecasts.
///
/// # Safety
/// `preds` and `weights` must hold `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_aggregate(preds: *const f64, weights: *const f64, n: usize, out: *mut f64) -> ScStatus {
    guard(|| {
        let preds = unsafe { input(preds, n, "preds") }?;
        let weights = unsafe { input(weights, n, "weights") }?;
        let slot = unsafe { self::out(out, "out") }?;
        *slot = ensemble::aggregate(preds, weights)?;
        Ok(())
    })
}

/// Mean absolute percentage error in percent.
///
/// # Safety
/// `actual` and `predicted` must hold `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_mape(actual: *const f64, predicted: *const f64, n: usize, out: *mut f64) -> ScStatus {
    guard(|| {
        let a = unsafe { input(actual, n, "actual") }?;
        let p = unsafe { input(predicted, n, "predicted") }?;
        let slot = unsafe { self::out(out, "out") }?;
        *slot = evaluation::mape(a, p)?;
        Ok(())
    })
}

/// Two-sided Wilcoxon signed-rank test of `a − b`. `degenerate` is set when
/// every difference is zero.
///
/// # Safety
/// `a` and `b` must hold `n` doubles; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_wilcoxon(
    a: *const f64,
    b: *const f64,
    n: usize,
    statistic: *mut f64,
    p_value: *mut f64,
    degenerate: *mut bool,
) -> ScStatus {
    guard(|| {
        let a = unsafe { input(a, n, "a") }?;
        let b = unsafe { input(b, n, "b") }?;
        let w = unsafe { out(statistic, "statistic") }?;
        let p = unsafe { out(p_value, "p_value") }?;
        let d = unsafe { out(degenerate, "degenerate") }?;
        let r = evaluation::wilcoxon_signed_rank(a, b)?;
        *w = r.statistic;
        *p = r.p_value;
        *d = r.degenerate;
        Ok(())
    })
}

/// Friedman average ranks of a `periods × models` row-major error grid.
///
/// # Safety
/// `grid` must hold `periods * models` doubles and `ranks` `models`.
#[no_mangle]
pub unsafe extern "C" fn sc_friedman_rank(
    grid: *const f64,
    periods: usize,
    models: usize,
    ranks: *mut f64,
) -> ScStatus {
    guard(|| {
        let n = periods
            .checked_mul(models)
            .ok_or_else(|| Error::InvalidArgument("size overflow".into()))?;
        let g = unsafe { input(grid, n, "grid") }?;
        let dst = unsafe { output(ranks, models, "ranks") }?;
        let rows: Vec<Vec<f64>> = (0..periods).map(|t| g[t * models..(t + 1) * models].to_vec()).collect();
        dst.copy_from_slice(&evaluation::friedman_rank(&rows)?);
        Ok(())
    })
}
