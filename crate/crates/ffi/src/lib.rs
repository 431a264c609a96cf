//! C ABI over the editqa core.
//!
//! Every fallible function returns an [`EqStatus`]. On failure the message is
//! kept per thread and read with [`eq_last_error_message`]. Handles are opaque
//! and owned by the caller until passed to their `_free` function. Strings
//! returned through out-pointers are released with [`eq_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use editqa::correlation::{self, CorrelationError, ScorePairSet};
use editqa::head::{self, RegressionModel};
use editqa::manifest::{self, DatasetManifest};
use editqa::stats::{self, RatingMatrix, StatsError};
use editqa::Dimension;
use nalgebra::DVector;

/// Result codes.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqStatus {
    EQ_OK = 0,
    /// A required pointer argument was null.
    EQ_ERR_NULL = 1,
    /// An argument was out of range or inconsistent.
    EQ_ERR_INVALID = 2,
    /// The data admit no defined result (constant input, degenerate rater).
    EQ_ERR_DEGENERATE = 3,
    /// A file could not be read.
    EQ_ERR_IO = 4,
    /// A file was read but its contents are malformed.
    EQ_ERR_PARSE = 5,
    /// Internal failure; the library state is unchanged.
    EQ_ERR_PANIC = 6,
}

use EqStatus::*;

/// Rating dimensions.
pub const EQ_DIM_VIDEO_QUALITY: i32 = 0;
pub const EQ_DIM_EDITING_ALIGNMENT: i32 = 1;
pub const EQ_DIM_STRUCTURAL_CONSISTENCY: i32 = 2;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

type FfiResult<T> = Result<T, (EqStatus, String)>;

fn fail<T>(status: EqStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err((status, msg.into()))
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> EqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EQ_OK,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EQ_ERR_PANIC
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> FfiResult<()> {
    if p.is_null() {
        fail(EQ_ERR_NULL, format!("`{name}` is null"))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `n` readable values.
unsafe fn slice<'a>(p: *const f64, n: usize, name: &str) -> FfiResult<&'a [f64]> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path_arg(p: *const c_char, name: &str) -> FfiResult<PathBuf> {
    non_null(p, name)?;
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(EQ_ERR_INVALID, format!("`{name}` is not UTF-8")),
    }
}

fn dimension(d: i32) -> FfiResult<Dimension> {
    usize::try_from(d)
        .ok()
        .and_then(|i| Dimension::ALL.get(i).copied())
        .ok_or((EQ_ERR_INVALID, format!("unknown dimension {d}")))
}

fn stats_err(e: StatsError) -> (EqStatus, String) {
    let status = match e {
        StatsError::DegenerateSubject(_) | StatsError::ZeroVariance | StatsError::EmptyItem(_) => EQ_ERR_DEGENERATE,
        _ => EQ_ERR_INVALID,
    };
    (status, e.to_string())
}

fn corr_err(e: CorrelationError) -> (EqStatus, String) {
    let status = match e {
        CorrelationError::ZeroVariance => EQ_ERR_DEGENERATE,
        _ => EQ_ERR_INVALID,
    };
    (status, e.to_string())
}

fn out_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    non_null(out, "out")?;
    let c = CString::new(s).map_err(|e| (EQ_ERR_INVALID, e.to_string()))?;
    // SAFETY: checked non-null above.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn eq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- correlation ----

unsafe fn metric(
    predicted: *const f64,
    reference: *const f64,
    n: usize,
    out: *mut f64,
    f: fn(&ScorePairSet<'_>) -> Result<f64, CorrelationError>,
) -> EqStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = slice(predicted, n, "predicted")?;
        let r = slice(reference, n, "reference")?;
        let pairs = ScorePairSet::new(p, r).map_err(corr_err)?;
        *out = f(&pairs).map_err(corr_err)?;
        Ok(())
    })
}

/// Spearman rank correlation with average ranks for ties.
///
/// # Safety
/// `predicted` and `reference` must each hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eq_srcc(predicted: *const f64, reference: *const f64, n: usize, out: *mut f64) -> EqStatus {
    metric(predicted, reference, n, out, correlation::srcc)
}

/// Pearson linear correlation on raw values.
///
/// # Safety
/// As for [`eq_srcc`].
#[no_mangle]
pub unsafe extern "C" fn eq_plcc(predicted: *const f64, reference: *const f64, n: usize, out: *mut f64) -> EqStatus {
    metric(predicted, reference, n, out, correlation::plcc)
}

/// Kendall tau-b.
///
/// # Safety
/// As for [`eq_srcc`].
#[no_mangle]
pub unsafe extern "C" fn eq_krcc(predicted: *const f64, reference: *const f64, n: usize, out: *mut f64) -> EqStatus {
    metric(predicted, reference, n, out, correlation::krcc)
}

// ---- levels and labels ----

/// Five-level index (0 = bad … 4 = excellent) of `score` within `[min, max]`.
///
/// # Safety
/// `out_level` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eq_discretize(score: f64, min: f64, max: f64, out_level: *mut i32) -> EqStatus {
    guard(|| {
        non_null(out_level, "out_level")?;
        let i = stats::level_index(score, min, max, stats::QualityLevel::COUNT).map_err(stats_err)?;
        *out_level = i as i32;
        Ok(())
    })
}

/// Stage-2 training label such as "The quality of this video is poor (49.33).".
///
/// # Safety
/// `out` must be writable; release the result with [`eq_string_free`].
#[no_mangle]
pub unsafe extern "C" fn eq_label_stage2(
    score: f64,
    min: f64,
    max: f64,
    dimension_id: i32,
    out: *mut *mut c_char,
) -> EqStatus {
    guard(|| {
        let d = dimension(dimension_id)?;
        out_string(out, head::label_stage2(score, min, max, d).map_err(stats_err)?)
    })
}

// ---- rating matrix ----

/// Opaque items × subjects rating grid for one dimension.
pub struct EqRatingMatrix(RatingMatrix);

/// Reliability of a complete grid.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EqIcc {
    pub icc_single: f64,
    pub icc_average: f64,
    pub ci_single_low: f64,
    pub ci_single_high: f64,
    pub ci_average_low: f64,
    pub ci_average_high: f64,
}

/// Creates an empty grid; every cell starts missing.
///
/// # Safety
/// `out` must be writable; release the handle with [`eq_matrix_free`].
#[no_mangle]
pub unsafe extern "C" fn eq_matrix_new(
    dimension_id: i32,
    n_items: usize,
    n_subjects: usize,
    out: *mut *mut EqRatingMatrix,
) -> EqStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = dimension(dimension_id)?;
        let items = (0..n_items).map(|i| format!("item{i}")).collect();
        let subjects = (0..n_subjects).map(|s| format!("subject{s}")).collect();
        *out = Box::into_raw(Box::new(EqRatingMatrix(RatingMatrix::new(d, items, subjects))));
        Ok(())
    })
}

unsafe fn matrix_mut<'a>(m: *mut EqRatingMatrix) -> FfiResult<&'a mut RatingMatrix> {
    non_null(m, "matrix")?;
    Ok(&mut (*m).0)
}

unsafe fn matrix_ref<'a>(m: *const EqRatingMatrix) -> FfiResult<&'a RatingMatrix> {
    non_null(m, "matrix")?;
    Ok(&(*m).0)
}

fn cell(m: &RatingMatrix, item: usize, subject: usize) -> FfiResult<()> {
    if item >= m.n_items() || subject >= m.n_subjects() {
        return fail(
            EQ_ERR_INVALID,
            format!("cell ({item}, {subject}) outside {} × {}", m.n_items(), m.n_subjects()),
        );
    }
    Ok(())
}

/// Stores one rating. Non-finite values are rejected.
///
/// # Safety
/// `matrix` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_matrix_set(
    matrix: *mut EqRatingMatrix,
    item: usize,
    subject: usize,
    value: f64,
) -> EqStatus {
    guard(|| {
        let m = matrix_mut(matrix)?;
        cell(m, item, subject)?;
        if !value.is_finite() {
            return fail(EQ_ERR_INVALID, format!("rating {value} is not finite"));
        }
        m.set(item, subject, Some(value));
        Ok(())
    })
}

/// Marks one cell missing again.
///
/// # Safety
/// `matrix` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_matrix_clear(matrix: *mut EqRatingMatrix, item: usize, subject: usize) -> EqStatus {
    guard(|| {
        let m = matrix_mut(matrix)?;
        cell(m, item, subject)?;
        m.set(item, subject, None);
        Ok(())
    })
}

/// Per-item MOS after per-subject z-scoring. Degenerate subjects are skipped
/// and counted in `out_excluded` (may be null); items left without ratings get
/// NaN.
///
/// # Safety
/// `out_mos` must hold `len` values and `len` must equal the item count.
#[no_mangle]
pub unsafe extern "C" fn eq_matrix_compute_mos(
    matrix: *const EqRatingMatrix,
    out_mos: *mut f64,
    len: usize,
    out_excluded: *mut usize,
) -> EqStatus {
    guard(|| {
        let m = matrix_ref(matrix)?;
        non_null(out_mos, "out_mos")?;
        if len != m.n_items() {
            return fail(
                EQ_ERR_INVALID,
                format!("buffer holds {len} values, grid has {} items", m.n_items()),
            );
        }
        let report = stats::compute_mos_screened(m).map_err(stats_err)?;
        let out = std::slice::from_raw_parts_mut(out_mos, len);
        out.fill(f64::NAN);
        for e in &report.entries {
            if let Some(i) = m.item_ids().iter().position(|id| *id == e.item_id) {
                out[i] = e.mos;
            }
        }
        if !out_excluded.is_null() {
            *out_excluded = report.excluded_subjects.len();
        }
        Ok(())
    })
}

/// ICC(2,1) and ICC(2,k) with confidence intervals; every cell must be set.
///
/// # Safety
/// `matrix` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eq_matrix_icc(matrix: *const EqRatingMatrix, confidence: f64, out: *mut EqIcc) -> EqStatus {
    guard(|| {
        let m = matrix_ref(matrix)?;
        non_null(out, "out")?;
        let grid = m.complete_rows().map_err(stats_err)?;
        let r = stats::icc_two_way(&grid, confidence).map_err(stats_err)?;
        *out = EqIcc {
            icc_single: r.icc_single,
            icc_average: r.icc_average,
            ci_single_low: r.ci_single.0,
            ci_single_high: r.ci_single.1,
            ci_average_low: r.ci_average.0,
            ci_average_high: r.ci_average.1,
        };
        Ok(())
    })
}

/// Releases a grid. Null is ignored.
///
/// # Safety
/// `matrix` must come from [`eq_matrix_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eq_matrix_free(matrix: *mut EqRatingMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

// ---- manifest ----

/// Opaque validated dataset manifest.
pub struct EqManifest(DatasetManifest);

/// Loads and validates a manifest JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable; release the
/// handle with [`eq_manifest_free`].
#[no_mangle]
pub unsafe extern "C" fn eq_manifest_load(path: *const c_char, out: *mut *mut EqManifest) -> EqStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path, "path")?;
        let m = manifest::load_manifest(&path).map_err(|e| {
            let status = match e {
                manifest::ManifestError::Io { .. } => EQ_ERR_IO,
                _ => EQ_ERR_PARSE,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(EqManifest(m)));
        Ok(())
    })
}

/// Number of edited items, or 0 for a null handle.
///
/// # Safety
/// `manifest` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_manifest_item_count(manifest: *const EqManifest) -> usize {
    manifest.as_ref().map_or(0, |m| m.0.items.len())
}

/// Id of item `index`; release with [`eq_string_free`].
///
/// # Safety
/// `manifest` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eq_manifest_item_id(
    manifest: *const EqManifest,
    index: usize,
    out: *mut *mut c_char,
) -> EqStatus {
    guard(|| {
        non_null(manifest, "manifest")?;
        let items = &(*manifest).0.items;
        let item = items
            .get(index)
            .ok_or((EQ_ERR_INVALID, format!("index {index} outside {} items", items.len())))?;
        out_string(out, item.id.clone())
    })
}

/// Releases a manifest. Null is ignored.
///
/// # Safety
/// `manifest` must come from [`eq_manifest_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eq_manifest_free(manifest: *mut EqManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

// ---- regression head ----

/// Opaque trained regression model.
pub struct EqHead(RegressionModel);

/// Loads parameters written by `editqa headtrain`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable; release the
/// handle with [`eq_head_free`].
#[no_mangle]
pub unsafe extern "C" fn eq_head_load(path: *const c_char, out: *mut *mut EqHead) -> EqStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path, "path")?;
        let model = head::read_params(&path).map_err(|e| {
            let status = match e.kind() {
                std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => EQ_ERR_PARSE,
                _ => EQ_ERR_IO,
            };
            (status, format!("{}: {e}", path.display()))
        })?;
        *out = Box::into_raw(Box::new(EqHead(model)));
        Ok(())
    })
}

/// Length of the input vector [`eq_head_predict`] expects, or 0 for null.
///
/// # Safety
/// `head` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_head_input_dim(head: *const EqHead) -> usize {
    head.as_ref().map_or(0, |h| h.0.input_dim())
}

/// Scalar score for one pooled input vector.
///
/// # Safety
/// `x` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn eq_head_predict(head: *const EqHead, x: *const f64, n: usize, out: *mut f64) -> EqStatus {
    guard(|| {
        non_null(head, "head")?;
        non_null(out, "out")?;
        let x = DVector::from_column_slice(slice(x, n, "x")?);
        *out = (*head).0.predict(&x).map_err(|e| (EQ_ERR_INVALID, e.to_string()))?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `head` must come from [`eq_head_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eq_head_free(head: *mut EqHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}
