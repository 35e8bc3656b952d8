//! C ABI over `specpc`.
//!
//! Series and reports are opaque heap handles owned by the caller and
//! released with their `_free` function. Every fallible call returns a
//! [`SpecpcStatus`]; the message for the most recent failure on the calling
//! thread is available from [`specpc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use specpc::{ChangePointReport, ComponentSource, DetectConfig, Error, MultichannelSeries};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    InvalidData = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecpcSource {
    Spectral = 0,
    Contemporaneous = 1,
}

/// Detection settings. `band_low_hz`/`band_high_hz` restrict the CUSUM to a
/// band when both are finite; `threshold` replaces the default when finite.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpecpcDetectConfig {
    pub component: usize,
    pub source: SpecpcSource,
    pub block_length: usize,
    pub span: usize,
    pub radius: usize,
    pub components: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub threshold: f64,
    pub per_block_filters: bool,
}

pub struct SpecpcSeries(MultichannelSeries);

pub struct SpecpcReport(ChangePointReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SpecpcStatus {
    match err.exit_code() {
        2 => SpecpcStatus::InvalidParameter,
        3 => SpecpcStatus::InvalidData,
        _ => SpecpcStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SpecpcStatus, String)>) -> SpecpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpecpcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpecpcStatus::Panic
        }
    }
}

fn lift(err: Error) -> (SpecpcStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (SpecpcStatus, String) {
    (SpecpcStatus::NullPointer, format!("{what} is null"))
}

/// Message for the last failed call on this thread, or null. Free with
/// [`specpc_string_free`].
#[no_mangle]
pub extern "C" fn specpc_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn specpc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The default detection threshold for a series of `length` samples.
#[no_mangle]
pub extern "C" fn specpc_threshold(length: usize) -> f64 {
    specpc::threshold(length as f64)
}

#[no_mangle]
pub extern "C" fn specpc_detect_config_default() -> SpecpcDetectConfig {
    let d = DetectConfig::default();
    SpecpcDetectConfig {
        component: d.component,
        source: SpecpcSource::Spectral,
        block_length: d.block_length,
        span: d.span,
        radius: d.radius,
        components: d.components,
        band_low_hz: f64::NAN,
        band_high_hz: f64::NAN,
        threshold: f64::NAN,
        per_block_filters: d.per_block_filters,
    }
}

impl From<&SpecpcDetectConfig> for DetectConfig {
    fn from(c: &SpecpcDetectConfig) -> Self {
        DetectConfig {
            component: c.component,
            source: match c.source {
                SpecpcSource::Spectral => ComponentSource::Spectral,
                SpecpcSource::Contemporaneous => ComponentSource::Contemporaneous,
            },
            block_length: c.block_length,
            span: c.span,
            radius: c.radius,
            components: c.components,
            band_hz: (c.band_low_hz.is_finite() && c.band_high_hz.is_finite())
                .then_some((c.band_low_hz, c.band_high_hz)),
            threshold_override: c.threshold.is_finite().then_some(c.threshold),
            per_block_filters: c.per_block_filters,
        }
    }
}

/// Copies a row-major `rows × channels` array into a new series.
///
/// # Safety
/// `data` must point to `rows * channels` readable doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn specpc_series_new(
    data: *const f64,
    rows: usize,
    channels: usize,
    sampling_rate: f64,
    out: *mut *mut SpecpcSeries,
) -> SpecpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if data.is_null() {
            return Err(null("data"));
        }
        let n =
            rows.checked_mul(channels).ok_or((SpecpcStatus::InvalidParameter, "rows * channels overflows".into()))?;
        let values = DMatrix::from_row_slice(rows, channels, std::slice::from_raw_parts(data, n));
        let series = MultichannelSeries::new(values, sampling_rate).map_err(lift)?;
        *out = Box::into_raw(Box::new(SpecpcSeries(series)));
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle from [`specpc_series_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn specpc_series_free(series: *mut SpecpcSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Runs detection. `config` may be null for the defaults.
///
/// # Safety
/// `series` must be a live handle, `config` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn specpc_detect(
    series: *const SpecpcSeries,
    config: *const SpecpcDetectConfig,
    out: *mut *mut SpecpcReport,
) -> SpecpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let series = series.as_ref().ok_or_else(|| null("series"))?;
        let cfg = match config.as_ref() {
            Some(c) => DetectConfig::from(c),
            None => DetectConfig::default(),
        };
        let report = specpc::detect(&series.0, &cfg).map_err(lift)?;
        *out = Box::into_raw(Box::new(SpecpcReport(report)));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`specpc_detect`], freed once.
#[no_mangle]
pub unsafe extern "C" fn specpc_report_free(report: *mut SpecpcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of detected change points; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn specpc_report_num_changes(report: *const SpecpcReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.change_times.len())
}

/// Threshold applied by the report; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn specpc_report_threshold(report: *const SpecpcReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.threshold)
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), (SpecpcStatus, String)> {
    if !len.is_null() {
        *len = src.len();
    }
    if src.len() > cap {
        return Err((SpecpcStatus::BufferTooSmall, format!("need {} elements, buffer holds {cap}", src.len())));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

/// Copies the change times (sample indices, ascending) into `buf`. `len`,
/// when non-null, receives the count even if `cap` is too small.
///
/// # Safety
/// `buf` must hold `cap` writable elements; `len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn specpc_report_change_times(
    report: *const SpecpcReport,
    buf: *mut usize,
    cap: usize,
    len: *mut usize,
) -> SpecpcStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        copy_out(&r.0.change_times, buf, cap, len)
    })
}

/// Copies the segmented component series (one value per sample).
///
/// # Safety
/// As for [`specpc_report_change_times`].
#[no_mangle]
pub unsafe extern "C" fn specpc_report_component(
    report: *const SpecpcReport,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SpecpcStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        copy_out(&r.0.component_series, buf, cap, len)
    })
}

/// The full report as JSON. Free with [`specpc_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn specpc_report_json(report: *const SpecpcReport, out: *mut *mut c_char) -> SpecpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let text = serde_json::to_string(&r.0).map_err(|e| (SpecpcStatus::Numerical, e.to_string()))?;
        *out = CString::new(text).expect("json has no nul").into_raw();
        Ok(())
    })
}
