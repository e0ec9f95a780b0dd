//! C ABI over `iaa-core`.
//!
//! Every fallible function returns an [`IaaStatus`]; results go through out
//! pointers. On failure the thread-local message from
//! [`iaa_last_error_message`] describes the error. Handles are opaque and must
//! be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use libc::{c_char, c_double, c_int, size_t};

use iaa_core::dataset::{ingest_annotations, split_users_disjoint, AnnotationTable};
use iaa_core::metrics::{demographic_gini, emd_loss, emd_w1, gini_impurity, group_emd, plcc, srocc};
use iaa_core::theory::{check_theorem, Norm};
use iaa_core::{Error, ScoreDistribution, ScoreScale, TraitSchema};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Parse = 5,
    Degenerate = 6,
    Panic = 7,
    Other = 8,
}

/// Norm used by [`iaa_check_theorem`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaaNorm {
    L1 = 0,
    L2 = 1,
}

/// Opaque score scale.
pub struct IaaScale(ScoreScale);

/// Opaque annotation table.
pub struct IaaTable(AnnotationTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IaaStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::ScaleMismatch { .. } | Error::SchemaMismatch => {
            IaaStatus::DimensionMismatch
        }
        Error::Io(_) => IaaStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) | Error::Toml(_) => IaaStatus::Parse,
        Error::DegenerateInput(_) | Error::EmptyGroup | Error::EmptyResult | Error::EmptySide(_) => {
            IaaStatus::Degenerate
        }
        Error::InvalidScale(_)
        | Error::InvalidSchema(_)
        | Error::InvalidDistribution(_)
        | Error::UnknownCategory { .. }
        | Error::UnknownField(_)
        | Error::OffScaleScore(_)
        | Error::InvalidConfig(_) => IaaStatus::InvalidArgument,
        _ => IaaStatus::Other,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Run `f`, catching panics and recording the error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IaaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IaaStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            IaaStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            IaaStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(format!("{}: {e}", e.kind()));
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside iaa".into());
            IaaStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: size_t, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn distribution(p: *const c_double, len: size_t, what: &'static str) -> Result<ScoreDistribution, Failure> {
    Ok(ScoreDistribution::new(slice(p, len, what)?.to_vec())?)
}

/// Message for the last failed call on this thread, or null after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn iaa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn iaa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create a scale from a preset name ("para" or "lapis").
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iaa_scale_preset(name: *const c_char, out: *mut *mut IaaScale) -> IaaStatus {
    guard(|| {
        let name = string(name, "name")?;
        let scale = ScoreScale::preset(name).ok_or_else(|| Failure::Arg(format!("unknown scale {name:?}")))?;
        write(out, Box::into_raw(Box::new(IaaScale(scale))), "out")
    })
}

/// Create a scale from `len` strictly increasing values.
///
/// # Safety
/// `values` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_scale_new(values: *const c_double, len: size_t, out: *mut *mut IaaScale) -> IaaStatus {
    guard(|| {
        let scale = ScoreScale::new("custom", slice(values, len, "values")?.to_vec())?;
        write(out, Box::into_raw(Box::new(IaaScale(scale))), "out")
    })
}

/// Number of score levels, or 0 for a null handle.
///
/// # Safety
/// `scale` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iaa_scale_bin_count(scale: *const IaaScale) -> size_t {
    scale.as_ref().map_or(0, |s| s.0.bin_count())
}

/// # Safety
/// `scale` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iaa_scale_free(scale: *mut IaaScale) {
    if !scale.is_null() {
        drop(Box::from_raw(scale));
    }
}

/// Expected score of a distribution over the scale's levels.
///
/// # Safety
/// `mass` must point to `len` doubles; `scale` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_mean_score(
    scale: *const IaaScale,
    mass: *const c_double,
    len: size_t,
    out: *mut c_double,
) -> IaaStatus {
    guard(|| {
        let scale = &scale.as_ref().ok_or(Failure::Null("scale"))?.0;
        let p = distribution(mass, len, "mass")?;
        if p.bins() != scale.bin_count() {
            return Err(Error::DimensionMismatch { expected: scale.bin_count(), got: p.bins() }.into());
        }
        write(out, scale.mean_score(&p), "out")
    })
}

/// Wasserstein-1 distance between two distributions on the scale.
///
/// # Safety
/// `p` and `q` must point to `len` doubles; `scale` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_emd_w1(
    scale: *const IaaScale,
    p: *const c_double,
    q: *const c_double,
    len: size_t,
    out: *mut c_double,
) -> IaaStatus {
    guard(|| {
        let scale = &scale.as_ref().ok_or(Failure::Null("scale"))?.0;
        let v = emd_w1(&distribution(p, len, "p")?, &distribution(q, len, "q")?, scale)?;
        write(out, v, "out")
    })
}

/// CDF loss `(mean |CDF_p - CDF_q|^r)^(1/r)`.
///
/// # Safety
/// `p` and `q` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_emd_loss(
    p: *const c_double,
    q: *const c_double,
    len: size_t,
    r: c_double,
    out: *mut c_double,
) -> IaaStatus {
    guard(|| {
        let v = emd_loss(&distribution(p, len, "p")?, &distribution(q, len, "q")?, r)?;
        write(out, v, "out")
    })
}

/// Spearman rank correlation with average ranks for ties.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_srocc(x: *const c_double, y: *const c_double, n: size_t, out: *mut c_double) -> IaaStatus {
    guard(|| write(out, srocc(slice(x, n, "x")?, slice(y, n, "y")?)?, "out"))
}

/// Pearson correlation.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_plcc(x: *const c_double, y: *const c_double, n: size_t, out: *mut c_double) -> IaaStatus {
    guard(|| write(out, plcc(slice(x, n, "x")?, slice(y, n, "y")?)?, "out"))
}

/// `1 - sum p_k^2`.
///
/// # Safety
/// `mass` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_gini_impurity(mass: *const c_double, len: size_t, out: *mut c_double) -> IaaStatus {
    guard(|| write(out, gini_impurity(&distribution(mass, len, "mass")?), "out"))
}

/// Compare the group loss (distance to the mean of the one-hot targets) with
/// the individual loss (mean distance to each target). Targets are bin
/// indices into a `bins`-level scale.
///
/// # Safety
/// `pred` must point to `bins` doubles and `targets` to `n` indices; the out
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_check_theorem(
    pred: *const c_double,
    bins: size_t,
    targets: *const size_t,
    n: size_t,
    norm: IaaNorm,
    out_giaa: *mut c_double,
    out_piaa: *mut c_double,
    out_holds: *mut c_int,
) -> IaaStatus {
    guard(|| {
        let pred = distribution(pred, bins, "pred")?;
        let mut deltas = Vec::with_capacity(n);
        for &t in slice(targets, n, "targets")? {
            if t >= bins {
                return Err(Failure::Arg(format!("target {t} out of range for {bins} bins")));
            }
            deltas.push(ScoreDistribution::one_hot(bins, t));
        }
        let norm = match norm {
            IaaNorm::L1 => Norm::L1,
            IaaNorm::L2 => Norm::L2,
        };
        let rep = check_theorem(&pred, &deltas, norm)?;
        write(out_giaa, rep.giaa, "out_giaa")?;
        write(out_piaa, rep.piaa, "out_piaa")?;
        write(out_holds, rep.holds as c_int, "out_holds")
    })
}

/// Load an annotation CSV. `schema` and `scale` are preset names or file
/// paths; `features` may be null.
///
/// # Safety
/// String arguments must be valid C strings (or null for `features`); `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_table_ingest(
    annotations: *const c_char,
    schema: *const c_char,
    scale: *const c_char,
    features: *const c_char,
    out: *mut *mut IaaTable,
) -> IaaStatus {
    guard(|| {
        let path = string(annotations, "annotations")?;
        let schema = TraitSchema::resolve(string(schema, "schema")?)?;
        let scale = ScoreScale::resolve(string(scale, "scale")?)?;
        let features = if features.is_null() { None } else { Some(Path::new(string(features, "features")?)) };
        let table = ingest_annotations(Path::new(path), &schema, &scale, features)?;
        write(out, Box::into_raw(Box::new(IaaTable(table))), "out")
    })
}

/// Image, rater and record counts.
///
/// # Safety
/// `table` must be a live handle; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_table_counts(
    table: *const IaaTable,
    images: *mut size_t,
    raters: *mut size_t,
    records: *mut size_t,
) -> IaaStatus {
    guard(|| {
        let t = &table.as_ref().ok_or(Failure::Null("table"))?.0;
        write(images, t.images().len(), "images")?;
        write(raters, t.raters().len(), "raters")?;
        write(records, t.records().len(), "records")
    })
}

/// Group EMD between raters labelled `label` in `field` and everyone else.
///
/// # Safety
/// `table` must be a live handle; strings must be valid; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_table_group_emd(
    table: *const IaaTable,
    field: *const c_char,
    label: *const c_char,
    out: *mut c_double,
) -> IaaStatus {
    guard(|| {
        let t = &table.as_ref().ok_or(Failure::Null("table"))?.0;
        let values = [string(label, "label")?.to_string()].into();
        let users = split_users_disjoint(t, string(field, "field")?, &values)?;
        write(out, group_emd(t, &users.train, &users.test)?, "out")
    })
}

/// Record-weighted Gini impurity of the per-label score distributions.
///
/// # Safety
/// `table` must be a live handle; `field` must be valid; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iaa_table_demographic_gini(
    table: *const IaaTable,
    field: *const c_char,
    out: *mut c_double,
) -> IaaStatus {
    guard(|| {
        let t = &table.as_ref().ok_or(Failure::Null("table"))?.0;
        write(out, demographic_gini(t, string(field, "field")?)?, "out")
    })
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iaa_table_free(table: *mut IaaTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}
