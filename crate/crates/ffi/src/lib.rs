//! C ABI over the `weaklabel` library.
//!
//! Every fallible function returns a [`WlStatus`]; on failure the message is
//! available from [`wl_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_load`/`*_parse` and released by the matching
//! `*_free`. Panics never cross the boundary; they surface as
//! `WL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use weaklabel::classic::{Matrix, TrainedModel};
use weaklabel::eval::{metrics, ConfusionMatrix};
use weaklabel::features::{extract_from_image, FeatureConfig};
use weaklabel::image::Image;
use weaklabel::ingest::{best_per_video, parse_detections, DetectionRecord};
use weaklabel::neural::{class_weights, weighted_ce_loss, WeightMode};
use weaklabel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Ingest = 10,
    Dataset = 11,
    Split = 12,
    Feature = 13,
    Image = 14,
    Classifier = 15,
    Neural = 16,
    Eval = 17,
    Synth = 18,
    Io = 19,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlWeightMode {
    /// `w_c = C · n_c / N`.
    Proportional = 0,
    /// `w_c = N / (C · n_c)`.
    Inverse = 1,
}

/// One detection box. `x`/`y` may be negative.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlDetection {
    pub frame: usize,
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    pub score: f64,
}

/// Parsed detection records.
pub struct WlDetections {
    records: Vec<DetectionRecord>,
    video_ids: Vec<CString>,
}

/// A classic classifier loaded from a `model.json` file.
pub struct WlModel {
    model: TrainedModel,
    class_names: Vec<CString>,
}

/// Confusion matrix accumulated one prediction at a time.
pub struct WlConfusion {
    counts: Vec<Vec<u64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(WlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Ingest(_) => WlStatus::Ingest,
            Error::Dataset(_) => WlStatus::Dataset,
            Error::Split(_) => WlStatus::Split,
            Error::Feature(_) => WlStatus::Feature,
            Error::Image(_) => WlStatus::Image,
            Error::Classifier(_) => WlStatus::Classifier,
            Error::Neural(_) => WlStatus::Neural,
            Error::Eval(_) => WlStatus::Eval,
            Error::Synth(_) => WlStatus::Synth,
            Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } => WlStatus::Io,
            Error::Usage(_) => WlStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: WlStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn lib<T, E: Into<Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::from(e.into()))
}

/// Runs `f`, records any failure and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            WlStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(WlStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn utf8<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(WlStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call into this library.
#[no_mangle]
pub extern "C" fn wl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length of the feature vector produced by [`wl_extract_features`].
#[no_mangle]
pub extern "C" fn wl_feature_dim() -> usize {
    FeatureConfig::default().dim()
}

/// Hu, Haralick and color-histogram features of an 8-bit image with the
/// default descriptor settings. `pixels` holds `height` rows of
/// `width · channels` bytes; `channels` is 1 or 3. `out` must hold
/// `wl_feature_dim()` doubles.
///
/// # Safety
/// `pixels` must point to `width · height · channels` readable bytes and
/// `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wl_extract_features(
    pixels: *const u8,
    width: u32,
    height: u32,
    channels: u8,
    out: *mut f64,
    out_len: usize,
) -> WlStatus {
    guard(|| {
        let cfg = FeatureConfig::default();
        if out_len != cfg.dim() {
            return Err(fail(
                WlStatus::InvalidArgument,
                format!("output holds {out_len} values, need {}", cfg.dim()),
            ));
        }
        let n = width as usize * height as usize * channels as usize;
        let data = slice(pixels, n, "pixels")?.to_vec();
        let img = lib(Image::new(width, height, channels, data))?;
        let img = if channels == 1 {
            let rgb = img.data().iter().flat_map(|&v| [v, v, v]).collect();
            lib(Image::new(width, height, 3, rgb))?
        } else {
            img
        };
        let v = lib(extract_from_image(&img, &cfg))?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Parses a JSON-lines detection stream into a new handle.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_detections_parse(
    jsonl: *const c_char,
    out: *mut *mut WlDetections,
) -> WlStatus {
    guard(|| {
        non_null(out, "out")?;
        let records = lib(parse_detections(utf8(jsonl, "jsonl")?))?;
        *out = Box::into_raw(Box::new(detections_handle(records)));
        Ok(())
    })
}

fn detections_handle(records: Vec<DetectionRecord>) -> WlDetections {
    let video_ids = records
        .iter()
        .map(|r| CString::new(r.video_id.replace('\0', " ")).expect("nul bytes removed"))
        .collect();
    WlDetections { records, video_ids }
}

/// New handle keeping only the highest-scoring box of every (video, frame),
/// ordered by video id then frame.
///
/// # Safety
/// `dets` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_detections_best(
    dets: *const WlDetections,
    out: *mut *mut WlDetections,
) -> WlStatus {
    guard(|| {
        non_null(dets, "dets")?;
        non_null(out, "out")?;
        let best = best_per_video(&(&*dets).records);
        let records = best
            .into_values()
            .flat_map(|frames| frames.into_values())
            .collect();
        *out = Box::into_raw(Box::new(detections_handle(records)));
        Ok(())
    })
}

/// Number of records; 0 for a NULL handle.
///
/// # Safety
/// `dets` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_detections_len(dets: *const WlDetections) -> usize {
    dets.as_ref().map_or(0, |d| d.records.len())
}

/// Copies record `index` into `out`.
///
/// # Safety
/// `dets` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_detections_get(
    dets: *const WlDetections,
    index: usize,
    out: *mut WlDetection,
) -> WlStatus {
    guard(|| {
        non_null(dets, "dets")?;
        non_null(out, "out")?;
        let r = (&*dets).records.get(index).ok_or_else(|| {
            fail(
                WlStatus::InvalidArgument,
                format!("index {index} out of range"),
            )
        })?;
        *out = WlDetection {
            frame: r.frame_index,
            x: r.bbox.x,
            y: r.bbox.y,
            w: r.bbox.w,
            h: r.bbox.h,
            score: r.score,
        };
        Ok(())
    })
}

/// Video id of record `index`, or NULL when out of range. Owned by the
/// handle.
///
/// # Safety
/// `dets` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_detections_video_id(
    dets: *const WlDetections,
    index: usize,
) -> *const c_char {
    dets.as_ref()
        .and_then(|d| d.video_ids.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// `dets` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wl_detections_free(dets: *mut WlDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

/// Loads a classic model saved by `weaklabel fit`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_model_load(path: *const c_char, out: *mut *mut WlModel) -> WlStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = utf8(path, "path")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| fail(WlStatus::Io, format!("{path}: {e}")))?;
        let model: TrainedModel =
            serde_json::from_str(&text).map_err(|e| fail(WlStatus::Io, format!("{path}: {e}")))?;
        let class_names = model
            .class_list
            .iter()
            .map(|c| CString::new(c.replace('\0', " ")).expect("nul bytes removed"))
            .collect();
        *out = Box::into_raw(Box::new(WlModel { model, class_names }));
        Ok(())
    })
}

/// Feature count the model expects; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_model_n_features(model: *const WlModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.n_features)
}

/// Number of classes; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_model_n_classes(model: *const WlModel) -> usize {
    model.as_ref().map_or(0, |m| m.class_names.len())
}

/// Name of class `index`, or NULL when out of range. Owned by the handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_model_class_name(model: *const WlModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.class_names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Predicts `rows` row-major feature vectors of `cols` values and writes one
/// class index per row to `out`.
///
/// # Safety
/// `features` must hold `rows · cols` doubles and `out` `rows` writable
/// `size_t`s.
#[no_mangle]
pub unsafe extern "C" fn wl_model_predict(
    model: *const WlModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    out: *mut usize,
) -> WlStatus {
    guard(|| {
        non_null(model, "model")?;
        let data = slice(features, rows * cols, "features")?.to_vec();
        let x = Matrix::new(rows, cols, data)
            .map_err(|e| fail(WlStatus::InvalidArgument, e.to_string()))?;
        let pred = lib((&*model).model.predict_indices(&x))?;
        slice_mut(out, rows, "out")?.copy_from_slice(&pred);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wl_model_free(model: *mut WlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Empty `n_classes × n_classes` confusion matrix, or NULL if `n_classes`
/// is 0.
#[no_mangle]
pub extern "C" fn wl_confusion_new(n_classes: usize) -> *mut WlConfusion {
    if n_classes == 0 {
        set_error("n_classes must be >= 1".into());
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(WlConfusion {
        counts: vec![vec![0; n_classes]; n_classes],
    }))
}

/// Counts one (true class, predicted class) pair.
///
/// # Safety
/// `cm` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_confusion_add(
    cm: *mut WlConfusion,
    truth: usize,
    pred: usize,
) -> WlStatus {
    guard(|| {
        non_null(cm, "cm")?;
        let counts = &mut (&mut *cm).counts;
        let n = counts.len();
        if truth >= n || pred >= n {
            return Err(fail(
                WlStatus::InvalidArgument,
                format!("class ({truth}, {pred}) outside 0..{n}"),
            ));
        }
        counts[truth][pred] += 1;
        Ok(())
    })
}

/// Count in row `truth`, column `pred`; 0 when out of range.
///
/// # Safety
/// `cm` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_confusion_get(
    cm: *const WlConfusion,
    truth: usize,
    pred: usize,
) -> u64 {
    cm.as_ref()
        .and_then(|c| c.counts.get(truth))
        .and_then(|row| row.get(pred))
        .copied()
        .unwrap_or(0)
}

/// Overall accuracy and mean per-class recall over classes with at least one
/// true sample. Either output pointer may be NULL.
///
/// # Safety
/// `cm` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn wl_confusion_metrics(
    cm: *const WlConfusion,
    accuracy: *mut f64,
    mean_class_accuracy: *mut f64,
) -> WlStatus {
    guard(|| {
        non_null(cm, "cm")?;
        let counts = (&*cm).counts.clone();
        let names = (0..counts.len()).map(|i| i.to_string()).collect();
        let m = lib(metrics(&lib(ConfusionMatrix::from_counts(names, counts))?))?;
        if !accuracy.is_null() {
            *accuracy = m.accuracy;
        }
        if !mean_class_accuracy.is_null() {
            *mean_class_accuracy = m.mean_class_accuracy;
        }
        Ok(())
    })
}

/// # Safety
/// `cm` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wl_confusion_free(cm: *mut WlConfusion) {
    if !cm.is_null() {
        drop(Box::from_raw(cm));
    }
}

/// Per-class loss weights from training labels. Classes absent from
/// `labels` get weight 0.
///
/// # Safety
/// `labels` must hold `n` values and `out` `n_classes` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wl_class_weights(
    labels: *const usize,
    n: usize,
    n_classes: usize,
    mode: WlWeightMode,
    out: *mut f64,
) -> WlStatus {
    guard(|| {
        let mode = match mode {
            WlWeightMode::Proportional => WeightMode::Proportional,
            WlWeightMode::Inverse => WeightMode::Inverse,
        };
        let w = lib(class_weights(slice(labels, n, "labels")?, n_classes, mode))?;
        slice_mut(out, n_classes, "out")?.copy_from_slice(&w.w);
        Ok(())
    })
}

/// Summed weighted softmax cross-entropy of a row-major `batch × classes`
/// logit matrix and its gradient. `weights` may be NULL for unit weights;
/// `grad` may be NULL when only the loss is needed.
///
/// # Safety
/// `logits` and a non-NULL `grad` must hold `batch · classes` doubles,
/// `labels` `batch` values and a non-NULL `weights` `classes` values.
#[no_mangle]
pub unsafe extern "C" fn wl_weighted_ce_loss(
    logits: *const f64,
    batch: usize,
    classes: usize,
    labels: *const usize,
    weights: *const f64,
    loss: *mut f64,
    grad: *mut f64,
) -> WlStatus {
    guard(|| {
        non_null(loss, "loss")?;
        let logits = slice(logits, batch * classes, "logits")?;
        let labels = slice(labels, batch, "labels")?;
        let unit = vec![1.0; classes];
        let w = if weights.is_null() {
            &unit[..]
        } else {
            slice(weights, classes, "weights")?
        };
        let (l, g) = lib(weighted_ce_loss(logits, classes, labels, w))?;
        *loss = l;
        if !grad.is_null() {
            slice_mut(grad, batch * classes, "grad")?.copy_from_slice(&g);
        }
        Ok(())
    })
}
