//! C ABI over the rating toolkit.
//!
//! Conventions:
//! - Handles (`LcrDataset`, `LcrModel`) are opaque; create them through the
//!   API and release them with the matching `_free` function exactly once.
//! - Every fallible call returns an [`LcrStatus`]; on failure,
//!   [`lcr_last_error_message`] yields a thread-local description valid
//!   until the next failing call on the same thread.
//! - Strings are NUL-terminated UTF-8. Out-parameters are written only on
//!   `LCR_STATUS_OK`.
//! - Panics never unwind across the boundary; they surface as
//!   `LCR_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lcr_core::dataset::{load_ratings_path, Format, Scale};
use lcr_core::error::LcrError;
use lcr_core::eval;
use lcr_core::serialize;
use lcr_core::{Hyperparams, LcrConfig, ModelSpec, RatingDataset, TrainedModel};

/// Opaque rating-dataset handle.
pub struct LcrDataset(RatingDataset);

/// Opaque trained-model handle.
pub struct LcrModel(TrainedModel);

/// Result of every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcrStatus {
    /// Success.
    Ok = 0,
    /// A pointer was NULL or an argument malformed.
    BadArgument = 1,
    /// Input data was rejected (parse errors, bad dimensions, bad config).
    Data = 2,
    /// Training diverged.
    Divergence = 3,
    /// A model file was malformed.
    Format = 4,
    /// The operating system reported an I/O failure.
    Io = 5,
    /// An internal invariant failed.
    Internal = 6,
}

/// SGD settings shared by all factor models.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LcrHyperparams {
    /// Latent dimensions per model.
    pub factors: u64,
    /// L2 regularization strength.
    pub lambda: f64,
    /// SGD learning rate.
    pub gamma: f64,
    /// Training epochs (phase 1 for the component model).
    pub epochs: u64,
    /// Nonzero enables the mu + item + user bias terms.
    pub use_biases: u8,
    /// Nonzero clamps final predictions to the rating scale.
    pub clamp_output: u8,
    /// Master RNG seed.
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn bad_arg(msg: &str) -> LcrStatus {
    set_error(msg.to_string());
    LcrStatus::BadArgument
}

fn fail(e: &LcrError) -> LcrStatus {
    set_error(e.to_string());
    match e {
        LcrError::Parse { .. } | LcrError::Data(_) => LcrStatus::Data,
        LcrError::Divergence(_) => LcrStatus::Divergence,
        LcrError::Format(_) => LcrStatus::Format,
        LcrError::Io(_) => LcrStatus::Io,
    }
}

fn guard<F: FnOnce() -> LcrStatus>(f: F) -> LcrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            LcrStatus::Internal
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        None
    } else {
        CStr::from_ptr(p).to_str().ok()
    }
}

fn hyper_from_c(h: &LcrHyperparams) -> Hyperparams {
    Hyperparams {
        factors: h.factors as usize,
        lambda: h.lambda,
        gamma: h.gamma,
        epochs: h.epochs as usize,
        use_biases: h.use_biases != 0,
        seed: h.seed,
        clamp_output: h.clamp_output != 0,
    }
}

/// Library version as a static NUL-terminated string.
///
/// # Safety
/// Always safe; the returned pointer is static.
#[no_mangle]
pub unsafe extern "C" fn lcr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message describing the most recent failure on this thread. Never NULL;
/// empty before any failure.
///
/// # Safety
/// The pointer is valid until the next failing call on the same thread.
#[no_mangle]
pub unsafe extern "C" fn lcr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Fill `out` with the library's default hyperparameters.
///
/// # Safety
/// `out` must be valid for writing one `LcrHyperparams`.
#[no_mangle]
pub unsafe extern "C" fn lcr_hyperparams_default(out: *mut LcrHyperparams) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return bad_arg("out is NULL");
        }
        let d = Hyperparams::default();
        *out = LcrHyperparams {
            factors: d.factors as u64,
            lambda: d.lambda,
            gamma: d.gamma,
            epochs: d.epochs as u64,
            use_biases: u8::from(d.use_biases),
            clamp_output: u8::from(d.clamp_output),
            seed: d.seed,
        };
        LcrStatus::Ok
    })
}

/// Parse a rating file (`format` is `"ml100k"`, `"ml1m"` or `"csv"`) on the
/// inclusive rating scale `[scale_min, scale_max]` and return a dataset
/// handle in `out`.
///
/// # Safety
/// `path` and `format` must be NUL-terminated strings; `out` must be valid
/// for writing one pointer. The handle must be released with
/// [`lcr_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn lcr_dataset_load(
    path: *const c_char,
    format: *const c_char,
    scale_min: f64,
    scale_max: f64,
    out: *mut *mut LcrDataset,
) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return bad_arg("out is NULL");
        }
        let Some(path) = cstr(path) else {
            return bad_arg("path is NULL or not UTF-8");
        };
        let Some(format) = cstr(format) else {
            return bad_arg("format is NULL or not UTF-8");
        };
        let loaded = (|| {
            let fmt = Format::from_name(format)?;
            let scale = Scale::new(scale_min, scale_max)?;
            load_ratings_path(path, fmt, scale)
        })();
        match loaded {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(LcrDataset(ds)));
                LcrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a dataset handle. NULL is ignored.
///
/// # Safety
/// `ds` must be a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lcr_dataset_free(ds: *mut LcrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Read basic dataset statistics. Any out-pointer may be NULL to skip it.
///
/// # Safety
/// `ds` must be a live dataset handle; non-NULL out-pointers must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lcr_dataset_stats(
    ds: *const LcrDataset,
    users: *mut u64,
    items: *mut u64,
    ratings: *mut u64,
    mean: *mut f64,
) -> LcrStatus {
    guard(|| {
        let Some(ds) = ds.as_ref() else {
            return bad_arg("dataset is NULL");
        };
        if !users.is_null() {
            *users = ds.0.n_users() as u64;
        }
        if !items.is_null() {
            *items = ds.0.n_items() as u64;
        }
        if !ratings.is_null() {
            *ratings = ds.0.len() as u64;
        }
        if !mean.is_null() {
            *mean = ds.0.global_mean();
        }
        LcrStatus::Ok
    })
}

/// Seeded holdout split; the train side receives `round(ratio * len)`
/// ratings. Both new handles must be freed.
///
/// # Safety
/// `ds` must be a live dataset handle; `train_out` and `probe_out` must be
/// valid for writing one pointer each.
#[no_mangle]
pub unsafe extern "C" fn lcr_dataset_split(
    ds: *const LcrDataset,
    ratio: f64,
    seed: u64,
    train_out: *mut *mut LcrDataset,
    probe_out: *mut *mut LcrDataset,
) -> LcrStatus {
    guard(|| {
        let Some(ds) = ds.as_ref() else {
            return bad_arg("dataset is NULL");
        };
        if train_out.is_null() || probe_out.is_null() {
            return bad_arg("output pointer is NULL");
        }
        match ds.0.split_holdout(ratio, seed) {
            Ok(split) => {
                *train_out = Box::into_raw(Box::new(LcrDataset(split.train)));
                *probe_out = Box::into_raw(Box::new(LcrDataset(split.probe)));
                LcrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

unsafe fn train_with(
    ds: *const LcrDataset,
    out: *mut *mut LcrModel,
    spec: impl FnOnce() -> Result<ModelSpec, LcrError>,
) -> LcrStatus {
    let Some(ds) = ds.as_ref() else {
        return bad_arg("dataset is NULL");
    };
    if out.is_null() {
        return bad_arg("out is NULL");
    }
    let fitted = spec().and_then(|s| s.fit(&ds.0));
    match fitted {
        Ok(model) => {
            *out = Box::into_raw(Box::new(LcrModel(model)));
            LcrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Train a single biased matrix-factorization model.
///
/// # Safety
/// `ds` must be a live dataset handle, `hyper` readable, `out` writable. The
/// model handle must be released with [`lcr_model_free`].
#[no_mangle]
pub unsafe extern "C" fn lcr_train_bmf(
    ds: *const LcrDataset,
    hyper: *const LcrHyperparams,
    out: *mut *mut LcrModel,
) -> LcrStatus {
    guard(|| {
        let Some(h) = hyper.as_ref() else {
            return bad_arg("hyper is NULL");
        };
        train_with(ds, out, || Ok(ModelSpec::Bmf { hyper: hyper_from_c(h) }))
    })
}

/// Train the latent-component decomposition: `components` models trained on
/// softmax-weighted rating shares, then retrained on their normalized
/// shares for `retrain_epochs` epochs (0 skips retraining). Prediction sums
/// the components.
///
/// # Safety
/// Same contract as [`lcr_train_bmf`].
#[no_mangle]
pub unsafe extern "C" fn lcr_train_lcr(
    ds: *const LcrDataset,
    hyper: *const LcrHyperparams,
    components: u64,
    retrain_epochs: u64,
    threads: u64,
    out: *mut *mut LcrModel,
) -> LcrStatus {
    guard(|| {
        let Some(h) = hyper.as_ref() else {
            return bad_arg("hyper is NULL");
        };
        train_with(ds, out, || {
            let mut config = LcrConfig::new(components as usize, hyper_from_c(h));
            config.retrain_epochs = retrain_epochs as usize;
            config.threads = (threads as usize).max(1);
            Ok(ModelSpec::Lcr { config })
        })
    })
}

/// Train an ensemble of independent models whose predictions are averaged.
///
/// # Safety
/// Same contract as [`lcr_train_bmf`].
#[no_mangle]
pub unsafe extern "C" fn lcr_train_mbmf(
    ds: *const LcrDataset,
    hyper: *const LcrHyperparams,
    components: u64,
    threads: u64,
    out: *mut *mut LcrModel,
) -> LcrStatus {
    guard(|| {
        let Some(h) = hyper.as_ref() else {
            return bad_arg("hyper is NULL");
        };
        train_with(ds, out, || {
            Ok(ModelSpec::Mbmf {
                components: components as usize,
                hyper: hyper_from_c(h),
                threads: (threads as usize).max(1),
            })
        })
    })
}

/// Train the item-deviation baseline.
///
/// # Safety
/// Same contract as [`lcr_train_bmf`] minus the hyperparameters.
#[no_mangle]
pub unsafe extern "C" fn lcr_train_slopeone(
    ds: *const LcrDataset,
    out: *mut *mut LcrModel,
) -> LcrStatus {
    guard(|| train_with(ds, out, || Ok(ModelSpec::SlopeOne)))
}

/// Release a model handle. NULL is ignored.
///
/// # Safety
/// `model` must be a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lcr_model_free(model: *mut LcrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Static name of the model kind: `"bmf"`, `"lcr"`, `"mbmf"` or
/// `"slopeone"`. NULL for a NULL model.
///
/// # Safety
/// `model` must be a live model handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn lcr_model_kind(model: *const LcrModel) -> *const c_char {
    match model.as_ref() {
        Some(m) => match m.0.kind.name() {
            "bmf" => c"bmf".as_ptr(),
            "lcr" => c"lcr".as_ptr(),
            "mbmf" => c"mbmf".as_ptr(),
            _ => c"slopeone".as_ptr(),
        },
        None => std::ptr::null(),
    }
}

unsafe fn predict_with(
    model: *const LcrModel,
    user: *const c_char,
    item: *const c_char,
    out: *mut f64,
    raw: bool,
) -> LcrStatus {
    let Some(m) = model.as_ref() else {
        return bad_arg("model is NULL");
    };
    if out.is_null() {
        return bad_arg("out is NULL");
    }
    let Some(user) = cstr(user) else {
        return bad_arg("user is NULL or not UTF-8");
    };
    let Some(item) = cstr(item) else {
        return bad_arg("item is NULL or not UTF-8");
    };
    *out = if raw {
        m.0.score(user, item)
    } else {
        m.0.predict(user, item)
    };
    LcrStatus::Ok
}

/// Predict a rating by external user/item id, honoring the model's clamp
/// setting. Ids unseen at training time use the cold-start fallbacks.
///
/// # Safety
/// `model` must be a live handle; `user` and `item` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lcr_model_predict(
    model: *const LcrModel,
    user: *const c_char,
    item: *const c_char,
    out: *mut f64,
) -> LcrStatus {
    guard(|| predict_with(model, user, item, out, false))
}

/// Like [`lcr_model_predict`] but never clamped.
///
/// # Safety
/// Same contract as [`lcr_model_predict`].
#[no_mangle]
pub unsafe extern "C" fn lcr_model_score(
    model: *const LcrModel,
    user: *const c_char,
    item: *const c_char,
    out: *mut f64,
) -> LcrStatus {
    guard(|| predict_with(model, user, item, out, true))
}

/// Serialize a model to `path`.
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lcr_model_save(model: *const LcrModel, path: *const c_char) -> LcrStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return bad_arg("model is NULL");
        };
        let Some(path) = cstr(path) else {
            return bad_arg("path is NULL or not UTF-8");
        };
        match serialize::save_model_to_path(&m.0, path) {
            Ok(()) => LcrStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Load a model saved by [`lcr_model_save`].
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable. The handle must be
/// released with [`lcr_model_free`].
#[no_mangle]
pub unsafe extern "C" fn lcr_model_load(path: *const c_char, out: *mut *mut LcrModel) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return bad_arg("out is NULL");
        }
        let Some(path) = cstr(path) else {
            return bad_arg("path is NULL or not UTF-8");
        };
        match serialize::load_model_from_path(path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(LcrModel(model)));
                LcrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Root mean square error of `model` over `probe`, matching records by
/// external id. Nonzero `clamp` snaps scores to the model's scale first.
///
/// # Safety
/// `model` and `probe` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lcr_rmse(
    model: *const LcrModel,
    probe: *const LcrDataset,
    clamp: u8,
    out: *mut f64,
) -> LcrStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return bad_arg("model is NULL");
        };
        let Some(p) = probe.as_ref() else {
            return bad_arg("probe is NULL");
        };
        if out.is_null() {
            return bad_arg("out is NULL");
        }
        match eval::rmse(&m.0, &p.0, clamp != 0) {
            Ok(v) => {
                *out = v;
                LcrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
