//! C ABI over `mda-core`.
//!
//! Conventions:
//! - every fallible function returns an [`MdaStatus`]; on failure the
//!   message is available from [`mda_last_error_message`] on the same thread;
//! - objects are opaque handles created by `*_new`/`*_load`/`mda_train` and
//!   released with the matching `*_free`;
//! - arrays are row-major `double` buffers with explicit lengths;
//! - strings returned to the caller must be released with [`mda_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mda_core::assignment::DomainTag;
use mda_core::config::ExperimentConfig;
use mda_core::data::{idx_load, Dataset};
use mda_core::mda::{mda_forward, MdaConfig, RunningStats};
use mda_core::network::{ModelConfig, Network};
use mda_core::tensor::Tensor;
use mda_core::train::{domain_discovery_metrics, train_experiment};
use mda_core::MdaError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    UninitializedStats = 4,
    Io = 5,
    Format = 6,
    Config = 7,
    NumericalAbort = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Trained model with its running statistics.
pub struct MdaModel {
    net: Network,
}

/// Labeled images loaded from an IDX file pair.
pub struct MdaDataset {
    data: Dataset,
}

/// Final scores of a training run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MdaTrainSummary {
    pub accuracy: f64,
    pub nmi: f64,
    pub purity: f64,
    pub final_loss: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &MdaError) -> MdaStatus {
    match err {
        MdaError::InvalidArgument(_) | MdaError::LabelOutOfRange { .. } | MdaError::EmptyBatch(_) | MdaError::NonFinite { .. } => {
            MdaStatus::InvalidArgument
        }
        MdaError::ShapeMismatch { .. } | MdaError::QuotaExceedsDataset { .. } => MdaStatus::ShapeMismatch,
        MdaError::UninitializedDomainStats { .. } => MdaStatus::UninitializedStats,
        MdaError::Io { .. } => MdaStatus::Io,
        MdaError::BadMagic { .. } | MdaError::Truncated { .. } | MdaError::CountMismatch { .. } | MdaError::Csv(_) => MdaStatus::Format,
        MdaError::Config { .. } | MdaError::Json(_) => MdaStatus::Config,
        MdaError::NumericalAbort { .. } => MdaStatus::NumericalAbort,
    }
}

enum Failure {
    Status(MdaStatus, String),
    Core(MdaError),
}

impl From<MdaError> for Failure {
    fn from(e: MdaError) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MdaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MdaStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside mda-ffi".into());
            MdaStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure::Status(MdaStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(MdaStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null(name)) };
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    if len < needed {
        return Err(Failure::Status(
            MdaStatus::BufferTooSmall,
            format!("{name} holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const MdaModel) -> Result<&'a MdaModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library and valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mda_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an untrained model from a JSON model config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mda_model_new(config_json: *const c_char, out: *mut *mut MdaModel) -> MdaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: ModelConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(MdaError::from)?;
        let net = Network::new(cfg)?;
        *out = Box::into_raw(Box::new(MdaModel { net }));
        Ok(())
    })
}

/// Loads a JSON checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mda_model_load(path: *const c_char, out: *mut *mut MdaModel) -> MdaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = Network::load_checkpoint(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(MdaModel { net }));
        Ok(())
    })
}

/// Writes a JSON checkpoint.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mda_model_save(model: *const MdaModel, path: *const c_char) -> MdaStatus {
    guard(|| {
        model_ref(model)?.net.save_checkpoint(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mda_model_free(model: *mut MdaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input width, class count and latent domain count of a model.
///
/// # Safety
/// `model` must be a live handle; out pointers may be NULL to skip.
#[no_mangle]
pub unsafe extern "C" fn mda_model_dims(model: *const MdaModel, input_dim: *mut usize, classes: *mut usize, k: *mut usize) -> MdaStatus {
    guard(|| {
        let cfg = &model_ref(model)?.net.config;
        for (p, v) in [(input_dim, cfg.input_dim), (classes, cfg.classes), (k, cfg.k)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Serializes the model (config, parameters, running statistics) as JSON.
/// Free the result with [`mda_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mda_model_to_json(model: *const MdaModel, out: *mut *mut c_char) -> MdaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&model_ref(model)?.net).map_err(MdaError::from)?;
        *out = CString::new(text).expect("JSON has no nul").into_raw();
        Ok(())
    })
}

unsafe fn features(x: *const f64, rows: usize, cols: usize) -> Result<Tensor, Failure> {
    let data = slice_arg(x, rows * cols, "features")?;
    Ok(Tensor::new(vec![rows, cols], data.to_vec())?)
}

/// Class probabilities `[rows, classes]` for target-domain inputs
/// `[rows, input_dim]`, using running statistics.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn mda_model_predict(
    model: *const MdaModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> MdaStatus {
    guard(|| {
        let net = &model_ref(model)?.net;
        let probs = net.forward_eval(&features(x, rows, cols)?, &vec![DomainTag::Target; rows])?;
        out_slice(out, out_len, probs.len(), "out")?[..probs.len()].copy_from_slice(probs.data());
        Ok(())
    })
}

/// Domain-branch probabilities `[rows, k]`.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn mda_model_predict_domains(
    model: *const MdaModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> MdaStatus {
    guard(|| {
        let probs = model_ref(model)?.net.predict_domains(&features(x, rows, cols)?)?;
        out_slice(out, out_len, probs.len(), "out")?[..probs.len()].copy_from_slice(probs.data());
        Ok(())
    })
}

/// Trains a model from a full experiment config (JSON with model, train and
/// data sections). `summary` may be NULL.
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mda_train(config_json: *const c_char, out: *mut *mut MdaModel, summary: *mut MdaTrainSummary) -> MdaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        cfg.validate()?;
        let (net, outcome) = train_experiment(&cfg)?;
        if let Some(s) = summary.as_mut() {
            *s = MdaTrainSummary {
                accuracy: outcome.scores.accuracy,
                nmi: outcome.scores.nmi,
                purity: outcome.scores.purity,
                final_loss: outcome.last_loss.total,
            };
        }
        *out = Box::into_raw(Box::new(MdaModel { net }));
        Ok(())
    })
}

/// Loads an IDX image/label pair as a source dataset.
///
/// # Safety
/// Paths must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mda_dataset_load_idx(images: *const c_char, labels: *const c_char, out: *mut *mut MdaDataset) -> MdaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (x, y) = idx_load(Path::new(str_arg(images, "images")?), Path::new(str_arg(labels, "labels")?))?;
        let n = y.len();
        let data = Dataset::new(x, y.into_iter().map(Some).collect(), vec![DomainTag::UnknownSource; n])?;
        *out = Box::into_raw(Box::new(MdaDataset { data }));
        Ok(())
    })
}

/// Sample count and flattened sample width.
///
/// # Safety
/// `ds` must be a live handle; out pointers may be NULL to skip.
#[no_mangle]
pub unsafe extern "C" fn mda_dataset_dims(ds: *const MdaDataset, len: *mut usize, width: *mut usize) -> MdaStatus {
    guard(|| {
        let d = &ds.as_ref().ok_or_else(|| null("dataset"))?.data;
        if let Some(p) = len.as_mut() {
            *p = d.len();
        }
        if let Some(p) = width.as_mut() {
            *p = d.sample_shape().iter().product();
        }
        Ok(())
    })
}

/// Copies features (`len * width` values) and labels (`len` values).
/// Either output may be NULL to skip it.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn mda_dataset_copy(
    ds: *const MdaDataset,
    features: *mut f64,
    features_len: usize,
    labels: *mut usize,
    labels_len: usize,
) -> MdaStatus {
    guard(|| {
        let d = &ds.as_ref().ok_or_else(|| null("dataset"))?.data;
        if !features.is_null() {
            let src = d.features().data();
            out_slice(features, features_len, src.len(), "features")?[..src.len()].copy_from_slice(src);
        }
        if !labels.is_null() {
            if labels_len < d.len() {
                return Err(Failure::Status(MdaStatus::BufferTooSmall, "labels buffer too small".into()));
            }
            let dst = std::slice::from_raw_parts_mut(labels, labels_len);
            for (o, l) in dst.iter_mut().zip(d.labels()) {
                *o = l.unwrap_or(usize::MAX);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mda_dataset_free(ds: *mut MdaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Stateless mDA normalization of `x` (`[rows, channels]`) with assignment
/// weights `w` (`[rows, domains]`, all rows treated as free), no affine.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn mda_layer_forward(
    x: *const f64,
    rows: usize,
    channels: usize,
    w: *const f64,
    domains: usize,
    eps: f64,
    out: *mut f64,
    out_len: usize,
) -> MdaStatus {
    guard(|| {
        let x = features(x, rows, channels)?;
        let w = features(w, rows, domains)?;
        let cfg = MdaConfig {
            eps,
            affine: false,
            ..MdaConfig::default()
        };
        cfg.validate()?;
        let mut running = RunningStats::new(domains, channels);
        let (y, _) = mda_forward(&x, &w, &vec![false; rows], &cfg, None, &mut running)?;
        out_slice(out, out_len, y.len(), "out")?[..y.len()].copy_from_slice(y.data());
        Ok(())
    })
}

/// NMI and purity of a predicted partition against the true one.
///
/// # Safety
/// `predicted` and `truth` must hold `n` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn mda_nmi(predicted: *const usize, truth: *const usize, n: usize, nmi: *mut f64, purity: *mut f64) -> MdaStatus {
    guard(|| {
        let (a, b) = domain_discovery_metrics(slice_arg(predicted, n, "predicted")?, slice_arg(truth, n, "truth")?)?;
        *nmi.as_mut().ok_or_else(|| null("nmi"))? = a;
        *purity.as_mut().ok_or_else(|| null("purity"))? = b;
        Ok(())
    })
}
