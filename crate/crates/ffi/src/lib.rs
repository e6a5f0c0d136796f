//! C ABI over the `spose` library.
//!
//! Every fallible function returns a [`SposeStatus`]. On failure the message is
//! available from [`spose_last_error_message`] on the same thread until the next
//! failing call. Handles are opaque and must be released with their `_free`
//! function. Panics never cross the boundary; they surface as
//! `SPOSE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::OnceLock;

use spose::evaluation;
use spose::io;
use spose::model;
use spose::training;
use spose::{ConceptVocabulary, Embedding, ErrorCategory, SposeError, TrainConfig, TripletDataset};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SposeStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an out-of-range argument at the boundary.
    InvalidArgument = 1,
    /// Malformed input data or configuration.
    Input = 2,
    /// Non-finite values or a degenerate model.
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

pub struct SposeVocabulary(ConceptVocabulary);
pub struct SposeDataset(TripletDataset);
pub struct SposeEmbedding(Embedding);

/// Training settings. `lambda_grid` may be null to use the default grid.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SposeTrainConfig {
    pub lambda_grid: *const f64,
    pub n_lambda: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_dims: usize,
    pub prune_threshold: f64,
    pub split_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Arg(String),
    Lib(SposeError),
}

impl From<SposeError> for Failure {
    fn from(e: SposeError) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> SposeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SposeStatus::Ok,
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg);
            SposeStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            match e.category() {
                ErrorCategory::Input => SposeStatus::Input,
                ErrorCategory::Numerical => SposeStatus::Numerical,
                ErrorCategory::Io => SposeStatus::Io,
            }
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SposeStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(Failure::Arg(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure::Arg(format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> FfiResult<*mut T> {
    if p.is_null() {
        Err(Failure::Arg(format!("{what} is null")))
    } else {
        Ok(p)
    }
}

/// Message of the last failure on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn spose_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spose_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// vocabulary

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spose_vocabulary_load(
    path: *const c_char,
    out: *mut *mut SposeVocabulary,
) -> SposeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let v = io::load_vocabulary(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(SposeVocabulary(v)));
        Ok(())
    })
}

/// Number of concepts; 0 for null.
///
/// # Safety
/// `vocab` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spose_vocabulary_len(vocab: *const SposeVocabulary) -> usize {
    vocab.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// `vocab` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spose_vocabulary_free(vocab: *mut SposeVocabulary) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

// ---------------------------------------------------------------------------
// dataset

/// Loads a triplet file whose indices refer to `vocab`. The vocabulary is
/// copied; the caller keeps ownership of `vocab`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `vocab` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spose_dataset_load(
    path: *const c_char,
    vocab: *const SposeVocabulary,
    out: *mut *mut SposeDataset,
) -> SposeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let vocab = ref_arg(vocab, "vocab")?;
        let d = io::load_triplets(&path_arg(path, "path")?, vocab.0.clone())?;
        *out = Box::into_raw(Box::new(SposeDataset(d)));
        Ok(())
    })
}

/// Number of judgments; 0 for null.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spose_dataset_len(data: *const SposeDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spose_dataset_free(data: *mut SposeDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

// ---------------------------------------------------------------------------
// embedding

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_load(
    path: *const c_char,
    out: *mut *mut SposeEmbedding,
) -> SposeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = io::load_embedding(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(SposeEmbedding(e)));
        Ok(())
    })
}

/// Builds an embedding from `rows * cols` row-major values. Concepts are
/// named by `vocab` if given (its length must equal `rows`), else `c0, c1, ...`.
///
/// # Safety
/// `values` must point to `rows * cols` doubles; `vocab` null or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_from_values(
    values: *const f64,
    rows: usize,
    cols: usize,
    vocab: *const SposeVocabulary,
    out: *mut *mut SposeEmbedding,
) -> SposeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if values.is_null() {
            return Err(Failure::Arg("values is null".into()));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure::Arg("rows * cols overflows".into()))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let array = ndarray::Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Failure::Arg(e.to_string()))?;
        let names = match vocab.as_ref() {
            Some(v) => v.0.clone(),
            None => ConceptVocabulary::numbered(rows),
        };
        *out = Box::into_raw(Box::new(SposeEmbedding(Embedding::new(names, array)?)));
        Ok(())
    })
}

/// # Safety
/// `emb` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_save(
    emb: *const SposeEmbedding,
    path: *const c_char,
) -> SposeStatus {
    guard(|| {
        let emb = ref_arg(emb, "emb")?;
        io::save_embedding(&emb.0, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of concepts; 0 for null.
///
/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_rows(emb: *const SposeEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.0.n_concepts())
}

/// Number of dimensions; 0 for null.
///
/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_cols(emb: *const SposeEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.0.n_dims())
}

/// # Safety
/// `emb` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_get(
    emb: *const SposeEmbedding,
    row: usize,
    col: usize,
    out: *mut f64,
) -> SposeStatus {
    guard(|| {
        let emb = ref_arg(emb, "emb")?;
        let out = out_arg(out, "out")?;
        *out = *emb
            .0
            .values()
            .get((row, col))
            .ok_or_else(|| Failure::Arg(format!("({row}, {col}) is outside the embedding")))?;
        Ok(())
    })
}

/// Copies all values row-major into `buf`, which must hold `rows * cols` doubles.
///
/// # Safety
/// `emb` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_copy_values(
    emb: *const SposeEmbedding,
    buf: *mut f64,
    len: usize,
) -> SposeStatus {
    guard(|| {
        let emb = ref_arg(emb, "emb")?;
        let buf = out_arg(buf, "buf")?;
        let values = emb.0.values();
        if len != values.len() {
            return Err(Failure::Arg(format!(
                "buffer holds {len} values, embedding has {}",
                values.len()
            )));
        }
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (d, s) in dst.iter_mut().zip(values.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `emb` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spose_embedding_free(emb: *mut SposeEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

// ---------------------------------------------------------------------------
// model and evaluation

/// Choice probabilities `(p12, p13, p23)` for three pair similarities.
///
/// # Safety
/// `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn spose_triplet_probabilities(
    s12: f64,
    s13: f64,
    s23: f64,
    out: *mut f64,
) -> SposeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = model::triplet_probabilities(s12, s13, s23)?.as_array();
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&p);
        Ok(())
    })
}

/// Sum of log choice probabilities of `data` under `emb`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spose_log_likelihood(
    emb: *const SposeEmbedding,
    data: *const SposeDataset,
    out: *mut f64,
) -> SposeStatus {
    guard(|| {
        let (emb, data, out) = (
            ref_arg(emb, "emb")?,
            ref_arg(data, "data")?,
            out_arg(out, "out")?,
        );
        *out = model::dataset_log_likelihood(&emb.0, &data.0)?;
        Ok(())
    })
}

/// Fraction of judgments whose chosen pair is the model's most probable pair.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spose_accuracy(
    emb: *const SposeEmbedding,
    data: *const SposeDataset,
    out: *mut f64,
) -> SposeStatus {
    guard(|| {
        let (emb, data, out) = (
            ref_arg(emb, "emb")?,
            ref_arg(data, "data")?,
            out_arg(out, "out")?,
        );
        *out = evaluation::accuracy(&emb.0, &data.0)?;
        Ok(())
    })
}

/// Most probable pair of a triplet: writes the two concept indices chosen as
/// most similar, in ascending order.
///
/// # Safety
/// `emb` must be live; `out_a`, `out_b` writable.
#[no_mangle]
pub unsafe extern "C" fn spose_predict_choice(
    emb: *const SposeEmbedding,
    i: usize,
    j: usize,
    k: usize,
    out_a: *mut usize,
    out_b: *mut usize,
) -> SposeStatus {
    guard(|| {
        let emb = ref_arg(emb, "emb")?;
        let (out_a, out_b) = (out_arg(out_a, "out_a")?, out_arg(out_b, "out_b")?);
        let pair = evaluation::predict_choice(&emb.0, (i, j, k))?;
        let mut t = [i, j, k];
        t.sort_unstable();
        let (a, b) = pair.positions();
        *out_a = t[a];
        *out_b = t[b];
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// training

fn default_grid() -> &'static [f64] {
    static GRID: OnceLock<Vec<f64>> = OnceLock::new();
    GRID.get_or_init(|| TrainConfig::default().lambda_grid)
}

/// Default settings; `lambda_grid` points at static storage.
#[no_mangle]
pub extern "C" fn spose_train_config_default() -> SposeTrainConfig {
    let d = TrainConfig::default();
    let grid = default_grid();
    SposeTrainConfig {
        lambda_grid: grid.as_ptr(),
        n_lambda: grid.len(),
        epochs: d.epochs,
        learning_rate: d.learning_rate,
        init_dims: d.init_dims,
        prune_threshold: d.prune_threshold,
        split_fraction: d.split_fraction,
        batch_size: d.batch_size,
        seed: d.seed,
    }
}

/// Regularization search, retraining and pruning. Writes a new embedding
/// handle and, if `out_lambda` is non-null, the selected penalty.
///
/// # Safety
/// `data` and `config` must be valid; `config->lambda_grid` null or pointing
/// at `n_lambda` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spose_train(
    data: *const SposeDataset,
    config: *const SposeTrainConfig,
    out: *mut *mut SposeEmbedding,
    out_lambda: *mut f64,
) -> SposeStatus {
    guard(|| {
        let data = ref_arg(data, "data")?;
        let c = ref_arg(config, "config")?;
        let out = out_arg(out, "out")?;
        let lambda_grid = if c.lambda_grid.is_null() {
            default_grid().to_vec()
        } else {
            std::slice::from_raw_parts(c.lambda_grid, c.n_lambda).to_vec()
        };
        let config = TrainConfig {
            lambda_grid,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            init_dims: c.init_dims,
            prune_threshold: c.prune_threshold,
            split_fraction: c.split_fraction,
            batch_size: c.batch_size,
            seed: c.seed,
        };
        let (emb, report) = training::train_full(&data.0, &config)?;
        if !out_lambda.is_null() {
            *out_lambda = report.selected_lambda;
        }
        *out = Box::into_raw(Box::new(SposeEmbedding(emb)));
        Ok(())
    })
}
