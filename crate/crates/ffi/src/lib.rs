//! C ABI over the `paae` library.
//!
//! Models are opaque handles owned by the caller and released with
//! [`paae_model_free`]. Every fallible call returns a [`PaaeStatus`]; on
//! failure [`paae_last_error`] describes the problem for the calling thread.
//! Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use paae::metrics::{roc_auc_macro, wilcoxon_rank_sum};
use paae::models::{fit, load_checkpoint, save_checkpoint, ArchitectureConfig, Model, PathwayMask, TrainConfig};
use paae::ndcore::{Matrix, Rng};
use paae::pipeline::{extract_representation, Space};
use paae::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaaeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Shape = 4,
    Data = 5,
    Parse = 6,
    Io = 7,
    Serde = 8,
    Numeric = 9,
    Diverged = 10,
    Panic = 11,
}

impl From<&Error> for PaaeStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape { .. } => PaaeStatus::Shape,
            Error::InvalidArgument(_) => PaaeStatus::InvalidArgument,
            Error::Numeric(_) => PaaeStatus::Numeric,
            Error::Diverged { .. } => PaaeStatus::Diverged,
            Error::Config(_) => PaaeStatus::Config,
            Error::Data(_) => PaaeStatus::Data,
            Error::Parse { .. } => PaaeStatus::Parse,
            Error::Io { .. } => PaaeStatus::Io,
            Error::Serde(_) => PaaeStatus::Serde,
        }
    }
}

/// Representation to extract from a model.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaaeSpace {
    Latent = 0,
    Mean = 1,
    PathwayActivity = 2,
}

impl From<PaaeSpace> for Space {
    fn from(s: PaaeSpace) -> Self {
        match s {
            PaaeSpace::Latent => Space::Z,
            PaaeSpace::Mean => Space::Mu,
            PaaeSpace::PathwayActivity => Space::A,
        }
    }
}

/// Opaque model handle.
pub struct PaaeModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(PaaeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PaaeStatus::from(&e), e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(PaaeStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PaaeStatus::InvalidArgument, msg.into())
}

/// Runs `body`, records any failure or panic, and maps it to a status.
fn guard(body: impl FnOnce() -> Outcome) -> PaaeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PaaeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            PaaeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_arg<'a>(p: *const PaaeModel) -> Result<&'a Model, Failure> {
    p.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn matrix_arg(data: *const f64, rows: usize, cols: usize) -> Result<Matrix, Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| invalid("matrix size overflows"))?;
    Ok(Matrix::new(rows, cols, slice_arg(data, len, "data")?.to_vec())?)
}

/// Copies `m` into a caller buffer of `capacity` doubles.
unsafe fn write_matrix(m: &Matrix, out: *mut f64, capacity: usize) -> Outcome {
    if out.is_null() {
        return Err(null("out"));
    }
    if capacity < m.len() {
        return Err(invalid(format!("output buffer holds {capacity} values, {} needed", m.len())));
    }
    ptr::copy_nonoverlapping(m.as_slice().as_ptr(), out, m.len());
    Ok(())
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn paae_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn paae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an untrained model. `arch_json` is an architecture config as JSON;
/// pathway `j` lists `mask_lengths[j]` gene indices, concatenated in
/// `mask_indices`. Pathway names are `P0`, `P1`, ...
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paae_model_build(
    arch_json: *const c_char,
    gene_count: usize,
    mask_indices: *const usize,
    mask_lengths: *const usize,
    n_masks: usize,
    seed: u64,
    out: *mut *mut PaaeModel,
) -> PaaeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let arch: ArchitectureConfig = serde_json::from_str(str_arg(arch_json, "arch_json")?)
            .map_err(|e| Failure(PaaeStatus::Serde, e.to_string()))?;
        let lengths = slice_arg(mask_lengths, n_masks, "mask_lengths")?;
        let total: usize = lengths.iter().sum();
        let indices = slice_arg(mask_indices, total, "mask_indices")?;
        let mut masks = Vec::with_capacity(n_masks);
        let mut start = 0;
        for (j, &len) in lengths.iter().enumerate() {
            masks.push(PathwayMask::new(format!("P{j}"), indices[start..start + len].to_vec(), gene_count)?);
            start += len;
        }
        let model = Model::build(arch, gene_count, masks, &mut Rng::new(seed))?;
        *out = Box::into_raw(Box::new(PaaeModel { model }));
        Ok(())
    })
}

/// Loads a checkpoint written by the library or the `paae` binary.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paae_model_load(path: *const c_char, out: *mut *mut PaaeModel) -> PaaeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_checkpoint(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(PaaeModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn paae_model_save(model: *const PaaeModel, path: *const c_char) -> PaaeStatus {
    guard(|| Ok(save_checkpoint(model_arg(model)?, Path::new(str_arg(path, "path")?))?))
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn paae_model_free(model: *mut PaaeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains in place on `rows x gene_count` data. `train_json` is a training
/// config as JSON (empty object for defaults). The final epoch's loss is
/// written to `final_loss` when it is not NULL.
///
/// # Safety
/// `model` must come from this library; `x` must hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn paae_model_fit(
    model: *mut PaaeModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    train_json: *const c_char,
    final_loss: *mut f64,
) -> PaaeStatus {
    guard(|| {
        let handle = model.as_mut().ok_or_else(|| null("model"))?;
        let config: TrainConfig = serde_json::from_str(str_arg(train_json, "train_json")?)
            .map_err(|e| Failure(PaaeStatus::Serde, e.to_string()))?;
        let x = matrix_arg(x, rows, cols)?;
        let history = fit(&mut handle.model, &x, &config, &mut Rng::new(config.seed))?;
        if let (Some(out), Some(&last)) = (final_loss.as_mut(), history.loss.last()) {
            *out = last;
        }
        Ok(())
    })
}

/// Zero for a NULL handle.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn paae_model_param_count(model: *const PaaeModel) -> usize {
    model.as_ref().map_or(0, |h| h.model.param_count())
}

/// Zero for a NULL handle.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn paae_model_gene_count(model: *const PaaeModel) -> usize {
    model.as_ref().map_or(0, |h| h.model.gene_count())
}

/// Zero for a NULL handle.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn paae_model_latent_dim(model: *const PaaeModel) -> usize {
    model.as_ref().map_or(0, |h| h.model.latent_dim())
}

/// Zero for dense models and NULL handles.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn paae_model_pathway_count(model: *const PaaeModel) -> usize {
    model.as_ref().map_or(0, |h| h.model.pathway_names().len())
}

/// Writes the `space` representation of `rows` samples into `out`
/// (`rows * width` doubles, width reported through `out_cols`).
///
/// # Safety
/// `x` must hold `rows * cols` doubles and `out` `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn paae_model_extract(
    model: *const PaaeModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    space: PaaeSpace,
    out: *mut f64,
    capacity: usize,
    out_cols: *mut usize,
) -> PaaeStatus {
    guard(|| {
        let rep = extract_representation(model_arg(model)?, &matrix_arg(x, rows, cols)?, space.into())?;
        write_matrix(&rep, out, capacity)?;
        if let Some(c) = out_cols.as_mut() {
            *c = rep.cols();
        }
        Ok(())
    })
}

/// Deterministic reconstruction (`rows * cols` doubles into `out`).
///
/// # Safety
/// `x` must hold `rows * cols` doubles and `out` `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn paae_model_reconstruct(
    model: *const PaaeModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    capacity: usize,
) -> PaaeStatus {
    guard(|| {
        let x = matrix_arg(x, rows, cols)?;
        let recon = model_arg(model)?.forward(&x, false, &mut Rng::new(0))?.x_hat;
        write_matrix(&recon, out, capacity)
    })
}

/// Macro one-vs-rest ROC AUC of `n x k` row-major scores.
///
/// # Safety
/// `labels` must hold `n` entries and `scores` `n * k`.
#[no_mangle]
pub unsafe extern "C" fn paae_roc_auc_macro(
    labels: *const usize,
    scores: *const f64,
    n: usize,
    k: usize,
    out: *mut f64,
) -> PaaeStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = roc_auc_macro(slice_arg(labels, n, "labels")?, &matrix_arg(scores, n, k)?)?;
        Ok(())
    })
}

/// Two-sided Wilcoxon rank-sum test; `statistic` (Mann-Whitney U of `a`) may be NULL.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` doubles.
#[no_mangle]
pub unsafe extern "C" fn paae_wilcoxon_rank_sum(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    statistic: *mut f64,
    p_value: *mut f64,
) -> PaaeStatus {
    guard(|| {
        let p_out = p_value.as_mut().ok_or_else(|| null("p_value"))?;
        let r = wilcoxon_rank_sum(slice_arg(a, na, "a")?, slice_arg(b, nb, "b")?)?;
        *p_out = r.p_value;
        if let Some(s) = statistic.as_mut() {
            *s = r.statistic;
        }
        Ok(())
    })
}
