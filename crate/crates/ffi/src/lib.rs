//! C ABI for embedding the classifier in other languages.
//!
//! The surface is a single opaque pipeline handle created from paths to a
//! checkpoint and its companion files. All functions return a status code
//! mirroring the CLI exit codes; the last failure message is retrievable as
//! a string. No function panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use triage::corpusgraph::CorpusGraph;
use triage::dataset::{LabelVector, LabelVocabulary};
use triage::diffcore::ParamStore;
use triage::encoder::{load_imported_embeddings, EncoderKind};
use triage::error::{Error, ErrorClass};
use triage::preprocess::{
    clean_and_tokenize, spot_entities, EmojiMap, Gazetteer, ProcessedTweet, Stoplist,
};
use triage::relnet::{model_forward, Model};
use triage::train::{model_from_checkpoint, Checkpoint};

/// Status codes shared with the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriageStatus {
    TriageOk = 0,
    TriageUsageError = 2,
    TriageDataError = 3,
    TriageNumericError = 4,
    TriageFormatError = 5,
}

fn status_of(err: &Error) -> TriageStatus {
    match err.class() {
        ErrorClass::Usage => TriageStatus::TriageUsageError,
        ErrorClass::Data => TriageStatus::TriageDataError,
        ErrorClass::Numeric => TriageStatus::TriageNumericError,
        ErrorClass::Format => TriageStatus::TriageFormatError,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn fail(err: &Error) -> TriageStatus {
    set_last_error(err.to_string());
    status_of(err)
}

/// Loaded model plus the preprocessing assets needed to score raw text.
pub struct TriagePipeline {
    model: Model,
    store: ParamStore,
    vocab: LabelVocabulary,
    stoplist: Stoplist,
    emoji: EmojiMap,
    gazetteer: Gazetteer,
}

unsafe fn opt_path(raw: *const c_char) -> Result<Option<PathBuf>, Error> {
    if raw.is_null() {
        return Ok(None);
    }
    let s = CStr::from_ptr(raw)
        .to_str()
        .map_err(|_| Error::Usage("path is not valid UTF-8".into()))?;
    Ok(Some(PathBuf::from(s)))
}

unsafe fn req_str<'a>(raw: *const c_char, what: &str) -> Result<&'a str, Error> {
    if raw.is_null() {
        return Err(Error::Usage(format!("{what} must not be null")));
    }
    CStr::from_ptr(raw)
        .to_str()
        .map_err(|_| Error::Usage(format!("{what} is not valid UTF-8")))
}

fn open_pipeline(
    checkpoint: PathBuf,
    graph: Option<PathBuf>,
    imported: Option<PathBuf>,
    stoplist: Option<PathBuf>,
    emoji: Option<PathBuf>,
    gazetteer: Option<PathBuf>,
) -> Result<TriagePipeline, Error> {
    let ckpt = Checkpoint::load(&checkpoint)?;
    let graph = match graph {
        Some(path) => Some(CorpusGraph::load(&path)?),
        None => None,
    };
    let imported = match (ckpt.encoder_kind, imported) {
        (EncoderKind::Imported, Some(path)) => Some(load_imported_embeddings(&path)?),
        (EncoderKind::Imported, None) => {
            let path = ckpt
                .encoder_source
                .clone()
                .map(PathBuf::from)
                .ok_or_else(|| {
                    Error::Usage("checkpoint uses imported embeddings: pass their path".into())
                })?;
            Some(load_imported_embeddings(&path)?)
        }
        _ => None,
    };
    let (model, store) = model_from_checkpoint(&ckpt, graph.as_ref(), imported)?;
    let stoplist = match stoplist {
        Some(path) => Stoplist::load(&path)?,
        None => Stoplist::bundled(),
    };
    let emoji = match emoji {
        Some(path) => EmojiMap::load(&path)?,
        None => EmojiMap::empty(),
    };
    let gazetteer = match gazetteer {
        Some(path) => Gazetteer::load(&path, &stoplist)?,
        None => Gazetteer::empty(),
    };
    Ok(TriagePipeline {
        model,
        store,
        vocab: ckpt.vocab,
        stoplist,
        emoji,
        gazetteer,
    })
}

/// Open a pipeline from a checkpoint and companion files. `graph_path` is
/// required unless the checkpoint is encoder-only; the remaining paths may
/// be null for bundled/empty defaults. On success writes a handle to `out`.
///
/// # Safety
/// `checkpoint_path` and `out` must be valid pointers; path arguments must
/// be null or valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn triage_pipeline_open(
    checkpoint_path: *const c_char,
    graph_path: *const c_char,
    imported_path: *const c_char,
    stoplist_path: *const c_char,
    emoji_map_path: *const c_char,
    gazetteer_path: *const c_char,
    out: *mut *mut TriagePipeline,
) -> TriageStatus {
    if out.is_null() {
        set_last_error("out handle must not be null".into());
        return TriageStatus::TriageUsageError;
    }
    *out = ptr::null_mut();
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<TriagePipeline, Error> {
        let checkpoint = PathBuf::from(req_str(checkpoint_path, "checkpoint path")?);
        open_pipeline(
            checkpoint,
            opt_path(graph_path)?,
            opt_path(imported_path)?,
            opt_path(stoplist_path)?,
            opt_path(emoji_map_path)?,
            opt_path(gazetteer_path)?,
        )
    }));
    match result {
        Ok(Ok(pipeline)) => {
            *out = Box::into_raw(Box::new(pipeline));
            TriageStatus::TriageOk
        }
        Ok(Err(e)) => fail(&e),
        Err(_) => {
            set_last_error("internal panic".into());
            TriageStatus::TriageNumericError
        }
    }
}

/// Release a pipeline handle. Null is a no-op.
///
/// # Safety
/// `pipeline` must be null or a pointer returned by `triage_pipeline_open`
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn triage_pipeline_free(pipeline: *mut TriagePipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Number of labels the pipeline scores.
///
/// # Safety
/// `pipeline` must be a live handle from `triage_pipeline_open`.
#[no_mangle]
pub unsafe extern "C" fn triage_pipeline_num_labels(pipeline: *const TriagePipeline) -> usize {
    if pipeline.is_null() {
        return 0;
    }
    (*pipeline).vocab.k()
}

/// Name of label `index` as a newly allocated string (free with
/// `triage_string_free`), or null when out of range.
///
/// # Safety
/// `pipeline` must be a live handle from `triage_pipeline_open`.
#[no_mangle]
pub unsafe extern "C" fn triage_pipeline_label_name(
    pipeline: *const TriagePipeline,
    index: usize,
) -> *mut c_char {
    if pipeline.is_null() {
        return ptr::null_mut();
    }
    let vocab = &(*pipeline).vocab;
    if index >= vocab.k() {
        return ptr::null_mut();
    }
    CString::new(vocab.name(index))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Score one tweet. Writes `num_labels` probabilities into `probs_out` and,
/// when `priority_out` is non-null, the maximum probability as a priority
/// score. For checkpoints with an imported encoder the `tweet_id` selects
/// the stored vector.
///
/// # Safety
/// `pipeline` must be a live handle; `tweet_id` and `text` must be valid
/// NUL-terminated strings; `probs_out` must point to at least
/// `triage_pipeline_num_labels(pipeline)` doubles.
#[no_mangle]
pub unsafe extern "C" fn triage_pipeline_predict(
    pipeline: *const TriagePipeline,
    tweet_id: *const c_char,
    text: *const c_char,
    probs_out: *mut f64,
    priority_out: *mut f64,
) -> TriageStatus {
    if pipeline.is_null() || probs_out.is_null() {
        set_last_error("pipeline and probs_out must not be null".into());
        return TriageStatus::TriageUsageError;
    }
    let pipeline = &*pipeline;
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<Vec<f64>, Error> {
        let id = req_str(tweet_id, "tweet id")?;
        let text = req_str(text, "tweet text")?;
        let tokens = clean_and_tokenize(text, &pipeline.stoplist, &pipeline.emoji);
        let entities = spot_entities(&tokens, &pipeline.gazetteer);
        let tweet = ProcessedTweet {
            id: id.to_string(),
            tokens,
            entities,
            label_vector: LabelVector::zeros(pipeline.vocab.k()),
            priority: None,
        };
        model_forward(&pipeline.model, &pipeline.store, &tweet)
    }));
    match result {
        Ok(Ok(probs)) => {
            for (i, p) in probs.iter().enumerate() {
                *probs_out.add(i) = *p;
            }
            if !priority_out.is_null() {
                *priority_out = probs.iter().copied().fold(0.0, f64::max);
            }
            TriageStatus::TriageOk
        }
        Ok(Err(e)) => fail(&e),
        Err(_) => {
            set_last_error("internal panic".into());
            TriageStatus::TriageNumericError
        }
    }
}

/// The most recent error message on this thread as a newly allocated string
/// (free with `triage_string_free`), or null when no error has occurred.
#[no_mangle]
pub extern "C" fn triage_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|msg| msg.clone().into_raw())
            .unwrap_or(ptr::null_mut())
    })
}

/// Free a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer returned by a `triage_*` function that
/// allocates, and must not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn triage_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
