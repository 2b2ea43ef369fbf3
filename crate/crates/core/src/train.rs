//! Supervised training loop: Adam over mini-batch BCE, per-epoch validation
//! weighted F1, early stopping on patience, binary checkpoints and an
//! exhaustive grid-search harness.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::codec::{Reader, Writer};
use crate::corpusgraph::CorpusGraph;
use crate::dataset::{DatasetSplit, LabelVector, LabelVocabulary};
use crate::diffcore::{adam_step, AdamParams, Binder, ParamStore, Tape, Tensor2};
use crate::encoder::{EncoderKind, EncoderSpec, ImportedEmbeddings, TokenVocab};
use crate::error::{Error, Result};
use crate::gat::GatConfig;
use crate::metrics::weighted_f1;
use crate::preprocess::ProcessedTweet;
use crate::relnet::{Model, ModelConfig, Variant};

const CHECKPOINT_MAGIC: &[u8; 4] = b"TRCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Optimization hyperparameters; defaults follow the published training
/// setup (200 epochs, batch 128, Adam at 2e-5, dropout 0.25).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// Consecutive epochs without validation improvement before stopping;
    /// 0 stops after the first epoch.
    pub patience: usize,
    pub seed: u64,
    pub variant: Variant,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 2e-5,
            dropout: 0.25,
            patience: 10,
            seed: 42,
            variant: Variant::Full,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        if !(0.0 < self.threshold && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold {} outside (0,1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_f1w: f64,
}

/// History file: CSV `epoch,train_loss,valid_loss,valid_f1w`.
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,valid_loss,valid_f1w\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.train_loss, h.valid_loss, h.valid_f1w
        ));
    }
    out
}

pub fn write_history(history: &[EpochStats], path: &Path) -> Result<()> {
    fs::write(path, history_to_csv(history)).map_err(|e| Error::io(path, e))
}

/// Everything needed to restore the best model state: vocabulary, encoder
/// description, architecture sizes, parameter tensors and the fingerprint of
/// the graph the model was trained against (absent for the encoder-only
/// variant, which never consumes a graph).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: LabelVocabulary,
    pub variant: Variant,
    pub encoder_kind: EncoderKind,
    pub encoder_dim: usize,
    pub encoder_source: Option<String>,
    pub token_vocab: Vec<String>,
    pub gat: GatConfig,
    pub relnet_hidden: usize,
    pub params: Vec<(String, Tensor2)>,
    pub graph_fingerprint: Option<u64>,
    pub best_valid_f1: f64,
    pub step_count: u64,
}

fn variant_to_u8(v: Variant) -> u8 {
    match v {
        Variant::Full => 0,
        Variant::EncoderOnly => 1,
        Variant::GraphOnly => 2,
    }
}

fn variant_from_u8(v: u8, path: &Path) -> Result<Variant> {
    match v {
        0 => Ok(Variant::Full),
        1 => Ok(Variant::EncoderOnly),
        2 => Ok(Variant::GraphOnly),
        _ => Err(Error::CorruptFile {
            path: path.into(),
            message: format!("bad variant tag {v}"),
        }),
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        w.string_slice(self.vocab.labels());
        w.u8(variant_to_u8(self.variant));
        w.u8(match self.encoder_kind {
            EncoderKind::Imported => 0,
            EncoderKind::TrainableMeanpool => 1,
        });
        w.u64(self.encoder_dim as u64);
        w.bool(self.encoder_source.is_some());
        if let Some(src) = &self.encoder_source {
            w.string(src);
        }
        w.string_slice(&self.token_vocab);
        w.u64(self.gat.hidden as u64);
        w.u64(self.gat.heads1 as u64);
        w.u64(self.gat.heads2 as u64);
        w.u64(self.gat.out_dim as u64);
        w.f64(self.gat.attn_slope);
        w.f64(self.gat.dropout);
        w.bool(self.gat.weighted_scores);
        w.u64(self.relnet_hidden as u64);
        w.bool(self.graph_fingerprint.is_some());
        w.u64(self.graph_fingerprint.unwrap_or(0));
        w.f64(self.best_valid_f1);
        w.u64(self.step_count);
        w.u64(self.params.len() as u64);
        for (name, tensor) in &self.params {
            w.string(name);
            w.u64(tensor.rows() as u64);
            w.u64(tensor.cols() as u64);
            w.f64_slice(tensor.data());
        }
        w.write_file(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(path, &bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let vocab = LabelVocabulary::new(r.string_vec()?)?;
        let variant = variant_from_u8(r.u8()?, path)?;
        let encoder_kind = match r.u8()? {
            0 => EncoderKind::Imported,
            1 => EncoderKind::TrainableMeanpool,
            v => {
                return Err(Error::CorruptFile {
                    path: path.into(),
                    message: format!("bad encoder kind tag {v}"),
                })
            }
        };
        let encoder_dim = r.u64()? as usize;
        let encoder_source = if r.bool()? { Some(r.string()?) } else { None };
        let token_vocab = r.string_vec()?;
        let gat = GatConfig {
            hidden: r.u64()? as usize,
            heads1: r.u64()? as usize,
            heads2: r.u64()? as usize,
            out_dim: r.u64()? as usize,
            attn_slope: r.f64()?,
            dropout: r.f64()?,
            weighted_scores: r.bool()?,
        };
        let relnet_hidden = r.u64()? as usize;
        let has_fp = r.bool()?;
        let fp = r.u64()?;
        let best_valid_f1 = r.f64()?;
        let step_count = r.u64()?;
        let n_params = r.u64()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let data = r.f64_vec()?;
            if data.len() != rows * cols {
                return Err(Error::CorruptFile {
                    path: path.into(),
                    message: format!("parameter {name} has wrong element count"),
                });
            }
            params.push((name, Tensor2::from_vec(rows, cols, data)));
        }
        r.expect_end()?;
        Ok(Checkpoint {
            vocab,
            variant,
            encoder_kind,
            encoder_dim,
            encoder_source,
            token_vocab,
            gat,
            relnet_hidden,
            params,
            graph_fingerprint: has_fp.then_some(fp),
            best_valid_f1,
            step_count,
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            encoder: EncoderSpec {
                kind: self.encoder_kind,
                d: self.encoder_dim,
                source: self.encoder_source.clone().map(PathBuf::from),
            },
            gat: self.gat,
            relnet_hidden: self.relnet_hidden,
        }
    }
}

/// Rebuild a model and its parameter store from a checkpoint. When the
/// checkpoint carries a graph fingerprint the supplied graph must match it.
pub fn model_from_checkpoint(
    ckpt: &Checkpoint,
    graph: Option<&CorpusGraph>,
    imported: Option<ImportedEmbeddings>,
) -> Result<(Model, ParamStore)> {
    if let (Some(expected), Some(g)) = (ckpt.graph_fingerprint, graph) {
        let found = g.fingerprint();
        if found != expected {
            return Err(Error::FingerprintMismatch { expected, found });
        }
    }
    if let (EncoderKind::Imported, Some(emb)) = (ckpt.encoder_kind, &imported) {
        if emb.dimension() != ckpt.encoder_dim {
            return Err(Error::EmbeddingDimension {
                expected: ckpt.encoder_dim,
                found: emb.dimension(),
                entry: "imported embeddings".into(),
            });
        }
    }
    let token_vocab = (!ckpt.token_vocab.is_empty())
        .then(|| TokenVocab::from_tokens(ckpt.token_vocab.clone()));
    let model = Model::build(
        &ckpt.model_config(),
        &ckpt.vocab,
        token_vocab,
        imported,
        graph,
    )?;
    let mut store = ParamStore::new();
    for (name, tensor) in &ckpt.params {
        store.insert(name, tensor.clone());
    }
    store.set_step(ckpt.step_count);
    Ok((model, store))
}

/// Immutable bundle of training inputs.
pub struct TrainInputs<'a> {
    pub tweets: &'a [ProcessedTweet],
    pub split: &'a DatasetSplit,
    pub vocab: &'a LabelVocabulary,
    pub graph: Option<&'a CorpusGraph>,
    pub imported: Option<ImportedEmbeddings>,
}

fn resolve<'a>(
    tweets: &'a [ProcessedTweet],
    ids: &[String],
) -> Result<Vec<&'a ProcessedTweet>> {
    let by_id: HashMap<&str, &ProcessedTweet> =
        tweets.iter().map(|t| (t.id.as_str(), t)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidData(format!("split references unknown id {id}")))
        })
        .collect()
}

fn targets_tensor(tweets: &[&ProcessedTweet], k: usize) -> Tensor2 {
    let mut data = Vec::with_capacity(tweets.len() * k);
    for t in tweets {
        data.extend(t.label_vector.bits.iter().map(|&b| b as f64));
    }
    Tensor2::from_vec(tweets.len(), k, data)
}

fn thresholded(probs: &Tensor2, threshold: f64) -> Vec<LabelVector> {
    (0..probs.rows())
        .map(|r| LabelVector {
            bits: probs
                .row(r)
                .iter()
                .map(|&p| if p >= threshold { 1 } else { 0 })
                .collect(),
        })
        .collect()
}

/// Train until the epoch budget or `patience` non-improving validation
/// epochs, whichever comes first. Returns the checkpoint of the best
/// validation state and the full per-epoch history.
pub fn train(
    inputs: &TrainInputs,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    config.validate()?;
    let mcfg = ModelConfig {
        variant: config.variant,
        gat: GatConfig {
            dropout: config.dropout,
            ..model_config.gat
        },
        ..model_config.clone()
    };
    let train_set = resolve(inputs.tweets, &inputs.split.train)?;
    let valid_set = resolve(inputs.tweets, &inputs.split.valid)?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::InvalidData(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let k = inputs.vocab.k();
    let token_vocab = (mcfg.variant.needs_encoder()
        && mcfg.encoder.kind == EncoderKind::TrainableMeanpool)
        .then(|| TokenVocab::from_corpus(train_set.iter().copied()));
    let model = Model::build(
        &mcfg,
        inputs.vocab,
        token_vocab.clone(),
        inputs.imported.clone(),
        inputs.graph,
    )?;

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::new();
    model.init_params(&mut store, &mut rng);
    let hp = AdamParams::with_lr(config.learning_rate);

    let valid_targets = targets_tensor(&valid_set, k);
    let valid_truths: Vec<LabelVector> =
        valid_set.iter().map(|t| t.label_vector.clone()).collect();

    let mut history = Vec::new();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_params: Vec<(String, Tensor2)> = Vec::new();
    let mut best_step = 0u64;
    let mut bad_epochs = 0usize;
    let mut global_step = 0u64;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&ProcessedTweet> = chunk.iter().map(|&i| train_set[i]).collect();
            let targets = Rc::new(targets_tensor(&batch, k));
            store.zero_grads();
            let mut tape = Tape::new();
            let mut binder = Binder::new();
            let probs = model.forward_batch(&mut tape, &batch, &store, &mut binder, true, &mut rng)?;
            let loss = tape.bce_loss(probs, targets)?;
            let loss_val = tape.value(loss).get(0, 0);
            if !loss_val.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: global_step + 1,
                });
            }
            tape.backward(loss)?;
            binder.harvest(&tape, &mut store)?;
            global_step += 1;
            adam_step(&mut store, &hp, global_step)?;
            epoch_loss += loss_val * batch.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let valid_probs = model.infer_batch(&valid_set, &store)?;
        let valid_loss = crate::diffcore::bce_loss(&valid_probs, &valid_targets)?;
        let preds = thresholded(&valid_probs, config.threshold);
        let (valid_f1w, _) = weighted_f1(&preds, &valid_truths, inputs.vocab)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
            valid_f1w,
        });

        if valid_f1w > best_f1 {
            best_f1 = valid_f1w;
            best_params = store.export();
            best_step = global_step;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
        }
        if bad_epochs >= config.patience {
            break;
        }
    }

    let checkpoint = Checkpoint {
        vocab: inputs.vocab.clone(),
        variant: mcfg.variant,
        encoder_kind: mcfg.encoder.kind,
        encoder_dim: model
            .encoder()
            .map(|e| e.dimension())
            .unwrap_or(mcfg.encoder.d),
        encoder_source: mcfg
            .encoder
            .source
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned()),
        token_vocab: token_vocab
            .map(|tv| tv.tokens().to_vec())
            .unwrap_or_default(),
        gat: mcfg.gat,
        relnet_hidden: mcfg.relnet_hidden,
        params: best_params,
        graph_fingerprint: model.graph_fingerprint(),
        best_valid_f1: best_f1,
        step_count: best_step,
    };
    Ok((checkpoint, history))
}

/// One grid-search evaluation: the config, its best validation F1 (negative
/// infinity when the run failed) and the failure message if any.
#[derive(Debug, Clone)]
pub struct GridEntry {
    pub config: TrainConfig,
    pub valid_f1: f64,
    pub error: Option<String>,
}

/// Exhaustive sweep over configs. The leaderboard is sorted by descending
/// validation F1 with ties (and failures) keeping grid order; the best
/// config is the leaderboard head.
pub fn grid_search(
    grid: &[TrainConfig],
    inputs: &TrainInputs,
    model_config: &ModelConfig,
) -> Result<(TrainConfig, Vec<GridEntry>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty config grid".into()));
    }
    let mut leaderboard: Vec<GridEntry> = grid
        .iter()
        .map(|config| match train(inputs, model_config, config) {
            Ok((ckpt, _)) => GridEntry {
                config: config.clone(),
                valid_f1: ckpt.best_valid_f1,
                error: None,
            },
            Err(e) => GridEntry {
                config: config.clone(),
                valid_f1: f64::NEG_INFINITY,
                error: Some(e.to_string()),
            },
        })
        .collect();
    leaderboard.sort_by(|a, b| b.valid_f1.partial_cmp(&a.valid_f1).unwrap());
    Ok((leaderboard[0].config.clone(), leaderboard))
}
