//! Relation scoring head and full-model assembly.
//!
//! Each label is scored independently: the tweet embedding is concatenated
//! with the label embedding and pushed through a shared two-layer perceptron
//! ending in a sigmoid, so probabilities do not compete across labels.
//! Ablation variants reuse the same machinery with one component removed.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::corpusgraph::{CorpusGraph, NodeKind};
use crate::dataset::{LabelVector, LabelVocabulary};
use crate::diffcore::{Binder, ParamStore, Tape, Tensor2, VarId};
use crate::encoder::{Encoder, EncoderKind, EncoderSpec, TokenVocab, TweetEmbedding};
use crate::error::{Error, Result};
use crate::gat::{self, GatConfig, GatStack, GraphSupport, LabelEmbeddings};
use crate::preprocess::ProcessedTweet;

pub const REL_W1: &str = "rel.w1";
pub const REL_B1: &str = "rel.b1";
pub const REL_W2: &str = "rel.w2";
pub const REL_B2: &str = "rel.b2";
pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";

/// Which parts of the pipeline feed the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    EncoderOnly,
    GraphOnly,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::EncoderOnly => "encoder-only",
            Variant::GraphOnly => "graph-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "encoder-only" => Ok(Variant::EncoderOnly),
            "graph-only" => Ok(Variant::GraphOnly),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant {other} (expected full, encoder-only or graph-only)"
            ))),
        }
    }

    pub fn needs_graph(self) -> bool {
        !matches!(self, Variant::EncoderOnly)
    }

    pub fn needs_encoder(self) -> bool {
        !matches!(self, Variant::GraphOnly)
    }
}

/// Two-layer perceptron weights of the relation head.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationParams {
    pub w1: Tensor2,
    pub b1: Tensor2,
    pub w2: Tensor2,
    pub b2: Tensor2,
}

/// Thresholded model output for one tweet.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub labels: LabelVector,
    /// System priority score: the maximum probability over the actionable
    /// labels (over all labels when no actionable set is configured).
    pub priority_score: f64,
}

/// Differentiable relation scoring: `tau` (B x d) against `iota` (k x f),
/// producing a (B x k) probability matrix.
pub fn relate_tape(
    tape: &mut Tape,
    tau: VarId,
    iota: VarId,
    w1: VarId,
    b1: VarId,
    w2: VarId,
    b2: VarId,
) -> Result<VarId> {
    let (batch, d) = tape.value(tau).shape();
    let (k, f) = tape.value(iota).shape();
    let expected_in = d + f;
    if tape.value(w1).cols() != expected_in {
        return Err(Error::Shape(format!(
            "relation w1 expects {} inputs, got {}",
            tape.value(w1).cols(),
            expected_in
        )));
    }
    // replicate tweets over labels and tile labels over tweets
    let mut sel_t = Tensor2::zeros(batch * k, batch);
    let mut sel_i = Tensor2::zeros(batch * k, k);
    for i in 0..batch {
        for j in 0..k {
            sel_t.set(i * k + j, i, 1.0);
            sel_i.set(i * k + j, j, 1.0);
        }
    }
    let sel_t = tape.leaf(sel_t);
    let sel_i = tape.leaf(sel_i);
    let t_rep = tape.matmul(sel_t, tau)?;
    let i_rep = tape.matmul(sel_i, iota)?;
    let z = tape.concat_cols(t_rep, i_rep)?;
    let w1_t = tape.transpose(w1);
    let pre = tape.matmul(z, w1_t)?;
    let pre = tape.add_row_broadcast(pre, b1)?;
    let hidden = tape.relu(pre);
    let w2_t = tape.transpose(w2);
    let out = tape.matmul(hidden, w2_t)?;
    let out = tape.add_row_broadcast(out, b2)?;
    let probs_col = tape.sigmoid(out);
    tape.reshape(probs_col, batch, k)
}

/// Forward-only relation scoring of one tweet embedding against all labels.
pub fn relate(
    tau: &TweetEmbedding,
    iota: &LabelEmbeddings,
    params: &RelationParams,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let t = tape.leaf(Tensor2::from_vec(1, tau.vector.len(), tau.vector.clone()));
    let i = tape.leaf(iota.matrix.clone());
    let w1 = tape.leaf(params.w1.clone());
    let b1 = tape.leaf(params.b1.clone());
    let w2 = tape.leaf(params.w2.clone());
    let b2 = tape.leaf(params.b2.clone());
    let probs = relate_tape(&mut tape, t, i, w1, b1, w2, b2)?;
    Ok(tape.value(probs).row(0).to_vec())
}

/// Threshold probabilities into a label vector and attach the priority score.
/// A probability exactly at the threshold counts as assigned.
pub fn predict(probs: &[f64], threshold: f64, actionable_indices: &[usize]) -> Result<Prediction> {
    if !(0.0..1.0).contains(&threshold) || threshold == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold} outside (0,1)"
        )));
    }
    let bits: Vec<u8> = probs
        .iter()
        .map(|&p| if p >= threshold { 1 } else { 0 })
        .collect();
    let pool: Vec<f64> = if actionable_indices.is_empty() {
        probs.to_vec()
    } else {
        actionable_indices
            .iter()
            .filter_map(|&i| probs.get(i).copied())
            .collect()
    };
    let priority_score = pool.into_iter().fold(0.0, f64::max);
    Ok(Prediction {
        probs: probs.to_vec(),
        labels: LabelVector { bits },
        priority_score,
    })
}

/// Everything needed to size and assemble a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder: EncoderSpec,
    pub gat: GatConfig,
    pub relnet_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            encoder: EncoderSpec::trainable(64),
            gat: GatConfig::default(),
            relnet_hidden: 128,
        }
    }
}

/// Graph-derived constants shared across batches.
struct GraphContext {
    support: GraphSupport,
    features: Tensor2,
    label_indices: Vec<usize>,
    word_nodes: HashMap<String, usize>,
    fingerprint: u64,
}

impl GraphContext {
    fn from_graph(graph: &CorpusGraph) -> Self {
        let word_nodes = graph
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Word)
            .map(|n| (n.name.clone(), n.index))
            .collect();
        GraphContext {
            support: GraphSupport::from_graph(graph),
            features: graph.features.clone(),
            label_indices: graph.label_indices.clone(),
            word_nodes,
            fingerprint: graph.fingerprint(),
        }
    }
}

/// A bound model: variant, components and shapes. Parameters live in a
/// separate [`ParamStore`] keyed by well-known names.
pub struct Model {
    pub variant: Variant,
    pub k: usize,
    pub relnet_hidden: usize,
    encoder: Option<Encoder>,
    gat: Option<GatStack>,
    graph: Option<GraphContext>,
}

impl Model {
    /// Assemble a model for training or inference.
    /// `token_vocab` feeds the trainable encoder; `imported` the imported one.
    pub fn build(
        config: &ModelConfig,
        vocab: &LabelVocabulary,
        token_vocab: Option<TokenVocab>,
        imported: Option<crate::encoder::ImportedEmbeddings>,
        graph: Option<&CorpusGraph>,
    ) -> Result<Model> {
        if vocab.k() == 0 {
            return Err(Error::InvalidData("label vocabulary is empty".into()));
        }
        let encoder = if config.variant.needs_encoder() {
            Some(match config.encoder.kind {
                EncoderKind::Imported => {
                    let emb = imported.ok_or_else(|| {
                        Error::InvalidParameter(
                            "imported encoder requires an embedding file".into(),
                        )
                    })?;
                    Encoder::imported(emb)
                }
                EncoderKind::TrainableMeanpool => {
                    let tv = token_vocab.ok_or_else(|| {
                        Error::InvalidParameter(
                            "trainable encoder requires a token vocabulary".into(),
                        )
                    })?;
                    Encoder::trainable(config.encoder.d, tv)
                }
            })
        } else {
            None
        };
        let (gat_stack, graph_ctx) = if config.variant.needs_graph() {
            let graph = graph.ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "variant {} requires a corpus graph",
                    config.variant.as_str()
                ))
            })?;
            (
                Some(GatStack::new(config.gat, graph.feature_dim())?),
                Some(GraphContext::from_graph(graph)),
            )
        } else {
            (None, None)
        };
        Ok(Model {
            variant: config.variant,
            k: vocab.k(),
            relnet_hidden: config.relnet_hidden,
            encoder,
            gat: gat_stack,
            graph: graph_ctx,
        })
    }

    pub fn encoder(&self) -> Option<&Encoder> {
        self.encoder.as_ref()
    }

    pub fn graph_fingerprint(&self) -> Option<u64> {
        self.graph.as_ref().map(|g| g.fingerprint)
    }

    /// Dimension of the tweet representation entering the relation head.
    fn tweet_rep_dim(&self) -> usize {
        match self.variant {
            Variant::Full | Variant::EncoderOnly => {
                self.encoder.as_ref().map(Encoder::dimension).unwrap_or(0)
            }
            Variant::GraphOnly => self.gat.as_ref().map(|g| g.config.out_dim).unwrap_or(0),
        }
    }

    /// Insert every parameter tensor this variant trains, in a fixed order.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha20Rng) {
        if let Some(encoder) = &self.encoder {
            encoder.init_params(store, rng);
        }
        if let Some(stack) = &self.gat {
            stack.init_params(store, rng);
        }
        match self.variant {
            Variant::EncoderOnly => {
                let d = self.tweet_rep_dim();
                store.insert(HEAD_W, gat::xavier_uniform(self.k, d, rng));
                store.insert(HEAD_B, Tensor2::zeros(1, self.k));
            }
            Variant::Full | Variant::GraphOnly => {
                let in_dim = self.tweet_rep_dim()
                    + self.gat.as_ref().map(|g| g.config.out_dim).unwrap_or(0);
                store.insert(REL_W1, gat::xavier_uniform(self.relnet_hidden, in_dim, rng));
                store.insert(REL_B1, Tensor2::zeros(1, self.relnet_hidden));
                store.insert(REL_W2, gat::xavier_uniform(1, self.relnet_hidden, rng));
                store.insert(REL_B2, Tensor2::zeros(1, 1));
            }
        }
    }

    /// Mean-pool weights over word nodes for the graph-only tweet
    /// representation; tweets with no in-graph tokens get a zero row.
    fn node_pooling_matrix(&self, tweets: &[&ProcessedTweet]) -> Result<Tensor2> {
        let ctx = self
            .graph
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("variant has no graph".into()))?;
        let n = ctx.features.rows();
        let mut pool = Tensor2::zeros(tweets.len(), n);
        for (row, tweet) in tweets.iter().enumerate() {
            let hits: Vec<usize> = tweet
                .tokens
                .iter()
                .filter_map(|t| ctx.word_nodes.get(t).copied())
                .collect();
            if hits.is_empty() {
                continue;
            }
            let w = 1.0 / hits.len() as f64;
            for col in hits {
                pool.set(row, col, pool.get(row, col) + w);
            }
        }
        Ok(pool)
    }

    /// Differentiable batch forward pass: (B x k) probabilities on the tape.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        tweets: &[&ProcessedTweet],
        store: &ParamStore,
        binder: &mut Binder,
        train: bool,
        rng: &mut ChaCha20Rng,
    ) -> Result<VarId> {
        let tau = match (&self.encoder, self.variant.needs_encoder()) {
            (Some(encoder), true) => {
                let table = match encoder.kind() {
                    EncoderKind::TrainableMeanpool => {
                        Some(binder.bind(tape, store, crate::encoder::TOKEN_TABLE_PARAM)?)
                    }
                    EncoderKind::Imported => None,
                };
                Some(encoder.encode_batch_tape(tape, tweets, table)?)
            }
            _ => None,
        };

        let label_embeddings = if let (Some(stack), Some(ctx)) = (&self.gat, &self.graph) {
            let h0 = tape.leaf(ctx.features.clone());
            let fwd = stack.forward_tape(tape, h0, &ctx.support, store, binder, train, rng)?;
            let iota = tape.row_select(fwd.node_features, &ctx.label_indices)?;
            Some((fwd.node_features, iota))
        } else {
            None
        };

        match self.variant {
            Variant::EncoderOnly => {
                let tau = tau.expect("encoder-only variant always has an encoder");
                let w = binder.bind(tape, store, HEAD_W)?;
                let b = binder.bind(tape, store, HEAD_B)?;
                let w_t = tape.transpose(w);
                let logits = tape.matmul(tau, w_t)?;
                let logits = tape.add_row_broadcast(logits, b)?;
                Ok(tape.sigmoid(logits))
            }
            Variant::Full => {
                let tau = tau.expect("full variant always has an encoder");
                let (_, iota) = label_embeddings.expect("full variant always has a graph");
                let w1 = binder.bind(tape, store, REL_W1)?;
                let b1 = binder.bind(tape, store, REL_B1)?;
                let w2 = binder.bind(tape, store, REL_W2)?;
                let b2 = binder.bind(tape, store, REL_B2)?;
                relate_tape(tape, tau, iota, w1, b1, w2, b2)
            }
            Variant::GraphOnly => {
                let (node_features, iota) =
                    label_embeddings.expect("graph-only variant always has a graph");
                let pool = tape.leaf(self.node_pooling_matrix(tweets)?);
                let tweet_rep = tape.matmul(pool, node_features)?;
                let w1 = binder.bind(tape, store, REL_W1)?;
                let b1 = binder.bind(tape, store, REL_B1)?;
                let w2 = binder.bind(tape, store, REL_W2)?;
                let b2 = binder.bind(tape, store, REL_B2)?;
                relate_tape(tape, tweet_rep, iota, w1, b1, w2, b2)
            }
        }
    }

    /// Eval-mode probabilities for a batch, without gradient bookkeeping.
    pub fn infer_batch(
        &self,
        tweets: &[&ProcessedTweet],
        store: &ParamStore,
    ) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let probs = self.forward_batch(&mut tape, tweets, store, &mut binder, false, &mut rng)?;
        Ok(tape.value(probs).clone())
    }
}

/// Eval-mode probabilities for one tweet.
pub fn model_forward(
    model: &Model,
    store: &ParamStore,
    tweet: &ProcessedTweet,
) -> Result<Vec<f64>> {
    let out = model.infer_batch(&[tweet], store)?;
    Ok(out.row(0).to_vec())
}
