//! Graph attention layers over the corpus graph.
//!
//! Each layer scores node pairs on the graph support with a shared
//! single-layer attention (leaky-relu on a^T [W h_i || W h_j]), normalizes
//! with a masked row softmax, and aggregates neighbor features. Two layers
//! are stacked: the hidden layer concatenates its heads and applies an
//! elu nonlinearity, the final layer averages heads and stays linear. Label
//! rows of the final features are the label embeddings.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::corpusgraph::CorpusGraph;
use crate::diffcore::{Binder, BoolMat, ParamStore, Tape, Tensor2, VarId};
use crate::error::{Error, Result};

/// Widths and head counts for the two-layer stack. `hidden` is the total
/// layer-1 output width (split across `heads1`), `out_dim` the label
/// embedding width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatConfig {
    pub hidden: usize,
    pub heads1: usize,
    pub heads2: usize,
    pub out_dim: usize,
    pub attn_slope: f64,
    pub dropout: f64,
    /// When set, edge weights multiply the pre-softmax attention scores
    /// instead of acting as a binary support mask only.
    pub weighted_scores: bool,
}

impl Default for GatConfig {
    fn default() -> Self {
        GatConfig {
            hidden: 64,
            heads1: 4,
            heads2: 1,
            out_dim: 64,
            attn_slope: 0.2,
            dropout: 0.25,
            weighted_scores: false,
        }
    }
}

/// One attention head: weight matrix `w` (out x in) and attention vector
/// `a` (2*out x 1); the first half of `a` scores the source, the second the
/// neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct GatHeadParams {
    pub w: Tensor2,
    pub a: Tensor2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadCombine {
    Concat,
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    pub heads: Vec<GatHeadParams>,
    pub combine: HeadCombine,
}

/// Normalized attention, one dense matrix per head; support exactly matches
/// the graph neighborhoods, other entries are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCoefficients {
    pub per_head: Vec<Tensor2>,
}

/// Final node features at the label rows, in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbeddings {
    pub matrix: Tensor2,
}

pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Tensor2 {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor2::from_vec(rows, cols, data)
}

fn head_param_names(layer: usize, head: usize) -> (String, String) {
    (
        format!("gat.l{layer}.h{head}.w"),
        format!("gat.l{layer}.h{head}.a"),
    )
}

/// Two attention layers bound to parameter-store entries by name.
#[derive(Debug, Clone)]
pub struct GatStack {
    pub config: GatConfig,
    pub in_dim: usize,
}

pub struct GatForward {
    /// Final node features (N x out_dim).
    pub node_features: VarId,
    /// Per-layer attention snapshots (pre-dropout).
    pub attention: Vec<AttentionCoefficients>,
}

impl GatStack {
    pub fn new(config: GatConfig, in_dim: usize) -> Result<Self> {
        if config.hidden == 0 || config.out_dim == 0 || config.heads1 == 0 || config.heads2 == 0 {
            return Err(Error::InvalidParameter(
                "gat widths and head counts must be positive".into(),
            ));
        }
        if !config.hidden.is_multiple_of(config.heads1) {
            return Err(Error::InvalidParameter(format!(
                "hidden width {} not divisible by {} heads",
                config.hidden, config.heads1
            )));
        }
        Ok(GatStack { config, in_dim })
    }

    fn layer_dims(&self) -> [(usize, usize, usize); 2] {
        let per_head1 = self.config.hidden / self.config.heads1;
        [
            (self.in_dim, per_head1, self.config.heads1),
            (self.config.hidden, self.config.out_dim, self.config.heads2),
        ]
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha20Rng) {
        for (layer, (f_in, f_out, heads)) in self.layer_dims().into_iter().enumerate() {
            for head in 0..heads {
                let (w_name, a_name) = head_param_names(layer + 1, head);
                store.insert(&w_name, xavier_uniform(f_out, f_in, rng));
                store.insert(&a_name, xavier_uniform(2 * f_out, 1, rng));
            }
        }
    }

    /// Run both layers on the tape. `h0` is the (N x in_dim) feature leaf.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        h0: VarId,
        graph: &GraphSupport,
        store: &ParamStore,
        binder: &mut Binder,
        train: bool,
        rng: &mut ChaCha20Rng,
    ) -> Result<GatForward> {
        let mut h = h0;
        let mut attention = Vec::with_capacity(2);
        for (layer, (_, _, heads)) in self.layer_dims().into_iter().enumerate() {
            let combine = if layer == 0 {
                HeadCombine::Concat
            } else {
                HeadCombine::Average
            };
            let mut head_vars = Vec::with_capacity(heads);
            for head in 0..heads {
                let (w_name, a_name) = head_param_names(layer + 1, head);
                let w = binder.bind(tape, store, &w_name)?;
                let a = binder.bind(tape, store, &a_name)?;
                head_vars.push(GatHeadVars { w, a });
            }
            let (out, alphas) = gat_layer_tape(
                tape,
                h,
                graph,
                &head_vars,
                combine,
                self.config.attn_slope,
                self.config.weighted_scores,
                self.config.dropout,
                train,
                rng,
            )?;
            // elu between layers, final layer linear
            h = if layer == 0 { tape.elu(out, 1.0) } else { out };
            attention.push(AttentionCoefficients { per_head: alphas });
        }
        Ok(GatForward {
            node_features: h,
            attention,
        })
    }
}

/// Graph pieces the layers consume: support mask and (optional) edge weights.
pub struct GraphSupport {
    pub mask: Rc<BoolMat>,
    pub weights: Rc<Tensor2>,
}

impl GraphSupport {
    pub fn from_graph(graph: &CorpusGraph) -> Self {
        GraphSupport {
            mask: Rc::new(graph.support_mask()),
            weights: Rc::new(graph.adjacency.clone()),
        }
    }
}

pub struct GatHeadVars {
    pub w: VarId,
    pub a: VarId,
}

/// One attention layer on the tape. Returns the combined head output
/// (before any between-layer nonlinearity) plus per-head attention values.
#[allow(clippy::too_many_arguments)]
pub fn gat_layer_tape(
    tape: &mut Tape,
    h: VarId,
    graph: &GraphSupport,
    heads: &[GatHeadVars],
    combine: HeadCombine,
    attn_slope: f64,
    weighted_scores: bool,
    dropout: f64,
    train: bool,
    rng: &mut ChaCha20Rng,
) -> Result<(VarId, Vec<Tensor2>)> {
    let h_in = tape.dropout(h, dropout, train, rng)?;
    let mut outputs = Vec::with_capacity(heads.len());
    let mut alphas = Vec::with_capacity(heads.len());
    for head in heads {
        let f_out = tape.value(head.w).rows();
        let w_t = tape.transpose(head.w);
        let wh = tape.matmul(h_in, w_t)?;
        let a_src = tape.row_select(head.a, &(0..f_out).collect::<Vec<_>>())?;
        let a_dst = tape.row_select(head.a, &(f_out..2 * f_out).collect::<Vec<_>>())?;
        let s_src = tape.matmul(wh, a_src)?;
        let s_dst = tape.matmul(wh, a_dst)?;
        let scores = tape.pairwise_sum(s_src, s_dst)?;
        let scores = tape.leaky_relu(scores, attn_slope);
        let scores = if weighted_scores {
            let w_leaf = tape.leaf(graph.weights.as_ref().clone());
            tape.mul(scores, w_leaf)?
        } else {
            scores
        };
        let alpha = tape.softmax_rows(scores, Some(graph.mask.clone()))?;
        alphas.push(tape.value(alpha).clone());
        let alpha_d = tape.dropout(alpha, dropout, train, rng)?;
        outputs.push(tape.matmul(alpha_d, wh)?);
    }
    let combined = match combine {
        HeadCombine::Concat => {
            let mut acc = outputs[0];
            for &o in &outputs[1..] {
                acc = tape.concat_cols(acc, o)?;
            }
            acc
        }
        HeadCombine::Average => {
            let mut acc = outputs[0];
            for &o in &outputs[1..] {
                acc = tape.add(acc, o)?;
            }
            if outputs.len() > 1 {
                acc = tape.scale(acc, 1.0 / outputs.len() as f64);
            }
            acc
        }
    };
    Ok((combined, alphas))
}

/// Forward-only single layer on explicit parameters, per the hidden-layer
/// convention (concat heads, elu output). Returns updated features and the
/// attention coefficients.
pub fn gat_layer(
    h: &Tensor2,
    graph: &CorpusGraph,
    params: &GatLayerParams,
    train: bool,
    seed: u64,
) -> Result<(Tensor2, AttentionCoefficients)> {
    use rand::SeedableRng;
    let mut tape = Tape::new();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let h0 = tape.leaf(h.clone());
    let support = GraphSupport::from_graph(graph);
    let head_vars: Vec<GatHeadVars> = params
        .heads
        .iter()
        .map(|p| GatHeadVars {
            w: tape.leaf(p.w.clone()),
            a: tape.leaf(p.a.clone()),
        })
        .collect();
    let (out, alphas) = gat_layer_tape(
        &mut tape,
        h0,
        &support,
        &head_vars,
        params.combine,
        0.2,
        false,
        0.25,
        train,
        &mut rng,
    )?;
    let out = tape.elu(out, 1.0);
    Ok((
        tape.value(out).clone(),
        AttentionCoefficients { per_head: alphas },
    ))
}

/// Rows of the final node features at the label nodes, vocabulary order.
pub fn label_vectors(final_features: &Tensor2, graph: &CorpusGraph) -> Result<LabelEmbeddings> {
    let mut data = Vec::with_capacity(graph.label_indices.len() * final_features.cols());
    for &idx in &graph.label_indices {
        if idx >= final_features.rows() {
            return Err(Error::Shape(format!(
                "label node {idx} out of range for {} feature rows",
                final_features.rows()
            )));
        }
        data.extend_from_slice(final_features.row(idx));
    }
    Ok(LabelEmbeddings {
        matrix: Tensor2::from_vec(graph.label_indices.len(), final_features.cols(), data),
    })
}
