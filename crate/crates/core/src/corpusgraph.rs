//! Corpus graph over word, entity and label nodes.
//!
//! Edges come from two sources: sliding-window co-occurrence between words
//! and entities (weighted by positive PMI over windows) and token/entity
//! presence in labeled tweets (weighted by a TF-IDF style score). Raw
//! weights are row min-max scaled into (0,1], re-symmetrized by averaging
//! with the transpose, and unit self-loops are added. Node features come
//! from a pretrained table where possible, otherwise from a seeded uniform
//! draw in (-0.25, 0.25).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::{Fnv64, Reader, Writer};
use crate::dataset::LabelVocabulary;
use crate::diffcore::{BoolMat, Tensor2};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::preprocess::ProcessedTweet;

const GRAPH_MAGIC: &[u8; 4] = b"TGRF";
const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKind {
    Word,
    Entity,
    Label,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Word => "word",
            NodeKind::Entity => "entity",
            NodeKind::Label => "label",
        }
    }

    fn to_u8(self) -> u8 {
        match self {
            NodeKind::Word => 0,
            NodeKind::Entity => 1,
            NodeKind::Label => 2,
        }
    }

    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(NodeKind::Word),
            1 => Some(NodeKind::Entity),
            2 => Some(NodeKind::Label),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub name: String,
    pub kind: NodeKind,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphBuildOptions {
    /// Sliding-window width in tokens for co-occurrence counting.
    pub window: usize,
    /// Minimum corpus occurrence count for a word to become a node.
    pub min_freq: usize,
    /// Seed for feature initialization of out-of-table nodes.
    pub seed: u64,
}

impl Default for GraphBuildOptions {
    fn default() -> Self {
        GraphBuildOptions {
            window: 5,
            min_freq: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusGraph {
    pub nodes: Vec<GraphNode>,
    /// Symmetric, nonnegative, unit-diagonal adjacency.
    pub adjacency: Tensor2,
    /// N x F node feature matrix.
    pub features: Tensor2,
    /// Node index of each label, in vocabulary order.
    pub label_indices: Vec<usize>,
}

impl CorpusGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn node_index(&self, name: &str, kind: NodeKind) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.kind == kind && n.name == name)
    }

    /// Support mask: true where adjacency is positive (includes the diagonal).
    pub fn support_mask(&self) -> BoolMat {
        let n = self.node_count();
        let mut mask = BoolMat::filled(n, n, false);
        for i in 0..n {
            for j in 0..n {
                if self.adjacency.get(i, j) > 0.0 {
                    mask.set(i, j, true);
                }
            }
        }
        mask
    }

    /// Content hash over nodes, adjacency and features.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::new();
        h.update_u64(self.node_count() as u64);
        h.update_u64(self.feature_dim() as u64);
        for node in &self.nodes {
            h.update(&[node.kind.to_u8()]);
            h.update(node.name.as_bytes());
            h.update(&[0xff]);
        }
        for &v in self.adjacency.data() {
            h.update_f64(v);
        }
        for &v in self.features.data() {
            h.update_f64(v);
        }
        for &i in &self.label_indices {
            h.update_u64(i as u64);
        }
        h.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new(GRAPH_MAGIC, GRAPH_VERSION);
        w.u64(self.node_count() as u64);
        w.u64(self.feature_dim() as u64);
        for node in &self.nodes {
            w.u8(node.kind.to_u8());
            w.string(&node.name);
        }
        w.u64(self.label_indices.len() as u64);
        for &i in &self.label_indices {
            w.u64(i as u64);
        }
        w.f64_slice(self.adjacency.data());
        w.f64_slice(self.features.data());
        w.write_file(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(path, &bytes, GRAPH_MAGIC, GRAPH_VERSION)?;
        let n = r.u64()? as usize;
        let f = r.u64()? as usize;
        let mut nodes = Vec::with_capacity(n);
        for index in 0..n {
            let kind = NodeKind::from_u8(r.u8()?).ok_or_else(|| Error::CorruptFile {
                path: path.into(),
                message: "bad node kind".into(),
            })?;
            let name = r.string()?;
            nodes.push(GraphNode { name, kind, index });
        }
        let k = r.u64()? as usize;
        let mut label_indices = Vec::with_capacity(k);
        for _ in 0..k {
            label_indices.push(r.u64()? as usize);
        }
        let adj = r.f64_vec()?;
        let feats = r.f64_vec()?;
        if adj.len() != n * n || feats.len() != n * f {
            return Err(Error::CorruptFile {
                path: path.into(),
                message: "matrix size mismatch".into(),
            });
        }
        r.expect_end()?;
        Ok(CorpusGraph {
            nodes,
            adjacency: Tensor2::from_vec(n, n, adj),
            features: Tensor2::from_vec(n, f, feats),
            label_indices,
        })
    }

    /// Debug dump: node table plus COO triplets of the upper triangle.
    pub fn dump_coo(&self) -> String {
        let n = self.node_count();
        let mut out = format!("# nodes {n}\n");
        for node in &self.nodes {
            out.push_str(&format!(
                "{} {} {}\n",
                node.index,
                node.kind.as_str(),
                node.name
            ));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i..n {
                let w = self.adjacency.get(i, j);
                if w > 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        out.push_str(&format!("# edges {}\n", edges.len()));
        for (i, j, w) in edges {
            out.push_str(&format!("{i} {j} {w}\n"));
        }
        out
    }
}

/// Indices of `A[i][j] > 0`; always contains `i` itself.
pub fn neighborhood(graph: &CorpusGraph, i: usize) -> Result<BTreeSet<usize>> {
    let n = graph.node_count();
    if i >= n {
        return Err(Error::InvalidParameter(format!(
            "node index {i} out of range for {n} nodes"
        )));
    }
    Ok((0..n)
        .filter(|&j| graph.adjacency.get(i, j) > 0.0)
        .collect())
}

/// Occurrence positions of every node-unit in one tweet: a word occupies its
/// token position, an entity occupies every position of its span.
fn unit_positions(
    tweet: &ProcessedTweet,
    word_index: &BTreeMap<&str, usize>,
    entity_index: &BTreeMap<&str, usize>,
) -> Result<Vec<(usize, Vec<usize>)>> {
    let mut units: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, token) in tweet.tokens.iter().enumerate() {
        if let Some(&node) = word_index.get(token.as_str()) {
            units.entry(node).or_default().push(pos);
        }
    }
    // entities were spotted left-to-right without overlap, so their spans can
    // be reconstructed by scanning with a moving cursor
    let mut cursor = 0;
    for surface in &tweet.entities {
        let parts: Vec<&str> = surface.split(' ').collect();
        let len = parts.len();
        let mut found = None;
        let mut start = cursor;
        while start + len <= tweet.tokens.len() {
            if tweet.tokens[start..start + len]
                .iter()
                .zip(parts.iter())
                .all(|(t, p)| t == p)
            {
                found = Some(start);
                break;
            }
            start += 1;
        }
        let start = found.ok_or_else(|| {
            Error::InvalidData(format!(
                "entity \"{surface}\" does not match tokens of tweet {}",
                tweet.id
            ))
        })?;
        cursor = start + len;
        if let Some(&node) = entity_index.get(surface.as_str()) {
            units.entry(node).or_default().extend(start..start + len);
        }
    }
    Ok(units.into_iter().collect())
}

/// Build the corpus graph. The node set is every word at or above
/// `opts.min_freq`, every distinct entity, and all k labels (even
/// unsupported ones).
pub fn build_graph(
    corpus: &[ProcessedTweet],
    vocab: &LabelVocabulary,
    table: &EmbeddingTable,
    opts: &GraphBuildOptions,
) -> Result<CorpusGraph> {
    if corpus.is_empty() {
        return Err(Error::InvalidData("cannot build a graph from an empty corpus".into()));
    }
    if table.dimension() == 0 {
        return Err(Error::InvalidData("embedding dimension must be positive".into()));
    }
    if opts.window == 0 {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }

    // node inventory
    let mut word_freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut entity_names: BTreeSet<&str> = BTreeSet::new();
    for tweet in corpus {
        for token in &tweet.tokens {
            *word_freq.entry(token.as_str()).or_insert(0) += 1;
        }
        for entity in &tweet.entities {
            entity_names.insert(entity.as_str());
        }
    }
    let mut nodes = Vec::new();
    let mut word_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (word, freq) in &word_freq {
        if *freq >= opts.min_freq {
            word_index.insert(word, nodes.len());
            nodes.push(GraphNode {
                name: word.to_string(),
                kind: NodeKind::Word,
                index: nodes.len(),
            });
        }
    }
    let mut entity_index: BTreeMap<&str, usize> = BTreeMap::new();
    for entity in &entity_names {
        entity_index.insert(entity, nodes.len());
        nodes.push(GraphNode {
            name: entity.to_string(),
            kind: NodeKind::Entity,
            index: nodes.len(),
        });
    }
    let mut label_indices = Vec::with_capacity(vocab.k());
    for label in vocab.labels() {
        label_indices.push(nodes.len());
        nodes.push(GraphNode {
            name: label.clone(),
            kind: NodeKind::Label,
            index: nodes.len(),
        });
    }
    let n = nodes.len();

    // sliding-window co-occurrence over word/entity units
    let mut window_total: u64 = 0;
    let mut unit_windows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut pair_windows: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    // label co-occurrence: distinct unit presence per labeled tweet
    let mut unit_tweets: BTreeMap<usize, u64> = BTreeMap::new();
    let mut unit_label: BTreeMap<(usize, usize), u64> = BTreeMap::new();

    for tweet in corpus {
        let units = unit_positions(tweet, &word_index, &entity_index)?;
        let m = tweet.tokens.len();
        if m > 0 {
            let spans: Vec<(usize, usize)> = if m <= opts.window {
                vec![(0, m)]
            } else {
                (0..=m - opts.window).map(|s| (s, s + opts.window)).collect()
            };
            for (lo, hi) in spans {
                window_total += 1;
                let present: Vec<usize> = units
                    .iter()
                    .filter(|(_, positions)| positions.iter().any(|&p| p >= lo && p < hi))
                    .map(|(node, _)| *node)
                    .collect();
                for &u in &present {
                    *unit_windows.entry(u).or_insert(0) += 1;
                }
                for a in 0..present.len() {
                    for b in a + 1..present.len() {
                        let (u, v) = (present[a], present[b]);
                        // word-word and word-entity pairs only
                        let kinds = (nodes[u].kind, nodes[v].kind);
                        if kinds == (NodeKind::Entity, NodeKind::Entity) {
                            continue;
                        }
                        let key = (u.min(v), u.max(v));
                        *pair_windows.entry(key).or_insert(0) += 1;
                    }
                }
            }
        }
        for (node, _) in &units {
            *unit_tweets.entry(*node).or_insert(0) += 1;
        }
        for label_pos in tweet.label_vector.indices() {
            let label_node = label_indices[label_pos];
            for (node, _) in &units {
                *unit_label.entry((*node, label_node)).or_insert(0) += 1;
            }
        }
    }

    // raw weights
    let mut raw = Tensor2::zeros(n, n);
    let mut support = BoolMat::filled(n, n, false);
    for (&(u, v), &c_uv) in &pair_windows {
        let c_u = unit_windows[&u] as f64;
        let c_v = unit_windows[&v] as f64;
        let pmi = ((c_uv as f64 * window_total as f64) / (c_u * c_v)).ln();
        let w = pmi.max(0.0);
        raw.set(u, v, w);
        raw.set(v, u, w);
        support.set(u, v, true);
        support.set(v, u, true);
    }
    let s_total = corpus.len() as f64;
    for (&(u, l), &count) in &unit_label {
        let tf = unit_tweets[&u] as f64;
        let w = count as f64 * (s_total / tf).ln();
        raw.set(u, l, w);
        raw.set(l, u, w);
        support.set(u, l, true);
        support.set(l, u, true);
    }

    // row min-max scaling into (0,1]: (x - min + 1) / (max - min + 1), then
    // exact re-symmetrization by averaging with the transpose
    let mut scaled = Tensor2::zeros(n, n);
    for i in 0..n {
        let supported: Vec<usize> = (0..n).filter(|&j| j != i && support.get(i, j)).collect();
        if supported.is_empty() {
            continue;
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &j in &supported {
            min = min.min(raw.get(i, j));
            max = max.max(raw.get(i, j));
        }
        for &j in &supported {
            scaled.set(i, j, (raw.get(i, j) - min + 1.0) / (max - min + 1.0));
        }
    }
    let mut adjacency = Tensor2::zeros(n, n);
    for i in 0..n {
        adjacency.set(i, i, 1.0);
        for j in 0..n {
            if i != j && support.get(i, j) {
                adjacency.set(i, j, (scaled.get(i, j) + scaled.get(j, i)) / 2.0);
            }
        }
    }

    // features: table rows verbatim, entity means, seeded uniform otherwise
    let f_dim = table.dimension();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut features = Tensor2::zeros(n, f_dim);
    for node in &nodes {
        let row: Vec<f64> = match node.kind {
            NodeKind::Word => table.get(&node.name).map(<[f64]>::to_vec).unwrap_or_default(),
            NodeKind::Entity => {
                let vectors: Vec<&[f64]> = node
                    .name
                    .split(' ')
                    .filter_map(|part| table.get(part))
                    .collect();
                if vectors.is_empty() {
                    Vec::new()
                } else {
                    (0..f_dim)
                        .map(|c| {
                            vectors.iter().map(|v| v[c]).sum::<f64>() / vectors.len() as f64
                        })
                        .collect()
                }
            }
            NodeKind::Label => Vec::new(),
        };
        let row = if row.is_empty() {
            (0..f_dim).map(|_| rng.gen_range(-0.25..0.25)).collect()
        } else {
            row
        };
        for (c, v) in row.into_iter().enumerate() {
            features.set(node.index, c, v);
        }
    }

    Ok(CorpusGraph {
        nodes,
        adjacency,
        features,
        label_indices,
    })
}
