//! Shared test harness: a finite-difference gradient oracle that is
//! independent of the tape's backward pass, and synthetic corpus builders.
//! Each integration test target uses its own subset.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use triage::corpusgraph::{build_graph, CorpusGraph, GraphBuildOptions};
use triage::dataset::{LabelVocabulary, RawTweet};
use triage::diffcore::Tensor2;
use triage::embeddings::EmbeddingTable;
use triage::preprocess::{preprocess_corpus, EmojiMap, Gazetteer, ProcessedTweet, Stoplist};

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-3;

/// Central-difference check of `analytic` against a scalar function of the
/// flattened inputs. Returns the worst relative error seen.
pub fn grad_check(
    f: &dyn Fn(&[Tensor2]) -> f64,
    inputs: &[Tensor2],
    analytic: &[Tensor2],
) -> f64 {
    let mut worst: f64 = 0.0;
    for (which, input) in inputs.iter().enumerate() {
        for idx in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[idx] -= FD_STEP;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
            let a = analytic[which].data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Tensor2 {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

/// Random probabilities kept away from the clamp boundaries.
pub fn random_probs(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Tensor2 {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(0.05..0.95)).collect(),
    )
}

pub const CLUSTERS: [(&str, &[&str]); 3] = [
    (
        "Alert",
        &["wildfire", "flames", "smoke", "burning", "hillside", "blaze"],
    ),
    (
        "Relief",
        &["shelter", "volunteers", "supplies", "donations", "blankets", "meals"],
    ),
    (
        "Weather",
        &["rainfall", "storm", "winds", "forecast", "thunder", "gusts"],
    ),
];

/// Synthetic corpus with one disjoint token cluster per label; tweets carry
/// random priorities so alert-worth scoring has something to chew on.
pub fn clustered_corpus(per_label: usize, seed: u64) -> (Vec<RawTweet>, LabelVocabulary) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    for (ci, (label, tokens)) in CLUSTERS.iter().enumerate() {
        for i in 0..per_label {
            let len = rng.gen_range(3..=5);
            let words: Vec<&str> = (0..len)
                .map(|_| tokens[rng.gen_range(0..tokens.len())])
                .collect();
            corpus.push(RawTweet {
                id: format!("c{ci}_{i}"),
                text: words.join(" "),
                labels: vec![label.to_string()],
                priority: Some((rng.gen_range(0..=100) as f64) / 100.0),
            });
        }
    }
    let vocab = LabelVocabulary::new(
        CLUSTERS.iter().map(|(l, _)| l.to_string()).collect(),
    )
    .unwrap();
    (corpus, vocab)
}

pub fn preprocess_plain(
    corpus: &[RawTweet],
    vocab: &LabelVocabulary,
) -> Vec<ProcessedTweet> {
    preprocess_corpus(
        corpus,
        vocab,
        &Stoplist::empty(),
        &EmojiMap::empty(),
        &Gazetteer::empty(),
    )
    .unwrap()
}

pub fn graph_over(
    tweets: &[ProcessedTweet],
    vocab: &LabelVocabulary,
    dim: usize,
    seed: u64,
) -> CorpusGraph {
    build_graph(
        tweets,
        vocab,
        &EmbeddingTable::empty(dim),
        &GraphBuildOptions {
            seed,
            ..Default::default()
        },
    )
    .unwrap()
}
