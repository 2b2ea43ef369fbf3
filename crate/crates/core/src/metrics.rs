//! Evaluation suite: weighted F1, Hamming loss, Jaccard index and the
//! Accumulated Alert Worth (AAW) score over the high/low priority partition.
//!
//! AAW machinery in brief: tweets whose ground-truth priority reaches the
//! cutoff form the high set T_h, the rest T_l. A high tweet alerted by the
//! system (its priority score `p` at or above the cutoff) earns
//! `alpha + (1-alpha) * (phi + phi_hat)`, a missed one scores -1. A low
//! tweet wrongly alerted costs `max(-ln(delta/2 + 1), -1)`, an unalerted one
//! earns its worth sum. `phi` / `phi_hat` are table-weighted sums over
//! correctly predicted actionable / non-actionable labels, each clamped to
//! [0, 0.5]. These pieces (alpha, delta, the worth tables) are deliberately
//! configurable: the published metric defers their exact definitions to an
//! external benchmark, so the defaults here are reconstructions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{encode_labels, LabelVector, LabelVocabulary, RawTweet};
use crate::diffcore::stable_sum;
use crate::error::{Error, Result};
use crate::relnet::Prediction;

/// Per-label precision/recall/F1 with its positive-truth support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_weighted: f64,
    pub per_label: Vec<LabelScore>,
    pub hamming_loss: f64,
    pub jaccard_mean: f64,
    /// Present only when every evaluated tweet carries a priority annotation.
    pub aaw_high: Option<f64>,
    pub aaw_all: Option<f64>,
}

impl MetricsReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::CorruptFile {
            path: path.into(),
            message: e.to_string(),
        })
    }
}

fn check_lengths(preds: &[LabelVector], truths: &[LabelVector]) -> Result<usize> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidData("no prediction/truth pairs".into()));
    }
    let k = truths[0].k();
    for v in preds.iter().chain(truths.iter()) {
        if v.k() != k {
            return Err(Error::Shape(format!(
                "label vector of length {} (expected {k})",
                v.k()
            )));
        }
    }
    Ok(k)
}

/// Support-weighted F1: per-label F1 combined with weights proportional to
/// positive-truth counts (weights normalized over total positive
/// assignments). A label with zero precision+recall contributes zero.
pub fn weighted_f1(
    preds: &[LabelVector],
    truths: &[LabelVector],
    vocab: &LabelVocabulary,
) -> Result<(f64, Vec<LabelScore>)> {
    let k = check_lengths(preds, truths)?;
    if k != vocab.k() {
        return Err(Error::Shape(format!(
            "vectors of length {k} vs vocabulary of {}",
            vocab.k()
        )));
    }
    let mut scores = Vec::with_capacity(k);
    let mut total_support = 0usize;
    for j in 0..k {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (p, t) in preds.iter().zip(truths.iter()) {
            match (p.bits[j], t.bits[j]) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fn_ += 1,
                _ => {}
            }
        }
        let support = tp + fn_;
        total_support += support;
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if support == 0 {
            0.0
        } else {
            tp as f64 / support as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        scores.push(LabelScore {
            label: vocab.name(j).to_string(),
            precision,
            recall,
            f1,
            support,
        });
    }
    if total_support == 0 {
        return Err(Error::InvalidData("no support: all truth vectors are zero".into()));
    }
    let mut terms: Vec<f64> = scores
        .iter()
        .map(|s| {
            if s.precision + s.recall == 0.0 {
                0.0
            } else {
                2.0 * (s.support as f64 / total_support as f64) * (s.precision * s.recall)
                    / (s.precision + s.recall)
            }
        })
        .collect();
    Ok((stable_sum(&mut terms), scores))
}

/// Mean fraction of per-label bit disagreements.
pub fn hamming_loss(preds: &[LabelVector], truths: &[LabelVector]) -> Result<f64> {
    let k = check_lengths(preds, truths)?;
    let mut terms: Vec<f64> = preds
        .iter()
        .zip(truths.iter())
        .map(|(p, t)| {
            let xor = p
                .bits
                .iter()
                .zip(t.bits.iter())
                .filter(|(a, b)| a != b)
                .count();
            xor as f64 / k as f64
        })
        .collect();
    Ok(stable_sum(&mut terms) / preds.len() as f64)
}

/// Mean |intersection| / |union| over tweets; two empty sets count as 1.
pub fn jaccard_mean(preds: &[LabelVector], truths: &[LabelVector]) -> Result<f64> {
    check_lengths(preds, truths)?;
    let mut terms: Vec<f64> = preds
        .iter()
        .zip(truths.iter())
        .map(|(p, t)| {
            let inter = p
                .bits
                .iter()
                .zip(t.bits.iter())
                .filter(|(a, b)| **a == 1 && **b == 1)
                .count();
            let union = p
                .bits
                .iter()
                .zip(t.bits.iter())
                .filter(|(a, b)| **a == 1 || **b == 1)
                .count();
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .collect();
    Ok(stable_sum(&mut terms) / preds.len() as f64)
}

/// How the penalty scale delta is computed for confident false alerts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaMode {
    /// |system priority score - ground-truth priority|
    PriorityError,
    /// the system priority score itself
    SystemScore,
}

impl DeltaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeltaMode::PriorityError => "abs-error",
            DeltaMode::SystemScore => "system-score",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "abs-error" => Ok(DeltaMode::PriorityError),
            "system-score" => Ok(DeltaMode::SystemScore),
            other => Err(Error::InvalidParameter(format!(
                "unknown delta mode {other} (expected abs-error or system-score)"
            ))),
        }
    }
}

pub const DEFAULT_ACTIONABLE_LABELS: &[&str] = &[
    "GoodServices",
    "SearchAndRescue",
    "MovePeople",
    "EmergingThreats",
    "SignificantEventChange",
    "ServiceAvailable",
];

/// Alert-worth configuration. When `worth_table` is empty, each group
/// (actionable / non-actionable) shares a uniform total worth of 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct AawConfig {
    pub alpha: f64,
    pub cutoff: f64,
    pub actionable_labels: Vec<String>,
    pub worth_table: BTreeMap<String, f64>,
    pub delta_mode: DeltaMode,
}

impl Default for AawConfig {
    fn default() -> Self {
        AawConfig {
            alpha: 0.75,
            cutoff: 0.7,
            actionable_labels: DEFAULT_ACTIONABLE_LABELS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            worth_table: BTreeMap::new(),
            delta_mode: DeltaMode::PriorityError,
        }
    }
}

impl AawConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} outside [0,1]",
                self.alpha
            )));
        }
        if !(0.0 < self.cutoff && self.cutoff < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff {} outside (0,1)",
                self.cutoff
            )));
        }
        for (label, w) in &self.worth_table {
            if !(0.0..=0.5).contains(w) {
                return Err(Error::InvalidParameter(format!(
                    "worth weight {w} for {label} outside [0,0.5]"
                )));
            }
        }
        Ok(())
    }

    /// Worth-table file: `label<TAB>weight` per line.
    pub fn load_worth_table(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (label, weight) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
                line: lineno + 1,
                message: "expected label<TAB>weight".into(),
            })?;
            let weight: f64 = weight.trim().parse().map_err(|_| Error::MalformedLine {
                line: lineno + 1,
                message: format!("bad weight {weight}"),
            })?;
            self.worth_table.insert(label.to_string(), weight);
        }
        Ok(())
    }

    /// Indices of configured actionable labels present in the vocabulary.
    pub fn actionable_indices(&self, vocab: &LabelVocabulary) -> Vec<usize> {
        self.actionable_labels
            .iter()
            .filter_map(|l| vocab.index_of(l))
            .collect()
    }

    /// Per-label worth under this config: table entries win, otherwise each
    /// group splits 0.5 uniformly.
    fn worth_of(&self, vocab: &LabelVocabulary, actionable: &[bool]) -> Vec<f64> {
        let n_act = actionable.iter().filter(|&&a| a).count();
        let n_non = vocab.k() - n_act;
        (0..vocab.k())
            .map(|j| {
                if let Some(&w) = self.worth_table.get(vocab.name(j)) {
                    w
                } else if actionable[j] {
                    0.5 / n_act.max(1) as f64
                } else {
                    0.5 / n_non.max(1) as f64
                }
            })
            .collect()
    }
}

/// Worth earned by one tweet's true positives: (actionable sum, other sum),
/// each clamped to [0, 0.5] so their total stays within [0, 1].
fn tweet_worth(
    pred: &LabelVector,
    truth: &LabelVector,
    actionable: &[bool],
    worth: &[f64],
) -> (f64, f64) {
    let mut phi = 0.0;
    let mut phi_hat = 0.0;
    for j in 0..truth.k() {
        if pred.bits[j] == 1 && truth.bits[j] == 1 {
            if actionable[j] {
                phi += worth[j];
            } else {
                phi_hat += worth[j];
            }
        }
    }
    (phi.min(0.5), phi_hat.min(0.5))
}

/// hPW branch: an alerted high-priority tweet earns
/// `alpha + (1-alpha) * worth_sum`, a missed one -1.
pub fn high_priority_worth(alpha: f64, cutoff: f64, system_score: f64, worth_sum: f64) -> f64 {
    if system_score >= cutoff {
        alpha + (1.0 - alpha) * worth_sum
    } else {
        -1.0
    }
}

/// lPW branch: a false alert costs `max(-ln(delta/2 + 1), -1)`, an unalerted
/// low-priority tweet earns its worth sum.
pub fn low_priority_worth(cutoff: f64, system_score: f64, delta: f64, worth_sum: f64) -> f64 {
    if system_score >= cutoff {
        (-(delta / 2.0 + 1.0).ln()).max(-1.0)
    } else {
        worth_sum
    }
}

/// Accumulated alert worth over the priority partition: returns
/// `(aaw_all, aaw_high)`. Every truth must carry a priority annotation.
pub fn aaw(
    preds: &[Prediction],
    truths: &[RawTweet],
    vocab: &LabelVocabulary,
    cfg: &AawConfig,
) -> Result<(f64, f64)> {
    let parts: Vec<(String, Option<f64>, LabelVector)> = truths
        .iter()
        .map(|t| Ok((t.id.clone(), t.priority, encode_labels(t, vocab)?)))
        .collect::<Result<_>>()?;
    aaw_from_parts(preds, &parts, vocab, cfg)
}

/// [`aaw`] over pre-encoded truth parts `(id, priority, labels)`.
pub fn aaw_from_parts(
    preds: &[Prediction],
    truths: &[(String, Option<f64>, LabelVector)],
    vocab: &LabelVocabulary,
    cfg: &AawConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidData("no prediction/truth pairs".into()));
    }
    let actionable: Vec<bool> = (0..vocab.k())
        .map(|j| cfg.actionable_labels.iter().any(|l| l == vocab.name(j)))
        .collect();
    let worth = cfg.worth_of(vocab, &actionable);

    let mut high_scores = Vec::new();
    let mut low_scores = Vec::new();
    for (pred, (id, priority, truth)) in preds.iter().zip(truths.iter()) {
        let priority = priority.ok_or_else(|| Error::MissingPriority(id.clone()))?;
        let (phi, phi_hat) = tweet_worth(&pred.labels, truth, &actionable, &worth);
        let worth_sum = phi + phi_hat;
        let p_sys = pred.priority_score;
        if priority >= cfg.cutoff {
            high_scores.push(high_priority_worth(cfg.alpha, cfg.cutoff, p_sys, worth_sum));
        } else {
            let delta = match cfg.delta_mode {
                DeltaMode::PriorityError => (p_sys - priority).abs(),
                DeltaMode::SystemScore => p_sys,
            };
            low_scores.push(low_priority_worth(cfg.cutoff, p_sys, delta, worth_sum));
        }
    }
    let mean = |scores: &mut Vec<f64>| {
        if scores.is_empty() {
            0.0
        } else {
            let n = scores.len() as f64;
            stable_sum(scores) / n
        }
    };
    let aaw_high = mean(&mut high_scores);
    let aaw_all = 0.5 * (aaw_high + mean(&mut low_scores));
    Ok((aaw_all, aaw_high))
}

/// Run the model over a test set in eval mode and fill a full report.
/// AAW is computed when every tweet carries a priority annotation and left
/// out when none does; a partially annotated set is an error.
pub fn evaluate(
    ckpt: &crate::train::Checkpoint,
    graph: Option<&crate::corpusgraph::CorpusGraph>,
    imported: Option<crate::encoder::ImportedEmbeddings>,
    test: &[&crate::preprocess::ProcessedTweet],
    threshold: f64,
    cfg: &AawConfig,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::InvalidData("empty test split".into()));
    }
    cfg.validate()?;
    let (model, store) = crate::train::model_from_checkpoint(ckpt, graph, imported)?;
    let vocab = &ckpt.vocab;
    let actionable = cfg.actionable_indices(vocab);
    let probs = model.infer_batch(test, &store)?;
    let predictions: Vec<Prediction> = (0..probs.rows())
        .map(|r| crate::relnet::predict(probs.row(r), threshold, &actionable))
        .collect::<Result<_>>()?;

    let pred_vectors: Vec<LabelVector> =
        predictions.iter().map(|p| p.labels.clone()).collect();
    let truth_vectors: Vec<LabelVector> =
        test.iter().map(|t| t.label_vector.clone()).collect();
    let (f1_weighted, per_label) = weighted_f1(&pred_vectors, &truth_vectors, vocab)?;
    let hamming = hamming_loss(&pred_vectors, &truth_vectors)?;
    let jaccard = jaccard_mean(&pred_vectors, &truth_vectors)?;

    let annotated = test.iter().filter(|t| t.priority.is_some()).count();
    let (aaw_all, aaw_high) = if annotated == test.len() {
        let parts: Vec<(String, Option<f64>, LabelVector)> = test
            .iter()
            .map(|t| (t.id.clone(), t.priority, t.label_vector.clone()))
            .collect();
        let (all, high) = aaw_from_parts(&predictions, &parts, vocab, cfg)?;
        (Some(all), Some(high))
    } else if annotated == 0 {
        (None, None)
    } else {
        let missing = test
            .iter()
            .find(|t| t.priority.is_none())
            .expect("some tweet lacks a priority");
        return Err(Error::MissingPriority(missing.id.clone()));
    };

    Ok(MetricsReport {
        f1_weighted,
        per_label,
        hamming_loss: hamming,
        jaccard_mean: jaccard,
        aaw_high,
        aaw_all,
    })
}
