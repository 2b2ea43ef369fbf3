//! Corpus ingestion, label vocabulary, and deterministic splits.
//!
//! Corpus files are UTF-8 with one JSON record per line:
//! `{"id": "...", "text": "...", "labels": ["..."], "priority": 0.9}`
//! (`priority` optional). Split files are a single JSON object with `seed`,
//! `train`, `valid` and `test` id arrays.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ordered label set; the index of a label defines vector semantics
/// everywhere downstream and is stable for the lifetime of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    labels: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::InvalidData("empty label name".into()));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::InvalidData(format!("duplicate label {label}")));
            }
        }
        Ok(LabelVocabulary { labels })
    }

    /// Vocabulary from an unordered label set, sorted lexicographically.
    pub fn from_set(set: BTreeSet<String>) -> Self {
        LabelVocabulary {
            labels: set.into_iter().collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTweet {
    pub id: String,
    pub text: String,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<f64>,
}

/// Multi-hot label assignment; length always equals the vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub bits: Vec<u8>,
}

impl LabelVector {
    pub fn zeros(k: usize) -> Self {
        LabelVector { bits: vec![0; k] }
    }

    pub fn k(&self) -> usize {
        self.bits.len()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
    }

    /// Decode set bits back to label names in vocabulary order.
    pub fn to_names(&self, vocab: &LabelVocabulary) -> Vec<String> {
        self.indices().map(|i| vocab.name(i).to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
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

/// Parse a line-delimited corpus file. When `vocab` is supplied every label
/// must already be known; otherwise the vocabulary is the sorted union of
/// labels seen in the file.
pub fn load_corpus(
    path: &Path,
    vocab: Option<&LabelVocabulary>,
) -> Result<(Vec<RawTweet>, LabelVocabulary)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, vocab)
}

/// [`load_corpus`] over in-memory text; line numbers are 1-based.
pub fn parse_corpus(
    text: &str,
    vocab: Option<&LabelVocabulary>,
) -> Result<(Vec<RawTweet>, LabelVocabulary)> {
    let mut corpus = Vec::new();
    let mut ids = BTreeSet::new();
    let mut seen_labels = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tweet: RawTweet =
            serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                line: lineno,
                message: e.to_string(),
            })?;
        if let Some(p) = tweet.priority {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::MalformedLine {
                    line: lineno,
                    message: format!("priority {p} outside [0,1]"),
                });
            }
        }
        if !ids.insert(tweet.id.clone()) {
            return Err(Error::DuplicateId(tweet.id));
        }
        for label in &tweet.labels {
            if let Some(v) = vocab {
                if v.index_of(label).is_none() {
                    return Err(Error::UnknownLabel(label.clone()));
                }
            }
            seen_labels.insert(label.clone());
        }
        corpus.push(tweet);
    }
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => LabelVocabulary::from_set(seen_labels),
    };
    Ok((corpus, vocab))
}

pub fn save_corpus(corpus: &[RawTweet], path: &Path) -> Result<()> {
    let mut out = String::new();
    for tweet in corpus {
        out.push_str(
            &serde_json::to_string(tweet).map_err(|e| Error::InvalidData(e.to_string()))?,
        );
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Shuffle ids with a seeded generator and cut test / valid / train.
/// `ratios` is the (train, test) pair and must sum to 1; the validation set
/// is carved out of the train portion afterwards.
pub fn make_split(
    corpus: &[RawTweet],
    ratios: (f64, f64),
    valid_fraction_of_train: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let s = corpus.len();
    if s < 3 {
        return Err(Error::InvalidData(format!(
            "corpus of {s} tweets cannot populate all splits"
        )));
    }
    if (ratios.0 + ratios.1 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split ratios ({}, {}) do not sum to 1",
            ratios.0, ratios.1
        )));
    }
    if !(0.0..1.0).contains(&valid_fraction_of_train) {
        return Err(Error::InvalidParameter(format!(
            "valid fraction {valid_fraction_of_train} outside [0,1)"
        )));
    }
    let mut ids: Vec<String> = corpus.iter().map(|t| t.id.clone()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n_test = (s as f64 * ratios.1).round() as usize;
    let n_test = n_test.min(s);
    let pre_train = s - n_test;
    let n_valid = (pre_train as f64 * valid_fraction_of_train).round() as usize;

    let test = ids[..n_test].to_vec();
    let valid = ids[n_test..n_test + n_valid].to_vec();
    let train = ids[n_test + n_valid..].to_vec();
    Ok(DatasetSplit {
        seed,
        train,
        valid,
        test,
    })
}

/// Multi-hot encoding of a tweet's labels under `vocab`.
pub fn encode_labels(tweet: &RawTweet, vocab: &LabelVocabulary) -> Result<LabelVector> {
    let mut bits = vec![0u8; vocab.k()];
    for label in &tweet.labels {
        let idx = vocab
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        bits[idx] = 1;
    }
    Ok(LabelVector { bits })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, labels: &[&str]) -> RawTweet {
        RawTweet {
            id: id.into(),
            text: String::new(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            priority: None,
        }
    }

    #[test]
    fn load_sorts_vocabulary() {
        let text = concat!(
            "{\"id\":\"1\",\"text\":\"a\",\"labels\":[\"News\"]}\n",
            "{\"id\":\"2\",\"text\":\"b\",\"labels\":[\"News\",\"Advice\"]}\n",
            "{\"id\":\"3\",\"text\":\"c\",\"labels\":[]}\n"
        );
        let (corpus, vocab) = parse_corpus(text, None).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(vocab.labels(), &["Advice".to_string(), "News".to_string()]);
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let (corpus, vocab) = parse_corpus("", None).unwrap();
        assert!(corpus.is_empty());
        assert_eq!(vocab.k(), 0);
    }

    #[test]
    fn unknown_label_names_the_label() {
        let vocab = LabelVocabulary::new(vec!["News".into()]).unwrap();
        let text = "{\"id\":\"1\",\"text\":\"a\",\"labels\":[\"MovePeople\"]}\n";
        let err = parse_corpus(text, Some(&vocab)).unwrap_err();
        assert!(err.to_string().contains("unknown label MovePeople"));
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "{\"id\":\"1\",\"text\":\"a\",\"labels\":[]}\nnot json\n";
        let err = parse_corpus(text, None).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let text = concat!(
            "{\"id\":\"1\",\"text\":\"a\",\"labels\":[]}\n",
            "{\"id\":\"1\",\"text\":\"b\",\"labels\":[]}\n"
        );
        let err = parse_corpus(text, None).unwrap_err();
        assert!(err.to_string().contains("duplicate tweet id 1"));
    }

    #[test]
    fn priority_out_of_range_rejected() {
        let text = "{\"id\":\"1\",\"text\":\"a\",\"labels\":[],\"priority\":1.5}\n";
        assert!(parse_corpus(text, None).is_err());
    }

    #[test]
    fn split_sizes_match_default_ratios() {
        let corpus: Vec<RawTweet> = (0..100).map(|i| tweet(&i.to_string(), &[])).collect();
        let split = make_split(&corpus, (0.8, 0.2), 0.2, 7).unwrap();
        assert_eq!(split.test.len(), 20);
        assert_eq!(split.valid.len(), 16);
        assert_eq!(split.train.len(), 64);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let corpus: Vec<RawTweet> = (0..50).map(|i| tweet(&i.to_string(), &[])).collect();
        let a = make_split(&corpus, (0.8, 0.2), 0.2, 3).unwrap();
        let b = make_split(&corpus, (0.8, 0.2), 0.2, 3).unwrap();
        assert_eq!(a, b);
        let c = make_split(&corpus, (0.8, 0.2), 0.2, 4).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn split_covers_corpus_disjointly() {
        let corpus: Vec<RawTweet> = (0..37).map(|i| tweet(&i.to_string(), &[])).collect();
        let split = make_split(&corpus, (0.8, 0.2), 0.2, 11).unwrap();
        let mut all: Vec<&String> = split
            .train
            .iter()
            .chain(&split.valid)
            .chain(&split.test)
            .collect();
        assert_eq!(all.len(), 37);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 37);
    }

    #[test]
    fn tiny_corpus_rejected() {
        let corpus: Vec<RawTweet> = (0..2).map(|i| tweet(&i.to_string(), &[])).collect();
        assert!(make_split(&corpus, (0.8, 0.2), 0.2, 1).is_err());
    }

    #[test]
    fn encode_label_positions() {
        let vocab =
            LabelVocabulary::new(vec!["A".into(), "B".into(), "C".into()]).unwrap();
        assert_eq!(
            encode_labels(&tweet("1", &["B"]), &vocab).unwrap().bits,
            vec![0, 1, 0]
        );
        assert_eq!(
            encode_labels(&tweet("2", &[]), &vocab).unwrap().bits,
            vec![0, 0, 0]
        );
        assert_eq!(
            encode_labels(&tweet("3", &["A", "C"]), &vocab).unwrap().bits,
            vec![1, 0, 1]
        );
    }

    #[test]
    fn vocabulary_ordering_is_stable_across_loads() {
        let text = concat!(
            "{\"id\":\"1\",\"text\":\"a\",\"labels\":[\"Zed\",\"Mid\"]}\n",
            "{\"id\":\"2\",\"text\":\"b\",\"labels\":[\"Alpha\"]}\n"
        );
        let (_, v1) = parse_corpus(text, None).unwrap();
        let (_, v2) = parse_corpus(text, None).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.labels(), &["Alpha", "Mid", "Zed"]);
    }

    #[test]
    fn encode_decode_round_trip() {
        let vocab =
            LabelVocabulary::new(vec!["A".into(), "B".into(), "C".into()]).unwrap();
        let t = tweet("1", &["C", "A"]);
        let vector = encode_labels(&t, &vocab).unwrap();
        let mut names = vector.to_names(&vocab);
        names.sort();
        assert_eq!(names, vec!["A".to_string(), "C".to_string()]);
    }
}
