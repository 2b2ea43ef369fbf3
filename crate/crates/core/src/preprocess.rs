//! Tweet cleaning, tokenization and gazetteer entity spotting.
//!
//! Cleaning lowercases, maps emojis to name tokens, drops URLs, @-mentions
//! and stop-words, strips `#` from hashtags (keeping the tag text), removes
//! non-ASCII characters and punctuation runs. Degenerate inputs yield empty
//! token lists rather than errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{encode_labels, LabelVector, LabelVocabulary, RawTweet};
use crate::error::{Error, Result};

const BUNDLED_STOPLIST: &str = include_str!("assets/stopwords_en.txt");

/// Lowercased stop-word set. One token per line on disk.
#[derive(Debug, Clone, Default)]
pub struct Stoplist {
    words: BTreeSet<String>,
}

impl Stoplist {
    pub fn empty() -> Self {
        Stoplist::default()
    }

    /// The bundled ~150-word English list.
    pub fn bundled() -> Self {
        Stoplist::from_text(BUNDLED_STOPLIST)
    }

    pub fn from_text(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Stoplist { words }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Stoplist::from_text(&text))
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Stoplist {
            words: words.into_iter().map(|w| w.into().to_lowercase()).collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Emoji-to-name substitutions, applied before tokenization.
/// File layout: `emoji<TAB>name` per line. Longer emoji sequences are
/// replaced first so multi-codepoint sequences win over their prefixes.
#[derive(Debug, Clone, Default)]
pub struct EmojiMap {
    entries: Vec<(String, String)>,
}

impl EmojiMap {
    pub fn empty() -> Self {
        EmojiMap::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (S, S)>, S: Into<String>>(pairs: I) -> Self {
        let mut entries: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(e, n)| (e.into(), n.into()))
            .collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        EmojiMap { entries }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (emoji, name) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
                line: lineno + 1,
                message: "expected emoji<TAB>name".into(),
            })?;
            pairs.push((emoji.to_string(), name.trim().to_string()));
        }
        Ok(EmojiMap::from_pairs(pairs))
    }

    fn apply(&self, text: &str) -> String {
        let mut out = text.to_string();
        for (emoji, name) in &self.entries {
            if out.contains(emoji.as_str()) {
                out = out.replace(emoji.as_str(), &format!(" {name} "));
            }
        }
        out
    }
}

/// Case-insensitive multi-word surface forms for entity spotting.
/// File layout: one surface form per line.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeSet<String>,
    max_tokens: usize,
}

impl Gazetteer {
    pub fn empty() -> Self {
        Gazetteer::default()
    }

    /// Normalizes entries to lowercase single-spaced token sequences.
    /// Rejects empty entries and entries made solely of stop-words.
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(
        surfaces: I,
        stoplist: &Stoplist,
    ) -> Result<Self> {
        let mut entries = BTreeSet::new();
        let mut max_tokens = 0;
        for surface in surfaces {
            let tokens: Vec<String> = surface
                .as_ref()
                .to_lowercase()
                .split_whitespace()
                .map(str::to_string)
                .collect();
            if tokens.is_empty() {
                return Err(Error::InvalidData("empty gazetteer entry".into()));
            }
            if tokens.iter().all(|t| stoplist.contains(t)) {
                return Err(Error::InvalidData(format!(
                    "gazetteer entry \"{}\" consists solely of stop-words",
                    tokens.join(" ")
                )));
            }
            max_tokens = max_tokens.max(tokens.len());
            entries.insert(tokens.join(" "));
        }
        Ok(Gazetteer {
            entries,
            max_tokens,
        })
    }

    pub fn load(path: &Path, stoplist: &Stoplist) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Gazetteer::new(text.lines().filter(|l| !l.trim().is_empty()), stoplist)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn contains(&self, joined: &str) -> bool {
        self.entries.contains(joined)
    }
}

/// A cleaned tweet ready for graph construction and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedTweet {
    pub id: String,
    pub tokens: Vec<String>,
    pub entities: Vec<String>,
    pub label_vector: LabelVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<f64>,
}

/// Processed corpus container persisted as one JSON document; keeps the
/// vocabulary that fixed the label-vector index semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedCorpus {
    pub vocab: LabelVocabulary,
    pub tweets: Vec<ProcessedTweet>,
}

impl ProcessedCorpus {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string(self).map_err(|e| Error::InvalidData(e.to_string()))?;
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

fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://") || token.starts_with("www.")
}

fn clean_token(raw: &str, stoplist: &Stoplist) -> Option<String> {
    let ascii: String = raw.chars().filter(char::is_ascii).collect();
    // keep leading @ and # so mention/hashtag handling sees them
    let s = ascii.trim_start_matches(|c: char| !(c.is_ascii_alphanumeric() || c == '@' || c == '#'));
    if s.starts_with('@') {
        return None;
    }
    let s = s.trim_start_matches('#');
    if is_url(s) {
        return None;
    }
    let s = s.trim_start_matches(|c: char| !c.is_ascii_alphanumeric());
    let s = s.trim_end_matches(|c: char| !c.is_ascii_alphanumeric());
    if s.is_empty() || stoplist.contains(s) {
        return None;
    }
    Some(s.to_string())
}

/// Lowercased, cleaned token sequence for a raw tweet text.
pub fn clean_and_tokenize(text: &str, stoplist: &Stoplist, emoji_map: &EmojiMap) -> Vec<String> {
    let mapped = emoji_map.apply(text).to_lowercase();
    mapped
        .split_whitespace()
        .filter_map(|raw| clean_token(raw, stoplist))
        .collect()
}

/// Longest-match, left-to-right, non-overlapping gazetteer spans as
/// half-open token ranges.
pub fn spot_entity_spans(tokens: &[String], gaz: &Gazetteer) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    if gaz.max_tokens == 0 {
        return spans;
    }
    let mut i = 0;
    while i < tokens.len() {
        let upper = gaz.max_tokens.min(tokens.len() - i);
        let mut advanced = false;
        for len in (1..=upper).rev() {
            let joined = tokens[i..i + len].join(" ");
            if gaz.contains(&joined) {
                spans.push((i, i + len));
                i += len;
                advanced = true;
                break;
            }
        }
        if !advanced {
            i += 1;
        }
    }
    spans
}

/// Entity surface strings, one per occurrence, in token order.
pub fn spot_entities(tokens: &[String], gaz: &Gazetteer) -> Vec<String> {
    spot_entity_spans(tokens, gaz)
        .into_iter()
        .map(|(a, b)| tokens[a..b].join(" "))
        .collect()
}

/// Clean, spot entities and encode labels for every tweet, preserving order.
/// Tweets whose text cleans to zero tokens are retained.
pub fn preprocess_corpus(
    corpus: &[RawTweet],
    vocab: &LabelVocabulary,
    stoplist: &Stoplist,
    emoji_map: &EmojiMap,
    gaz: &Gazetteer,
) -> Result<Vec<ProcessedTweet>> {
    corpus
        .iter()
        .map(|tweet| {
            let tokens = clean_and_tokenize(&tweet.text, stoplist, emoji_map);
            let entities = spot_entities(&tokens, gaz);
            let label_vector = encode_labels(tweet, vocab)?;
            Ok(ProcessedTweet {
                id: tweet.id.clone(),
                tokens,
                entities,
                label_vector,
                priority: tweet.priority,
            })
        })
        .collect()
}
