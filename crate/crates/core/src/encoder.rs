//! Tweet encoders behind one interface: either vectors imported from an
//! external model, or a trainable mean-pool over a learned token table.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::diffcore::{ParamStore, Tape, Tensor2, VarId};
use crate::error::{Error, Result};
use crate::preprocess::ProcessedTweet;

pub const TOKEN_TABLE_PARAM: &str = "encoder.table";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Imported,
    TrainableMeanpool,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Imported => "imported",
            EncoderKind::TrainableMeanpool => "trainable-meanpool",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "imported" => Ok(EncoderKind::Imported),
            "trainable-meanpool" => Ok(EncoderKind::TrainableMeanpool),
            other => Err(Error::InvalidParameter(format!(
                "unknown encoder kind {other} (expected imported or trainable-meanpool)"
            ))),
        }
    }
}

/// Which encoder to use and at what output dimension. `source` is required
/// for the imported kind.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub d: usize,
    pub source: Option<PathBuf>,
}

impl EncoderSpec {
    pub fn trainable(d: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::TrainableMeanpool,
            d,
            source: None,
        }
    }

    pub fn imported(d: usize, source: PathBuf) -> Self {
        EncoderSpec {
            kind: EncoderKind::Imported,
            d,
            source: Some(source),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TweetEmbedding {
    pub vector: Vec<f64>,
}

/// Externally computed per-tweet vectors, keyed by tweet id.
/// File layout: `tweet_id v1 ... vd` per line.
#[derive(Debug, Clone, Default)]
pub struct ImportedEmbeddings {
    d: usize,
    map: BTreeMap<String, Vec<f64>>,
}

impl ImportedEmbeddings {
    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.map.get(id).map(Vec::as_slice)
    }
}

/// Parse an imported-embedding file. All rows must share one dimension and
/// ids must be unique.
pub fn load_imported_embeddings(path: &Path) -> Result<ImportedEmbeddings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_imported_embeddings(&text)
}

pub fn parse_imported_embeddings(text: &str) -> Result<ImportedEmbeddings> {
    let mut out = ImportedEmbeddings::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().ok_or_else(|| Error::MalformedLine {
            line: lineno + 1,
            message: "missing tweet id".into(),
        })?;
        let vector: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::MalformedLine {
                    line: lineno + 1,
                    message: format!("bad number {p}"),
                })
            })
            .collect::<Result<_>>()?;
        if out.map.is_empty() {
            out.d = vector.len();
        } else if vector.len() != out.d {
            return Err(Error::EmbeddingDimension {
                expected: out.d,
                found: vector.len(),
                entry: id.to_string(),
            });
        }
        if out.map.contains_key(id) {
            return Err(Error::DuplicateEmbeddingId(id.to_string()));
        }
        out.map.insert(id.to_string(), vector);
    }
    Ok(out)
}

/// Deterministically ordered token inventory backing the trainable encoder.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub fn from_tokens<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        let mut sorted: Vec<String> = tokens.into_iter().map(Into::into).collect();
        sorted.sort();
        sorted.dedup();
        let index = sorted
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TokenVocab {
            tokens: sorted,
            index,
        }
    }

    pub fn from_corpus<'a, I: IntoIterator<Item = &'a ProcessedTweet>>(tweets: I) -> Self {
        Self::from_tokens(
            tweets
                .into_iter()
                .flat_map(|t| t.tokens.iter().cloned()),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Runtime encoder: kind, dimension and whatever data it needs.
#[derive(Debug, Clone)]
pub enum Encoder {
    Imported {
        d: usize,
        embeddings: ImportedEmbeddings,
    },
    Trainable {
        d: usize,
        vocab: TokenVocab,
    },
}

impl Encoder {
    pub fn imported(embeddings: ImportedEmbeddings) -> Self {
        Encoder::Imported {
            d: embeddings.dimension(),
            embeddings,
        }
    }

    pub fn trainable(d: usize, vocab: TokenVocab) -> Self {
        Encoder::Trainable { d, vocab }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Encoder::Imported { d, .. } | Encoder::Trainable { d, .. } => *d,
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Imported { .. } => EncoderKind::Imported,
            Encoder::Trainable { .. } => EncoderKind::TrainableMeanpool,
        }
    }

    /// Insert the trainable token table into the store (no-op for imported).
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha20Rng) {
        if let Encoder::Trainable { d, vocab } = self {
            let data: Vec<f64> = (0..vocab.len() * d)
                .map(|_| rng.gen_range(-0.25..0.25))
                .collect();
            store.insert(TOKEN_TABLE_PARAM, Tensor2::from_vec(vocab.len(), *d, data));
        }
    }

    /// Mean-pool weights over the token table: one row per tweet, 1/m at each
    /// in-vocabulary token occurrence (duplicates accumulate). Tweets with no
    /// in-vocabulary tokens get a zero row, hence a zero embedding.
    fn pooling_matrix(&self, tweets: &[&ProcessedTweet]) -> Tensor2 {
        let Encoder::Trainable { vocab, .. } = self else {
            unreachable!("pooling matrix is only defined for the trainable encoder");
        };
        let mut pool = Tensor2::zeros(tweets.len(), vocab.len());
        for (row, tweet) in tweets.iter().enumerate() {
            let hits: Vec<usize> = tweet
                .tokens
                .iter()
                .filter_map(|t| vocab.index_of(t))
                .collect();
            if hits.is_empty() {
                continue;
            }
            let w = 1.0 / hits.len() as f64;
            for col in hits {
                pool.set(row, col, pool.get(row, col) + w);
            }
        }
        pool
    }

    /// Differentiable batch encoding: returns a (batch x d) node on the tape.
    /// `table` must be the bound token-table leaf for the trainable kind and
    /// is ignored for imported vectors (constants).
    pub fn encode_batch_tape(
        &self,
        tape: &mut Tape,
        tweets: &[&ProcessedTweet],
        table: Option<VarId>,
    ) -> Result<VarId> {
        match self {
            Encoder::Trainable { .. } => {
                let table = table.ok_or_else(|| {
                    Error::InvalidParameter("trainable encoder needs its token table".into())
                })?;
                let pool = tape.leaf(self.pooling_matrix(tweets));
                tape.matmul(pool, table)
            }
            Encoder::Imported { d, embeddings } => {
                let mut data = Vec::with_capacity(tweets.len() * d);
                for tweet in tweets {
                    let v = embeddings
                        .get(&tweet.id)
                        .ok_or_else(|| Error::MissingEmbedding(tweet.id.clone()))?;
                    data.extend_from_slice(v);
                }
                Ok(tape.leaf(Tensor2::from_vec(tweets.len(), *d, data)))
            }
        }
    }

    /// Forward-only encoding of a single tweet.
    pub fn encode(&self, tweet: &ProcessedTweet, store: &ParamStore) -> Result<TweetEmbedding> {
        match self {
            Encoder::Imported { embeddings, .. } => embeddings
                .get(&tweet.id)
                .map(|v| TweetEmbedding { vector: v.to_vec() })
                .ok_or_else(|| Error::MissingEmbedding(tweet.id.clone())),
            Encoder::Trainable { .. } => {
                let mut tape = Tape::new();
                let table = tape.leaf(store.get(TOKEN_TABLE_PARAM)?.clone());
                let out = self.encode_batch_tape(&mut tape, &[tweet], Some(table))?;
                Ok(TweetEmbedding {
                    vector: tape.value(out).row(0).to_vec(),
                })
            }
        }
    }
}
