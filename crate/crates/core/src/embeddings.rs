//! Pretrained word-vector table in the usual text layout:
//! `token v1 v2 ... vF`, space-separated, one token per line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Token-to-vector map with a fixed dimension; lookups are case-insensitive.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Table with no entries; every lookup misses. Useful when node features
    /// should be fully random-initialized at a chosen dimension.
    pub fn empty(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::EmbeddingDimension {
                expected: self.dimension,
                found: vector.len(),
                entry: token.to_string(),
            });
        }
        let key = token.to_lowercase();
        if self.vectors.contains_key(&key) {
            return Err(Error::DuplicateEmbeddingId(key));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Parse a text table; the first row fixes the dimension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().ok_or_else(|| Error::MalformedLine {
                line: lineno + 1,
                message: "missing token".into(),
            })?;
            let vector: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| Error::MalformedLine {
                        line: lineno + 1,
                        message: format!("bad number {p}"),
                    })
                })
                .collect::<Result<_>>()?;
            if vector.is_empty() {
                return Err(Error::MalformedLine {
                    line: lineno + 1,
                    message: "row has no vector components".into(),
                });
            }
            let table = table.get_or_insert_with(|| EmbeddingTable::empty(vector.len()));
            table.insert(token, vector)?;
        }
        table.ok_or_else(|| Error::InvalidData("embedding table file is empty".into()))
    }
}
