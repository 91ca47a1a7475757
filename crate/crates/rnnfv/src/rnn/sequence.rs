use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An ordered list of equal-dimension real vectors, optionally labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub id: String,
    pub label: Option<i64>,
    pub vectors: Vec<Vec<f64>>,
}

impl FeatureSequence {
    pub fn new(id: impl Into<String>, vectors: Vec<Vec<f64>>, label: Option<i64>) -> Result<Self> {
        let id = id.into();
        if vectors.is_empty() {
            return Err(Error::Data(format!("sequence '{id}' is empty")));
        }
        let d = vectors[0].len();
        if d == 0 {
            return Err(Error::Data(format!("sequence '{id}' has zero-dimension vectors")));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != d {
                return Err(Error::Data(format!(
                    "sequence '{id}' element {i} has dimension {} but expected {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "sequence '{id}' element {i} contains non-finite values"
                )));
            }
        }
        Ok(Self { id, label, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

/// Maps symbol ids to embedding vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub alphabet: Vec<String>,
    /// M x D.
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(alphabet: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if alphabet.len() != vectors.len() {
            return Err(Error::Data(format!(
                "embedding table: {} tokens but {} vectors",
                alphabet.len(),
                vectors.len()
            )));
        }
        if vectors.is_empty() {
            return Err(Error::Data("embedding table is empty".into()));
        }
        let d = vectors[0].len();
        for (tok, v) in alphabet.iter().zip(&vectors) {
            if v.len() != d {
                return Err(Error::Data(format!(
                    "embedding for '{tok}' has dimension {} but expected {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("embedding for '{tok}' is non-finite")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for tok in &alphabet {
            if !seen.insert(tok.as_str()) {
                return Err(Error::Data(format!("duplicate token '{tok}' in embedding table")));
            }
        }
        Ok(Self { alphabet, vectors })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.alphabet.iter().position(|t| t == token)
    }
}

/// An ordered list of symbol ids with their embedding table.
#[derive(Debug, Clone)]
pub struct SymbolSequence {
    pub id: String,
    pub symbols: Vec<usize>,
    pub embeddings: Arc<EmbeddingTable>,
}

impl SymbolSequence {
    pub fn new(
        id: impl Into<String>,
        symbols: Vec<usize>,
        embeddings: Arc<EmbeddingTable>,
    ) -> Result<Self> {
        let id = id.into();
        if symbols.is_empty() {
            return Err(Error::Data(format!("symbol sequence '{id}' is empty")));
        }
        let m = embeddings.alphabet_size();
        for (i, &s) in symbols.iter().enumerate() {
            if s >= m {
                return Err(Error::Data(format!(
                    "symbol sequence '{id}' element {i}: id {s} out of range (alphabet size {m})"
                )));
            }
        }
        Ok(Self { id, symbols, embeddings })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Either kind of model input.
#[derive(Debug, Clone, Copy)]
pub enum SequenceRef<'a> {
    Features(&'a FeatureSequence),
    Symbols(&'a SymbolSequence),
}

impl<'a> From<&'a FeatureSequence> for SequenceRef<'a> {
    fn from(s: &'a FeatureSequence) -> Self {
        SequenceRef::Features(s)
    }
}

impl<'a> From<&'a SymbolSequence> for SequenceRef<'a> {
    fn from(s: &'a SymbolSequence) -> Self {
        SequenceRef::Symbols(s)
    }
}

impl<'a> SequenceRef<'a> {
    pub fn len(&self) -> usize {
        match self {
            SequenceRef::Features(s) => s.len(),
            SequenceRef::Symbols(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self) -> &str {
        match self {
            SequenceRef::Features(s) => &s.id,
            SequenceRef::Symbols(s) => &s.id,
        }
    }
}
