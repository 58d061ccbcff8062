//! Embedding providers and phrase-set composition.
//!
//! An internal provider holds one vector per vocabulary phrase and embeds a
//! remainder as the mean of its phrase vectors. An external provider also
//! carries one precomputed vector per evaluation instance, produced by an
//! encoder run outside this crate.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::embed::{file_key, EmbeddingTable, Matrix};
use crate::io::FormatError;
use crate::scalar::{dot, norm};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("unknown phrase {0:?}")]
    UnknownPhrase(String),
    #[error("no instance embedding for {0:?}")]
    MissingInstanceEmbedding(String),
    #[error("provider lacks vocabulary phrase {0:?}")]
    MissingVocabulary(String),
    #[error("empty phrase set")]
    EmptyPhraseSet,
    #[error("k must lie in [1, {max}], got {k}")]
    InvalidK { k: usize, max: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    InternalTable,
    ExternalVocabPlusInstances,
}

/// Denominator of the phrase-set mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Every phrase counts; unknown phrases add a zero vector.
    #[default]
    AllPhrases,
    KnownOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseSetEmbedding<F> {
    pub vector: Vec<F>,
    pub n_known: usize,
    pub is_zero: bool,
}

/// Cosine similarity in `f64`; zero when either vector has zero norm.
pub fn similarity<F: Scalar>(u: &[F], v: &[F]) -> Result<f64, StoreError> {
    if u.len() != v.len() {
        return Err(StoreError::DimMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u).to_f64_lossless(), norm(v).to_f64_lossless());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v).to_f64_lossless() / (nu * nv)).clamp(-1.0, 1.0))
}

/// Read-only phrase and instance vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingProvider<F> {
    kind: ProviderKind,
    vocab: Matrix<F>,
    vocab_index: HashMap<String, usize>,
    norms: Vec<f64>,
    instances: Option<(Matrix<F>, HashMap<String, usize>)>,
    pub denominator: Denominator,
}

impl<F: Scalar> EmbeddingProvider<F> {
    /// Internal provider over phrase vectors.
    pub fn internal(vocab: Matrix<F>) -> Result<Self, StoreError> {
        Self::build(ProviderKind::InternalTable, vocab, None)
    }

    /// Internal provider over a trained table's input vectors.
    pub fn from_table(table: &EmbeddingTable<F>) -> Result<Self, StoreError> {
        Self::internal(table.input_matrix())
    }

    /// External provider; instance rows are keyed by instance id.
    pub fn external(vocab: Matrix<F>, instances: Matrix<F>) -> Result<Self, StoreError> {
        if vocab.dim != instances.dim {
            return Err(StoreError::DimMismatch(vocab.dim, instances.dim));
        }
        let index = instances.key_index()?;
        Self::build(
            ProviderKind::ExternalVocabPlusInstances,
            vocab,
            Some((instances, index)),
        )
    }

    /// Loads a vocabulary embedding file and, when given, an instance file.
    pub fn load(vocab_path: &Path, instance_path: Option<&Path>) -> Result<Self, StoreError> {
        let vocab = Matrix::read_path(vocab_path)?;
        match instance_path {
            None => Self::internal(vocab),
            Some(p) => Self::external(vocab, Matrix::read_path(p)?),
        }
    }

    fn build(
        kind: ProviderKind,
        vocab: Matrix<F>,
        instances: Option<(Matrix<F>, HashMap<String, usize>)>,
    ) -> Result<Self, StoreError> {
        let vocab_index = vocab.key_index()?;
        let norms = (0..vocab.rows())
            .map(|i| norm(vocab.row(i)).to_f64_lossless())
            .collect();
        Ok(EmbeddingProvider {
            kind,
            vocab,
            vocab_index,
            norms,
            instances,
            denominator: Denominator::default(),
        })
    }

    pub fn kind(&self) -> ProviderKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.vocab.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.rows() == 0
    }

    pub fn phrases(&self) -> &[String] {
        &self.vocab.phrases
    }

    pub fn row_of(&self, phrase: &str) -> Option<usize> {
        self.vocab_index.get(&file_key(phrase)).copied()
    }

    pub fn vector(&self, phrase: &str) -> Option<&[F]> {
        self.row_of(phrase).map(|i| self.vocab.row(i))
    }

    /// Reorders rows to follow vocabulary ids, dropping any extras.
    pub fn aligned_to(&self, vocabulary: &Vocabulary) -> Result<Self, StoreError> {
        let dim = self.dim();
        let mut data = Vec::with_capacity(vocabulary.len() * dim);
        for phrase in vocabulary.phrases() {
            let row = self
                .vector(phrase)
                .ok_or_else(|| StoreError::MissingVocabulary(phrase.clone()))?;
            data.extend_from_slice(row);
        }
        let vocab = Matrix::new(vocabulary.phrases().to_vec(), dim, data)?;
        let mut out = Self::build(self.kind, vocab, self.instances.clone())?;
        out.denominator = self.denominator;
        Ok(out)
    }

    /// Mean of phrase vectors (internal kind).
    pub fn embed_phrase_set(&self, phrases: &[String]) -> Result<PhraseSetEmbedding<F>, StoreError> {
        if phrases.is_empty() {
            return Err(StoreError::EmptyPhraseSet);
        }
        let mut vector = vec![F::zero(); self.dim()];
        let mut n_known = 0;
        for p in phrases {
            if let Some(v) = self.vector(p) {
                n_known += 1;
                for (acc, &x) in vector.iter_mut().zip(v) {
                    *acc += x;
                }
            }
        }
        let denom = match self.denominator {
            Denominator::AllPhrases => phrases.len(),
            Denominator::KnownOnly => n_known.max(1),
        };
        let scale = F::one() / F::from_usize_lossy(denom);
        vector.iter_mut().for_each(|x| *x *= scale);
        Ok(PhraseSetEmbedding {
            vector,
            n_known,
            is_zero: n_known == 0,
        })
    }

    /// Remainder embedding of one evaluation instance: the phrase-set mean
    /// for the internal kind, the precomputed row for the external kind.
    pub fn embed_instance(
        &self,
        instance_id: &str,
        phrases: &[String],
    ) -> Result<PhraseSetEmbedding<F>, StoreError> {
        match &self.instances {
            None => self.embed_phrase_set(phrases),
            Some((matrix, index)) => {
                let row = index
                    .get(&file_key(instance_id))
                    .ok_or_else(|| StoreError::MissingInstanceEmbedding(instance_id.to_string()))?;
                let vector = matrix.row(*row).to_vec();
                let is_zero = vector.iter().all(|x| x.is_zero());
                Ok(PhraseSetEmbedding {
                    vector,
                    n_known: phrases.iter().filter(|p| self.row_of(p).is_some()).count(),
                    is_zero,
                })
            }
        }
    }

    /// Cosine of `query` against every row, in row order.
    pub fn similarities(&self, query: &[F]) -> Result<Vec<f64>, StoreError> {
        if query.len() != self.dim() {
            return Err(StoreError::DimMismatch(query.len(), self.dim()));
        }
        let nq = norm(query).to_f64_lossless();
        Ok((0..self.len())
            .map(|i| {
                let nv = self.norms[i];
                if nq == 0.0 || nv == 0.0 {
                    0.0
                } else {
                    (dot(query, self.vocab.row(i)).to_f64_lossless() / (nq * nv)).clamp(-1.0, 1.0)
                }
            })
            .collect())
    }

    /// The `k` most similar other phrases, ties broken by row order.
    pub fn nearest_neighbors(&self, phrase: &str, k: usize) -> Result<Vec<(String, f64)>, StoreError> {
        let row = self
            .row_of(phrase)
            .ok_or_else(|| StoreError::UnknownPhrase(phrase.to_string()))?;
        let max = self.len().saturating_sub(1);
        if k == 0 || k > max {
            return Err(StoreError::InvalidK { k, max });
        }
        let sims = self.similarities(self.vocab.row(row))?;
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| i != row).collect();
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(k)
            .map(|i| (self.vocab.phrases[i].clone(), sims[i]))
            .collect())
    }
}
