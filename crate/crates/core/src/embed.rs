//! Document and query vectors, and the encoders that produce them.
//!
//! The default [`TfIdfEncoder`] weights each term by `tf · ln(N / df)` over
//! the title and lyrics fields, then scales the vector to unit length. An
//! [`EmbeddingEncoder`] can be loaded from a plain-text vector file instead;
//! both satisfy [`Encoder`], which is all the rankers depend on.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SongId;
use crate::hash::{self, Fnv1a};
use crate::textprep::TokenStream;

pub const ENCODER_FILE: &str = "encoder.json";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot fit an encoder on an empty corpus")]
    EmptyCorpus,
    #[error("vectors come from different spaces ({0:016x} vs {1:016x})")]
    SpaceMismatch(u64, u64),
    #[error("embedding file line {line}: {reason}")]
    EmbeddingFormat { line: usize, reason: String },
    #[error("encoder file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("encoder at {path} changed since the index was built (fingerprint {found:016x}, expected {expected:016x})")]
    Stale {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("encoder `{0}` cannot be saved")]
    NotPersistable(String),
    #[error("encoder I/O at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Sparse unit vector. `entries` are sorted by dimension with no repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub doc_id: Option<SongId>,
    /// Fingerprint of the encoder that produced the vector.
    pub space: u64,
    pub entries: Vec<(u32, f64)>,
    /// Euclidean norm before normalization.
    pub norm: f64,
}

impl DocVector {
    /// Normalizes raw weights; zero weights are dropped.
    pub fn from_weights(doc_id: Option<SongId>, space: u64, weights: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut entries: Vec<(u32, f64)> = weights.into_iter().filter(|&(_, w)| w != 0.0).collect();
        entries.sort_unstable_by_key(|e| e.0);
        entries.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        } else {
            entries.clear();
        }
        DocVector {
            doc_id,
            space,
            entries,
            norm,
        }
    }

    pub fn empty(doc_id: Option<SongId>, space: u64) -> Self {
        DocVector {
            doc_id,
            space,
            entries: Vec::new(),
            norm: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Dot product of two unit vectors, clamped to [-1, 1].
pub fn cosine(a: &DocVector, b: &DocVector) -> Result<f64, EmbedError> {
    if a.space != b.space {
        return Err(EmbedError::SpaceMismatch(a.space, b.space));
    }
    Ok(sparse_dot(&a.entries, &b.entries).clamp(-1.0, 1.0))
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Orders `(id, score)` by score descending, then id ascending.
pub fn by_score_then_id(a: &(SongId, f64), b: &(SongId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

pub trait Encoder: Send + Sync + fmt::Debug {
    /// Short name for logs and health output.
    fn name(&self) -> &str;
    /// Hash of the fitted state. Vectors carry it as their space tag.
    fn fingerprint(&self) -> u64;
    fn encode_doc(&self, doc_id: SongId, stream: &TokenStream) -> DocVector;
    fn encode_query(&self, terms: &[String]) -> DocVector;
    /// What to write to `encoder.json`, if the encoder can be reloaded.
    fn saved(&self) -> Option<EncoderFile> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfEncoder {
    doc_count: usize,
    vocabulary: BTreeMap<String, u32>,
    df: Vec<u32>,
    idf: Vec<f64>,
    fingerprint: u64,
}

impl TfIdfEncoder {
    /// Fits on one stream per document (title and lyrics tokens).
    pub fn fit(streams: &[TokenStream]) -> Result<Self, EmbedError> {
        if streams.is_empty() {
            return Err(EmbedError::EmptyCorpus);
        }
        let mut df: BTreeMap<&str, u32> = BTreeMap::new();
        for stream in streams {
            let mut seen: Vec<&str> = stream.tokens.iter().map(|t| t.surface.as_str()).collect();
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_default() += 1;
            }
        }
        let (terms, df): (Vec<String>, Vec<u32>) = df.into_iter().map(|(t, d)| (t.to_string(), d)).unzip();
        Ok(Self::from_parts(streams.len(), terms, df))
    }

    fn from_parts(doc_count: usize, terms: Vec<String>, df: Vec<u32>) -> Self {
        let n = doc_count as f64;
        let idf = df.iter().map(|&d| (n / f64::from(d)).ln()).collect();
        let mut h = Fnv1a::new();
        h.write(b"tfidf");
        h.write_u64(doc_count as u64);
        for (term, d) in terms.iter().zip(&df) {
            h.write(term.as_bytes());
            h.write(&[0]);
            h.write_u64(u64::from(*d));
        }
        TfIdfEncoder {
            doc_count,
            vocabulary: terms.into_iter().enumerate().map(|(i, t)| (t, i as u32)).collect(),
            df,
            idf,
            fingerprint: h.finish(),
        }
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i as usize])
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    fn encode<'a>(&self, doc_id: Option<SongId>, terms: impl Iterator<Item = &'a str>) -> DocVector {
        let mut tf: HashMap<u32, u32> = HashMap::new();
        for term in terms {
            if let Some(&id) = self.vocabulary.get(term) {
                *tf.entry(id).or_default() += 1;
            }
        }
        DocVector::from_weights(
            doc_id,
            self.fingerprint,
            tf.into_iter().map(|(id, n)| (id, f64::from(n) * self.idf[id as usize])),
        )
    }
}

impl Encoder for TfIdfEncoder {
    fn name(&self) -> &str {
        "tfidf"
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn encode_doc(&self, doc_id: SongId, stream: &TokenStream) -> DocVector {
        self.encode(Some(doc_id), stream.tokens.iter().map(|t| t.surface.as_str()))
    }

    fn encode_query(&self, terms: &[String]) -> DocVector {
        self.encode(None, terms.iter().map(String::as_str))
    }

    fn saved(&self) -> Option<EncoderFile> {
        Some(EncoderFile::Tfidf {
            doc_count: self.doc_count,
            terms: self.vocabulary.keys().cloned().collect(),
            df: self.df.clone(),
        })
    }
}

/// Dense term vectors read from a text file.
///
/// The first line gives the dimension (a `count dim` header is also
/// accepted). Every other non-blank line is `term v1 v2 … vdim`. A document
/// vector is the frequency-weighted sum of its term vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingEncoder {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    source: Option<PathBuf>,
    fingerprint: u64,
}

impl EmbeddingEncoder {
    pub fn from_text(text: &str) -> Result<Self, EmbedError> {
        let bad = |line: usize, reason: &str| EmbedError::EmbeddingFormat {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing dimension header"))?;
        let header: Vec<&str> = header.split_whitespace().collect();
        let dim: usize = match header.as_slice() {
            [d] | [_, d] => d.parse().map_err(|_| bad(1, "dimension is not an integer"))?,
            _ => return Err(bad(1, "header must be `dim` or `count dim`")),
        };
        if dim == 0 {
            return Err(bad(1, "dimension must be positive"));
        }
        let mut vectors = BTreeMap::new();
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let term = parts.next().expect("non-blank line");
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(i + 1, "non-numeric component"))?;
            if values.len() != dim {
                return Err(bad(i + 1, &format!("expected {dim} components, found {}", values.len())));
            }
            if vectors.insert(term.to_string(), values).is_some() {
                return Err(bad(i + 1, &format!("duplicate term {term:?}")));
            }
        }
        let mut h = Fnv1a::new();
        h.write(b"embedding");
        h.write_u64(dim as u64);
        for (term, values) in &vectors {
            h.write(term.as_bytes());
            h.write(&[0]);
            for v in values {
                h.write_u64(v.to_bits());
            }
        }
        Ok(EmbeddingEncoder {
            dim,
            vectors: vectors.into_iter().collect(),
            source: None,
            fingerprint: h.finish(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, EmbedError> {
        let text = fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut encoder = Self::from_text(&text)?;
        encoder.source = Some(path.to_path_buf());
        Ok(encoder)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn encode<'a>(&self, doc_id: Option<SongId>, terms: impl Iterator<Item = &'a str>) -> DocVector {
        let mut sum = vec![0.0; self.dim];
        for term in terms {
            if let Some(v) = self.vectors.get(term) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
        }
        DocVector::from_weights(
            doc_id,
            self.fingerprint,
            sum.into_iter().enumerate().map(|(i, x)| (i as u32, x)),
        )
    }
}

impl Encoder for EmbeddingEncoder {
    fn name(&self) -> &str {
        "embedding"
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn encode_doc(&self, doc_id: SongId, stream: &TokenStream) -> DocVector {
        self.encode(Some(doc_id), stream.tokens.iter().map(|t| t.surface.as_str()))
    }

    fn encode_query(&self, terms: &[String]) -> DocVector {
        self.encode(None, terms.iter().map(String::as_str))
    }

    fn saved(&self) -> Option<EncoderFile> {
        self.source.as_ref().map(|path| EncoderFile::Embedding {
            path: path.clone(),
            fingerprint: hash::to_hex(self.fingerprint),
        })
    }
}

/// Contents of `encoder.json`.
///
/// TF-IDF state is stored as integer document frequencies so that reloading
/// recomputes bit-identical IDF values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderFile {
    Tfidf {
        doc_count: usize,
        terms: Vec<String>,
        df: Vec<u32>,
    },
    Embedding {
        path: PathBuf,
        fingerprint: String,
    },
}

impl EncoderFile {
    pub fn open(self, path: &Path) -> Result<Arc<dyn Encoder>, EmbedError> {
        let malformed = |reason: &str| EmbedError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        match self {
            EncoderFile::Tfidf { doc_count, terms, df } => {
                if terms.len() != df.len() || !terms.windows(2).all(|w| w[0] < w[1]) {
                    return Err(malformed("terms must be sorted and match df"));
                }
                if doc_count == 0 || df.iter().any(|&d| d == 0 || d as usize > doc_count) {
                    return Err(malformed("document frequencies out of range"));
                }
                Ok(Arc::new(TfIdfEncoder::from_parts(doc_count, terms, df)))
            }
            EncoderFile::Embedding {
                path: source,
                fingerprint,
            } => {
                let expected = hash::from_hex(&fingerprint).ok_or_else(|| malformed("bad fingerprint"))?;
                let encoder = EmbeddingEncoder::from_file(&source)?;
                if encoder.fingerprint != expected {
                    return Err(EmbedError::Stale {
                        path: source,
                        expected,
                        found: encoder.fingerprint,
                    });
                }
                Ok(Arc::new(encoder))
            }
        }
    }
}

pub fn persist_encoder(encoder: &dyn Encoder, dir: &Path) -> Result<(), EmbedError> {
    let file = encoder
        .saved()
        .ok_or_else(|| EmbedError::NotPersistable(encoder.name().to_string()))?;
    let path = dir.join(ENCODER_FILE);
    let body = serde_json::to_vec(&file).expect("encoder file serializes");
    crate::corpus::write_atomic(&path, &body).map_err(|source| EmbedError::Io { path, source })
}

pub fn load_encoder(dir: &Path) -> Result<Arc<dyn Encoder>, EmbedError> {
    let path = dir.join(ENCODER_FILE);
    let bytes = fs::read(&path).map_err(|source| EmbedError::Io {
        path: path.clone(),
        source,
    })?;
    let file: EncoderFile = serde_json::from_slice(&bytes).map_err(|e| EmbedError::Format {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    file.open(&path)
}

/// Document vectors keyed by id, all from one encoder.
#[derive(Debug, Clone)]
pub struct VectorStore {
    space: u64,
    vectors: Vec<DocVector>,
    slot: HashMap<SongId, usize>,
}

impl VectorStore {
    /// Vectors must carry a `doc_id` and share `space`.
    pub fn new(space: u64, mut vectors: Vec<DocVector>) -> Result<Self, EmbedError> {
        if let Some(v) = vectors.iter().find(|v| v.space != space) {
            return Err(EmbedError::SpaceMismatch(space, v.space));
        }
        vectors.sort_by_key(|v| v.doc_id);
        let slot = vectors
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.doc_id.map(|id| (id, i)))
            .collect();
        Ok(VectorStore { space, vectors, slot })
    }

    /// Encodes every `(id, stream)` pair.
    pub fn encode_all(encoder: &dyn Encoder, streams: &[(SongId, TokenStream)]) -> Self {
        use rayon::prelude::*;
        let vectors = streams
            .par_iter()
            .map(|(id, s)| encoder.encode_doc(*id, s))
            .collect();
        Self::new(encoder.fingerprint(), vectors).expect("one encoder, one space")
    }

    pub fn space(&self) -> u64 {
        self.space
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: SongId) -> Option<&DocVector> {
        self.slot.get(&id).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &DocVector> {
        self.vectors.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = SongId> + '_ {
        self.vectors.iter().filter_map(|v| v.doc_id)
    }

    /// Cosine of `query` against one stored document; 0.0 for unknown ids.
    pub fn similarity(&self, query: &DocVector, id: SongId) -> Result<f64, EmbedError> {
        match self.get(id) {
            Some(v) => cosine(query, v),
            None if query.space == self.space => Ok(0.0),
            None => Err(EmbedError::SpaceMismatch(query.space, self.space)),
        }
    }

    /// Up to `k` candidates by cosine, descending, ties by ascending id.
    /// Candidates scoring zero are kept; unknown ids are skipped.
    pub fn topk_similar(&self, query: &DocVector, k: usize, candidates: &[SongId]) -> Result<Vec<(SongId, f64)>, EmbedError> {
        if query.space != self.space {
            return Err(EmbedError::SpaceMismatch(query.space, self.space));
        }
        let mut scored = Vec::with_capacity(candidates.len());
        for &id in candidates {
            if let Some(v) = self.get(id) {
                scored.push((id, cosine(query, v)?));
            }
        }
        scored.sort_unstable_by(by_score_then_id);
        scored.dedup_by_key(|s| s.0);
        scored.truncate(k);
        Ok(scored)
    }

    pub fn topk_all(&self, query: &DocVector, k: usize) -> Result<Vec<(SongId, f64)>, EmbedError> {
        let ids: Vec<SongId> = self.ids().collect();
        self.topk_similar(query, k, &ids)
    }
}
