//! Field-aware inverted index with Okapi BM25 scoring.
//!
//! Each song contributes three token streams (title, artist, lyrics). The
//! score of a document for a query is
//!
//! ```text
//! score = Σ_f w_f · Σ_t idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·len_f/avglen_f))
//! idf(t) = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! where `df` counts documents containing `t` in any field and each field is
//! length-normalized against its own average.
//!
//! # On-disk layout
//!
//! `index.lidx` is one ASCII header line followed by a JSON body:
//!
//! ```text
//! LYRICSIDX <format-version> <pipeline-fingerprint-hex16>\n
//! {"format_version":1,"config_fingerprint":"…","corpus_checksum":"…",
//!  "params":{…},"avg_field_length":[t,a,l],"docs":[["id",[t,a,l]],…],
//!  "terms":["…",…],"postings":[[[doc_ordinal,field_ordinal,[positions…]],…],…]}
//! ```
//!
//! `docs` is sorted by id and postings refer to documents by their ordinal in
//! that list. Field ordinals are 0 = title, 1 = artist, 2 = lyrics. Term ids
//! are positions in the sorted `terms` list.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SongId, SongRecord};
use crate::hash;
use crate::textprep::{Pipeline, PipelineConfig, PipelineError, TokenStream};

pub const INDEX_FILE: &str = "index.lidx";
pub const MAGIC: &str = "LYRICSIDX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("document {0} is not indexed")]
    UnknownDoc(SongId),
    #[error("stale index: built with pipeline {built:016x}, serving pipeline is {serving:016x}; rebuild with `lyrics build-index`")]
    Stale { built: u64, serving: u64 },
    #[error("no index at {0}")]
    NotFound(PathBuf),
    #[error("index file {path} is malformed: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("index I/O at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Artist,
    Lyrics,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Title, Field::Artist, Field::Lyrics];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    fn from_ordinal(n: u8) -> Option<Field> {
        Field::ALL.get(n as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Artist => "artist",
            Field::Lyrics => "lyrics",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldWeights {
    pub title: f64,
    pub artist: f64,
    pub lyrics: f64,
}

impl FieldWeights {
    pub fn get(&self, field: Field) -> f64 {
        match field {
            Field::Title => self.title,
            Field::Artist => self.artist,
            Field::Lyrics => self.lyrics,
        }
    }
}

impl Default for FieldWeights {
    fn default() -> Self {
        FieldWeights {
            title: 2.0,
            artist: 1.5,
            lyrics: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub field_weights: FieldWeights,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            field_weights: FieldWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: SongId,
    pub field: Field,
    pub term_frequency: u32,
    pub positions: Vec<u32>,
}

/// Token counts per field, indexed by [`Field::ordinal`].
pub type FieldLengths = [u32; 3];

/// One song run through the pipeline, per field.
#[derive(Debug, Clone)]
pub struct AnalyzedDoc {
    pub id: SongId,
    pub fields: [TokenStream; 3],
}

impl AnalyzedDoc {
    pub fn field(&self, field: Field) -> &TokenStream {
        &self.fields[field.ordinal()]
    }
}

pub fn analyze_record(pipeline: &Pipeline, record: &SongRecord) -> AnalyzedDoc {
    AnalyzedDoc {
        id: record.id,
        fields: [
            pipeline.run(&record.title),
            pipeline.run(&record.artist),
            pipeline.run(&record.lyrics),
        ],
    }
}

/// Runs the pipeline over every record, in corpus order.
pub fn analyze_corpus(corpus: &Corpus, pipeline: &Pipeline) -> Vec<AnalyzedDoc> {
    corpus
        .records()
        .par_iter()
        .map(|r| analyze_record(pipeline, r))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    vocabulary: BTreeMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_freq: Vec<u32>,
    doc_stats: BTreeMap<SongId, FieldLengths>,
    avg_field_length: [f64; 3],
    params: Bm25Params,
    config_fingerprint: u64,
    corpus_checksum: u64,
}

/// Builds the index with default BM25 parameters.
pub fn build_index(corpus: &Corpus, config: &PipelineConfig) -> Result<InvertedIndex, IndexError> {
    build_index_with(corpus, config, Bm25Params::default())
}

pub fn build_index_with(
    corpus: &Corpus,
    config: &PipelineConfig,
    params: Bm25Params,
) -> Result<InvertedIndex, IndexError> {
    let pipeline = config.compile()?;
    let docs = analyze_corpus(corpus, &pipeline);
    InvertedIndex::from_analyzed(&docs, config.fingerprint(), corpus.checksum(), params)
}

impl InvertedIndex {
    pub fn from_analyzed(
        docs: &[AnalyzedDoc],
        config_fingerprint: u64,
        corpus_checksum: u64,
        params: Bm25Params,
    ) -> Result<Self, IndexError> {
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let mut by_term: HashMap<&str, Vec<Posting>> = HashMap::new();
        let mut doc_stats = BTreeMap::new();
        let mut totals = [0u64; 3];
        for doc in docs {
            let mut lengths = [0u32; 3];
            for field in Field::ALL {
                let stream = doc.field(field);
                lengths[field.ordinal()] = stream.len() as u32;
                totals[field.ordinal()] += stream.len() as u64;
                let mut positions: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
                for token in &stream.tokens {
                    positions.entry(&token.surface).or_default().push(token.position);
                }
                for (term, positions) in positions {
                    by_term.entry(term).or_default().push(Posting {
                        doc_id: doc.id,
                        field,
                        term_frequency: positions.len() as u32,
                        positions,
                    });
                }
            }
            doc_stats.insert(doc.id, lengths);
        }
        let n = docs.len() as f64;
        let avg_field_length = totals.map(|t| t as f64 / n);

        let mut terms: Vec<(&str, Vec<Posting>)> = by_term.into_iter().collect();
        terms.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let mut vocabulary = BTreeMap::new();
        let mut postings = Vec::with_capacity(terms.len());
        for (id, (term, mut list)) in terms.into_iter().enumerate() {
            list.sort_unstable_by_key(|p| (p.doc_id, p.field));
            vocabulary.insert(term.to_string(), id as u32);
            postings.push(list);
        }
        let doc_freq = postings.iter().map(|l| distinct_docs(l)).collect();
        Ok(InvertedIndex {
            vocabulary,
            postings,
            doc_freq,
            doc_stats,
            avg_field_length,
            params,
            config_fingerprint,
            corpus_checksum,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_stats.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.vocabulary.keys().map(String::as_str)
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    /// Postings in `(doc_id, field)` order; empty for unknown terms.
    ///
    /// The term must already be in processed form.
    pub fn lookup(&self, term: &str) -> &[Posting] {
        match self.vocabulary.get(term) {
            Some(&id) => &self.postings[id as usize],
            None => &[],
        }
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.vocabulary
            .get(term)
            .map_or(0, |&id| self.doc_freq[id as usize])
    }

    pub fn field_lengths(&self, doc: SongId) -> Option<FieldLengths> {
        self.doc_stats.get(&doc).copied()
    }

    pub fn contains_doc(&self, doc: SongId) -> bool {
        self.doc_stats.contains_key(&doc)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = SongId> + '_ {
        self.doc_stats.keys().copied()
    }

    pub fn avg_field_length(&self, field: Field) -> f64 {
        self.avg_field_length[field.ordinal()]
    }

    pub fn params(&self) -> &Bm25Params {
        &self.params
    }

    pub fn config_fingerprint(&self) -> u64 {
        self.config_fingerprint
    }

    pub fn corpus_checksum(&self) -> u64 {
        self.corpus_checksum
    }

    /// Fingerprint of the full index contents, as persisted.
    pub fn fingerprint(&self) -> u64 {
        hash::fnv1a64(&self.to_bytes())
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = f64::from(self.doc_freq(term));
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Term frequency of `term` in one field of one document.
    pub fn term_frequency(&self, term: &str, doc: SongId, field: Field) -> u32 {
        let list = self.lookup(term);
        list.binary_search_by(|p| (p.doc_id, p.field).cmp(&(doc, field)))
            .map_or(0, |i| list[i].term_frequency)
    }

    /// Fields of `doc` that contain at least one of `terms`.
    pub fn matched_fields(&self, terms: &[String], doc: SongId) -> Vec<Field> {
        Field::ALL
            .into_iter()
            .filter(|&f| terms.iter().any(|t| self.term_frequency(t, doc, f) > 0))
            .collect()
    }

    pub fn bm25_score(&self, terms: &[String], doc: SongId) -> Result<f64, IndexError> {
        self.scorer(terms).score(doc)
    }

    /// Resolves postings and IDF once for repeated scoring of one query.
    pub fn scorer<'a>(&'a self, terms: &[String]) -> Bm25Scorer<'a> {
        Bm25Scorer {
            index: self,
            terms: terms
                .iter()
                .map(|t| (self.lookup(t), self.idf(t)))
                .collect(),
        }
    }

    /// Title and lyrics tokens of every document in id order, rebuilt from
    /// postings. Offsets are not stored in the index and come back as zero.
    pub fn semantic_streams(&self) -> Vec<(SongId, TokenStream)> {
        let ordinal: HashMap<SongId, usize> = self.doc_stats.keys().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut slots: Vec<Vec<(Field, u32, u32)>> = vec![Vec::new(); self.doc_stats.len()];
        let terms: Vec<&str> = self.vocabulary.keys().map(String::as_str).collect();
        for (term_id, list) in self.postings.iter().enumerate() {
            for p in list.iter().filter(|p| p.field != Field::Artist) {
                let slot = &mut slots[ordinal[&p.doc_id]];
                slot.extend(p.positions.iter().map(|&pos| (p.field, pos, term_id as u32)));
            }
        }
        self.doc_stats
            .keys()
            .zip(slots)
            .map(|(id, mut slot)| {
                slot.sort_unstable();
                let tokens = slot
                    .into_iter()
                    .map(|(_, position, term)| crate::textprep::Token {
                        surface: terms[term as usize].to_string(),
                        start: 0,
                        end: 0,
                        position,
                    })
                    .collect();
                (
                    *id,
                    TokenStream {
                        tokens,
                        segments: Vec::new(),
                    },
                )
            })
            .collect()
    }

    /// Every document with at least one posting for any of `terms`, ascending.
    pub fn docs_matching(&self, terms: &[String]) -> Vec<SongId> {
        let mut ids: Vec<SongId> = terms
            .iter()
            .flat_map(|t| self.lookup(t).iter().map(|p| p.doc_id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let file = IndexFile::from_index(self);
        let mut out = format!(
            "{MAGIC} {FORMAT_VERSION} {}\n",
            hash::to_hex(self.config_fingerprint)
        )
        .into_bytes();
        serde_json::to_writer(&mut out, &file).expect("index serializes");
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, IndexError> {
        let malformed = |reason: String| IndexError::Format {
            path: path.to_path_buf(),
            reason,
        };
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed("missing header".into()))?;
        let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| malformed("header is not UTF-8".into()))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 3 || parts[0] != MAGIC {
            return Err(malformed(format!("bad magic header {header:?}")));
        }
        if parts[1] != FORMAT_VERSION.to_string() {
            return Err(malformed(format!("unsupported format version {}", parts[1])));
        }
        let file: IndexFile =
            serde_json::from_slice(&bytes[newline + 1..]).map_err(|e| malformed(e.to_string()))?;
        if file.config_fingerprint != parts[2] {
            return Err(malformed("header and body fingerprints differ".into()));
        }
        file.into_index().map_err(malformed)
    }
}

/// BM25 for one query with postings and IDF already resolved.
pub struct Bm25Scorer<'a> {
    index: &'a InvertedIndex,
    terms: Vec<(&'a [Posting], f64)>,
}

impl Bm25Scorer<'_> {
    pub fn score(&self, doc: SongId) -> Result<f64, IndexError> {
        let index = self.index;
        let lengths = index.doc_stats.get(&doc).ok_or(IndexError::UnknownDoc(doc))?;
        let Bm25Params { k1, b, field_weights } = index.params;
        let mut score = 0.0;
        for field in Field::ALL {
            let avg = index.avg_field_length[field.ordinal()];
            if avg == 0.0 {
                continue;
            }
            let norm = 1.0 - b + b * f64::from(lengths[field.ordinal()]) / avg;
            let mut field_score = 0.0;
            for &(list, idf) in &self.terms {
                let Ok(i) = list.binary_search_by(|p| (p.doc_id, p.field).cmp(&(doc, field))) else {
                    continue;
                };
                let tf = f64::from(list[i].term_frequency);
                field_score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            score += field_weights.get(field) * field_score;
        }
        Ok(score)
    }
}

fn distinct_docs(list: &[Posting]) -> u32 {
    let mut count = 0;
    let mut last = None;
    for p in list {
        if last != Some(p.doc_id) {
            count += 1;
            last = Some(p.doc_id);
        }
    }
    count
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format_version: u32,
    config_fingerprint: String,
    corpus_checksum: String,
    params: Bm25Params,
    avg_field_length: [f64; 3],
    docs: Vec<(SongId, FieldLengths)>,
    terms: Vec<String>,
    postings: Vec<Vec<(u32, u8, Vec<u32>)>>,
}

impl IndexFile {
    fn from_index(index: &InvertedIndex) -> Self {
        let ordinal: HashMap<SongId, u32> = index
            .doc_stats
            .keys()
            .enumerate()
            .map(|(i, id)| (*id, i as u32))
            .collect();
        IndexFile {
            format_version: FORMAT_VERSION,
            config_fingerprint: hash::to_hex(index.config_fingerprint),
            corpus_checksum: hash::to_hex(index.corpus_checksum),
            params: index.params,
            avg_field_length: index.avg_field_length,
            docs: index.doc_stats.iter().map(|(id, l)| (*id, *l)).collect(),
            terms: index.vocabulary.keys().cloned().collect(),
            postings: index
                .postings
                .iter()
                .map(|list| {
                    list.iter()
                        .map(|p| (ordinal[&p.doc_id], p.field.ordinal() as u8, p.positions.clone()))
                        .collect()
                })
                .collect(),
        }
    }

    fn into_index(self) -> Result<InvertedIndex, String> {
        let config_fingerprint =
            hash::from_hex(&self.config_fingerprint).ok_or("bad config fingerprint")?;
        let corpus_checksum = hash::from_hex(&self.corpus_checksum).ok_or("bad corpus checksum")?;
        if self.terms.len() != self.postings.len() {
            return Err("terms and postings lengths differ".into());
        }
        if !self.docs.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err("documents not sorted by id".into());
        }
        if !self.terms.windows(2).all(|w| w[0] < w[1]) {
            return Err("terms not sorted".into());
        }
        let ids: Vec<SongId> = self.docs.iter().map(|d| d.0).collect();
        let mut postings = Vec::with_capacity(self.postings.len());
        for list in self.postings {
            let mut out = Vec::with_capacity(list.len());
            for (doc, field, positions) in list {
                let doc_id = *ids.get(doc as usize).ok_or("posting references unknown doc")?;
                let field = Field::from_ordinal(field).ok_or("bad field ordinal")?;
                if positions.is_empty() || !positions.windows(2).all(|w| w[0] < w[1]) {
                    return Err("positions must be non-empty and strictly increasing".into());
                }
                out.push(Posting {
                    doc_id,
                    field,
                    term_frequency: positions.len() as u32,
                    positions,
                });
            }
            postings.push(out);
        }
        let doc_freq = postings.iter().map(|l| distinct_docs(l)).collect();
        Ok(InvertedIndex {
            vocabulary: self
                .terms
                .into_iter()
                .enumerate()
                .map(|(i, t)| (t, i as u32))
                .collect(),
            postings,
            doc_freq,
            doc_stats: self.docs.into_iter().collect(),
            avg_field_length: self.avg_field_length,
            params: self.params,
            config_fingerprint,
            corpus_checksum,
        })
    }
}

pub fn persist_index(index: &InvertedIndex, dir: &Path) -> Result<(), IndexError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IndexError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(INDEX_FILE);
    crate::corpus::write_atomic(&path, &index.to_bytes()).map_err(io_err(&path))
}

/// Loads an index and checks it was built with `serving`.
pub fn load_index(dir: &Path, serving: &PipelineConfig) -> Result<InvertedIndex, IndexError> {
    let path = dir.join(INDEX_FILE);
    let bytes = fs::read(&path).map_err(|source| match source.kind() {
        io::ErrorKind::NotFound => IndexError::NotFound(path.clone()),
        _ => IndexError::Io {
            path: path.clone(),
            source,
        },
    })?;
    let index = InvertedIndex::from_bytes(&bytes, &path)?;
    let serving = serving.fingerprint();
    if index.config_fingerprint != serving {
        return Err(IndexError::Stale {
            built: index.config_fingerprint,
            serving,
        });
    }
    Ok(index)
}
