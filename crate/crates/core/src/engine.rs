//! The serving snapshot: one corpus with its pipeline, index, encoder and
//! document vectors, built or loaded together and checked for consistency.
//!
//! An index directory holds:
//!
//! | file            | contents                                         |
//! |-----------------|--------------------------------------------------|
//! | `index.lidx`    | inverted index (see [`crate::index`])            |
//! | `encoder.json`  | encoder state (see [`crate::embed::EncoderFile`]) |
//! | `pipeline.json` | the [`PipelineConfig`] used at build time        |
//! | `snapshot.json` | corpus location and every fingerprint            |

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Corpus, CorpusError, SongId, SongRecord};
use crate::embed::{self, EmbedError, EmbeddingEncoder, Encoder, TfIdfEncoder, VectorStore};
use crate::hash;
use crate::index::{self, analyze_corpus, Bm25Params, IndexError, InvertedIndex};
use crate::textprep::{Pipeline, PipelineConfig, PipelineError, TokenStream};

pub const PIPELINE_FILE: &str = "pipeline.json";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("stale index: {0}; rebuild with `lyrics build-index`")]
    Stale(String),
    #[error("{path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },
    #[error("snapshot I/O at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl EngineError {
    /// True when artifacts exist but disagree with each other or the serving config.
    pub fn is_stale(&self) -> bool {
        matches!(
            self,
            EngineError::Stale(_) | EngineError::Index(IndexError::Stale { .. }) | EngineError::Embed(EmbedError::Stale { .. })
        )
    }
}

/// Which encoder to fit at build time.
#[derive(Debug, Clone, Default)]
pub enum EncoderChoice {
    #[default]
    TfIdf,
    /// Term vectors from a text file.
    Embedding(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprints {
    #[serde(with = "hex")]
    pub corpus: u64,
    #[serde(with = "hex")]
    pub pipeline: u64,
    #[serde(with = "hex")]
    pub index: u64,
    #[serde(with = "hex")]
    pub encoder: u64,
}

mod hex {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::hash::to_hex(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        crate::hash::from_hex(&text).ok_or_else(|| D::Error::custom(format!("bad hex fingerprint {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub format_version: u32,
    /// Corpus directory as given at build time.
    pub corpus_dir: Option<PathBuf>,
    pub encoder: String,
    pub fingerprints: Fingerprints,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Overrides the corpus directory recorded in `snapshot.json`.
    pub corpus_dir: Option<PathBuf>,
    /// The pipeline the caller intends to serve with; must match the build.
    pub pipeline: Option<PipelineConfig>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    corpus: Corpus,
    pipeline: Pipeline,
    index: InvertedIndex,
    encoder: Arc<dyn Encoder>,
    vectors: VectorStore,
    index_fingerprint: u64,
}

impl Engine {
    pub fn build(corpus: Corpus, config: &PipelineConfig) -> Result<Self, EngineError> {
        Self::build_with(corpus, config, Bm25Params::default(), &EncoderChoice::TfIdf)
    }

    pub fn build_with(
        corpus: Corpus,
        config: &PipelineConfig,
        params: Bm25Params,
        encoder: &EncoderChoice,
    ) -> Result<Self, EngineError> {
        let pipeline = config.compile()?;
        let docs = analyze_corpus(&corpus, &pipeline);
        let index = InvertedIndex::from_analyzed(&docs, config.fingerprint(), corpus.checksum(), params)?;
        drop(docs);
        let streams = index.semantic_streams();
        let encoder: Arc<dyn Encoder> = match encoder {
            EncoderChoice::TfIdf => {
                let fit: Vec<TokenStream> = streams.iter().map(|(_, s)| s.clone()).collect();
                Arc::new(TfIdfEncoder::fit(&fit)?)
            }
            EncoderChoice::Embedding(path) => Arc::new(EmbeddingEncoder::from_file(path)?),
        };
        let vectors = VectorStore::encode_all(encoder.as_ref(), &streams);
        let index_fingerprint = index.fingerprint();
        Ok(Engine {
            corpus,
            pipeline,
            index,
            encoder,
            vectors,
            index_fingerprint,
        })
    }

    /// Swaps in another encoder and re-encodes every document.
    pub fn with_encoder(mut self, encoder: Arc<dyn Encoder>) -> Self {
        self.vectors = VectorStore::encode_all(encoder.as_ref(), &self.index.semantic_streams());
        self.encoder = encoder;
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn encoder(&self) -> &dyn Encoder {
        self.encoder.as_ref()
    }

    pub fn vectors(&self) -> &VectorStore {
        &self.vectors
    }

    pub fn record(&self, id: SongId) -> Option<&SongRecord> {
        self.corpus.get(id)
    }

    pub fn fingerprints(&self) -> Fingerprints {
        Fingerprints {
            corpus: self.corpus.checksum(),
            pipeline: self.pipeline.config().fingerprint(),
            index: self.index_fingerprint,
            encoder: self.encoder.fingerprint(),
        }
    }

    /// Writes the index directory. `corpus_dir` is recorded for `load`.
    pub fn persist(&self, dir: &Path, corpus_dir: Option<&Path>) -> Result<(), EngineError> {
        let io_err = |path: PathBuf| move |source| EngineError::Io { path, source };
        fs::create_dir_all(dir).map_err(io_err(dir.to_path_buf()))?;
        index::persist_index(&self.index, dir)?;
        embed::persist_encoder(self.encoder.as_ref(), dir)?;
        let pipeline_path = dir.join(PIPELINE_FILE);
        corpus::write_atomic(&pipeline_path, self.pipeline.config().to_json().as_bytes())
            .map_err(io_err(pipeline_path))?;
        let manifest = SnapshotManifest {
            format_version: index::FORMAT_VERSION,
            corpus_dir: corpus_dir.map(Path::to_path_buf),
            encoder: self.encoder.name().to_string(),
            fingerprints: self.fingerprints(),
        };
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        corpus::write_atomic(&snapshot_path, &body).map_err(io_err(snapshot_path))
    }

    pub fn load(dir: &Path, options: &LoadOptions) -> Result<Self, EngineError> {
        let manifest = read_manifest(dir)?;
        let expect = manifest.fingerprints;

        let config = PipelineConfig::from_file(&dir.join(PIPELINE_FILE))?;
        if config.fingerprint() != expect.pipeline {
            return Err(EngineError::Stale(format!(
                "{PIPELINE_FILE} does not match {SNAPSHOT_FILE}"
            )));
        }
        if let Some(serving) = &options.pipeline {
            if serving.fingerprint() != expect.pipeline {
                return Err(IndexError::Stale {
                    built: expect.pipeline,
                    serving: serving.fingerprint(),
                }
                .into());
            }
        }

        let index_path = dir.join(index::INDEX_FILE);
        let bytes = fs::read(&index_path).map_err(|source| match source.kind() {
            io::ErrorKind::NotFound => EngineError::Index(IndexError::NotFound(index_path.clone())),
            _ => EngineError::Io {
                path: index_path.clone(),
                source,
            },
        })?;
        let index_fingerprint = hash::fnv1a64(&bytes);
        if index_fingerprint != expect.index {
            return Err(EngineError::Stale(format!("{} was rewritten after the snapshot", index::INDEX_FILE)));
        }
        let index = InvertedIndex::from_bytes(&bytes, &index_path)?;
        drop(bytes);
        if index.config_fingerprint() != expect.pipeline {
            return Err(EngineError::Stale("index and pipeline fingerprints differ".into()));
        }

        let corpus_dir = options
            .corpus_dir
            .clone()
            .or(manifest.corpus_dir)
            .ok_or_else(|| EngineError::Snapshot {
                path: dir.join(SNAPSHOT_FILE),
                reason: "no corpus directory recorded; pass one explicitly".into(),
            })?;
        let corpus = corpus::load(&corpus_dir)?;
        if corpus.checksum() != index.corpus_checksum() || corpus.checksum() != expect.corpus {
            return Err(EngineError::Stale(format!(
                "corpus at {} (checksum {}) is not the corpus the index was built from ({})",
                corpus_dir.display(),
                hash::to_hex(corpus.checksum()),
                hash::to_hex(index.corpus_checksum())
            )));
        }

        let encoder = embed::load_encoder(dir)?;
        if encoder.fingerprint() != expect.encoder {
            return Err(EngineError::Stale("encoder fingerprint differs from snapshot".into()));
        }
        let vectors = VectorStore::encode_all(encoder.as_ref(), &index.semantic_streams());
        Ok(Engine {
            corpus,
            pipeline: config.compile()?,
            index,
            encoder,
            vectors,
            index_fingerprint,
        })
    }
}

pub fn read_manifest(dir: &Path) -> Result<SnapshotManifest, EngineError> {
    let path = dir.join(SNAPSHOT_FILE);
    let bytes = fs::read(&path).map_err(|source| match source.kind() {
        io::ErrorKind::NotFound => EngineError::Index(IndexError::NotFound(path.clone())),
        _ => EngineError::Io {
            path: path.clone(),
            source,
        },
    })?;
    serde_json::from_slice(&bytes).map_err(|e| EngineError::Snapshot {
        path,
        reason: e.to_string(),
    })
}
