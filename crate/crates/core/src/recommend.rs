//! Song-to-song and facet recommendations with a hard per-artist cap.
//!
//! Similar-song picks use greedy maximal marginal relevance: each step takes
//! the eligible song maximizing
//! `lambda·sim(seed, d) − (1 − lambda)·max_{s ∈ picked} sim(s, d)`,
//! skipping artists that already hold `artist_cap` slots. Artists are
//! compared case-insensitively after trimming.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Emotion, Genre, SongId, SongRecord};
use crate::embed::{self, DocVector};
use crate::engine::Engine;
use crate::textprep::fold_case;

pub const DEFAULT_LAMBDA: f64 = 0.7;
pub const DEFAULT_ARTIST_CAP: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecommendError {
    #[error("song {0} is not in the corpus")]
    NotFound(SongId),
    #[error("unknown facet {0:?}")]
    UnknownFacet(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    Genre(Genre),
    Emotion(Emotion),
}

impl Facet {
    pub fn matches(&self, record: &SongRecord) -> bool {
        match self {
            Facet::Genre(g) => &record.genre == g,
            Facet::Emotion(e) => &record.emotion == e,
        }
    }

    fn is_named(&self) -> bool {
        match self {
            Facet::Genre(g) => g.is_named(),
            Facet::Emotion(e) => e.is_named(),
        }
    }

    fn label(&self) -> &str {
        match self {
            Facet::Genre(g) => g.label(),
            Facet::Emotion(e) => e.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecOptions {
    pub k: usize,
    pub lambda: f64,
    /// `None` means no cap.
    pub artist_cap: Option<usize>,
    #[serde(default)]
    pub facet_filter: Option<Facet>,
}

impl Default for RecOptions {
    fn default() -> Self {
        RecOptions {
            k: 10,
            lambda: DEFAULT_LAMBDA,
            artist_cap: Some(DEFAULT_ARTIST_CAP),
            facet_filter: None,
        }
    }
}

impl RecOptions {
    fn validate(&self) -> Result<(), RecommendError> {
        if self.k == 0 {
            return Err(RecommendError::BadParameter("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(RecommendError::BadParameter(format!("lambda {} is outside [0, 1]", self.lambda)));
        }
        if self.artist_cap == Some(0) {
            return Err(RecommendError::BadParameter("artist_cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub doc_id: SongId,
    /// Selection score: the MMR objective for similar songs, centrality for facets.
    pub score: f64,
    /// Cosine to the seed (or to the facet centroid).
    pub similarity: f64,
}

pub fn artist_key(artist: &str) -> String {
    fold_case(artist.trim())
}

struct CapCounter {
    cap: Option<usize>,
    used: HashMap<String, usize>,
}

impl CapCounter {
    fn new(cap: Option<usize>) -> Self {
        CapCounter {
            cap,
            used: HashMap::new(),
        }
    }

    fn allows(&self, key: &str) -> bool {
        self.cap.is_none_or(|cap| self.used.get(key).copied().unwrap_or(0) < cap)
    }

    fn take(&mut self, key: String) {
        *self.used.entry(key).or_default() += 1;
    }
}

/// Dense copy of a sparse vector for repeated dot products.
struct Dense {
    values: HashMap<u32, f64>,
}

impl Dense {
    fn new(v: &DocVector) -> Self {
        Dense {
            values: v.entries.iter().copied().collect(),
        }
    }

    fn dot(&self, v: &DocVector) -> f64 {
        v.entries
            .iter()
            .filter_map(|(i, w)| self.values.get(i).map(|x| x * w))
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }
}

pub fn recommend_similar(engine: &Engine, seed: SongId, opts: &RecOptions) -> Result<Vec<Recommendation>, RecommendError> {
    opts.validate()?;
    engine.record(seed).ok_or(RecommendError::NotFound(seed))?;
    let vectors = engine.vectors();
    let empty = DocVector::empty(Some(seed), vectors.space());
    let seed_vec = vectors.get(seed).unwrap_or(&empty);

    struct Candidate<'a> {
        id: SongId,
        artist: String,
        vector: &'a DocVector,
        relevance: f64,
        redundancy: f64,
    }
    let mut pool: Vec<Candidate> = engine
        .corpus()
        .records()
        .iter()
        .filter(|r| r.id != seed)
        .filter(|r| opts.facet_filter.as_ref().is_none_or(|f| f.matches(r)))
        .filter_map(|r| {
            let vector = vectors.get(r.id)?;
            Some(Candidate {
                id: r.id,
                artist: artist_key(&r.artist),
                vector,
                relevance: embed::cosine(seed_vec, vector).unwrap_or(0.0),
                redundancy: 0.0,
            })
        })
        .collect();
    pool.sort_unstable_by_key(|c| c.id);

    let (lambda, mut caps) = (opts.lambda, CapCounter::new(opts.artist_cap));
    let mut picked = Vec::with_capacity(opts.k.min(pool.len()));
    let mut taken = vec![false; pool.len()];
    while picked.len() < opts.k {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in pool.iter().enumerate() {
            if taken[i] || !caps.allows(&c.artist) {
                continue;
            }
            let score = lambda * c.relevance - (1.0 - lambda) * c.redundancy;
            // ascending id order makes the first maximum the tie winner
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let Some((i, score)) = best else { break };
        taken[i] = true;
        caps.take(pool[i].artist.clone());
        picked.push(Recommendation {
            doc_id: pool[i].id,
            score,
            similarity: pool[i].relevance,
        });
        if lambda < 1.0 {
            let chosen = Dense::new(pool[i].vector);
            for (j, c) in pool.iter_mut().enumerate() {
                if !taken[j] {
                    let sim = chosen.dot(c.vector);
                    if picked.len() == 1 || sim > c.redundancy {
                        c.redundancy = sim;
                    }
                }
            }
        }
    }
    Ok(picked)
}

/// Unit centroid of the given vectors; empty if they cancel out or none are given.
pub fn centroid<'a>(space: u64, vectors: impl IntoIterator<Item = &'a DocVector>) -> DocVector {
    let mut sum: BTreeMap<u32, f64> = BTreeMap::new();
    for v in vectors {
        for &(i, w) in &v.entries {
            *sum.entry(i).or_default() += w;
        }
    }
    DocVector::from_weights(None, space, sum)
}

/// Songs of one facet ranked by cosine to the facet centroid, artist cap applied.
pub fn recommend_by_facet(
    engine: &Engine,
    facet: &Facet,
    k: usize,
    artist_cap: Option<usize>,
) -> Result<Vec<Recommendation>, RecommendError> {
    if !facet.is_named() {
        return Err(RecommendError::UnknownFacet(facet.label().to_string()));
    }
    RecOptions {
        k,
        artist_cap,
        ..Default::default()
    }
    .validate()?;
    let vectors = engine.vectors();
    let members: Vec<&SongRecord> = engine.corpus().records().iter().filter(|r| facet.matches(r)).collect();
    let center = centroid(vectors.space(), members.iter().filter_map(|r| vectors.get(r.id)));
    let mut scored: Vec<(SongId, f64)> = members
        .iter()
        .map(|r| (r.id, vectors.similarity(&center, r.id).unwrap_or(0.0)))
        .collect();
    scored.sort_unstable_by(embed::by_score_then_id);

    let mut caps = CapCounter::new(artist_cap);
    let mut out = Vec::new();
    for (id, score) in scored {
        if out.len() == k {
            break;
        }
        let key = artist_key(&engine.record(id).expect("member of corpus").artist);
        if caps.allows(&key) {
            caps.take(key);
            out.push(Recommendation {
                doc_id: id,
                score,
                similarity: score,
            });
        }
    }
    Ok(out)
}

/// Fraction of the list held by each artist (display names, first spelling seen).
pub fn artist_share<'a>(artists: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut total = 0usize;
    for artist in artists {
        total += 1;
        counts
            .entry(artist_key(artist))
            .or_insert_with(|| (artist.trim().to_string(), 0))
            .1 += 1;
    }
    counts
        .into_values()
        .map(|(name, n)| (name, n as f64 / total as f64))
        .collect()
}
