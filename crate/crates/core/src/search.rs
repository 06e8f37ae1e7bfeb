//! Query answering: parse, collect lexical candidates, fuse BM25 with
//! cosine similarity, and cut matched lyric lines for display.
//!
//! Both score kinds are min-max normalized over the whole candidate pool
//! before mixing, `fused = alpha·lex + (1 − alpha)·sem`. A pool where every
//! score is equal normalizes to 0.5.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Emotion, Genre, SongId, SongRecord};
use crate::engine::Engine;
use crate::index::Field;
use crate::textprep::Pipeline;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_SNIPPET_LINES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<Genre>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<Emotion>,
    /// Inclusive. Songs without a year fail any year bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_from: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_to: Option<i32>,
}

impl Filters {
    pub fn is_empty(&self) -> bool {
        self == &Filters::default()
    }

    pub fn matches(&self, record: &SongRecord) -> bool {
        if self.genre.as_ref().is_some_and(|g| g != &record.genre) {
            return false;
        }
        if self.emotion.as_ref().is_some_and(|e| e != &record.emotion) {
            return false;
        }
        if self.year_from.is_some() || self.year_to.is_some() {
            let Some(year) = record.year else {
                return false;
            };
            if self.year_from.is_some_and(|from| year < from) || self.year_to.is_some_and(|to| year > to) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOptions {
    pub k: usize,
    pub alpha: f64,
    #[serde(default)]
    pub filters: Filters,
    pub snippet_lines: usize,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
            filters: Filters::default(),
            snippet_lines: DEFAULT_SNIPPET_LINES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub raw: String,
    pub terms: Vec<String>,
    #[serde(flatten)]
    pub options: QueryOptions,
}

/// Runs `raw` through the serving pipeline and checks the options.
pub fn parse_query(pipeline: &Pipeline, raw: &str, options: QueryOptions) -> Result<Query, SearchError> {
    if options.k == 0 {
        return Err(SearchError::BadParameter("k must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&options.alpha) {
        return Err(SearchError::BadParameter(format!("alpha {} is outside [0, 1]", options.alpha)));
    }
    if let (Some(from), Some(to)) = (options.filters.year_from, options.filters.year_to) {
        if from > to {
            return Err(SearchError::BadParameter(format!("year_from {from} is after year_to {to}")));
        }
    }
    let terms = pipeline.terms(raw);
    if terms.is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    Ok(Query {
        raw: raw.to_string(),
        terms,
        options,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedLine {
    pub line_text: String,
    /// Character offsets into the raw lyrics, end exclusive.
    pub line_span: (usize, usize),
    /// Absolute character offsets of each matched word.
    pub term_spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: SongId,
    pub title: String,
    pub artist: String,
    pub year: Option<i32>,
    pub genre: Genre,
    pub emotion: Emotion,
    pub lexical: f64,
    pub semantic: f64,
    pub fused: f64,
    pub matched_fields: Vec<Field>,
    pub snippets: Vec<MatchedLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub query: Query,
    pub total_candidates: usize,
    pub hits: Vec<ScoredHit>,
    pub elapsed_ms: f64,
}

/// Documents containing any query term in any field that pass the filters, ascending.
pub fn retrieve_candidates(engine: &Engine, query: &Query) -> Vec<SongId> {
    let filters = &query.options.filters;
    let mut ids = engine.index().docs_matching(&query.terms);
    if !filters.is_empty() {
        ids.retain(|id| engine.record(*id).is_some_and(|r| filters.matches(r)));
    }
    ids
}

/// `(lexical, semantic)` for every candidate, in candidate order.
pub fn score_candidates(engine: &Engine, query: &Query, candidates: &[SongId]) -> Vec<(f64, f64)> {
    let scorer = engine.index().scorer(&query.terms);
    let qvec = engine.encoder().encode_query(&query.terms);
    candidates
        .iter()
        .map(|&id| {
            let lexical = scorer.score(id).unwrap_or(0.0);
            let semantic = engine.vectors().similarity(&qvec, id).unwrap_or(0.0);
            (lexical, semantic)
        })
        .collect()
}

/// Min-max normalization; an all-equal (or empty) input maps to 0.5.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

fn desc_then_id(a: (f64, SongId), b: (f64, SongId)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

pub fn rank(engine: &Engine, query: &Query, candidates: &[SongId]) -> ResultPage {
    let started = Instant::now();
    let scores = score_candidates(engine, query, candidates);
    let lexical: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let semantic: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let (nl, ns) = (min_max(&lexical), min_max(&semantic));
    let alpha = query.options.alpha;
    let mut order: Vec<(f64, usize)> = (0..candidates.len())
        .map(|i| (alpha * nl[i] + (1.0 - alpha) * ns[i], i))
        .collect();
    order.sort_unstable_by(|a, b| desc_then_id((a.0, candidates[a.1]), (b.0, candidates[b.1])));
    order.truncate(query.options.k);

    let hits = order
        .into_iter()
        .filter_map(|(fused, i)| {
            let id = candidates[i];
            let record = engine.record(id)?;
            Some(ScoredHit {
                doc_id: id,
                title: record.title.clone(),
                artist: record.artist.clone(),
                year: record.year,
                genre: record.genre.clone(),
                emotion: record.emotion.clone(),
                lexical: lexical[i],
                semantic: semantic[i],
                fused,
                matched_fields: engine.index().matched_fields(&query.terms, id),
                snippets: extract_snippets(engine.pipeline(), record, &query.terms, query.options.snippet_lines),
            })
        })
        .collect();
    ResultPage {
        query: query.clone(),
        total_candidates: candidates.len(),
        hits,
        elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
    }
}

/// Raw line spans in character offsets; `\r\n`, `\r`, `\n`, NEL, LS and PS all end a line.
pub fn raw_lines(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut lines = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '\r' if chars.get(i + 1) == Some(&'\n') => {
                lines.push((start, i));
                i += 2;
                start = i;
                continue;
            }
            '\n' | '\r' | '\u{85}' | '\u{2028}' | '\u{2029}' => {
                lines.push((start, i));
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    lines.push((start, chars.len()));
    lines
}

/// Up to `max_lines` lyric lines holding a query term, in document order.
pub fn extract_snippets(pipeline: &Pipeline, record: &SongRecord, terms: &[String], max_lines: usize) -> Vec<MatchedLine> {
    if max_lines == 0 {
        return Vec::new();
    }
    let wanted: HashSet<&str> = terms.iter().map(String::as_str).collect();
    let stream = pipeline.run(&record.lyrics);
    let lines = raw_lines(&record.lyrics);
    let chars: Vec<char> = record.lyrics.chars().collect();
    let mut out: Vec<MatchedLine> = Vec::new();
    let mut current: Option<usize> = None;
    for token in stream.tokens.iter().filter(|t| wanted.contains(t.surface.as_str())) {
        let line = lines.partition_point(|l| l.1 < token.start).min(lines.len() - 1);
        if current != Some(line) {
            if out.len() == max_lines {
                break;
            }
            let (s, e) = lines[line];
            out.push(MatchedLine {
                line_text: chars[s..e].iter().collect(),
                line_span: (s, e),
                term_spans: Vec::new(),
            });
            current = Some(line);
        }
        out.last_mut()
            .expect("line pushed above")
            .term_spans
            .push((token.start, token.end));
    }
    out
}

impl Engine {
    /// Parse, retrieve and rank in one call.
    pub fn search(&self, raw: &str, options: QueryOptions) -> Result<ResultPage, SearchError> {
        let started = Instant::now();
        let query = parse_query(self.pipeline(), raw, options)?;
        let candidates = retrieve_candidates(self, &query);
        let mut page = rank(self, &query, &candidates);
        page.elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        Ok(page)
    }
}
