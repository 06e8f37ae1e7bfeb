//! Corpus statistics for the dashboard: facet histograms, top terms per
//! facet value, and a balance summary.
//!
//! Histograms list only categories that occur. Named genres and emotions
//! come in taxonomy order, then any other labels alphabetically. Songs with
//! no year form a trailing `"year": null` bucket.
//!
//! Balance is normalized Shannon entropy `H / ln(n)` over the `n` non-empty
//! categories (0 when `n` is 1), plus the share of the largest category.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Emotion, Genre, SongRecord};
use crate::textprep::{Pipeline, PipelineConfig};

pub const TOP_TERMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("balance is undefined for an empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearCount {
    pub year: Option<i32>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopTerms {
    pub by_genre: BTreeMap<String, Vec<TermCount>>,
    pub by_emotion: BTreeMap<String, Vec<TermCount>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub by_year: Vec<YearCount>,
    pub by_genre: Vec<FacetCount>,
    pub by_emotion: Vec<FacetCount>,
    pub top_terms: TopTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetBalance {
    pub categories: usize,
    pub entropy_ratio: f64,
    pub max_share: f64,
    pub max_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub year: FacetBalance,
    pub genre: FacetBalance,
    pub emotion: FacetBalance,
}

/// The `/api/stats` and `stats --json` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsPayload {
    #[serde(flatten)]
    pub stats: CorpusStats,
    /// Absent for an empty corpus.
    pub balance: Option<BalanceReport>,
}

impl StatsPayload {
    pub fn new(stats: CorpusStats) -> Self {
        let balance = balance_report(&stats).ok();
        StatsPayload { stats, balance }
    }
}

/// Statistics with the default pipeline used for top terms.
pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let pipeline = PipelineConfig::default().compile().expect("default pipeline is valid");
    compute_stats_with(corpus, &pipeline)
}

pub fn compute_stats_with(corpus: &Corpus, pipeline: &Pipeline) -> CorpusStats {
    stats_of(corpus.records(), pipeline)
}

/// Counting works on any record slice; duplicate ids are counted as given.
pub fn stats_of(records: &[SongRecord], pipeline: &Pipeline) -> CorpusStats {
    let mut years: BTreeMap<Option<i32>, usize> = BTreeMap::new();
    let mut genres: HashMap<&Genre, usize> = HashMap::new();
    let mut emotions: HashMap<&Emotion, usize> = HashMap::new();
    for r in records {
        *years.entry(r.year).or_default() += 1;
        *genres.entry(&r.genre).or_default() += 1;
        *emotions.entry(&r.emotion).or_default() += 1;
    }
    let unknown = years.remove(&None);
    let mut by_year: Vec<YearCount> = years.into_iter().map(|(year, count)| YearCount { year, count }).collect();
    if let Some(count) = unknown {
        by_year.push(YearCount { year: None, count });
    }

    let term_counts: Vec<HashMap<String, usize>> = records
        .par_iter()
        .map(|r| {
            let mut counts = HashMap::new();
            for text in [&r.title, &r.lyrics] {
                for token in pipeline.run(text).tokens {
                    *counts.entry(token.surface).or_default() += 1;
                }
            }
            counts
        })
        .collect();
    let mut genre_terms: BTreeMap<String, HashMap<&str, usize>> = BTreeMap::new();
    let mut emotion_terms: BTreeMap<String, HashMap<&str, usize>> = BTreeMap::new();
    for (r, counts) in records.iter().zip(&term_counts) {
        let g = genre_terms.entry(r.genre.label().to_string()).or_default();
        for (t, n) in counts {
            *g.entry(t).or_default() += n;
        }
        let e = emotion_terms.entry(r.emotion.label().to_string()).or_default();
        for (t, n) in counts {
            *e.entry(t).or_default() += n;
        }
    }

    CorpusStats {
        total: records.len(),
        by_year,
        by_genre: facet_counts(genres, Genre::NAMED),
        by_emotion: facet_counts(emotions, Emotion::NAMED),
        top_terms: TopTerms {
            by_genre: genre_terms.into_iter().map(|(k, v)| (k, top_n(v, TOP_TERMS))).collect(),
            by_emotion: emotion_terms.into_iter().map(|(k, v)| (k, top_n(v, TOP_TERMS))).collect(),
        },
    }
}

fn facet_counts<T: PartialEq + std::fmt::Display>(counts: HashMap<&T, usize>, named: &[T]) -> Vec<FacetCount> {
    let mut out: Vec<(usize, String, usize)> = counts
        .into_iter()
        .map(|(facet, count)| {
            let rank = named.iter().position(|n| n == facet).unwrap_or(named.len());
            (rank, facet.to_string(), count)
        })
        .collect();
    out.sort();
    out.into_iter().map(|(_, label, count)| FacetCount { label, count }).collect()
}

fn top_n(counts: HashMap<&str, usize>, n: usize) -> Vec<TermCount> {
    let mut terms: Vec<(&str, usize)> = counts.into_iter().collect();
    terms.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    terms
        .into_iter()
        .take(n)
        .map(|(term, count)| TermCount {
            term: term.to_string(),
            count,
        })
        .collect()
}

pub fn facet_balance(counts: &[(String, usize)]) -> Result<FacetBalance, AnalyticsError> {
    let total: usize = counts.iter().map(|c| c.1).sum();
    if total == 0 {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let nonzero: Vec<&(String, usize)> = counts.iter().filter(|c| c.1 > 0).collect();
    let total_f = total as f64;
    let entropy: f64 = nonzero
        .iter()
        .map(|c| {
            let p = c.1 as f64 / total_f;
            -p * p.ln()
        })
        .sum();
    let entropy_ratio = if nonzero.len() <= 1 {
        0.0
    } else {
        (entropy / (nonzero.len() as f64).ln()).clamp(0.0, 1.0)
    };
    let max = nonzero
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("total > 0");
    Ok(FacetBalance {
        categories: nonzero.len(),
        entropy_ratio,
        max_share: max.1 as f64 / total_f,
        max_label: max.0.clone(),
    })
}

pub fn balance_report(stats: &CorpusStats) -> Result<BalanceReport, AnalyticsError> {
    let years: Vec<(String, usize)> = stats
        .by_year
        .iter()
        .map(|y| (y.year.map_or_else(|| "unknown".to_string(), |v| v.to_string()), y.count))
        .collect();
    let facet = |v: &[FacetCount]| v.iter().map(|f| (f.label.clone(), f.count)).collect::<Vec<_>>();
    Ok(BalanceReport {
        year: facet_balance(&years)?,
        genre: facet_balance(&facet(&stats.by_genre))?,
        emotion: facet_balance(&facet(&stats.by_emotion))?,
    })
}
