//! Reference implementations for tests. Each one recomputes from raw text
//! with plain loops and maps, sharing no scoring code with the library.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use lyric_search::corpus::{Corpus, Emotion, Genre, SongId, SongRecord};
use lyric_search::textprep::Pipeline;

/// Field term lists per document, in the order title, artist, lyrics.
pub struct NaiveBm25 {
    pub ids: Vec<SongId>,
    pub fields: Vec<[Vec<String>; 3]>,
    pub k1: f64,
    pub b: f64,
    pub weights: [f64; 3],
}

fn surfaces(pipeline: &Pipeline, text: &str) -> Vec<String> {
    pipeline.run(text).tokens.into_iter().map(|t| t.surface).collect()
}

impl NaiveBm25 {
    pub fn new(corpus: &Corpus, pipeline: &Pipeline) -> Self {
        let mut ids = Vec::new();
        let mut fields = Vec::new();
        for r in corpus.records() {
            ids.push(r.id);
            fields.push([
                surfaces(pipeline, &r.title),
                surfaces(pipeline, &r.artist),
                surfaces(pipeline, &r.lyrics),
            ]);
        }
        NaiveBm25 {
            ids,
            fields,
            k1: 1.2,
            b: 0.75,
            weights: [2.0, 1.5, 1.0],
        }
    }

    pub fn df(&self, term: &str) -> usize {
        self.fields
            .iter()
            .filter(|doc| doc.iter().any(|f| f.iter().any(|t| t == term)))
            .count()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.fields.len() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn score(&self, terms: &[String], id: SongId) -> f64 {
        let d = self.ids.iter().position(|x| *x == id).expect("known doc");
        let n = self.fields.len() as f64;
        let mut total = 0.0;
        for f in 0..3 {
            let avg = self.fields.iter().map(|doc| doc[f].len() as f64).sum::<f64>() / n;
            if avg == 0.0 {
                continue;
            }
            let len = self.fields[d][f].len() as f64;
            for term in terms {
                let tf = self.fields[d][f].iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let sat = tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * len / avg));
                total += self.weights[f] * self.idf(term) * sat;
            }
        }
        total
    }

    pub fn matching(&self, terms: &[String]) -> Vec<SongId> {
        let mut out: Vec<SongId> = self
            .ids
            .iter()
            .zip(&self.fields)
            .filter(|(_, doc)| doc.iter().any(|f| f.iter().any(|t| terms.contains(t))))
            .map(|(id, _)| *id)
            .collect();
        out.sort();
        out
    }
}

pub type Sparse = BTreeMap<String, f64>;

/// Unit TF-IDF vectors over title and lyrics, idf = ln(N / df).
pub fn naive_tfidf(corpus: &Corpus, pipeline: &Pipeline) -> (HashMap<SongId, Sparse>, BTreeMap<String, f64>) {
    let docs: Vec<(SongId, Vec<String>)> = corpus
        .records()
        .iter()
        .map(|r| {
            let mut terms = surfaces(pipeline, &r.title);
            terms.extend(surfaces(pipeline, &r.lyrics));
            (r.id, terms)
        })
        .collect();
    let n = docs.len() as f64;
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for (_, terms) in &docs {
        for t in terms.iter().collect::<BTreeSet<_>>() {
            *df.entry(t.clone()).or_default() += 1;
        }
    }
    let idf: BTreeMap<String, f64> = df.iter().map(|(t, d)| (t.clone(), (n / *d as f64).ln())).collect();
    let vectors = docs
        .into_iter()
        .map(|(id, terms)| (id, weigh(&terms, &idf)))
        .collect();
    (vectors, idf)
}

pub fn weigh(terms: &[String], idf: &BTreeMap<String, f64>) -> Sparse {
    let mut v = Sparse::new();
    for t in terms {
        if let Some(w) = idf.get(t) {
            *v.entry(t.clone()).or_default() += w;
        }
    }
    v.retain(|_, w| *w != 0.0);
    let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for w in v.values_mut() {
            *w /= norm;
        }
    }
    v
}

pub fn dot(a: &Sparse, b: &Sparse) -> f64 {
    a.iter().map(|(t, w)| w * b.get(t).copied().unwrap_or(0.0)).sum()
}

pub fn artist_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Greedy MMR with the max redundancy recomputed from scratch at every step.
pub fn naive_mmr(
    seed: SongId,
    records: &[SongRecord],
    vectors: &HashMap<SongId, Sparse>,
    k: usize,
    lambda: f64,
    cap: Option<usize>,
) -> Vec<SongId> {
    let mut pool: Vec<&SongRecord> = records.iter().filter(|r| r.id != seed).collect();
    pool.sort_by_key(|r| r.id);
    let seed_vec = &vectors[&seed];
    let mut picked: Vec<SongId> = Vec::new();
    let mut per_artist: HashMap<String, usize> = HashMap::new();
    while picked.len() < k {
        let mut best: Option<(SongId, f64, String)> = None;
        for r in &pool {
            if picked.contains(&r.id) {
                continue;
            }
            let key = artist_key(&r.artist);
            if cap.is_some_and(|c| per_artist.get(&key).copied().unwrap_or(0) >= c) {
                continue;
            }
            let v = &vectors[&r.id];
            let rel = dot(seed_vec, v);
            let red = if picked.is_empty() {
                0.0
            } else {
                picked.iter().map(|p| dot(&vectors[p], v)).fold(f64::NEG_INFINITY, f64::max)
            };
            let score = lambda * rel - (1.0 - lambda) * red;
            if best.as_ref().is_none_or(|b| score > b.1 + 1e-12) {
                best = Some((r.id, score, key));
            }
        }
        let Some((id, _, key)) = best else { break };
        picked.push(id);
        *per_artist.entry(key).or_default() += 1;
    }
    picked
}

/// H / ln(n) over non-zero counts; 0 for a single category.
pub fn entropy_ratio(counts: &[usize]) -> f64 {
    let nz: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    if nz.len() < 2 {
        return 0.0;
    }
    let total: f64 = nz.iter().sum();
    let h: f64 = nz.iter().map(|c| -(c / total) * (c / total).ln()).sum();
    h / (nz.len() as f64).ln()
}

pub const WORDS: &[&str] = &[
    "river", "night", "fire", "heart", "road", "rain", "dance", "dream", "light", "stone", "blue", "gold",
    "shadow", "train", "whiskey", "moon", "storm", "city", "summer", "ghost", "honey", "wire", "cold", "sugar",
];

/// A small random corpus over a shared vocabulary so that terms overlap.
pub fn random_corpus<R: Rng>(rng: &mut R, docs: usize) -> Corpus {
    let artists = ["Ada", "Bo", "Cy", "Dee", "Eli"];
    let mut records = Vec::new();
    let mut n = 0;
    while records.len() < docs {
        n += 1;
        let words = |rng: &mut R, lo: usize, hi: usize| -> Vec<&str> {
            (0..rng.gen_range(lo..=hi)).map(|_| *WORDS.choose(rng).unwrap()).collect()
        };
        let title = words(rng, 1, 3).join(" ");
        let lines: Vec<String> = (0..rng.gen_range(1..=5)).map(|_| words(rng, 1, 7).join(" ")).collect();
        let lyrics = format!("{}\nverse {n}", lines.join("\n"));
        let genre = Genre::NAMED.choose(rng).unwrap().clone();
        let emotion = Emotion::NAMED.choose(rng).unwrap().clone();
        let year = rng.gen_bool(0.9).then(|| rng.gen_range(1950..=2019));
        let artist = artists.choose(rng).unwrap();
        records.push(SongRecord::new(&title, artist, year, genre, emotion, &lyrics).unwrap());
    }
    Corpus::from_records(records, "random").unwrap()
}

pub fn random_query<R: Rng>(rng: &mut R, max_terms: usize) -> String {
    let n = rng.gen_range(1..=max_terms);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}
