//! Library output checked against the reference implementations in `common`.

mod common;

use std::collections::{BTreeMap, HashMap};

use lyric_search::analytics::{balance_report, compute_stats};
use lyric_search::corpus::{Emotion, Genre, SongId};
use lyric_search::engine::Engine;
use lyric_search::fixtures::{fixture_corpus, FIXTURE_JSONL};
use lyric_search::recommend::{recommend_by_facet, recommend_similar, Facet, RecOptions};
use lyric_search::search::{min_max, QueryOptions};
use lyric_search::textprep::{char_slice, PipelineConfig};

use common::*;

fn engine() -> Engine {
    Engine::build(fixture_corpus(), &PipelineConfig::default()).unwrap()
}

const QUERIES: &[&str] = &[
    "good",
    "good life",
    "midnight train",
    "love and rain",
    "whiskey porch blues",
    "broken heart",
    "dance all night",
    "gun smoke",
    "island sun",
    "kehlani",
];

#[test]
fn df_of_good_by_brute_force() {
    let e = engine();
    let p = e.pipeline();
    // tokenize on anything that is not a letter, digit or apostrophe
    let docs_with_good = fixture_corpus()
        .records()
        .iter()
        .filter(|r| {
            [&r.title, &r.artist, &r.lyrics].iter().any(|text| {
                text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
                    .filter(|w| !w.is_empty())
                    .any(|w| p.process_surface(w).as_deref() == Some("good"))
            })
        })
        .count();
    assert!(docs_with_good > 1);
    assert_eq!(e.index().doc_freq("good") as usize, docs_with_good);
    let n = 30.0;
    let df = docs_with_good as f64;
    let expected_idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
    assert!((e.index().idf("good") - expected_idf).abs() < 1e-12);
}

#[test]
fn bm25_matches_naive_scoring() {
    let e = engine();
    let naive = NaiveBm25::new(e.corpus(), e.pipeline());
    for q in QUERIES {
        let terms = e.pipeline().terms(q);
        assert_eq!(e.index().docs_matching(&terms), naive.matching(&terms), "{q}");
        for r in e.corpus().records() {
            let got = e.index().bm25_score(&terms, r.id).unwrap();
            let want = naive.score(&terms, r.id);
            assert!((got - want).abs() < 1e-9, "{q} / {}: {got} vs {want}", r.title);
        }
        for t in &terms {
            assert_eq!(e.index().doc_freq(t) as usize, naive.df(t));
        }
    }
}

#[test]
fn tfidf_cosines_match_naive_vectors() {
    let e = engine();
    let (vectors, idf) = naive_tfidf(e.corpus(), e.pipeline());
    let records = e.corpus().records();
    for a in records {
        let va = e.vectors().get(a.id).unwrap();
        for b in records {
            let got = e.vectors().similarity(va, b.id).unwrap();
            let want = dot(&vectors[&a.id], &vectors[&b.id]);
            assert!((got - want).abs() < 1e-9, "{} / {}", a.title, b.title);
        }
    }
    for q in QUERIES {
        let terms = e.pipeline().terms(q);
        let qv = e.encoder().encode_query(&terms);
        let qn = weigh(&terms, &idf);
        for r in records {
            let got = e.vectors().similarity(&qv, r.id).unwrap();
            assert!((got - dot(&qn, &vectors[&r.id])).abs() < 1e-9);
        }
    }
}

#[test]
fn hybrid_ranking_matches_recomputed_fusion() {
    let e = engine();
    let naive = NaiveBm25::new(e.corpus(), e.pipeline());
    let (vectors, idf) = naive_tfidf(e.corpus(), e.pipeline());
    for alpha in [0.0, 0.3, 0.5, 1.0] {
        for q in QUERIES {
            let terms = e.pipeline().terms(q);
            let cands = naive.matching(&terms);
            let qn = weigh(&terms, &idf);
            let lex: Vec<f64> = cands.iter().map(|id| naive.score(&terms, *id)).collect();
            let sem: Vec<f64> = cands.iter().map(|id| dot(&qn, &vectors[id])).collect();
            let norm = |v: &[f64]| {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                v.iter().map(|x| if hi - lo > 1e-12 { (x - lo) / (hi - lo) } else { 0.5 }).collect::<Vec<_>>()
            };
            let (nl, ns) = (norm(&lex), norm(&sem));
            let fused: Vec<f64> = (0..cands.len()).map(|i| alpha * nl[i] + (1.0 - alpha) * ns[i]).collect();

            let page = e
                .search(q, QueryOptions { k: 100, alpha, ..Default::default() })
                .unwrap();
            assert_eq!(page.total_candidates, cands.len());
            let mut prev: Option<(f64, SongId)> = None;
            for hit in &page.hits {
                let i = cands.iter().position(|c| *c == hit.doc_id).unwrap();
                assert!((hit.fused - fused[i]).abs() < 1e-9, "{q} alpha={alpha}");
                if let Some((f, id)) = prev {
                    assert!(f > hit.fused || (f == hit.fused && id < hit.doc_id), "{q}: order");
                }
                prev = Some((hit.fused, hit.doc_id));
            }
        }
    }
}

#[test]
fn min_max_examples() {
    assert_eq!(min_max(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
    assert_eq!(min_max(&[7.0, 7.0]), vec![0.5, 0.5]);
    assert!(min_max(&[]).is_empty());
}

#[test]
fn mmr_matches_naive_greedy() {
    let e = engine();
    let (vectors, _) = naive_tfidf(e.corpus(), e.pipeline());
    let records = e.corpus().records();
    for seed in records {
        for (k, lambda, cap) in [(5, 0.7, Some(2)), (10, 0.5, Some(1)), (29, 1.0, None), (8, 0.0, None), (6, 0.9, Some(3))] {
            let opts = RecOptions {
                k,
                lambda,
                artist_cap: cap,
                facet_filter: None,
            };
            let got: Vec<SongId> = recommend_similar(&e, seed.id, &opts)
                .unwrap()
                .into_iter()
                .map(|r| r.doc_id)
                .collect();
            let want = naive_mmr(seed.id, records, &vectors, k, lambda, cap);
            assert_eq!(got, want, "seed {} k={k} lambda={lambda} cap={cap:?}", seed.title);
        }
    }
}

#[test]
fn lambda_one_is_plain_similarity_order() {
    let e = engine();
    let (vectors, _) = naive_tfidf(e.corpus(), e.pipeline());
    let seed = e.corpus().records()[0].id;
    let got: Vec<SongId> = recommend_similar(
        &e,
        seed,
        &RecOptions {
            k: 29,
            lambda: 1.0,
            artist_cap: None,
            facet_filter: None,
        },
    )
    .unwrap()
    .into_iter()
    .map(|r| r.doc_id)
    .collect();
    let mut want: Vec<(SongId, f64)> = e
        .corpus()
        .records()
        .iter()
        .filter(|r| r.id != seed)
        .map(|r| (r.id, dot(&vectors[&seed], &vectors[&r.id])))
        .collect();
    want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (g, w) in got.iter().zip(&want) {
        let sg = dot(&vectors[&seed], &vectors[g]);
        assert!((sg - w.1).abs() < 1e-9);
    }
}

#[test]
fn sadness_centroid_ranking() {
    let e = engine();
    let (vectors, _) = naive_tfidf(e.corpus(), e.pipeline());
    let members: Vec<_> = e.corpus().records().iter().filter(|r| r.emotion == Emotion::Sadness).collect();
    assert!(members.len() >= 3);
    let mut center: Sparse = BTreeMap::new();
    for m in &members {
        for (t, w) in &vectors[&m.id] {
            *center.entry(t.clone()).or_default() += w;
        }
    }
    let norm = center.values().map(|w| w * w).sum::<f64>().sqrt();
    center.values_mut().for_each(|w| *w /= norm);
    let mut want: Vec<(SongId, f64)> = members.iter().map(|m| (m.id, dot(&center, &vectors[&m.id]))).collect();
    want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let got = recommend_by_facet(&e, &Facet::Emotion(Emotion::Sadness), members.len(), None).unwrap();
    assert_eq!(got.len(), members.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g.doc_id, w.0);
        assert!((g.score - w.1).abs() < 1e-9);
    }

    // with a cap of one, walk the same order and skip repeated artists
    let mut seen = Vec::new();
    let capped: Vec<SongId> = want
        .iter()
        .filter(|(id, _)| {
            let key = artist_key(&e.record(*id).unwrap().artist);
            let fresh = !seen.contains(&key);
            seen.push(key);
            fresh
        })
        .map(|(id, _)| *id)
        .collect();
    let got: Vec<SongId> = recommend_by_facet(&e, &Facet::Emotion(Emotion::Sadness), 30, Some(1))
        .unwrap()
        .into_iter()
        .map(|r| r.doc_id)
        .collect();
    assert_eq!(got, capped);
}

/// Tallies straight from the raw JSONL, without the corpus module.
fn raw_tallies(key: &str) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for line in FIXTURE_JSONL.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let label = match &v[key] {
            serde_json::Value::Null => "null".to_string(),
            serde_json::Value::String(s) => s.trim().to_lowercase(),
            other => other.to_string(),
        };
        *out.entry(label).or_default() += 1;
    }
    out
}

#[test]
fn stats_tallies_match_raw_counts() {
    let stats = compute_stats(&fixture_corpus());
    let genres = raw_tallies("genre");
    let emotions = raw_tallies("emotion");
    let years = raw_tallies("year");
    assert_eq!(stats.by_genre.len(), genres.len());
    for f in &stats.by_genre {
        assert_eq!(genres[&f.label], f.count, "{}", f.label);
    }
    for f in &stats.by_emotion {
        assert_eq!(emotions[&f.label], f.count, "{}", f.label);
    }
    for y in &stats.by_year {
        let key = y.year.map_or("null".to_string(), |v| v.to_string());
        assert_eq!(years[&key], y.count);
    }
    let order: Vec<&str> = stats.by_genre.iter().map(|f| f.label.as_str()).collect();
    let named: Vec<&str> = Genre::NAMED.iter().map(|g| g.label()).filter(|g| genres.contains_key(*g)).collect();
    assert_eq!(order, named);

    let balance = balance_report(&stats).unwrap();
    let counts = |m: &HashMap<String, usize>| m.values().copied().collect::<Vec<_>>();
    assert!((balance.genre.entropy_ratio - entropy_ratio(&counts(&genres))).abs() < 1e-12);
    assert!((balance.emotion.entropy_ratio - entropy_ratio(&counts(&emotions))).abs() < 1e-12);
    assert!((balance.year.entropy_ratio - entropy_ratio(&counts(&years))).abs() < 1e-12);
    let max = *genres.values().max().unwrap() as f64 / 30.0;
    assert!((balance.genre.max_share - max).abs() < 1e-12);
}

#[test]
fn snippet_spans_point_at_query_terms() {
    let e = engine();
    for q in QUERIES {
        let terms = e.pipeline().terms(q);
        let page = e.search(q, QueryOptions { k: 100, snippet_lines: 5, ..Default::default() }).unwrap();
        for hit in &page.hits {
            let lyrics = &e.record(hit.doc_id).unwrap().lyrics;
            for line in &hit.snippets {
                assert_eq!(char_slice(lyrics, line.line_span.0, line.line_span.1), line.line_text);
                assert!(!line.line_text.contains('\n'));
                for &(s, t) in &line.term_spans {
                    assert!(line.line_span.0 <= s && t <= line.line_span.1);
                    let surface = e.pipeline().process_surface(char_slice(lyrics, s, t));
                    assert!(surface.is_some_and(|x| terms.contains(&x)), "{q}: {:?}", char_slice(lyrics, s, t));
                }
            }
        }
    }
}
