use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lyrics");

fn fixture_jsonl() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/songs.jsonl")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "lyrics {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Ingests the fixture and builds an index under a fresh temp dir.
fn built() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let index = dir.path().join("index");
    ok(&["ingest", "--input", s(&fixture_jsonl()), "--out", s(&corpus)]);
    ok(&["build-index", "--corpus", s(&corpus), "--out", s(&index)]);
    (dir, corpus, index)
}

#[test]
fn golden_query_end_to_end() {
    let (_dir, _corpus, index) = built();
    let text = ok(&["search", "--index", s(&index), "--q", "good", "--json"]);
    let page: Value = serde_json::from_str(&text).unwrap();
    let top = &page["hits"][0];
    assert_eq!(top["title"], "Good Life");
    assert_eq!(top["artist"], "Kehlani, G-Eazy");
    assert_eq!(top["matched_fields"], serde_json::json!(["title", "lyrics"]));

    let human = ok(&["search", "--index", s(&index), "--q", "good"]);
    assert!(human.contains("Good Life"));
    assert!(human.contains("[good]") || human.contains("[Good]"));
}

#[test]
fn search_rejects_stopword_query() {
    let (_dir, _corpus, index) = built();
    let out = run(&["search", "--index", s(&index), "--q", "the and of"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("query"));
}

#[test]
fn ingest_reports_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("dump.jsonl");
    let mut text = std::fs::read_to_string(fixture_jsonl()).unwrap();
    text.push_str("{\"title\": \"\", \"artist\": \"x\", \"genre\": \"pop\", \"emotion\": \"sadness\", \"lyrics\": \"la\"}\n");
    text.push_str("not json at all\n");
    std::fs::write(&input, text).unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["ingest", "--input", s(&input), "--out", s(&corpus)]);
    let rejections = std::fs::read_to_string(corpus.join("rejections.jsonl")).unwrap();
    assert_eq!(rejections.lines().count(), 2);

    let stats: Value = serde_json::from_str(&ok(&["stats", "--corpus", s(&corpus), "--json"])).unwrap();
    assert_eq!(stats["total"], 30);
}

#[test]
fn stats_json_sums() {
    let (_dir, corpus, _index) = built();
    let stats: Value = serde_json::from_str(&ok(&["stats", "--corpus", s(&corpus), "--json"])).unwrap();
    let sum = |key: &str| -> u64 { stats[key].as_array().unwrap().iter().map(|c| c["count"].as_u64().unwrap()).sum() };
    assert_eq!(sum("by_year"), 30);
    assert_eq!(sum("by_genre"), 30);
    assert_eq!(sum("by_emotion"), 30);
}

#[test]
fn recommend_commands() {
    let (_dir, _corpus, index) = built();
    let page: Value =
        serde_json::from_str(&ok(&["search", "--index", s(&index), "--q", "good life", "--json", "--k", "1"])).unwrap();
    let seed = page["hits"][0]["doc_id"].as_str().unwrap().to_string();
    let recs: Value = serde_json::from_str(&ok(&[
        "recommend", "--index", s(&index), "--seed", &seed, "--k", "5", "--json",
    ]))
    .unwrap();
    let list = recs["recommendations"].as_array().unwrap();
    assert_eq!(list.len(), 5);
    assert!(list.iter().all(|r| r["doc_id"] != seed.as_str()));

    let facet: Value = serde_json::from_str(&ok(&[
        "recommend-facet", "--index", s(&index), "--emotion", "sadness", "--k", "3", "--json",
    ]))
    .unwrap();
    for r in facet["recommendations"].as_array().unwrap() {
        assert_eq!(r["emotion"], "sadness");
    }

    let out = run(&["recommend", "--index", s(&index), "--seed", "999999999"]);
    assert!(!out.status.success());
}

#[test]
fn build_index_is_byte_deterministic() {
    let (dir, corpus, index) = built();
    let again = dir.path().join("again");
    ok(&["build-index", "--corpus", s(&corpus), "--out", s(&again)]);
    for name in ["index.lidx", "encoder.json", "pipeline.json"] {
        assert_eq!(
            std::fs::read(index.join(name)).unwrap(),
            std::fs::read(again.join(name)).unwrap(),
            "{name} differs between builds"
        );
    }
}

#[test]
fn mismatched_serving_pipeline_is_refused() {
    let (dir, _corpus, index) = built();
    let pipeline = dir.path().join("p.json");
    let mut config = lyric_search::textprep::PipelineConfig::default();
    config.stopwords.insert("life".into());
    std::fs::write(&pipeline, config.to_json()).unwrap();
    let out = run(&["search", "--index", s(&index), "--pipeline", s(&pipeline), "--q", "good"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rebuild"));
}

#[test]
fn gen_corpus_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    ok(&["gen-corpus", "--out", s(&a), "--total", "300", "--seed", "11"]);
    ok(&["gen-corpus", "--out", s(&b), "--total", "300", "--seed", "11"]);
    ok(&["gen-corpus", "--out", s(&c), "--total", "300", "--seed", "12"]);
    let a = std::fs::read(&a).unwrap();
    assert_eq!(a, std::fs::read(&b).unwrap());
    assert_ne!(a, std::fs::read(&c).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 300);
}

#[test]
fn query_batch_reports_latency() {
    let (dir, _corpus, index) = built();
    let queries = dir.path().join("q.txt");
    std::fs::write(&queries, "good\nlove rain\nthe\nmidnight train\n").unwrap();
    let report: Value =
        serde_json::from_str(&ok(&["search", "--index", s(&index), "--queries", s(&queries)])).unwrap();
    assert_eq!(report["queries"], 4);
    assert_eq!(report["errors"], 1);
    for key in ["p50_ms", "p99_ms", "max_ms", "mean_ms", "load_ms"] {
        assert!(report[key].as_f64().unwrap() >= 0.0, "{key}");
    }
}
