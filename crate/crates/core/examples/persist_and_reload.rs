//! Ingest a raw dump, build and persist an index, reload it, and show that a
//! changed pipeline is refused.

use lyric_search::corpus::{self, Format};
use lyric_search::engine::{Engine, LoadOptions};
use lyric_search::fixtures::FIXTURE_JSONL;
use lyric_search::textprep::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join(format!("lyrics-example-{}", std::process::id()));
    let (corpus_dir, index_dir) = (dir.join("corpus"), dir.join("index"));

    let dump = format!("{FIXTURE_JSONL}{{\"title\": \"\", \"artist\": \"nobody\"}}\n");
    let ingested = corpus::ingest_str(&dump, Format::Jsonl, "dump.jsonl")?;
    for r in ingested.rejections.iter() {
        println!("rejected line {}: {}", r.line, r.reason);
    }
    let checksum = corpus::persist(&ingested.corpus, &corpus_dir)?;
    println!("stored {} songs, checksum {checksum:016x}", ingested.corpus.len());

    let engine = Engine::build(ingested.corpus, &PipelineConfig::default())?;
    engine.persist(&index_dir, Some(&corpus_dir))?;
    let loaded = Engine::load(&index_dir, &LoadOptions::default())?;
    println!("reloaded, fingerprints equal: {}", loaded.fingerprints() == engine.fingerprints());

    let mut changed = PipelineConfig::default();
    changed.stopwords.insert("love".into());
    let options = LoadOptions {
        pipeline: Some(changed),
        ..Default::default()
    };
    match Engine::load(&index_dir, &options) {
        Ok(_) => println!("unexpected: mismatched pipeline accepted"),
        Err(e) => println!("refused: {e}"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
