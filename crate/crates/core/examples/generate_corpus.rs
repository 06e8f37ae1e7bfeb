//! Seeded synthetic corpus at any size, then ingest, index and time a few queries.
//!
//! cargo run --release --example generate_corpus -- 28372

use std::time::Instant;

use lyric_search::engine::Engine;
use lyric_search::fixtures::{generate_corpus, GeneratorSpec, REFERENCE_SCALE};
use lyric_search::search::QueryOptions;
use lyric_search::textprep::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let total = std::env::args().nth(1).map_or(Ok(5_000), |s| s.parse())?;
    let spec = if total == REFERENCE_SCALE {
        GeneratorSpec::default()
    } else {
        GeneratorSpec::with_total(total)
    };
    let started = Instant::now();
    let corpus = generate_corpus(&spec)?;
    println!("generated {} songs (seed {}) in {:?}", corpus.len(), spec.seed, started.elapsed());

    let started = Instant::now();
    let engine = Engine::build(corpus, &PipelineConfig::default())?;
    println!(
        "indexed {} terms in {:?}",
        engine.index().vocabulary_size(),
        started.elapsed()
    );
    for q in ["love tonight", "rain", "blood street", "dance"] {
        let started = Instant::now();
        let page = engine.search(q, QueryOptions::default())?;
        println!(
            "{q:<14} {:>6} candidates  top: {:<28} {:?}",
            page.total_candidates,
            page.hits.first().map_or("-", |h| h.title.as_str()),
            started.elapsed()
        );
    }
    Ok(())
}
