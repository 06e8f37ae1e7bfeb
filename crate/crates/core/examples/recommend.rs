//! Diversified "more like this" and facet picks on the fixture.

use lyric_search::corpus::Emotion;
use lyric_search::engine::Engine;
use lyric_search::fixtures::fixture_corpus;
use lyric_search::recommend::{artist_share, recommend_by_facet, recommend_similar, Facet, RecOptions};
use lyric_search::textprep::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let engine = Engine::build(fixture_corpus(), &PipelineConfig::default())?;
    let seed = engine
        .corpus()
        .records()
        .iter()
        .find(|r| r.title == "Good Life")
        .expect("fixture song");
    println!("seed: {} - {}", seed.title, seed.artist);

    for lambda in [1.0, 0.7, 0.3] {
        let opts = RecOptions {
            k: 5,
            lambda,
            artist_cap: Some(1),
            facet_filter: None,
        };
        let recs = recommend_similar(&engine, seed.id, &opts)?;
        println!("\nlambda {lambda}:");
        for r in &recs {
            let song = engine.record(r.doc_id).unwrap();
            println!("  {:<24} {:<22} sim {:.3}  mmr {:.3}", song.title, song.artist, r.similarity, r.score);
        }
        let share = artist_share(recs.iter().map(|r| engine.record(r.doc_id).unwrap().artist.as_str()));
        println!("  distinct artists: {}", share.len());
    }

    println!("\nmost typical sadness songs:");
    for r in recommend_by_facet(&engine, &Facet::Emotion(Emotion::Sadness), 3, Some(2))? {
        let song = engine.record(r.doc_id).unwrap();
        println!("  {:<24} centrality {:.3}", song.title, r.score);
    }
    Ok(())
}
