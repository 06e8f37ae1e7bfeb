//! Plugging a different semantic encoder into the engine.
//!
//! The encoder here hashes character trigrams of each term into a fixed
//! number of buckets. Lexical matching still decides the candidates; the
//! encoder changes the semantic score and therefore recommendations.

use std::sync::Arc;

use lyric_search::corpus::SongId;
use lyric_search::embed::{DocVector, Encoder};
use lyric_search::engine::Engine;
use lyric_search::fixtures::fixture_corpus;
use lyric_search::hash::fnv1a64;
use lyric_search::recommend::{recommend_similar, RecOptions};
use lyric_search::search::QueryOptions;
use lyric_search::textprep::{PipelineConfig, TokenStream};

const BUCKETS: u64 = 4096;

#[derive(Debug)]
struct Trigrams;

impl Trigrams {
    fn encode<'a>(&self, doc_id: Option<SongId>, terms: impl Iterator<Item = &'a str>) -> DocVector {
        let mut weights = Vec::new();
        for term in terms {
            let padded: Vec<char> = format!("^{term}$").chars().collect();
            for gram in padded.windows(3) {
                let gram: String = gram.iter().collect();
                weights.push(((fnv1a64(gram.as_bytes()) % BUCKETS) as u32, 1.0));
            }
        }
        DocVector::from_weights(doc_id, self.fingerprint(), weights)
    }
}

impl Encoder for Trigrams {
    fn name(&self) -> &str {
        "trigram"
    }

    fn fingerprint(&self) -> u64 {
        fnv1a64(b"trigram-4096")
    }

    fn encode_doc(&self, doc_id: SongId, stream: &TokenStream) -> DocVector {
        self.encode(Some(doc_id), stream.tokens.iter().map(|t| t.surface.as_str()))
    }

    fn encode_query(&self, terms: &[String]) -> DocVector {
        self.encode(None, terms.iter().map(String::as_str))
    }
}

fn main() -> anyhow::Result<()> {
    let tfidf = Engine::build(fixture_corpus(), &PipelineConfig::default())?;
    let trigram = tfidf.clone().with_encoder(Arc::new(Trigrams));
    let seed = tfidf.corpus().records().iter().find(|r| r.title == "Midnight Standard").unwrap().id;

    for engine in [&tfidf, &trigram] {
        let page = engine.search("night train", QueryOptions { alpha: 0.0, ..Default::default() })?;
        let top: Vec<String> = page
            .hits
            .iter()
            .take(3)
            .map(|h| format!("{} ({:.2})", h.title, h.semantic))
            .collect();
        println!("{:<8} search:    {}", engine.encoder().name(), top.join(", "));
        let recs = recommend_similar(engine, seed, &RecOptions { k: 3, ..Default::default() })?;
        let names: Vec<&str> = recs.iter().map(|r| engine.record(r.doc_id).unwrap().title.as_str()).collect();
        println!("{:<8} similar:   {}", engine.encoder().name(), names.join(", "));
    }
    Ok(())
}
