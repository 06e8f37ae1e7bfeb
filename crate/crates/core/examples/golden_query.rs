//! Hybrid search over the bundled 30-song fixture.
//!
//! cargo run --example golden_query -- "good"

use lyric_search::engine::Engine;
use lyric_search::fixtures::fixture_corpus;
use lyric_search::search::QueryOptions;
use lyric_search::textprep::PipelineConfig;

fn main() -> anyhow::Result<()> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "good".into());
    let engine = Engine::build(fixture_corpus(), &PipelineConfig::default())?;
    let page = engine.search(&query, QueryOptions::default())?;

    println!("{:?} -> terms {:?}, {} candidates", query, page.query.terms, page.total_candidates);
    for (rank, hit) in page.hits.iter().enumerate() {
        let fields: Vec<&str> = hit.matched_fields.iter().map(|f| f.name()).collect();
        println!(
            "{:>2}. {} - {}  fused {:.3} (bm25 {:.3}, cos {:.3})  [{}]",
            rank + 1,
            hit.title,
            hit.artist,
            hit.fused,
            hit.lexical,
            hit.semantic,
            fields.join(", ")
        );
        for line in &hit.snippets {
            // term spans are absolute char offsets into the lyrics
            let offset = line.line_span.0;
            let mut out = String::new();
            let mut at = 0;
            let chars: Vec<char> = line.line_text.chars().collect();
            for &(s, e) in &line.term_spans {
                out.extend(&chars[at..s - offset]);
                out.push('*');
                out.extend(&chars[s - offset..e - offset]);
                out.push('*');
                at = e - offset;
            }
            out.extend(&chars[at..]);
            println!("      {out}");
        }
    }
    Ok(())
}
