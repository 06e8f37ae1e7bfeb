//! The numbers behind the dashboard charts, for the fixture or a corpus directory.
//!
//! cargo run --example dashboard_stats [-- path/to/corpus]

use lyric_search::analytics::{compute_stats, StatsPayload};
use lyric_search::corpus;
use lyric_search::fixtures::fixture_corpus;

fn bar(n: usize, max: usize) -> String {
    "#".repeat((n * 40).div_ceil(max.max(1)))
}

fn main() -> anyhow::Result<()> {
    let corpus = match std::env::args().nth(1) {
        Some(dir) => corpus::load(dir.as_ref())?,
        None => fixture_corpus(),
    };
    let payload = StatsPayload::new(compute_stats(&corpus));
    let stats = &payload.stats;

    println!("{} songs\n", stats.total);
    let max = stats.by_genre.iter().map(|f| f.count).max().unwrap_or(0);
    for f in &stats.by_genre {
        println!("{:<12} {:>6} {}", f.label, f.count, bar(f.count, max));
    }
    println!();
    let max = stats.by_emotion.iter().map(|f| f.count).max().unwrap_or(0);
    for f in &stats.by_emotion {
        println!("{:<12} {:>6} {}", f.label, f.count, bar(f.count, max));
    }
    if let Some(b) = &payload.balance {
        println!(
            "\nbalance (1 = even): genre {:.2}, emotion {:.2}, year {:.2}",
            b.genre.entropy_ratio, b.emotion.entropy_ratio, b.year.entropy_ratio
        );
    }
    if let Some(top) = stats.top_terms.by_genre.get("pop") {
        let words: Vec<&str> = top.iter().take(8).map(|t| t.term.as_str()).collect();
        println!("top pop terms: {}", words.join(" "));
    }
    Ok(())
}
