//! What each preprocessing stage does to a lyric, and how a custom
//! configuration changes the fingerprint an index is tied to.

use lyric_search::textprep::{self, PipelineConfig, Stage};

const LYRIC: &str = "[Chorus]\nWe're RUNNING through the city lights,\n<i>dancing</i> till the mornin' comes";

fn main() -> anyhow::Result<()> {
    println!("raw:        {LYRIC:?}");
    let cleaned = textprep::remove_noise(LYRIC);
    println!("noise:      {cleaned:?}");
    let normalized = textprep::normalize(&cleaned);
    println!("normalized: {normalized:?}");

    let default = PipelineConfig::default();
    let stream = default.compile()?.run(LYRIC);
    println!("\ndefault stages {:?}", default.stages);
    for t in &stream.tokens {
        let raw = textprep::char_slice(LYRIC, t.start, t.end);
        println!("  #{:<2} {:<10} <- {:?} @ {}..{}", t.position, t.surface, raw, t.start, t.end);
    }

    let mut custom = PipelineConfig::with_stages(&[
        Stage::NoiseRemoval,
        Stage::Normalize,
        Stage::Tokenize,
        Stage::Lowercase,
        Stage::StopRemoval,
        Stage::Lemmatize,
    ]);
    custom.stopwords.insert("city".into());
    let lemmas = custom.compile()?.terms(LYRIC);
    println!("\nlemmatized, no stemming: {lemmas:?}");
    println!(
        "fingerprints differ: {:016x} vs {:016x}",
        default.fingerprint(),
        custom.fingerprint()
    );
    Ok(())
}
