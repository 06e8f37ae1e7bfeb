use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lyric_search::analytics::{compute_stats_with, StatsPayload};
use lyric_search::corpus::{self, Emotion, Format, Genre, SongId};
use lyric_search::engine::{EncoderChoice, Engine, LoadOptions};
use lyric_search::fixtures::{self, GeneratorSpec};
use lyric_search::index::{Bm25Params, FieldWeights};
use lyric_search::recommend::{self, Facet, RecOptions, Recommendation};
use lyric_search::search::{Filters, QueryOptions, ResultPage};
use lyric_search::service::{self, ServiceConfig};
use lyric_search::textprep::{char_slice, PipelineConfig};

#[derive(Parser)]
#[command(name = "lyrics", version, about = "Lyrics search engine and recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL or CSV dump and store it as a corpus directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the input's extension.
        #[arg(long)]
        format: Option<Format>,
        /// Where to write rejected rows; defaults to <out>/rejections.jsonl.
        #[arg(long)]
        rejections: Option<PathBuf>,
    },
    /// Build the index, encoder and snapshot files for a corpus.
    BuildIndex {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
        /// title,artist,lyrics
        #[arg(long, default_value = "2.0,1.5,1.0")]
        field_weights: String,
        /// Pipeline config JSON; the built-in default otherwise.
        #[arg(long)]
        pipeline: Option<PathBuf>,
        /// Term-vector file to use instead of TF-IDF.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Run one query, or time a file of queries.
    Search {
        #[command(flatten)]
        snapshot: SnapshotArgs,
        #[arg(long)]
        q: Option<String>,
        /// One query per line; prints latency percentiles instead of hits.
        #[arg(long, conflicts_with = "q")]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        genre: Option<String>,
        #[arg(long)]
        emotion: Option<String>,
        #[arg(long)]
        year_from: Option<i32>,
        #[arg(long)]
        year_to: Option<i32>,
        #[arg(long, default_value_t = 3)]
        snippet_lines: usize,
        #[arg(long)]
        json: bool,
    },
    /// Songs similar to a seed song.
    Recommend {
        #[command(flatten)]
        snapshot: SnapshotArgs,
        #[arg(long)]
        seed: SongId,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = recommend::DEFAULT_LAMBDA)]
        lambda: f64,
        /// 0 disables the cap.
        #[arg(long, default_value_t = recommend::DEFAULT_ARTIST_CAP)]
        artist_cap: usize,
        #[arg(long)]
        json: bool,
    },
    /// Most central songs of a genre or emotion.
    RecommendFacet {
        #[command(flatten)]
        snapshot: SnapshotArgs,
        #[arg(long, conflicts_with = "emotion", required_unless_present = "emotion")]
        genre: Option<String>,
        #[arg(long)]
        emotion: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = recommend::DEFAULT_ARTIST_CAP)]
        artist_cap: usize,
        #[arg(long)]
        json: bool,
    },
    /// Facet histograms, balance and top terms.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic JSONL corpus.
    GenCorpus {
        /// Generator spec JSON; the 28,372-song default otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        total: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Start the JSON API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct SnapshotArgs {
    #[arg(long)]
    index: PathBuf,
    /// Overrides the corpus directory recorded at build time.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Serving pipeline; must match the build.
    #[arg(long)]
    pipeline: Option<PathBuf>,
}

impl SnapshotArgs {
    fn load(&self) -> Result<Engine> {
        let pipeline = self.pipeline.as_deref().map(PipelineConfig::from_file).transpose()?;
        let options = LoadOptions {
            corpus_dir: self.corpus.clone(),
            pipeline,
        };
        Engine::load(&self.index, &options).with_context(|| format!("loading index {}", self.index.display()))
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            out,
            format,
            rejections,
        } => ingest(&input, &out, format, rejections),
        Command::BuildIndex {
            corpus,
            out,
            k1,
            b,
            field_weights,
            pipeline,
            embeddings,
        } => {
            let params = Bm25Params {
                k1,
                b,
                field_weights: parse_weights(&field_weights)?,
            };
            build_index(&corpus, &out, params, pipeline.as_deref(), embeddings)
        }
        Command::Search {
            snapshot,
            q,
            queries,
            k,
            alpha,
            genre,
            emotion,
            year_from,
            year_to,
            snippet_lines,
            json,
        } => {
            let options = QueryOptions {
                k,
                alpha,
                filters: Filters {
                    genre: genre.as_deref().map(Genre::parse),
                    emotion: emotion.as_deref().map(Emotion::parse),
                    year_from,
                    year_to,
                },
                snippet_lines,
            };
            let started = Instant::now();
            let engine = snapshot.load()?;
            let load_ms = ms(started);
            match (q, queries) {
                (Some(q), None) => {
                    let page = engine.search(&q, options)?;
                    if json {
                        println!("{}", serde_json::to_string_pretty(&page)?);
                    } else {
                        print_page(&page);
                    }
                    Ok(())
                }
                (None, Some(path)) => time_queries(&engine, &path, options, load_ms),
                _ => bail!("give --q or --queries"),
            }
        }
        Command::Recommend {
            snapshot,
            seed,
            k,
            lambda,
            artist_cap,
            json,
        } => {
            let engine = snapshot.load()?;
            let opts = RecOptions {
                k,
                lambda,
                artist_cap: (artist_cap > 0).then_some(artist_cap),
                facet_filter: None,
            };
            let recs = recommend::recommend_similar(&engine, seed, &opts)?;
            print_recs(&engine, json!({"seed": seed}), &recs, json)
        }
        Command::RecommendFacet {
            snapshot,
            genre,
            emotion,
            k,
            artist_cap,
            json,
        } => {
            let facet = match (genre, emotion) {
                (Some(g), _) => Facet::Genre(Genre::parse(&g)),
                (None, Some(e)) => Facet::Emotion(Emotion::parse(&e)),
                (None, None) => bail!("give --genre or --emotion"),
            };
            let engine = snapshot.load()?;
            let recs = recommend::recommend_by_facet(&engine, &facet, k, (artist_cap > 0).then_some(artist_cap))?;
            print_recs(&engine, json!({"facet": facet}), &recs, json)
        }
        Command::Stats { corpus, json } => stats(&corpus, json),
        Command::GenCorpus { spec, out, total, seed } => {
            let mut spec = match spec {
                Some(path) => GeneratorSpec::from_json(&fs::read_to_string(&path)?)?,
                None => GeneratorSpec::default(),
            };
            if let Some(total) = total {
                spec = GeneratorSpec { total, ..spec };
            }
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            fixtures::generate_to_file(&spec, &out)?;
            eprintln!("wrote {} songs to {}", spec.total, out.display());
            Ok(())
        }
        Command::Serve { config } => {
            let mut config = ServiceConfig::from_file(&config)?;
            config.apply_env(|name| std::env::var(name).ok());
            tokio::runtime::Runtime::new()?.block_on(service::serve(config))
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn parse_weights(text: &str) -> Result<FieldWeights> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("field weights {text:?}"))?;
    let [title, artist, lyrics] = parts[..] else {
        bail!("field weights need three values: title,artist,lyrics");
    };
    Ok(FieldWeights { title, artist, lyrics })
}

fn ingest(input: &Path, out: &Path, format: Option<Format>, rejections: Option<PathBuf>) -> Result<()> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(input).context("cannot tell the format from the extension; pass --format")?,
    };
    let ingested = corpus::ingest(input, format)?;
    let checksum = corpus::persist(&ingested.corpus, out)?;
    let report_path = rejections.unwrap_or_else(|| out.join("rejections.jsonl"));
    fs::write(&report_path, ingested.rejections.to_jsonl())?;
    println!(
        "{}",
        json!({
            "accepted": ingested.corpus.len(),
            "rejected": ingested.rejections.len(),
            "checksum": lyric_search::hash::to_hex(checksum),
            "rejections": report_path,
        })
    );
    Ok(())
}

fn build_index(corpus_dir: &Path, out: &Path, params: Bm25Params, pipeline: Option<&Path>, embeddings: Option<PathBuf>) -> Result<()> {
    let started = Instant::now();
    let config = match pipeline {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    let corpus = corpus::load(corpus_dir)?;
    let encoder = embeddings.map_or(EncoderChoice::TfIdf, EncoderChoice::Embedding);
    let engine = Engine::build_with(corpus, &config, params, &encoder)?;
    let corpus_dir = corpus_dir.canonicalize().unwrap_or_else(|_| corpus_dir.to_path_buf());
    engine.persist(out, Some(&corpus_dir))?;
    println!(
        "{}",
        json!({
            "songs": engine.corpus().len(),
            "terms": engine.index().vocabulary_size(),
            "fingerprints": engine.fingerprints(),
            "elapsed_ms": ms(started),
        })
    );
    Ok(())
}

fn highlight(text: &str, line_start: usize, spans: &[(usize, usize)]) -> String {
    let len = text.chars().count();
    let mut out = String::new();
    let mut at = 0;
    for &(s, e) in spans {
        let (s, e) = (s - line_start, e - line_start);
        out.push_str(char_slice(text, at, s));
        out.push('[');
        out.push_str(char_slice(text, s, e));
        out.push(']');
        at = e;
    }
    out.push_str(char_slice(text, at, len));
    out
}

fn print_page(page: &ResultPage) {
    println!(
        "{} hit(s) of {} candidate(s) for {:?} [terms: {}] in {:.2} ms",
        page.hits.len(),
        page.total_candidates,
        page.query.raw,
        page.query.terms.join(" "),
        page.elapsed_ms
    );
    for (rank, hit) in page.hits.iter().enumerate() {
        let year = hit.year.map_or("unknown".to_string(), |y| y.to_string());
        let fields: Vec<String> = hit.matched_fields.iter().map(|f| f.to_string()).collect();
        println!(
            "{:>2}. {} | {} ({year}, {}, {})  fused {:.4}  bm25 {:.4}  cos {:.4}  [{}]  id {}",
            rank + 1,
            hit.title,
            hit.artist,
            hit.genre,
            hit.emotion,
            hit.fused,
            hit.lexical,
            hit.semantic,
            fields.join(","),
            hit.doc_id
        );
        for line in &hit.snippets {
            println!("      {}", highlight(&line.line_text, line.line_span.0, &line.term_spans));
        }
    }
}

fn time_queries(engine: &Engine, path: &Path, options: QueryOptions, load_ms: f64) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut latencies = Vec::new();
    let mut errors = 0usize;
    let mut hits = 0usize;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let started = Instant::now();
        match engine.search(line, options.clone()) {
            Ok(page) => hits += page.hits.len(),
            Err(_) => errors += 1,
        }
        latencies.push(ms(started));
    }
    if latencies.is_empty() {
        bail!("{} has no queries", path.display());
    }
    latencies.sort_by(f64::total_cmp);
    let pct = |p: f64| latencies[((p * latencies.len() as f64).ceil() as usize).clamp(1, latencies.len()) - 1];
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "queries": latencies.len(),
            "errors": errors,
            "hits": hits,
            "load_ms": load_ms,
            "p50_ms": pct(0.50),
            "p99_ms": pct(0.99),
            "max_ms": latencies[latencies.len() - 1],
            "mean_ms": latencies.iter().sum::<f64>() / latencies.len() as f64,
        }))?
    );
    Ok(())
}

fn print_recs(engine: &Engine, head: serde_json::Value, recs: &[Recommendation], as_json: bool) -> Result<()> {
    let records: Vec<_> = recs.iter().filter_map(|r| engine.record(r.doc_id).map(|s| (r, s))).collect();
    let share = recommend::artist_share(records.iter().map(|(_, s)| s.artist.as_str()));
    if as_json {
        let list: Vec<_> = records
            .iter()
            .map(|(r, s)| {
                json!({
                    "doc_id": r.doc_id, "title": s.title, "artist": s.artist, "year": s.year,
                    "genre": s.genre, "emotion": s.emotion, "score": r.score, "similarity": r.similarity,
                })
            })
            .collect();
        let mut body = head;
        body["recommendations"] = json!(list);
        body["artist_share"] = json!(share);
        println!("{}", serde_json::to_string_pretty(&body)?);
        return Ok(());
    }
    for (rank, (r, s)) in records.iter().enumerate() {
        println!(
            "{:>2}. {} | {} ({}, {})  score {:.4}  sim {:.4}  id {}",
            rank + 1,
            s.title,
            s.artist,
            s.genre,
            s.emotion,
            r.score,
            r.similarity,
            r.doc_id
        );
    }
    println!("artist share:");
    for (artist, f) in share {
        println!("  {artist}: {:.1}%", f * 100.0);
    }
    Ok(())
}

fn stats(corpus_dir: &Path, as_json: bool) -> Result<()> {
    let corpus = corpus::load(corpus_dir)?;
    let pipeline = PipelineConfig::default().compile()?;
    let payload = StatsPayload::new(compute_stats_with(&corpus, &pipeline));
    if as_json {
        println!("{}", serde_json::to_string_pretty(&payload)?);
        return Ok(());
    }
    let stats = &payload.stats;
    println!("{} songs", stats.total);
    println!("by genre:");
    for f in &stats.by_genre {
        println!("  {:<12} {}", f.label, f.count);
    }
    println!("by emotion:");
    for f in &stats.by_emotion {
        println!("  {:<12} {}", f.label, f.count);
    }
    println!("by year:");
    for y in &stats.by_year {
        let label = y.year.map_or("unknown".to_string(), |v| v.to_string());
        println!("  {label:<12} {}", y.count);
    }
    if let Some(b) = &payload.balance {
        println!(
            "balance: genre {:.3} (max share {:.3}), emotion {:.3} (max share {:.3}), year {:.3}",
            b.genre.entropy_ratio, b.genre.max_share, b.emotion.entropy_ratio, b.emotion.max_share, b.year.entropy_ratio
        );
    }
    Ok(())
}
