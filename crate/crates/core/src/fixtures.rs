//! The bundled 30-song fixture and a seeded generator for synthetic corpora.
//!
//! Generated lyrics are word salad drawn from weighted pools: a shared pool
//! plus one pool per genre and per emotion, so facet-specific terms show up
//! in search, recommendation and top-term statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Corpus, Emotion, Format, Genre, SongRecord};

/// The fixture file, as shipped in `fixtures/songs.jsonl`.
pub const FIXTURE_JSONL: &str = include_str!("../fixtures/songs.jsonl");

/// The hand-written 30-song corpus.
pub fn fixture_corpus() -> Corpus {
    corpus::ingest_str(FIXTURE_JSONL, Format::Jsonl, "fixtures/songs.jsonl")
        .expect("bundled fixture is valid")
        .corpus
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{0} weights sum to {1}, expected 1")]
    WeightSum(&'static str, f64),
    #[error("{0} weights must be finite and non-negative")]
    BadWeight(&'static str),
    #[error("total must be at least 1")]
    EmptyTotal,
    #[error("invalid range for {0}")]
    BadRange(&'static str),
    #[error("vocabulary pool {0} is empty")]
    EmptyPool(String),
    #[error("malformed generator spec: {0}")]
    Json(#[from] serde_json::Error),
    #[error("generator I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub common: Vec<WeightedTerm>,
    #[serde(default)]
    pub by_genre: BTreeMap<String, Vec<WeightedTerm>>,
    #[serde(default)]
    pub by_emotion: BTreeMap<String, Vec<WeightedTerm>>,
    /// Chance that a lyric word comes from the genre pool, and likewise emotion.
    #[serde(default = "default_facet_rate")]
    pub facet_rate: f64,
}

fn default_facet_rate() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub total: usize,
    pub genre_weights: BTreeMap<String, f64>,
    pub emotion_weights: BTreeMap<String, f64>,
    /// Inclusive.
    pub year_range: (i32, i32),
    /// Year weight grows as `(year - start + 1)^year_skew`; 0 is uniform.
    #[serde(default)]
    pub year_skew: f64,
    /// Fraction of records written without a year.
    #[serde(default)]
    pub unknown_year_rate: f64,
    pub lines: (usize, usize),
    pub words_per_line: (usize, usize),
    /// Size of the artist pool; artists are drawn with a Zipf skew.
    pub artists: usize,
    pub vocabulary: Vocabulary,
}

const COMMON_WORDS: &str = "\
the you i a my me and to in it of your love we on all be is no do so like just know \
heart night baby time way down now girl never go away feel one can't life up let day \
back get want said gone home come still need light world eyes fire through tell dream \
every again make say man see think only cause could take hold high tonight right run \
rain alone long hand last without think lonely under sky stay road river blue cold \
fall free give true smile kiss wild burn sweet dance morning soul walk city sun star \
moon crazy money wind water tears break change lost gold mind apart forever summer \
rise young body door shadow voice window ocean summer bright fade memory promise \
story letter song sing music radio highway train whiskey church angel devil thunder \
lightning storm winter spring flowers garden mountain valley desert island shore \
wave stone glass paper silver diamond midnight sunrise sunset echo silence whisper \
scream laugh cry pray believe remember forget wonder wander hunger thirst truth lie \
secret reason chance danger trouble freedom mercy glory shame pride honor grace \
wish hope fear rage calm slow fast hard soft loud quiet empty full broken golden \
open closed deep hollow heavy simple strange lucky perfect tender gentle cruel \
kind brave tired restless endless little young old new better worse good bad best";

fn pool(words: &str) -> Vec<WeightedTerm> {
    let mut seen = HashSet::new();
    words
        .split_whitespace()
        .filter(|w| seen.insert(*w))
        .enumerate()
        .map(|(rank, w)| WeightedTerm {
            term: w.to_string(),
            weight: 1.0 / (rank as f64 + 1.0),
        })
        .collect()
}

fn uniform_pool(words: &str) -> Vec<WeightedTerm> {
    words
        .split_whitespace()
        .map(|w| WeightedTerm {
            term: w.to_string(),
            weight: 1.0,
        })
        .collect()
}

impl Default for Vocabulary {
    fn default() -> Self {
        let genre = [
            ("pop", "radio chart neon sparkle party glitter dancefloor spotlight crush bubblegum supernova flashing"),
            ("country", "truck dirt porch whiskey tailgate cowboy pickup boots barn fiddle hometown creek"),
            ("blues", "crossroads delta levee muddy harmonica shackles jukebox lowdown moan boxcar sorrow bottleneck"),
            ("rock", "amplifier guitar rebel riot thunderclap electric distortion stage roar engine asphalt leather"),
            ("jazz", "saxophone swing trumpet smoky velvet bebop cocktail lounge brushes improvise nocturne bourbon"),
            ("reggae", "zion irie babylon riddim roots herb jah rasta island sunshine dub yard"),
            ("hip-hop", "hustle rhyme block crew flow beat mic grind cypher corner hood verse"),
        ];
        let emotion = [
            ("sadness", "tears grief mourning sorrow heartbreak funeral goodbye aching weeping lonesome rainy ashes"),
            ("violence", "gun blood fight war knife battle bullet riot wound enemy revenge bruise"),
            ("world/life", "planet humanity future nations journey destiny history generation borders peace earth wisdom"),
            ("obscene", "damn hell dirty nasty filthy bitter crude rude savage reckless vulgar raw"),
            ("music", "melody rhythm chorus drum harmony tune record vinyl groove bass anthem lyric"),
            ("night/time", "midnight clock hour dusk dawn evening twilight calendar minute yesterday tomorrow moonlight"),
            ("romantic", "darling honey embrace candle roses valentine sweetheart wedding caress beloved devotion tender"),
            ("feelings", "emotion heartbeat nervous anxious joyful happy mood inside blush shiver giddy restless"),
        ];
        Vocabulary {
            common: pool(COMMON_WORDS),
            by_genre: genre.iter().map(|(k, v)| (k.to_string(), uniform_pool(v))).collect(),
            by_emotion: emotion.iter().map(|(k, v)| (k.to_string(), uniform_pool(v))).collect(),
            facet_rate: default_facet_rate(),
        }
    }
}

/// Reference corpus size and facet shape for benchmarks.
pub const REFERENCE_SCALE: usize = 28_372;

impl Default for GeneratorSpec {
    /// 28,372 songs with 7,042 pop and 6,000 sadness; the other facet
    /// shares are arbitrary.
    fn default() -> Self {
        let total = REFERENCE_SCALE as f64;
        let genres = [
            ("pop", 7042.0),
            ("country", 5445.0),
            ("blues", 4604.0),
            ("jazz", 3845.0),
            ("rock", 3404.0),
            ("reggae", 2498.0),
            ("hip-hop", 1534.0),
        ];
        let emotions = [
            ("sadness", 6000.0),
            ("violence", 5000.0),
            ("world/life", 4500.0),
            ("obscene", 4000.0),
            ("music", 2500.0),
            ("night/time", 2300.0),
            ("romantic", 2200.0),
            ("feelings", 1872.0),
        ];
        GeneratorSpec {
            seed: 7,
            total: REFERENCE_SCALE,
            genre_weights: genres.iter().map(|(k, c)| (k.to_string(), c / total)).collect(),
            emotion_weights: emotions.iter().map(|(k, c)| (k.to_string(), c / total)).collect(),
            year_range: (1950, 2019),
            year_skew: 1.5,
            unknown_year_rate: 0.0,
            lines: (8, 16),
            words_per_line: (4, 8),
            artists: 3500,
            vocabulary: Vocabulary::default(),
        }
    }
}

impl GeneratorSpec {
    /// Same shape with a different size.
    pub fn with_total(total: usize) -> Self {
        GeneratorSpec {
            total,
            artists: (total / 8).max(1),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.total == 0 {
            return Err(SpecError::EmptyTotal);
        }
        check_weights("genre", self.genre_weights.values())?;
        check_weights("emotion", self.emotion_weights.values())?;
        if self.year_range.0 > self.year_range.1
            || self.year_range.0 < corpus::MIN_YEAR
            || self.year_range.1 > corpus::MAX_YEAR
        {
            return Err(SpecError::BadRange("year_range"));
        }
        if !(0.0..=1.0).contains(&self.unknown_year_rate) {
            return Err(SpecError::BadRange("unknown_year_rate"));
        }
        if !self.year_skew.is_finite() || self.year_skew < 0.0 {
            return Err(SpecError::BadRange("year_skew"));
        }
        if self.lines.0 == 0 || self.lines.0 > self.lines.1 {
            return Err(SpecError::BadRange("lines"));
        }
        if self.words_per_line.0 == 0 || self.words_per_line.0 > self.words_per_line.1 {
            return Err(SpecError::BadRange("words_per_line"));
        }
        if self.artists == 0 {
            return Err(SpecError::BadRange("artists"));
        }
        let vocab = &self.vocabulary;
        if !(0.0..=0.5).contains(&vocab.facet_rate) {
            return Err(SpecError::BadRange("vocabulary.facet_rate"));
        }
        let pools = std::iter::once(("common".to_string(), &vocab.common))
            .chain(vocab.by_genre.iter().map(|(k, v)| (format!("genre {k}"), v)))
            .chain(vocab.by_emotion.iter().map(|(k, v)| (format!("emotion {k}"), v)));
        for (name, pool) in pools {
            if pool.iter().all(|t| t.weight <= 0.0) {
                return Err(SpecError::EmptyPool(name));
            }
            if pool.iter().any(|t| !t.weight.is_finite() || t.weight < 0.0) {
                return Err(SpecError::BadWeight("vocabulary"));
            }
        }
        Ok(())
    }
}

fn check_weights<'a>(name: &'static str, weights: impl Iterator<Item = &'a f64>) -> Result<(), SpecError> {
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(SpecError::BadWeight(name));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SpecError::WeightSum(name, sum));
    }
    Ok(())
}

/// Exact per-category counts by the largest-remainder method, in key order.
fn apportion(weights: &BTreeMap<String, f64>, total: usize) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize, f64)> = weights
        .iter()
        .map(|(k, w)| {
            let exact = w * total as f64;
            (k.clone(), exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = out.iter().map(|o| o.1).sum();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[b].2.total_cmp(&out[a].2).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[i].1 += 1;
    }
    out.into_iter().map(|(k, n, _)| (k, n)).collect()
}

fn facet_column(weights: &BTreeMap<String, f64>, total: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut column: Vec<String> = apportion(weights, total)
        .into_iter()
        .flat_map(|(k, n)| std::iter::repeat_n(k, n))
        .collect();
    column.shuffle(rng);
    column
}

struct Sampler<'a> {
    terms: Vec<&'a str>,
    index: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(pool: &'a [WeightedTerm]) -> Self {
        Sampler {
            terms: pool.iter().map(|t| t.term.as_str()).collect(),
            index: WeightedIndex::new(pool.iter().map(|t| t.weight)).expect("validated pool"),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &'a str {
        self.terms[self.index.sample(rng)]
    }
}

const FIRST_NAMES: &[&str] = &[
    "Ada", "Bo", "Cass", "Dee", "Eli", "Fay", "Gus", "Hal", "Ivy", "Jo", "Kit", "Lou", "Mae", "Ned", "Oz", "Pia",
    "Quin", "Rae", "Sol", "Tess", "Uma", "Vic", "Wes", "Xan", "Yul", "Zed",
];
const LAST_NAMES: &[&str] = &[
    "Archer", "Bell", "Crane", "Drake", "Ellis", "Frost", "Grove", "Hale", "Irons", "Jett", "Knox", "Lane", "Marsh",
    "North", "Oakes", "Pike", "Quill", "Reyes", "Stone", "Thorn", "Vale", "Wolfe", "York", "Zane",
];

fn artist_name(i: usize) -> String {
    let first = FIRST_NAMES[i % FIRST_NAMES.len()];
    let last = LAST_NAMES[(i / FIRST_NAMES.len()) % LAST_NAMES.len()];
    let round = i / (FIRST_NAMES.len() * LAST_NAMES.len());
    if round == 0 {
        format!("{first} {last}")
    } else {
        format!("{first} {last} {}", round + 1)
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Generates records; facet counts are exact apportionments of the weights.
pub fn generate_records(spec: &GeneratorSpec) -> Result<Vec<SongRecord>, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let genres = facet_column(&spec.genre_weights, spec.total, &mut rng);
    let emotions = facet_column(&spec.emotion_weights, spec.total, &mut rng);

    let (start, end) = spec.year_range;
    let years: Vec<i32> = (start..=end).collect();
    let year_index = WeightedIndex::new(
        years
            .iter()
            .map(|y| f64::from(y - start + 1).powf(spec.year_skew)),
    )
    .expect("positive year weights");
    let artist_index = WeightedIndex::new((1..=spec.artists).map(|r| 1.0 / r as f64)).expect("positive artist weights");

    let vocab = &spec.vocabulary;
    let common = Sampler::new(&vocab.common);
    let by_genre: BTreeMap<&str, Sampler> = vocab.by_genre.iter().map(|(k, v)| (k.as_str(), Sampler::new(v))).collect();
    let by_emotion: BTreeMap<&str, Sampler> =
        vocab.by_emotion.iter().map(|(k, v)| (k.as_str(), Sampler::new(v))).collect();

    let mut seen = HashSet::with_capacity(spec.total);
    let mut records = Vec::with_capacity(spec.total);
    for (genre, emotion) in genres.iter().zip(&emotions) {
        let genre_pool = by_genre.get(genre.as_str());
        let emotion_pool = by_emotion.get(emotion.as_str());
        let word = |rng: &mut ChaCha8Rng| {
            let roll: f64 = rng.gen();
            match (genre_pool, emotion_pool) {
                (Some(g), _) if roll < vocab.facet_rate => g.draw(rng),
                (_, Some(e)) if roll >= vocab.facet_rate && roll < 2.0 * vocab.facet_rate => e.draw(rng),
                _ => common.draw(rng),
            }
        };
        let year = if rng.gen::<f64>() < spec.unknown_year_rate {
            None
        } else {
            Some(years[year_index.sample(&mut rng)])
        };
        let artist = artist_name(artist_index.sample(&mut rng));
        loop {
            let title_len = rng.gen_range(1..=3);
            let title: Vec<String> = (0..title_len).map(|_| capitalize(word(&mut rng))).collect();
            let mut lyrics = String::new();
            for line in 0..rng.gen_range(spec.lines.0..=spec.lines.1) {
                if line > 0 {
                    lyrics.push('\n');
                }
                let n = rng.gen_range(spec.words_per_line.0..=spec.words_per_line.1);
                let words: Vec<&str> = (0..n).map(|_| word(&mut rng)).collect();
                let _ = write!(lyrics, "{}", capitalize(&words.join(" ")));
            }
            let record = SongRecord::new(
                &title.join(" "),
                &artist,
                year,
                Genre::parse(genre),
                Emotion::parse(emotion),
                &lyrics,
            )
            .expect("generated fields are valid");
            if seen.insert(record.id) {
                records.push(record);
                break;
            }
        }
    }
    Ok(records)
}

/// JSONL text, one record per line, without ids.
pub fn generate(spec: &GeneratorSpec) -> Result<String, SpecError> {
    #[derive(Serialize)]
    struct Row<'a> {
        title: &'a str,
        artist: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        year: Option<i32>,
        genre: &'a Genre,
        emotion: &'a Emotion,
        lyrics: &'a str,
    }
    let mut out = String::new();
    for r in generate_records(spec)? {
        let row = Row {
            title: &r.title,
            artist: &r.artist,
            year: r.year,
            genre: &r.genre,
            emotion: &r.emotion,
            lyrics: &r.lyrics,
        };
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn generate_corpus(spec: &GeneratorSpec) -> Result<Corpus, SpecError> {
    Ok(Corpus::from_records(generate_records(spec)?, "generated").expect("generated ids are unique"))
}

pub fn generate_to_file(spec: &GeneratorSpec, path: &Path) -> Result<(), SpecError> {
    let text = generate(spec)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}
