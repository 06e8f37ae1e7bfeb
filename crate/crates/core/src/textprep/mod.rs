//! Configurable text preprocessing: noise removal, normalization,
//! tokenization, segmentation, lowercasing, stop-word removal, stemming and
//! dictionary lemmatization.
//!
//! Every token keeps the character span of the raw input it came from, no
//! matter how many stages rewrote its surface. Snippet highlighting relies on
//! this: `raw[token.start..token.end]` (in characters) re-processed through the
//! token-level stages gives back `token.surface`.

mod mapped;
pub mod porter;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash;
pub use mapped::MappedText;

const DEFAULT_STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
const DEFAULT_LEMMAS: &str = include_str!("../../resources/lemmas.tsv");

/// Default noise patterns: HTML tags and `[Chorus]`-style section markers,
/// neither allowed to span a line break.
pub const DEFAULT_NOISE_PATTERNS: &[&str] = &[r"<[^>\n]*>", r"\[[^\]\n]*\]"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("invalid noise pattern {pattern:?}: {source}")]
    Pattern { pattern: String, source: regex::Error },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed pipeline config JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// Start character offset in the raw input.
    pub start: usize,
    /// Exclusive end character offset in the raw input.
    pub end: usize,
    pub position: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    /// Line (or verse, after segmentation) spans in raw character offsets.
    pub segments: Vec<(usize, usize)>,
}

impl TokenStream {
    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    fn map_surfaces(mut self, f: impl Fn(&str) -> Option<String>) -> Self {
        for token in &mut self.tokens {
            if let Some(new) = f(&token.surface) {
                token.surface = new;
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    NoiseRemoval,
    Normalize,
    Tokenize,
    Segment,
    Lowercase,
    StopRemoval,
    Stem,
    Lemmatize,
}

impl Stage {
    fn is_text_level(self) -> bool {
        matches!(self, Stage::NoiseRemoval | Stage::Normalize)
    }

    /// Stages that only touch token surfaces; re-running them on a raw slice
    /// reproduces a token's processed form.
    pub fn is_surface_level(self) -> bool {
        matches!(
            self,
            Stage::Lowercase | Stage::StopRemoval | Stage::Stem | Stage::Lemmatize
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).ok();
        let name = name.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        f.write_str(name)
    }
}

/// Ordered stage list plus the resources those stages use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stages: Vec<Stage>,
    pub stopwords: BTreeSet<String>,
    #[serde(default)]
    pub lemmas: BTreeMap<String, String>,
    #[serde(default = "default_noise_patterns")]
    pub noise_patterns: Vec<String>,
}

fn default_noise_patterns() -> Vec<String> {
    DEFAULT_NOISE_PATTERNS.iter().map(|s| s.to_string()).collect()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: vec![
                Stage::NoiseRemoval,
                Stage::Normalize,
                Stage::Tokenize,
                Stage::Segment,
                Stage::Lowercase,
                Stage::StopRemoval,
                Stage::Stem,
            ],
            stopwords: default_stopwords().clone(),
            lemmas: default_lemmas().clone(),
            noise_patterns: default_noise_patterns(),
        }
    }
}

impl PipelineConfig {
    /// A config running only the given stages, with the shipped resources.
    pub fn with_stages(stages: &[Stage]) -> Self {
        PipelineConfig {
            stages: stages.to_vec(),
            ..PipelineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut seen = HashSet::new();
        let mut tokenized = false;
        for &stage in &self.stages {
            if !seen.insert(stage) {
                return Err(PipelineError::Config(format!("stage {stage} listed twice")));
            }
            if stage == Stage::Tokenize {
                tokenized = true;
            } else if stage.is_text_level() && tokenized {
                return Err(PipelineError::Config(format!(
                    "text stage {stage} must come before tokenize"
                )));
            } else if !stage.is_text_level() && !tokenized {
                return Err(PipelineError::Config(format!(
                    "token stage {stage} requires an earlier tokenize"
                )));
            }
        }
        if seen.contains(&Stage::Stem) && seen.contains(&Stage::Lemmatize) {
            return Err(PipelineError::Config(
                "stem and lemmatize are mutually exclusive".into(),
            ));
        }
        for pattern in &self.noise_patterns {
            Regex::new(pattern).map_err(|source| PipelineError::Pattern {
                pattern: pattern.clone(),
                source,
            })?;
        }
        Ok(())
    }

    /// Hash of the canonical JSON form; indexes record it to detect drift.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        hash::fnv1a64(&json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let config: PipelineConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Compiles the config for repeated use.
    pub fn compile(&self) -> Result<Pipeline, PipelineError> {
        self.validate()?;
        let patterns = self
            .noise_patterns
            .iter()
            .map(|p| Regex::new(p).expect("validated"))
            .collect();
        Ok(Pipeline {
            config: self.clone(),
            patterns,
        })
    }
}

/// Parses a resource list: one entry per line, `#` comments and blanks ignored.
pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Parses `surface<TAB>lemma` lines.
pub fn parse_lemma_table(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let (surface, lemma) = l.split_once('\t')?;
            Some((surface.trim().to_string(), lemma.trim().to_string()))
        })
        .collect()
}

pub fn default_stopwords() -> &'static BTreeSet<String> {
    static LIST: OnceLock<BTreeSet<String>> = OnceLock::new();
    LIST.get_or_init(|| parse_word_list(DEFAULT_STOPWORDS))
}

pub fn default_lemmas() -> &'static BTreeMap<String, String> {
    static TABLE: OnceLock<BTreeMap<String, String>> = OnceLock::new();
    TABLE.get_or_init(|| parse_lemma_table(DEFAULT_LEMMAS))
}

/// A validated config with its noise patterns compiled.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    patterns: Vec<Regex>,
}

impl Pipeline {
    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run(&self, raw: &str) -> TokenStream {
        let mut text = MappedText::new(raw);
        let mut stream: Option<TokenStream> = None;
        for &stage in &self.config.stages {
            match stage {
                Stage::NoiseRemoval => text = mapped::remove_noise(&text, &self.patterns),
                Stage::Normalize => text = mapped::normalize(&text),
                Stage::Tokenize => stream = Some(tokenize_mapped(&text)),
                Stage::Segment => {
                    stream = stream.map(|s| segment_mapped(&text, s));
                }
                _ => stream = stream.map(|s| self.apply_surface_stage(stage, s)),
            }
        }
        stream.unwrap_or_else(|| TokenStream {
            tokens: Vec::new(),
            segments: line_spans(&text),
        })
    }

    fn apply_surface_stage(&self, stage: Stage, stream: TokenStream) -> TokenStream {
        match stage {
            Stage::Lowercase => lowercase(stream),
            Stage::StopRemoval => remove_stopwords(stream, &self.config.stopwords),
            Stage::Stem => stem(stream),
            Stage::Lemmatize => lemmatize(stream, &self.config.lemmas),
            _ => stream,
        }
    }

    /// Runs only the surface-level stages on one word, as if it were a token.
    /// Returns `None` when the word is dropped (a stop word).
    pub fn process_surface(&self, word: &str) -> Option<String> {
        let mut surface = word.to_string();
        for &stage in &self.config.stages {
            match stage {
                Stage::Lowercase => surface = fold_case(&surface),
                Stage::StopRemoval if self.config.stopwords.contains(&surface) => return None,
                Stage::Stem => surface = porter::stem(&surface),
                Stage::Lemmatize => {
                    if let Some(lemma) = self.config.lemmas.get(&surface) {
                        surface = lemma.clone();
                    }
                }
                _ => {}
            }
        }
        Some(surface)
    }

    /// Processed query terms, deduplicated in first-occurrence order.
    pub fn terms(&self, raw: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        self.run(raw)
            .tokens
            .into_iter()
            .filter_map(|t| seen.insert(t.surface.clone()).then_some(t.surface))
            .collect()
    }
}

/// Applies the configured stages in order.
pub fn run_pipeline(raw: &str, config: &PipelineConfig) -> Result<TokenStream, PipelineError> {
    Ok(config.compile()?.run(raw))
}

/// Strips control characters (newline kept), HTML tags and `[...]`
/// annotations, and collapses space runs.
pub fn remove_noise(raw: &str) -> String {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    let patterns = PATTERNS.get_or_init(|| {
        DEFAULT_NOISE_PATTERNS
            .iter()
            .map(|p| Regex::new(p).expect("default pattern"))
            .collect()
    });
    mapped::remove_noise(&MappedText::new(raw), patterns).text()
}

pub fn normalize(text: &str) -> String {
    mapped::normalize(&MappedText::new(text)).text()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
        || unicode_normalization::char::canonical_combining_class(c) != 0
}

/// Maximal runs of letters and digits with at most one internal apostrophe.
pub fn tokenize(text: &str) -> TokenStream {
    tokenize_mapped(&MappedText::new(text))
}

fn tokenize_mapped(text: &MappedText) -> TokenStream {
    let chars = text.chars();
    let spans = text.spans();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        let mut apostrophe = false;
        i += 1;
        while i < chars.len() {
            let c = chars[i];
            if is_word_char(c) {
                i += 1;
            } else if c == '\''
                && !apostrophe
                && chars.get(i + 1).is_some_and(|&n| n.is_alphanumeric())
            {
                apostrophe = true;
                i += 2;
            } else {
                break;
            }
        }
        tokens.push(Token {
            surface: chars[start..i].iter().collect(),
            start: spans[start].0,
            end: spans[i - 1].1,
            position: tokens.len() as u32,
        });
    }
    TokenStream {
        tokens,
        segments: line_spans(text),
    }
}

/// Non-empty lines of the mapped text, as raw spans.
fn line_spans(text: &MappedText) -> Vec<(usize, usize)> {
    let chars = text.chars();
    let spans = text.spans();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..=chars.len() {
        if i == chars.len() || chars[i] == '\n' {
            if i > start {
                out.push((spans[start].0, spans[i - 1].1));
            }
            start = i + 1;
        }
    }
    out
}

/// Groups lines into verses: runs of non-blank lines separated by blank ones.
fn segment_mapped(text: &MappedText, mut stream: TokenStream) -> TokenStream {
    let chars = text.chars();
    let spans = text.spans();
    let mut verses = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut line_start = 0;
    for i in 0..=chars.len() {
        if i == chars.len() || chars[i] == '\n' {
            let line = &chars[line_start..i];
            if line.iter().all(|c| c.is_whitespace()) {
                verses.extend(current.take());
            } else {
                let span = (spans[line_start].0, spans[i - 1].1);
                current = Some(match current {
                    Some((s, _)) => (s, span.1),
                    None => span,
                });
            }
            line_start = i + 1;
        }
    }
    verses.extend(current);
    stream.segments = verses;
    stream
}

/// Verse segmentation of plain text (offsets relative to `text`).
pub fn segment(text: &str, stream: TokenStream) -> TokenStream {
    segment_mapped(&MappedText::new(text), stream)
}

/// Unicode simple case folding, one character to one character.
pub fn fold_case(word: &str) -> String {
    word.chars()
        .map(|c| {
            unicode_case_mapping::case_folded(c)
                .and_then(|cp| char::from_u32(cp.get()))
                .unwrap_or(c)
        })
        .collect()
}

pub fn lowercase(stream: TokenStream) -> TokenStream {
    stream.map_surfaces(|s| {
        let folded = fold_case(s);
        (folded != s).then_some(folded)
    })
}

/// Drops stop words. Positions are left as-is so gaps stay visible.
pub fn remove_stopwords(mut stream: TokenStream, list: &BTreeSet<String>) -> TokenStream {
    if !list.is_empty() {
        stream.tokens.retain(|t| !list.contains(&t.surface));
    }
    stream
}

pub fn stem(stream: TokenStream) -> TokenStream {
    stream.map_surfaces(|s| Some(porter::stem(s)))
}

pub fn lemmatize(stream: TokenStream, dict: &BTreeMap<String, String>) -> TokenStream {
    stream.map_surfaces(|s| dict.get(s).cloned())
}

/// Slices `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let from = indices.nth(start).unwrap_or(text.len());
    let to = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        from
    };
    &text[from..to]
}
