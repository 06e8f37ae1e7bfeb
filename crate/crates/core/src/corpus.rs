//! Song records, ingestion from scraped JSONL/CSV dumps, and the file-backed store.
//!
//! A store directory holds two files:
//!
//! ```text
//! records.jsonl   one SongRecord per line, in corpus order
//! manifest.json   {count, checksum, created_at, source}
//! ```
//!
//! The manifest checksum is the FNV-1a 64 hash of the exact `records.jsonl`
//! bytes, so a load can detect any tampering with the record file.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::hash::{self, Fnv1a};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path} is not valid UTF-8")]
    Encoding { path: PathBuf },
    #[error("no usable records in {source_name} ({} rows rejected)", report.len())]
    Empty {
        source_name: String,
        report: RejectionReport,
    },
    #[error("corpus quality check failed: {rejected} of {rows} rows rejected")]
    Quality {
        rows: usize,
        rejected: usize,
        report: RejectionReport,
    },
    #[error("id {id} collides for different content at lines {first} and {second}")]
    IdCollision { id: SongId, first: usize, second: usize },
    #[error("cannot persist corpus to {path}: {source}")]
    Persist { path: PathBuf, source: io::Error },
    #[error("no corpus store at {path}")]
    NotFound { path: PathBuf },
    #[error("corpus store at {path} is corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

/// Content-derived song identifier.
///
/// Serialized as a decimal string so that JavaScript clients do not lose
/// precision on values above 2^53. Deserialization accepts either form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SongId(pub u64);

impl SongId {
    /// FNV-1a over `title \x1F artist \x1F lyrics`, each NFC-normalized.
    pub fn from_content(title: &str, artist: &str, lyrics: &str) -> Self {
        let mut hasher = Fnv1a::new();
        let mut buf = [0u8; 4];
        for (i, part) in [title, artist, lyrics].into_iter().enumerate() {
            if i > 0 {
                hasher.write(b"\x1F");
            }
            for c in part.nfc() {
                hasher.write(c.encode_utf8(&mut buf).as_bytes());
            }
        }
        SongId(hasher.finish())
    }
}

impl fmt::Display for SongId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for SongId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(SongId)
    }
}

impl Serialize for SongId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SongId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(n) => Ok(SongId(n)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn facet_key(label: &str) -> String {
    label
        .trim()
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_whitespace() && !matches!(c, '-' | '_' | '/' | '&'))
        .collect()
}

macro_rules! facet_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant,)+
            /// Any label outside the taxonomy, original text preserved.
            Other(String),
        }

        impl $name {
            pub const NAMED: &'static [$name] = &[$($name::$variant),+];

            /// Total: every label maps to exactly one variant.
            pub fn parse(label: &str) -> Self {
                let key = facet_key(label);
                $(
                    if key == facet_key($label) $(|| key == facet_key($alias))* {
                        return $name::$variant;
                    }
                )+
                $name::Other(label.to_string())
            }

            pub fn label(&self) -> &str {
                match self {
                    $($name::$variant => $label,)+
                    $name::Other(text) => text,
                }
            }

            pub fn is_named(&self) -> bool {
                !matches!(self, $name::Other(_))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.label())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let label = String::deserialize(deserializer)?;
                Ok($name::parse(&label))
            }
        }
    };
}

facet_enum! {
    /// The seven-genre taxonomy.
    Genre {
        Pop => "pop",
        Country => "country",
        Blues => "blues",
        Rock => "rock",
        Jazz => "jazz",
        Reggae => "reggae",
        HipHop => "hip-hop",
    }
}

facet_enum! {
    /// The eight-emotion taxonomy.
    Emotion {
        Sadness => "sadness",
        Violence => "violence",
        WorldLife => "world/life",
        Obscene => "obscene",
        Music => "music",
        NightTime => "night/time",
        Romantic => "romantic",
        Feelings => "feelings",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SongRecord {
    pub id: SongId,
    pub title: String,
    pub artist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    pub genre: Genre,
    pub emotion: Emotion,
    pub lyrics: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl SongRecord {
    /// Validates and builds a record; title and artist are trimmed, lyrics are kept verbatim.
    pub fn new(
        title: &str,
        artist: &str,
        year: Option<i32>,
        genre: Genre,
        emotion: Emotion,
        lyrics: &str,
    ) -> Result<Self, String> {
        let title = title.trim();
        let artist = artist.trim();
        if title.is_empty() {
            return Err("empty title".into());
        }
        if lyrics.trim().is_empty() {
            return Err("empty lyrics".into());
        }
        if let Some(y) = year {
            if !(MIN_YEAR..=MAX_YEAR).contains(&y) {
                return Err(format!("year {y} outside {MIN_YEAR}..={MAX_YEAR}"));
            }
        }
        Ok(SongRecord {
            id: SongId::from_content(title, artist, lyrics),
            title: title.to_string(),
            artist: artist.to_string(),
            year,
            genre,
            emotion,
            lyrics: lyrics.to_string(),
            source: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    /// Hex FNV-1a 64 of `records.jsonl`.
    pub checksum: String,
    /// RFC 3339.
    pub created_at: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport(pub Vec<Rejection>);

impl RejectionReport {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rejection> {
        self.0.iter()
    }

    /// One `{line, reason}` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rejection in &self.0 {
            out.push_str(&serde_json::to_string(rejection).expect("rejection serializes"));
            out.push('\n');
        }
        out
    }
}

/// An immutable, ordered collection of songs plus its manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<SongRecord>,
    manifest: Manifest,
    by_id: HashMap<SongId, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.manifest == other.manifest
    }
}

impl Corpus {
    /// Builds a corpus from already-validated records. Duplicate ids are an error.
    pub fn from_records(records: Vec<SongRecord>, source: &str) -> Result<Self, CorpusError> {
        let created_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let manifest = Manifest {
            count: records.len(),
            checksum: hash::to_hex(records_checksum(&records)),
            created_at,
            source: source.to_string(),
        };
        Self::assemble(records, manifest)
    }

    fn assemble(records: Vec<SongRecord>, manifest: Manifest) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            if let Some(prev) = by_id.insert(record.id, i) {
                return Err(CorpusError::IdCollision {
                    id: record.id,
                    first: prev + 1,
                    second: i + 1,
                });
            }
        }
        Ok(Corpus {
            records,
            manifest,
            by_id,
        })
    }

    pub fn records(&self) -> &[SongRecord] {
        &self.records
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: SongId) -> Option<&SongRecord> {
        self.by_id.get(&id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: SongId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn checksum(&self) -> u64 {
        hash::from_hex(&self.manifest.checksum).unwrap_or_else(|| records_checksum(&self.records))
    }

    /// Records in a new order, manifest unchanged apart from the checksum.
    pub fn reordered(&self, records: Vec<SongRecord>) -> Result<Self, CorpusError> {
        let mut manifest = self.manifest.clone();
        manifest.checksum = hash::to_hex(records_checksum(&records));
        manifest.count = records.len();
        Self::assemble(records, manifest)
    }
}

fn records_jsonl(records: &[SongRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn records_checksum(records: &[SongRecord]) -> u64 {
    hash::fnv1a64(records_jsonl(records).as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?}, expected jsonl or csv")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub rejections: RejectionReport,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    title: Option<String>,
    artist: Option<String>,
    #[serde(default)]
    year: Option<YearField>,
    genre: Option<String>,
    emotion: Option<String>,
    lyrics: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum YearField {
    Num(i64),
    Text(String),
}

impl RawRow {
    fn into_record(self) -> Result<SongRecord, String> {
        let year = match self.year {
            None => None,
            Some(YearField::Num(n)) => Some(i32::try_from(n).map_err(|_| format!("invalid year {n}"))?),
            Some(YearField::Text(t)) if t.trim().is_empty() => None,
            Some(YearField::Text(t)) => Some(
                t.trim()
                    .parse::<i32>()
                    .map_err(|_| format!("invalid year {t:?}"))?,
            ),
        };
        let lyrics = self.lyrics.unwrap_or_default();
        let mut record = SongRecord::new(
            self.title.as_deref().unwrap_or(""),
            self.artist.as_deref().unwrap_or(""),
            year,
            Genre::parse(self.genre.as_deref().unwrap_or("")),
            Emotion::parse(self.emotion.as_deref().unwrap_or("")),
            &lyrics,
        )?;
        record.source = self.source.filter(|s| !s.trim().is_empty());
        Ok(record)
    }
}

/// Reads and validates a scraped dump.
pub fn ingest(path: &Path, format: Format) -> Result<Ingested, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|_| CorpusError::Encoding {
        path: path.to_path_buf(),
    })?;
    ingest_str(&text, format, &path.display().to_string())
}

/// Ingests from an in-memory dump; `source_name` goes into the manifest.
pub fn ingest_str(text: &str, format: Format, source_name: &str) -> Result<Ingested, CorpusError> {
    let rows = match format {
        Format::Jsonl => jsonl_rows(text),
        Format::Csv => csv_rows(text),
    };
    let total = rows.len();
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut seen: HashMap<SongId, (usize, usize)> = HashMap::new();

    for (line, row) in rows {
        match row.and_then(RawRow::into_record) {
            Ok(record) => match seen.get(&record.id) {
                Some(&(first_line, idx)) => {
                    let prev: &SongRecord = &records[idx];
                    if prev.title == record.title && prev.artist == record.artist && prev.lyrics == record.lyrics {
                        rejections.push(Rejection {
                            line,
                            reason: format!("duplicate of line {first_line}"),
                        });
                    } else {
                        return Err(CorpusError::IdCollision {
                            id: record.id,
                            first: first_line,
                            second: line,
                        });
                    }
                }
                None => {
                    seen.insert(record.id, (line, records.len()));
                    records.push(record);
                }
            },
            Err(reason) => rejections.push(Rejection { line, reason }),
        }
    }

    let report = RejectionReport(rejections);
    if records.is_empty() {
        return Err(CorpusError::Empty {
            source_name: source_name.to_string(),
            report,
        });
    }
    if report.len() * 2 > total {
        return Err(CorpusError::Quality {
            rows: total,
            rejected: report.len(),
            report,
        });
    }
    let corpus = Corpus::from_records(records, source_name)?;
    Ok(Ingested {
        corpus,
        rejections: report,
    })
}

fn jsonl_rows(text: &str) -> Vec<(usize, Result<RawRow, String>)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            let row = serde_json::from_str::<RawRow>(line).map_err(|e| format!("malformed row: {e}"));
            (i + 1, row)
        })
        .collect()
}

fn csv_rows(text: &str) -> Vec<(usize, Result<RawRow, String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            rows.push((1, Err(format!("malformed header: {e}"))));
            return rows;
        }
    };
    for result in reader.records() {
        match result {
            Ok(record) => {
                let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                let row = record
                    .deserialize::<RawRow>(Some(&headers))
                    .map_err(|e| format!("malformed row: {e}"));
                rows.push((line, row));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                rows.push((line, Err(format!("malformed row: {e}"))));
            }
        }
    }
    rows
}

/// Writes the store and returns the records checksum.
pub fn persist(corpus: &Corpus, dir: &Path) -> Result<u64, CorpusError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Persist { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let body = records_jsonl(&corpus.records);
    let checksum = hash::fnv1a64(body.as_bytes());
    let mut manifest = corpus.manifest.clone();
    manifest.checksum = hash::to_hex(checksum);
    manifest.count = corpus.records.len();

    let records_path = dir.join(RECORDS_FILE);
    write_atomic(&records_path, body.as_bytes()).map_err(io_err(&records_path))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&manifest_path, manifest_json.as_bytes()).map_err(io_err(&manifest_path))?;
    Ok(checksum)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Loads a store, verifying count and checksum against the manifest.
pub fn load(dir: &Path) -> Result<Corpus, CorpusError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(CorpusError::NotFound {
            path: dir.to_path_buf(),
        });
    }
    let corrupt = |reason: String| CorpusError::Corrupt {
        path: dir.to_path_buf(),
        reason,
    };
    let manifest_text = fs::read_to_string(&manifest_path).map_err(|source| CorpusError::Read {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| corrupt(format!("bad manifest: {e}")))?;

    let records_path = dir.join(RECORDS_FILE);
    let body = fs::read(&records_path).map_err(|source| match source.kind() {
        io::ErrorKind::NotFound => CorpusError::NotFound {
            path: records_path.clone(),
        },
        _ => CorpusError::Read {
            path: records_path.clone(),
            source,
        },
    })?;
    let actual = hash::to_hex(hash::fnv1a64(&body));
    if actual != manifest.checksum {
        return Err(corrupt(format!(
            "checksum mismatch: manifest {} vs records {}",
            manifest.checksum, actual
        )));
    }
    let body = String::from_utf8(body).map_err(|_| corrupt("records are not UTF-8".into()))?;
    let mut records = Vec::with_capacity(manifest.count);
    for (i, line) in body.lines().enumerate() {
        let record: SongRecord =
            serde_json::from_str(line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
        records.push(record);
    }
    if records.len() != manifest.count {
        return Err(corrupt(format!(
            "manifest count {} but {} records",
            manifest.count,
            records.len()
        )));
    }
    Corpus::assemble(records, manifest).map_err(|e| corrupt(e.to_string()))
}
