//! Annotation records joined to their charts and indexed by segment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chartgen::{Chart, ChartError, SEGMENTS};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown chart {0:?}")]
    UnknownChart(String),
    #[error("duplicate chart id {0:?}")]
    DuplicateChart(String),
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("word {0:?} is not in the lexicon")]
    UnknownWord(String),
    #[error(transparent)]
    InvalidChart(#[from] ChartError),
    #[error("dataset has no annotation records")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Adjective,
    Verb,
    Noun,
    Other,
}

impl std::str::FromStr for Pos {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adjective" | "adj" => Ok(Pos::Adjective),
            "verb" => Ok(Pos::Verb),
            "noun" => Ok(Pos::Noun),
            "other" => Ok(Pos::Other),
            other => Err(format!("unknown part of speech {other:?}")),
        }
    }
}

/// Chart segment used as the join key for per-segment statistics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentKey {
    pub chart_id: String,
    pub segment_index: usize,
}

impl SegmentKey {
    pub fn new(chart_id: impl Into<String>, segment_index: usize) -> Self {
        assert!(segment_index < SEGMENTS, "segment index {segment_index} out of range");
        SegmentKey { chart_id: chart_id.into(), segment_index }
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.chart_id, self.segment_index)
    }
}

/// Trim and lowercase an annotation. Multiword phrases stay one token.
pub fn normalize_word(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// One row of the annotations CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub participant_id: String,
    pub chart_id: String,
    pub x_position: f64,
    pub word: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub participant_id: String,
    pub chart_id: String,
    pub x_position: f64,
    pub word: String,
    pub pos: Pos,
    pub timestamp: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn segment_key(&self) -> SegmentKey {
        SegmentKey::new(self.chart_id.clone(), Chart::segment_of(self.x_position))
    }

    pub fn to_row(&self) -> AnnotationRow {
        AnnotationRow {
            participant_id: self.participant_id.clone(),
            chart_id: self.chart_id.clone(),
            x_position: self.x_position,
            word: self.word.clone(),
            timestamp: self.timestamp,
        }
    }
}

/// Whether words missing from the lexicon are an error or `Pos::Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LexiconMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationDataset {
    charts: BTreeMap<String, Chart>,
    records: Vec<AnnotationRecord>,
    by_segment: BTreeMap<SegmentKey, Vec<usize>>,
    lexicon: BTreeMap<String, Pos>,
}

/// On-disk form of a dataset; the segment index is rebuilt on load.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    charts: Vec<Chart>,
    records: Vec<AnnotationRecord>,
    lexicon: BTreeMap<String, Pos>,
}

impl AnnotationDataset {
    /// Joins rows to charts. Row `i` is reported as line `i + 2` (after the
    /// CSV header) in errors.
    pub fn build(
        charts: Vec<Chart>,
        rows: Vec<AnnotationRow>,
        lexicon: BTreeMap<String, Pos>,
        mode: LexiconMode,
    ) -> Result<Self> {
        let mut chart_map = BTreeMap::new();
        for chart in charts {
            chart.validate()?;
            let id = chart.id.clone();
            if chart_map.insert(id.clone(), chart).is_some() {
                return Err(DatasetError::DuplicateChart(id));
            }
        }
        let mut records = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let line = i + 2;
            if !chart_map.contains_key(&row.chart_id) {
                return Err(DatasetError::UnknownChart(row.chart_id));
            }
            if !Chart::contains_x(row.x_position) {
                return Err(DatasetError::MalformedRecord {
                    line,
                    reason: format!("x_position {} outside the chart's x-range", row.x_position),
                });
            }
            let word = normalize_word(&row.word);
            if word.is_empty() {
                return Err(DatasetError::MalformedRecord { line, reason: "empty word".into() });
            }
            let pos = match (lexicon.get(&word), mode) {
                (Some(p), _) => *p,
                (None, LexiconMode::Lenient) => Pos::Other,
                (None, LexiconMode::Strict) => return Err(DatasetError::UnknownWord(word)),
            };
            records.push(AnnotationRecord {
                participant_id: row.participant_id,
                chart_id: row.chart_id,
                x_position: row.x_position,
                word,
                pos,
                timestamp: row.timestamp,
            });
        }
        Ok(Self::from_validated(chart_map, records, lexicon))
    }

    fn from_validated(
        charts: BTreeMap<String, Chart>,
        records: Vec<AnnotationRecord>,
        lexicon: BTreeMap<String, Pos>,
    ) -> Self {
        let mut by_segment: BTreeMap<SegmentKey, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_segment.entry(r.segment_key()).or_default().push(i);
        }
        AnnotationDataset { charts, records, by_segment, lexicon }
    }

    pub fn charts(&self) -> &BTreeMap<String, Chart> {
        &self.charts
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn by_segment(&self) -> &BTreeMap<SegmentKey, Vec<usize>> {
        &self.by_segment
    }

    pub fn lexicon(&self) -> &BTreeMap<String, Pos> {
        &self.lexicon
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.records.is_empty() {
            Err(DatasetError::EmptyDataset)
        } else {
            Ok(())
        }
    }

    pub fn pos_of(&self, word: &str) -> Pos {
        self.lexicon.get(word).copied().unwrap_or(Pos::Other)
    }

    pub fn chart(&self, id: &str) -> Option<&Chart> {
        self.charts.get(id)
    }

    /// Generator slope of a segment.
    pub fn segment_slope(&self, key: &SegmentKey) -> f64 {
        self.charts[&key.chart_id].segments[key.segment_index].slope()
    }

    /// Serializes to JSON when the extension is `.json`, bincode otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DatasetFile {
            charts: self.charts.values().cloned().collect(),
            records: self.records.clone(),
            lexicon: self.lexicon.clone(),
        };
        let io_err = |source| DatasetError::Io { path: path.to_path_buf(), source };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        if is_json(path) {
            let text = crate::io::to_sorted_json(&file).map_err(|e| parse_err(path, e))?;
            out.write_all(text.as_bytes()).map_err(io_err)?;
        } else {
            bincode::serialize_into(&mut out, &file).map_err(|e| parse_err(path, e))?;
        }
        out.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(open(path)?);
        let file: DatasetFile = if is_json(path) {
            serde_json::from_reader(reader).map_err(|e| parse_err(path, e))?
        } else {
            bincode::deserialize_from(reader).map_err(|e| parse_err(path, e))?
        };
        let rows = file.records.iter().map(AnnotationRecord::to_row).collect();
        let ds = Self::build(file.charts, rows, file.lexicon, LexiconMode::Lenient)?;
        // POS tags are stored per record; keep them rather than re-deriving.
        Ok(Self::from_validated(ds.charts, file.records, ds.lexicon))
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

fn parse_err(path: &Path, e: impl fmt::Display) -> DatasetError {
    DatasetError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

/// Reads the annotations CSV (`participant_id,chart_id,x_position,word,timestamp`).
pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<AnnotationRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, result) in rdr.deserialize::<AnnotationRow>().enumerate() {
        let line = i + 2;
        let mut row = result.map_err(|e| DatasetError::MalformedRecord { line, reason: e.to_string() })?;
        row.word = normalize_word(&row.word);
        if row.word.is_empty() {
            return Err(DatasetError::MalformedRecord { line, reason: "empty word".into() });
        }
        if !row.x_position.is_finite() {
            return Err(DatasetError::MalformedRecord { line, reason: "non-finite x_position".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows in the same CSV schema `read_annotations` accepts.
pub fn write_annotations<W: Write>(writer: W, rows: &[AnnotationRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["participant_id", "chart_id", "x_position", "word", "timestamp"])?;
    for r in rows {
        w.write_record([
            r.participant_id.as_str(),
            r.chart_id.as_str(),
            &r.x_position.to_string(),
            r.word.as_str(),
            &r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Deserialize)]
struct LexiconRow {
    word: String,
    pos: String,
}

/// Reads the `word,pos` lexicon CSV.
pub fn read_lexicon<R: Read>(reader: R) -> Result<BTreeMap<String, Pos>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, result) in rdr.deserialize::<LexiconRow>().enumerate() {
        let line = i + 2;
        let row = result.map_err(|e| DatasetError::MalformedRecord { line, reason: e.to_string() })?;
        let pos = row.pos.parse().map_err(|reason| DatasetError::MalformedRecord { line, reason })?;
        let word = normalize_word(&row.word);
        if word.is_empty() {
            return Err(DatasetError::MalformedRecord { line, reason: "empty word".into() });
        }
        out.insert(word, pos);
    }
    Ok(out)
}

pub fn write_lexicon<W: Write>(writer: W, lexicon: &BTreeMap<String, Pos>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["word", "pos"])?;
    for (word, pos) in lexicon {
        let pos = match pos {
            Pos::Adjective => "adjective",
            Pos::Verb => "verb",
            Pos::Noun => "noun",
            Pos::Other => "other",
        };
        w.write_record([word.as_str(), pos])?;
    }
    w.flush()
}

pub fn read_charts<R: Read>(reader: R) -> std::result::Result<Vec<Chart>, serde_json::Error> {
    serde_json::from_reader(reader)
}

/// Loads charts, annotations and lexicon from disk and joins them.
pub fn ingest(charts: &Path, annotations: &Path, lexicon: &Path, mode: LexiconMode) -> Result<AnnotationDataset> {
    let chart_list = read_charts(BufReader::new(open(charts)?)).map_err(|e| parse_err(charts, e))?;
    let rows = read_annotations(BufReader::new(open(annotations)?))?;
    let lex = read_lexicon(BufReader::new(open(lexicon)?))?;
    AnnotationDataset::build(chart_list, rows, lex, mode)
}

/// Word tallies per annotated segment.
pub fn segment_counts(ds: &AnnotationDataset) -> Result<BTreeMap<SegmentKey, BTreeMap<String, usize>>> {
    ds.require_nonempty()?;
    Ok(ds
        .by_segment
        .iter()
        .map(|(key, idxs)| {
            let mut counts = BTreeMap::new();
            for &i in idxs {
                *counts.entry(ds.records[i].word.clone()).or_insert(0) += 1;
            }
            (key.clone(), counts)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub timestamp: DateTime<Utc>,
    pub unique_pairs: usize,
}

/// Cumulative number of distinct `(word, segment)` pairs in timestamp
/// order, one point per record. Equal timestamps keep ingest order.
pub fn saturation_curve(ds: &AnnotationDataset) -> Result<Vec<SaturationPoint>> {
    ds.require_nonempty()?;
    let mut order: Vec<usize> = (0..ds.records.len()).collect();
    order.sort_by_key(|&i| ds.records[i].timestamp);
    let mut seen = BTreeSet::new();
    Ok(order
        .into_iter()
        .map(|i| {
            let r = &ds.records[i];
            seen.insert((r.word.as_str(), r.segment_key()));
            SaturationPoint { timestamp: r.timestamp, unique_pairs: seen.len() }
        })
        .collect())
}
