//! A seeded stand-in for crowd annotators, used to build fixture datasets.
//!
//! Simulated participants look at each chart, pick a few segments and
//! describe them with words suited to the local shape: verbs for the
//! segment's own slope, hedge adjectives for its steepness, and nouns for
//! features spanning a segment and its neighbours. Word choice is skewed
//! so a few popular words dominate, as in real annotation data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chartgen::{generate_batch, Chart, SlopeClass, SAMPLES_PER_SEGMENT, SEGMENTS, X_MIN};
use crate::dataset::{self, AnnotationDataset, AnnotationRow, LexiconMode, Pos};
use crate::io::to_sorted_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub charts: usize,
    pub participants: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { seed: 2024, charts: 16, participants: 24 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub charts: Vec<Chart>,
    pub rows: Vec<AnnotationRow>,
    pub lexicon: BTreeMap<String, Pos>,
}

fn verbs(class: SlopeClass) -> &'static [&'static str] {
    use SlopeClass::*;
    match class {
        SteepUp => &["soaring", "taking off", "skyrocketing", "surging", "spiking"],
        Up => &["rising", "increasing", "climbing", "taking off", "growing"],
        GentleUp => &["creeping up", "inching up", "recovering", "rising"],
        Flat | SteepFlat | GentleFlat => &["stable", "leveling off", "holding steady", "stagnant", "flat"],
        GentleDown => &["sagging", "slipping", "easing", "drifting down"],
        Down => &["falling", "declining", "dropping", "decreasing"],
        SteepDown => &["plummeting", "tanking", "crashing", "collapsing", "plunging"],
    }
}

fn adjectives(class: SlopeClass) -> &'static [&'static str] {
    match class.slope().abs() {
        s if s >= 3.0 => &["quick", "sharp", "rapid", "sudden", "dramatic"],
        s if s >= 1.0 => &["steady", "consistent", "moderate", "gradual"],
        s if s > 0.0 => &["gradual", "slow", "slight", "mild"],
        _ => &["calm", "quiet", "still"],
    }
}

/// Nouns for the shape formed by the previous, current and next segment.
fn nouns(prev: Option<i8>, dir: i8, next: Option<i8>) -> &'static [&'static str] {
    match (prev, dir, next) {
        (_, 1, Some(-1)) | (Some(1), -1, _) => &["peak", "spike", "bump", "top"],
        (_, -1, Some(1)) | (Some(-1), 1, _) => &["valley", "dip", "trough", "bottom"],
        (Some(0), 1, _) => &["upturn", "rebound", "rally"],
        (Some(0), -1, _) => &["downturn", "drop-off", "crash"],
        (_, 0, _) => &["plateau", "flatline"],
        (_, 1, _) => &["uptrend", "rally"],
        _ => &["downtrend", "slide"],
    }
}

/// Index skewed towards the front of the list, so early words are popular.
fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    let u: f64 = rng.random();
    words[((u * u) * words.len() as f64) as usize]
}

fn every_word() -> BTreeMap<String, Pos> {
    let mut lex = BTreeMap::new();
    for class in SlopeClass::ALL {
        for w in verbs(class) {
            lex.insert(w.to_string(), Pos::Verb);
        }
        for w in adjectives(class) {
            lex.insert(w.to_string(), Pos::Adjective);
        }
    }
    for prev in [None, Some(-1), Some(0), Some(1)] {
        for dir in [-1, 0, 1] {
            for next in [None, Some(-1), Some(0), Some(1)] {
                for w in nouns(prev, dir, next) {
                    lex.insert(w.to_string(), Pos::Noun);
                }
            }
        }
    }
    lex
}

pub fn synthesize(config: &SynthConfig) -> SynthData {
    let charts = generate_batch(config.seed, config.charts);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_a11e);
    let base: DateTime<Utc> = Utc.with_ymd_and_hms(2023, 6, 1, 9, 0, 0).single().expect("valid base time");
    let mut rows = Vec::new();
    for p in 0..config.participants {
        let participant = format!("p{p:02}");
        // most participants arrive early in the 24 hour collection window
        let u: f64 = rng.random();
        let mut clock = base + Duration::seconds((u * u * u * 86_400.0) as i64);
        for chart in &charts {
            let segments = rng.random_range(1..=3);
            for _ in 0..segments {
                let seg = rng.random_range(0..SEGMENTS);
                let class = chart.segments[seg];
                let x = X_MIN + (seg * SAMPLES_PER_SEGMENT) as f64 + rng.random_range(0..SAMPLES_PER_SEGMENT) as f64;
                let mut words = Vec::new();
                match rng.random_range(0..10) {
                    0..=3 => words.push(pick(&mut rng, verbs(class))),
                    4..=6 => {
                        words.push(pick(&mut rng, adjectives(class)));
                        words.push(pick(&mut rng, verbs(class)));
                    }
                    _ => {
                        let prev = seg.checked_sub(1).map(|i| chart.segments[i].direction());
                        let next = chart.segments.get(seg + 1).map(|c| c.direction());
                        words.push(pick(&mut rng, nouns(prev, class.direction(), next)));
                    }
                }
                for word in words {
                    clock += Duration::seconds(rng.random_range(5..90));
                    rows.push(AnnotationRow {
                        participant_id: participant.clone(),
                        chart_id: chart.id.clone(),
                        x_position: x,
                        word: word.to_string(),
                        timestamp: clock,
                    });
                }
            }
        }
    }
    SynthData { charts, rows, lexicon: every_word() }
}

impl SynthData {
    pub fn dataset(&self) -> dataset::Result<AnnotationDataset> {
        AnnotationDataset::build(self.charts.clone(), self.rows.clone(), self.lexicon.clone(), LexiconMode::Strict)
    }

    /// Writes `charts.json`, `annotations.csv` and `lexicon.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let charts = to_sorted_json(&self.charts).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("charts.json"), charts)?;
        let mut w = BufWriter::new(File::create(dir.join("annotations.csv"))?);
        dataset::write_annotations(&mut w, &self.rows)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join("lexicon.csv"))?);
        dataset::write_lexicon(&mut w, &self.lexicon)?;
        w.flush()
    }
}
