//! Quantified semantics of an annotation dataset.
//!
//! All statistics are built from per-segment word tallies. Slopes are the
//! generator's exact segment slopes, never a re-fit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnnotationDataset, DatasetError, Pos, SegmentKey};
use crate::sigproc::TOLERANCES;

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("word {0:?} does not appear in the dataset")]
    WordAbsent(String),
    #[error("clustering needs at least two words")]
    SingleWord,
    #[error("no adjective and verb share a segment")]
    NoPairs,
    #[error("count matrix must be square and symmetric with finite non-negative entries")]
    BadMatrix,
}

pub type Result<T> = std::result::Result<T, SemanticsError>;

struct SegmentTally {
    slope: f64,
    counts: BTreeMap<String, usize>,
    total: usize,
}

fn tallies(ds: &AnnotationDataset) -> Result<Vec<(SegmentKey, SegmentTally)>> {
    ds.require_nonempty()?;
    Ok(ds
        .by_segment()
        .iter()
        .map(|(key, idxs)| {
            let mut counts = BTreeMap::new();
            for &i in idxs {
                *counts.entry(ds.records()[i].word.clone()).or_insert(0) += 1;
            }
            let tally = SegmentTally { slope: ds.segment_slope(key), counts, total: idxs.len() };
            (key.clone(), tally)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordSlope {
    pub mean_slope: f64,
    /// Number of annotation occurrences averaged (a segment annotated twice
    /// with the word counts twice).
    pub segment_count: usize,
}

pub type SlopeStats = BTreeMap<String, WordSlope>;

/// Mean generator slope over every annotation of each word.
pub fn average_slopes(ds: &AnnotationDataset) -> Result<SlopeStats> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (_, t) in tallies(ds)? {
        for (word, &c) in &t.counts {
            let e = sums.entry(word.clone()).or_insert((0.0, 0));
            e.0 += t.slope * c as f64;
            e.1 += c;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(w, (sum, n))| (w, WordSlope { mean_slope: sum / n as f64, segment_count: n }))
        .collect())
}

/// Average share (in percent) of `other`'s annotations over the segments
/// that contain `word`. Not symmetric in its arguments.
pub fn co_occurrence(ds: &AnnotationDataset, word: &str, other: &str) -> Result<f64> {
    let mut shares = Vec::new();
    for (_, t) in tallies(ds)? {
        if t.counts.contains_key(word) {
            let c = t.counts.get(other).copied().unwrap_or(0);
            shares.push(c as f64 / t.total as f64);
        }
    }
    if shares.is_empty() {
        return Err(SemanticsError::WordAbsent(word.to_string()));
    }
    Ok(100.0 * mean(&shares))
}

/// Same quantity from per-segment percentages, e.g. `[50, 30] -> 40`.
pub fn co_occurrence_from_shares(percent_shares: &[f64]) -> f64 {
    mean(percent_shares)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrenceEntry {
    pub word: String,
    pub other: String,
    pub percent: f64,
}

/// Every non-zero `co_occurrence(word, other)` pair, sorted by `(word, other)`.
pub fn co_occurrence_table(ds: &AnnotationDataset) -> Result<Vec<CoOccurrenceEntry>> {
    let mut sums: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut seg_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, t) in tallies(ds)? {
        for word in t.counts.keys() {
            *seg_counts.entry(word.clone()).or_insert(0) += 1;
            for (other, &c) in &t.counts {
                *sums.entry((word.clone(), other.clone())).or_insert(0.0) += c as f64 / t.total as f64;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|((word, other), sum)| {
            let percent = 100.0 * sum / seg_counts[&word] as f64;
            CoOccurrenceEntry { word, other, percent }
        })
        .collect())
}

/// `1 - annotated_segments / annotations`.
pub fn agreement(annotated_segments: usize, annotations: usize) -> f64 {
    1.0 - annotated_segments as f64 / annotations as f64
}

pub fn agreement_factor(ds: &AnnotationDataset, word: &str) -> Result<f64> {
    let (mut segments, mut annotations) = (0, 0);
    for (_, t) in tallies(ds)? {
        if let Some(&c) = t.counts.get(word) {
            segments += 1;
            annotations += c;
        }
    }
    if annotations == 0 {
        return Err(SemanticsError::WordAbsent(word.to_string()));
    }
    Ok(agreement(segments, annotations))
}

/// Mean over the word's segments of its share of that segment's annotations.
pub fn purity_factor(ds: &AnnotationDataset, word: &str) -> Result<f64> {
    let shares: Vec<f64> = tallies(ds)?
        .iter()
        .filter_map(|(_, t)| t.counts.get(word).map(|&c| c as f64 / t.total as f64))
        .collect();
    if shares.is_empty() {
        return Err(SemanticsError::WordAbsent(word.to_string()));
    }
    Ok(mean(&shares))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordFactors {
    pub agreement: f64,
    pub purity: f64,
}

pub fn word_factors(ds: &AnnotationDataset) -> Result<BTreeMap<String, WordFactors>> {
    // word -> (segments, annotations, share sum)
    let mut acc: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for (_, t) in tallies(ds)? {
        for (word, &c) in &t.counts {
            let e = acc.entry(word.clone()).or_insert((0, 0, 0.0));
            e.0 += 1;
            e.1 += c;
            e.2 += c as f64 / t.total as f64;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(w, (segs, anns, share))| {
            (w, WordFactors { agreement: agreement(segs, anns), purity: share / segs as f64 })
        })
        .collect())
}

/// Scaled co-occurrence matrix fed to clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMatrix {
    pub words: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl ClusterMatrix {
    /// Scales a symmetric count matrix by its largest off-diagonal entry
    /// and puts 1.0 on the diagonal. An all-zero off-diagonal is left as is.
    pub fn from_counts(words: Vec<String>, counts: Vec<Vec<f64>>) -> Result<Self> {
        let n = words.len();
        if n < 2 {
            return Err(SemanticsError::SingleWord);
        }
        let square = counts.len() == n && counts.iter().all(|r| r.len() == n);
        if !square {
            return Err(SemanticsError::BadMatrix);
        }
        let mut max = 0.0f64;
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            for j in 0..n {
                let v = counts[i][j];
                if !(v.is_finite() && v >= 0.0) || v != counts[j][i] {
                    return Err(SemanticsError::BadMatrix);
                }
                if i != j {
                    max = max.max(v);
                }
            }
        }
        let values = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (i == j, max > 0.0) {
                        (true, _) => 1.0,
                        (false, true) => counts[i][j] / max,
                        (false, false) => 0.0,
                    })
                    .collect()
            })
            .collect();
        Ok(ClusterMatrix { words, values })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.words.iter().position(|w| w == a)?;
        let j = self.words.iter().position(|w| w == b)?;
        Some(self.values[i][j])
    }
}

/// Segment-presence co-occurrence counts between all word pairs. A word
/// seen exactly once that shares no segment with another word is dropped.
pub fn cluster_matrix(ds: &AnnotationDataset) -> Result<ClusterMatrix> {
    let tallies = tallies(ds)?;
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (_, t) in &tallies {
        for (a, &c) in &t.counts {
            *totals.entry(a).or_insert(0) += c;
            for b in t.counts.keys() {
                if a != b {
                    *pairs.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    let connected: BTreeSet<&str> = pairs.keys().map(|(a, _)| *a).collect();
    let words: Vec<&str> = totals
        .iter()
        .filter(|(w, &c)| c > 1 || connected.contains(*w))
        .map(|(w, _)| *w)
        .collect();
    let counts = words
        .iter()
        .map(|a| {
            words
                .iter()
                .map(|b| pairs.get(&(*a, *b)).copied().unwrap_or(0) as f64)
                .collect()
        })
        .collect();
    ClusterMatrix::from_counts(words.iter().map(|w| w.to_string()).collect(), counts)
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step
/// `k` is `n + k`. `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub words: Vec<String>,
    pub merges: Vec<Merge>,
}

/// Ward linkage over the Euclidean distances between matrix rows.
pub fn ward_cluster(m: &ClusterMatrix) -> Result<Dendrogram> {
    if m.len() < 2 {
        return Err(SemanticsError::SingleWord);
    }
    Ok(Dendrogram { words: m.words.clone(), merges: ward_linkage(&m.values) })
}

/// Ward agglomeration via the Lance-Williams update.
///
/// Cluster slots keep the smallest leaf index of their members, so scanning
/// pairs in slot order breaks ties by the lexicographically smallest leaf
/// indices.
pub fn ward_linkage(rows: &[Vec<f64>]) -> Vec<Merge> {
    let n = rows.len();
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&rows[i], &rows[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut label: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let pairs = || (0..n).filter(|&i| active[i]).flat_map(|i| (i + 1..n).filter(|&j| active[j]).map(move |j| (i, j)));
        let cheapest = pairs().map(|(i, j)| dist[i][j]).fold(f64::INFINITY, f64::min);
        let limit = cheapest + cheapest.abs() * TOLERANCES.ward_tie_rel;
        let (i, j) = pairs().find(|&(i, j)| dist[i][j] <= limit).expect("at least two active clusters");
        let dij = dist[i][j];
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let sk = size[k] as f64;
            let v = ((si + sk) * dist[i][k].powi(2) + (sj + sk) * dist[j][k].powi(2) - sk * dij.powi(2))
                / (si + sj + sk);
            let d = v.max(0.0).sqrt();
            dist[i][k] = d;
            dist[k][i] = d;
        }
        let (a, b) = (label[i].min(label[j]), label[i].max(label[j]));
        merges.push(Merge { a, b, distance: dij, size: size[i] + size[j] });
        active[j] = false;
        size[i] += size[j];
        label[i] = n + step;
    }
    merges
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl Dendrogram {
    /// Newick text; merge heights are the linkage distances.
    pub fn to_newick(&self) -> String {
        let n = self.words.len();
        if n == 1 {
            return format!("{};", newick_label(&self.words[0]));
        }
        let height = |id: usize| if id < n { 0.0 } else { self.merges[id - n].distance };
        fn render(d: &Dendrogram, id: usize, parent_h: f64, height: &dyn Fn(usize) -> f64, out: &mut String) {
            let n = d.words.len();
            if id < n {
                out.push_str(&newick_label(&d.words[id]));
            } else {
                let m = d.merges[id - n];
                out.push('(');
                render(d, m.a, m.distance, height, out);
                out.push(',');
                render(d, m.b, m.distance, height, out);
                out.push(')');
            }
            let _ = write!(out, ":{:.6}", parent_h - height(id));
        }
        let root = n + self.merges.len() - 1;
        let m = self.merges[root - n];
        let mut out = String::from("(");
        render(self, m.a, m.distance, &height, &mut out);
        out.push(',');
        render(self, m.b, m.distance, &height, &mut out);
        out.push_str(");");
        out
    }
}

fn newick_label(word: &str) -> String {
    if word.chars().any(|c| " ()[]':;,".contains(c)) {
        format!("'{}'", word.replace('\'', "''"))
    } else {
        word.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub adjective: String,
    pub verb: String,
    pub mean_slope: f64,
    pub co_count: usize,
}

/// Mean slope of the segments each adjective-verb pair shares.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairSlopeTable {
    pub entries: Vec<PairEntry>,
}

impl PairSlopeTable {
    pub fn new(mut entries: Vec<PairEntry>) -> Self {
        entries.sort_by(|a, b| (&a.adjective, &a.verb).cmp(&(&b.adjective, &b.verb)));
        PairSlopeTable { entries }
    }

    pub fn get(&self, adjective: &str, verb: &str) -> Option<&PairEntry> {
        self.entries.iter().find(|e| e.adjective == adjective && e.verb == verb)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn pair_slope_table(ds: &AnnotationDataset) -> Result<PairSlopeTable> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for (_, t) in tallies(ds)? {
        let of = |pos| t.counts.keys().filter(move |w| ds.pos_of(w) == pos);
        for adj in of(Pos::Adjective) {
            for verb in of(Pos::Verb) {
                let e = acc.entry((adj.clone(), verb.clone())).or_insert((0.0, 0));
                e.0 += t.slope;
                e.1 += 1;
            }
        }
    }
    if acc.is_empty() {
        return Err(SemanticsError::NoPairs);
    }
    Ok(PairSlopeTable::new(
        acc.into_iter()
            .map(|((adjective, verb), (sum, n))| PairEntry { adjective, verb, mean_slope: sum / n as f64, co_count: n })
            .collect(),
    ))
}

/// Everything `analyze` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticsReport {
    pub slopes: SlopeStats,
    pub co_occurrence: Vec<CoOccurrenceEntry>,
    pub factors: BTreeMap<String, WordFactors>,
    pub cluster_matrix: ClusterMatrix,
    pub dendrogram: Dendrogram,
    /// Empty when no adjective and verb share a segment.
    pub pair_table: PairSlopeTable,
}

pub fn analyze(ds: &AnnotationDataset) -> Result<SemanticsReport> {
    let cluster_matrix = cluster_matrix(ds)?;
    let dendrogram = ward_cluster(&cluster_matrix)?;
    let pair_table = match pair_slope_table(ds) {
        Ok(t) => t,
        Err(SemanticsError::NoPairs) => PairSlopeTable::default(),
        Err(e) => return Err(e),
    };
    Ok(SemanticsReport {
        slopes: average_slopes(ds)?,
        co_occurrence: co_occurrence_table(ds)?,
        factors: word_factors(ds)?,
        cluster_matrix,
        dendrogram,
        pair_table,
    })
}
