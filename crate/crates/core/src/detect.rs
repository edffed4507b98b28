//! Finding annotated shapes in unlabeled signals, and labeling linear
//! pieces of a signal with adjective-verb pairs.
//!
//! Shape matching works in the derivative domain. Kernels and the signal
//! are normalized to a `[0, 1]` value range, smoothed with Savitzky-Golay,
//! and differentiated with respect to sample position scaled so that a
//! kernel spans unit width. A sliding mean absolute error then compares
//! each kernel variant against every window of the signal.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chartgen::{Chart, SAMPLES_PER_SEGMENT, SEGMENTS};
use crate::dataset::{AnnotationDataset, DatasetError, SegmentKey};
use crate::semantics::{PairEntry, PairSlopeTable};
use crate::sigproc::{self, SavGolPlan, Signal, SignalError};

/// Segments kept on each side of the annotated one.
pub const CONTEXT_SEGMENTS: usize = 2;
/// Depth variants per kernel, at heights 0.1, 0.2, ..., 1.0.
pub const DEPTH_VARIANTS: u8 = 10;
const SMOOTHING_ORDER: usize = 2;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("no kernels to match")]
    NoKernels,
    #[error("signal of length {signal} is shorter than every kernel (shortest {kernel})")]
    SignalTooShort { signal: usize, kernel: usize },
    #[error("kernel resampled to {0} samples is too short to smooth")]
    KernelTooShort(usize),
    #[error("invalid detection parameters: {0}")]
    BadParams(String),
    #[error("slope table is empty")]
    EmptyTable,
}

pub type Result<T> = std::result::Result<T, DetectError>;

/// One depth variant of an annotated segment and its neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub source: SegmentKey,
    /// Annotation counts on the centre (annotated) segment.
    pub words: BTreeMap<String, usize>,
    pub first_segment: usize,
    pub last_segment: usize,
    /// Normalized samples scaled to `depth`. A flat kernel stays all zero.
    pub ys: Vec<f64>,
    /// Depth in tenths, 1..=10.
    pub depth_tenths: u8,
}

impl Kernel {
    pub fn depth(&self) -> f64 {
        f64::from(self.depth_tenths) / 10.0
    }

    pub fn segments_covered(&self) -> usize {
        self.last_segment - self.first_segment + 1
    }

    /// Inclusive sample range of the annotated segment within `ys`.
    pub fn center_range(&self) -> (usize, usize) {
        let k = self.source.segment_index - self.first_segment;
        (k * SAMPLES_PER_SEGMENT, (k + 1) * SAMPLES_PER_SEGMENT)
    }

    /// Word with the most annotations, ties broken alphabetically.
    pub fn top_word(&self) -> &str {
        self.words
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(w, _)| w.as_str())
            .unwrap_or("")
    }
}

/// The ten depth variants of the kernel centred on `segment` of `chart`.
pub fn kernel_variants(chart: &Chart, segment: usize, words: BTreeMap<String, usize>) -> Vec<Kernel> {
    let first = segment.saturating_sub(CONTEXT_SEGMENTS);
    let last = (segment + CONTEXT_SEGMENTS).min(SEGMENTS - 1);
    let ys = chart.unscaled_ys();
    let base = sigproc::normalize_values(&ys[first * SAMPLES_PER_SEGMENT..=(last + 1) * SAMPLES_PER_SEGMENT]);
    (1..=DEPTH_VARIANTS)
        .map(|tenths| {
            let depth = f64::from(tenths) / 10.0;
            Kernel {
                source: SegmentKey::new(chart.id.clone(), segment),
                words: words.clone(),
                first_segment: first,
                last_segment: last,
                ys: base.iter().map(|y| y * depth).collect(),
                depth_tenths: tenths,
            }
        })
        .collect()
}

/// Depth variants for every annotated segment, in segment-key order.
pub fn build_kernels(ds: &AnnotationDataset) -> Result<Vec<Kernel>> {
    ds.require_nonempty()?;
    let mut out = Vec::with_capacity(ds.by_segment().len() * DEPTH_VARIANTS as usize);
    for (key, idxs) in ds.by_segment() {
        let mut words = BTreeMap::new();
        for &i in idxs {
            *words.entry(ds.records()[i].word.clone()).or_insert(0) += 1;
        }
        out.extend(kernel_variants(&ds.charts()[&key.chart_id], key.segment_index, words));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Kernels are resampled to `round(window_scale * len)` samples.
    pub window_scale: f64,
    /// Offsets with MAE at or below this qualify.
    pub max_mae: f64,
    /// Offsets with z-score at or below this qualify.
    pub max_z: f64,
    /// Qualifying points at most this far apart join one region.
    pub merge_gap: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams { window_scale: 1.0, max_mae: 0.05, max_z: -1.5, merge_gap: 2 }
    }
}

impl DetectionParams {
    fn validate(&self) -> Result<()> {
        if !(self.window_scale.is_finite() && self.window_scale > 0.0) {
            return Err(DetectError::BadParams("window_scale must be positive".into()));
        }
        if self.max_mae.is_nan() || self.max_mae < 0.0 {
            return Err(DetectError::BadParams("max_mae must be non-negative".into()));
        }
        if self.max_z.is_nan() {
            return Err(DetectError::BadParams("max_z must be a number".into()));
        }
        Ok(())
    }
}

/// A kernel variant that qualified at one offset of the signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Index into the kernel list passed to [`find_matches`].
    pub kernel: usize,
    pub offset: usize,
    /// Inclusive signal indices covered by the resampled kernel.
    pub start_index: usize,
    pub end_index: usize,
    pub mae: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordVote {
    pub word: String,
    pub votes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRegion {
    pub start_index: usize,
    pub end_index: usize,
    pub start_x: f64,
    pub end_x: f64,
    /// Most votes first; ties alphabetical.
    pub words: Vec<WordVote>,
    pub best_mae: f64,
    pub best_z: f64,
}

impl LabeledRegion {
    pub fn top_word(&self) -> &str {
        &self.words[0].word
    }
}

struct Prepared {
    len: usize,
    window: usize,
    deriv: Vec<f64>,
}

/// Smooth-then-differentiate in kernel-width units: sample spacing is
/// `1 / (kernel_len - 1)`.
fn process(ys: &[f64], plan: &SavGolPlan, kernel_len: usize) -> Vec<f64> {
    let unit = (kernel_len - 1) as f64;
    plan.derivative(&plan.smooth(ys)).into_iter().map(|d| d * unit).collect()
}

fn index_plan(len: usize, window: usize) -> Result<SavGolPlan> {
    let xs: Vec<f64> = (0..len).map(|i| i as f64).collect();
    Ok(SavGolPlan::new(&xs, window, SMOOTHING_ORDER)?)
}

fn prepare(kernel: &Kernel, window_scale: f64, plans: &mut HashMap<usize, SavGolPlan>) -> Result<Prepared> {
    let src_len = kernel.ys.len();
    let len = (window_scale * src_len as f64).round() as usize;
    let window = sigproc::smoothing_window(len);
    if len < 3 || window < 3 {
        return Err(DetectError::KernelTooShort(len));
    }
    let ys = if len == src_len {
        kernel.ys.clone()
    } else {
        sigproc::resample(&Signal::from_values(kernel.ys.clone())?, len)?.ys().to_vec()
    };
    let plan = match plans.entry(len) {
        std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
        std::collections::hash_map::Entry::Vacant(e) => e.insert(index_plan(len, window)?),
    };
    Ok(Prepared { len, window, deriv: process(&ys, plan, len) })
}

/// Every qualifying `(kernel, offset)` pair, sorted by kernel then offset.
pub fn find_matches(signal: &Signal, kernels: &[Kernel], params: &DetectionParams) -> Result<Vec<Match>> {
    params.validate()?;
    if kernels.is_empty() {
        return Err(DetectError::NoKernels);
    }
    let mut plans = HashMap::new();
    let prepared = kernels
        .iter()
        .map(|k| prepare(k, params.window_scale, &mut plans))
        .collect::<Result<Vec<_>>>()?;
    let n = signal.len();
    let shortest = prepared.iter().map(|p| p.len).min().unwrap_or(0);
    if shortest > n {
        return Err(DetectError::SignalTooShort { signal: n, kernel: shortest });
    }

    let normalized = sigproc::normalize_values(signal.ys());
    // One processed signal per (window, kernel length) pair actually used.
    let mut signal_derivs: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for p in prepared.iter().filter(|p| p.len <= n) {
        if let std::collections::btree_map::Entry::Vacant(e) = signal_derivs.entry((p.window, p.len)) {
            e.insert(process(&normalized, &index_plan(n, p.window)?, p.len));
        }
    }

    let per_kernel: Vec<Vec<Match>> = prepared
        .par_iter()
        .enumerate()
        .map(|(ki, p)| {
            if p.len > n {
                return Ok(Vec::new());
            }
            let trace = sigproc::windowed_mae(&p.deriv, &signal_derivs[&(p.window, p.len)])?;
            Ok(trace
                .offsets
                .iter()
                .zip(trace.mae.iter().zip(&trace.z))
                .filter(|(_, (&mae, &z))| mae <= params.max_mae || z <= params.max_z)
                .map(|(&offset, (&mae, &z))| Match {
                    kernel: ki,
                    offset,
                    start_index: offset,
                    end_index: offset + p.len - 1,
                    mae,
                    z,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_kernel.into_iter().flatten().collect())
}

/// Groups sorted, de-duplicated points into inclusive runs whose
/// consecutive members differ by at most `gap`.
pub fn merge_points(points: &BTreeSet<usize>, gap: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &p in points {
        match out.last_mut() {
            Some((_, end)) if p - *end <= gap => *end = p,
            _ => out.push((p, p)),
        }
    }
    out
}

/// Shape discovery: each qualifying match marks the signal samples under
/// its kernel window; marked samples are merged into regions and
/// each region is labeled by votes from the matches inside it.
pub fn find_shapes(signal: &Signal, kernels: &[Kernel], params: &DetectionParams) -> Result<Vec<LabeledRegion>> {
    let matches = find_matches(signal, kernels, params)?;
    Ok(regions_from_matches(signal, kernels, &matches, params.merge_gap))
}

pub fn regions_from_matches(
    signal: &Signal,
    kernels: &[Kernel],
    matches: &[Match],
    merge_gap: usize,
) -> Vec<LabeledRegion> {
    let points: BTreeSet<usize> = matches.iter().flat_map(|m| m.start_index..=m.end_index).collect();
    let spans = merge_points(&points, merge_gap);
    let mut regions: Vec<(BTreeMap<&str, usize>, f64, f64)> =
        vec![(BTreeMap::new(), f64::INFINITY, f64::INFINITY); spans.len()];
    for m in matches {
        // spans are disjoint and sorted; a match lies inside exactly one
        let r = spans.partition_point(|&(_, end)| end < m.start_index);
        let (votes, best_mae, best_z) = &mut regions[r];
        for word in kernels[m.kernel].words.keys() {
            *votes.entry(word).or_insert(0) += 1;
        }
        *best_mae = best_mae.min(m.mae);
        *best_z = best_z.min(m.z);
    }
    spans
        .into_iter()
        .zip(regions)
        .map(|((start, end), (votes, best_mae, best_z))| {
            let mut words: Vec<WordVote> =
                votes.into_iter().map(|(w, v)| WordVote { word: w.to_string(), votes: v }).collect();
            words.sort_by(|a, b| b.votes.cmp(&a.votes).then_with(|| a.word.cmp(&b.word)));
            LabeledRegion {
                start_index: start,
                end_index: end,
                start_x: signal.xs()[start],
                end_x: signal.xs()[end],
                words,
                best_mae,
                best_z,
            }
        })
        .collect()
}

/// Median y-range of generated charts (40) over their x-span (70). A
/// signal normalized to the unit square and scaled by this factor has
/// slopes in the units annotators saw on typical stimulus charts.
pub const GENERATOR_ASPECT: f64 = 40.0 / 70.0;

/// An adjective-verb label for one linear piece of a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeLabel {
    pub start_index: usize,
    pub end_index: usize,
    pub adjective: String,
    pub verb: String,
    pub region_slope: f64,
    pub pair_mean_slope: f64,
    pub co_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelParams {
    /// RDP tolerance on the normalized (unit square) signal.
    pub epsilon: f64,
    /// Pairs whose mean slope is within this distance of a piece's slope
    /// are candidates.
    pub slope_window: f64,
    /// Multiplier from normalized rise-over-run to chart slope units.
    pub aspect: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams { epsilon: 0.02, slope_window: 0.5, aspect: GENERATOR_ASPECT }
    }
}

/// The pair with the highest co-occurrence among those within `window` of
/// `slope`; ties go to the closer mean slope, then alphabetical order.
pub fn select_pair(table: &PairSlopeTable, slope: f64, window: f64) -> Option<&PairEntry> {
    table
        .entries
        .iter()
        .filter(|e| (e.mean_slope - slope).abs() <= window)
        .min_by(|a, b| {
            b.co_count
                .cmp(&a.co_count)
                .then_with(|| (a.mean_slope - slope).abs().total_cmp(&(b.mean_slope - slope).abs()))
                .then_with(|| (&a.adjective, &a.verb).cmp(&(&b.adjective, &b.verb)))
        })
}

/// Slope of each RDP piece of the normalized signal, as
/// `(start_index, end_index, slope)`.
pub fn linear_pieces(signal: &Signal, epsilon: f64, aspect: f64) -> Vec<(usize, usize, f64)> {
    let xs = signal.xs();
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let xn: Vec<f64> = xs.iter().map(|x| (x - x0) / (x1 - x0)).collect();
    let yn = sigproc::normalize_values(signal.ys());
    let keep = sigproc::rdp_indices(&xn, &yn, epsilon);
    keep.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (a, b, aspect * (yn[b] - yn[a]) / (xn[b] - xn[a]))
        })
        .collect()
}

pub fn label_slopes(signal: &Signal, table: &PairSlopeTable, params: &LabelParams) -> Result<Vec<SlopeLabel>> {
    if table.is_empty() {
        return Err(DetectError::EmptyTable);
    }
    if !(params.epsilon >= 0.0 && params.slope_window >= 0.0 && params.aspect > 0.0) {
        return Err(DetectError::BadParams("epsilon and slope_window must be >= 0, aspect > 0".into()));
    }
    Ok(linear_pieces(signal, params.epsilon, params.aspect)
        .into_iter()
        .filter_map(|(start, end, slope)| {
            select_pair(table, slope, params.slope_window).map(|e| SlopeLabel {
                start_index: start,
                end_index: end,
                adjective: e.adjective.clone(),
                verb: e.verb.clone(),
                region_slope: slope,
                pair_mean_slope: e.mean_slope,
                co_count: e.co_count,
            })
        })
        .collect())
}
