//! Synthetic stimulus charts: seven piecewise-linear segments over
//! 1960-2030, each with one of nine slope classes, plus the metrics used
//! to check that a batch covers a broad range of shapes.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`, which is
//! specified bit-for-bit and therefore stable across platforms.

use std::sync::OnceLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const X_MIN: f64 = 1960.0;
pub const X_MAX: f64 = 2030.0;
pub const SEGMENTS: usize = 7;
pub const SAMPLES_PER_SEGMENT: usize = 10;
pub const POINTS: usize = SEGMENTS * SAMPLES_PER_SEGMENT + 1;
pub const SEGMENT_WIDTH: f64 = (X_MAX - X_MIN) / SEGMENTS as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlopeClass {
    Up,
    Down,
    Flat,
    SteepUp,
    SteepDown,
    SteepFlat,
    GentleUp,
    GentleDown,
    GentleFlat,
}

impl SlopeClass {
    pub const ALL: [SlopeClass; 9] = [
        SlopeClass::Up,
        SlopeClass::Down,
        SlopeClass::Flat,
        SlopeClass::SteepUp,
        SlopeClass::SteepDown,
        SlopeClass::SteepFlat,
        SlopeClass::GentleUp,
        SlopeClass::GentleDown,
        SlopeClass::GentleFlat,
    ];

    /// Rise in y units per x unit (one year).
    pub fn slope(self) -> f64 {
        match self {
            SlopeClass::Up => 1.0,
            SlopeClass::Down => -1.0,
            SlopeClass::SteepUp => 3.0,
            SlopeClass::SteepDown => -3.0,
            SlopeClass::GentleUp => 0.5,
            SlopeClass::GentleDown => -0.5,
            SlopeClass::Flat | SlopeClass::SteepFlat | SlopeClass::GentleFlat => 0.0,
        }
    }

    /// -1, 0 or 1.
    pub fn direction(self) -> i8 {
        let s = self.slope();
        if s > 0.0 {
            1
        } else if s < 0.0 {
            -1
        } else {
            0
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("chart {id}: expected {expected} {what}, found {found}")]
    Count { id: String, what: &'static str, expected: usize, found: usize },
    #[error("chart {id}: point {index} is {found:?}, expected {expected:?}")]
    Point { id: String, index: usize, found: [f64; 2], expected: [f64; 2] },
    #[error("chart {id}: y_scale must be positive and finite")]
    Scale { id: String },
    #[error("chart has an empty {0}")]
    Empty(&'static str),
}

/// One synthetic line chart.
///
/// `points` holds the displayed values, `y = unscaled * y_scale + y_offset`.
/// Analysis works on [`Chart::unscaled_ys`], which is rebuilt exactly from
/// the segment classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub id: String,
    pub subject: String,
    pub segments: Vec<SlopeClass>,
    pub points: Vec<[f64; 2]>,
    pub y_scale: f64,
    pub y_offset: f64,
}

impl Chart {
    pub fn from_segments(
        id: impl Into<String>,
        subject: impl Into<String>,
        segments: [SlopeClass; SEGMENTS],
        y_scale: f64,
        y_offset: f64,
    ) -> Chart {
        let segments = segments.to_vec();
        let points = sample_xs()
            .zip(unscaled_from(&segments))
            .map(|(x, y)| [x, y * y_scale + y_offset])
            .collect();
        Chart {
            id: id.into(),
            subject: subject.into(),
            segments,
            points,
            y_scale,
            y_offset,
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p[0]).collect()
    }

    /// Values before the cosmetic scale and offset, starting at zero.
    pub fn unscaled_ys(&self) -> Vec<f64> {
        unscaled_from(&self.segments)
    }

    /// The eight segment endpoints, unscaled.
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        let ys = self.unscaled_ys();
        (0..=SEGMENTS)
            .map(|k| {
                let i = k * SAMPLES_PER_SEGMENT;
                [X_MIN + SEGMENT_WIDTH * k as f64, ys[i]]
            })
            .collect()
    }

    /// Segment that owns coordinate `x`: left-closed intervals, clamped to
    /// the last segment.
    pub fn segment_of(x: f64) -> usize {
        let k = ((x - X_MIN) / SEGMENT_WIDTH).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(SEGMENTS - 1)
        }
    }

    pub fn contains_x(x: f64) -> bool {
        (X_MIN..=X_MAX).contains(&x)
    }

    /// Checks the structural invariants of a chart read from disk.
    pub fn validate(&self) -> Result<(), ChartError> {
        if self.id.trim().is_empty() {
            return Err(ChartError::Empty("id"));
        }
        if self.subject.trim().is_empty() {
            return Err(ChartError::Empty("subject"));
        }
        if self.segments.len() != SEGMENTS {
            return Err(ChartError::Count {
                id: self.id.clone(),
                what: "segments",
                expected: SEGMENTS,
                found: self.segments.len(),
            });
        }
        if self.points.len() != POINTS {
            return Err(ChartError::Count {
                id: self.id.clone(),
                what: "points",
                expected: POINTS,
                found: self.points.len(),
            });
        }
        if !(self.y_scale.is_finite() && self.y_scale > 0.0 && self.y_offset.is_finite()) {
            return Err(ChartError::Scale { id: self.id.clone() });
        }
        for (index, ((x, y), p)) in sample_xs().zip(self.unscaled_ys()).zip(&self.points).enumerate() {
            let expected = [x, y * self.y_scale + self.y_offset];
            let tol = 1e-9 * (1.0 + expected[1].abs());
            if p[0] != expected[0] || (p[1] - expected[1]).abs() > tol {
                return Err(ChartError::Point { id: self.id.clone(), index, found: *p, expected });
            }
        }
        Ok(())
    }
}

fn sample_xs() -> impl Iterator<Item = f64> {
    (0..POINTS).map(|i| X_MIN + i as f64 * (SEGMENT_WIDTH / SAMPLES_PER_SEGMENT as f64))
}

fn unscaled_from(segments: &[SlopeClass]) -> Vec<f64> {
    let dx = SEGMENT_WIDTH / SAMPLES_PER_SEGMENT as f64;
    let mut ys = Vec::with_capacity(POINTS);
    let mut y = 0.0;
    ys.push(y);
    for class in segments {
        for _ in 0..SAMPLES_PER_SEGMENT {
            y += class.slope() * dx;
            ys.push(y);
        }
    }
    ys
}

/// Cosmetic y scaling for a legend subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScale {
    pub subject: String,
    pub y_scale: f64,
    pub y_offset: f64,
}

/// The shipped subject table.
pub fn subjects() -> &'static [SubjectScale] {
    static TABLE: OnceLock<Vec<SubjectScale>> = OnceLock::new();
    TABLE.get_or_init(|| {
        serde_json::from_str(include_str!("../data/subjects.json")).expect("bundled subjects.json parses")
    })
}

/// `(y_scale, y_offset)` for a subject; `(1, 0)` when it is not in the table.
pub fn scale_for(subject: &str) -> (f64, f64) {
    subjects()
        .iter()
        .find(|s| s.subject == subject)
        .map(|s| (s.y_scale, s.y_offset))
        .unwrap_or((1.0, 0.0))
}

fn random_segments(rng: &mut ChaCha8Rng) -> [SlopeClass; SEGMENTS] {
    std::array::from_fn(|_| SlopeClass::ALL[rng.random_range(0..SlopeClass::ALL.len())])
}

/// One chart with segment classes drawn uniformly and independently.
pub fn generate_chart(seed: u64, subject: &str) -> Chart {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (scale, offset) = scale_for(subject);
    Chart::from_segments(format!("chart-s{seed}"), subject, random_segments(&mut rng), scale, offset)
}

/// `count` charts with ids `chart-000`, `chart-001`, ... and subjects drawn
/// from the shipped table. Each chart gets its own sub-seed from a master
/// stream, so chart `i` does not depend on how many charts follow it.
pub fn generate_batch(seed: u64, count: usize) -> Vec<Chart> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let table = subjects();
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
            let subject = &table[rng.random_range(0..table.len())];
            Chart::from_segments(
                format!("chart-{i:03}"),
                subject.subject.clone(),
                random_segments(&mut rng),
                subject.y_scale,
                subject.y_offset,
            )
        })
        .collect()
}

/// Shape-diversity metrics for one chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartMetrics {
    pub net_slope: f64,
    pub pct_up: f64,
    pub pct_flat: f64,
    pub pct_down: f64,
    pub inflection_count: usize,
}

pub fn chart_metrics(chart: &Chart) -> ChartMetrics {
    let ys = chart.unscaled_ys();
    let net_slope = (ys[ys.len() - 1] - ys[0]) / (X_MAX - X_MIN);
    let n = chart.segments.len() as f64;
    let share = |d: i8| chart.segments.iter().filter(|s| s.direction() == d).count() as f64 / n;
    let inflection_count = chart
        .segments
        .windows(2)
        .filter(|w| w[0].direction() != w[1].direction())
        .count();
    ChartMetrics {
        net_slope,
        pct_up: share(1),
        pct_flat: share(0),
        pct_down: share(-1),
        inflection_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SlopeClass::*;

    #[test]
    fn slope_values() {
        let expected = [1.0, -1.0, 0.0, 3.0, -3.0, 0.0, 0.5, -0.5, 0.0];
        for (c, e) in SlopeClass::ALL.iter().zip(expected) {
            assert_eq!(c.slope(), e);
        }
    }

    #[test]
    fn steep_up_chart() {
        let c = Chart::from_segments("a", "x", [SteepUp; 7], 1.0, 0.0);
        let ys = c.unscaled_ys();
        assert_eq!(ys[70], 3.0 * (X_MAX - X_MIN));
        assert!(ys.windows(2).all(|w| w[1] - w[0] == 3.0));
        let m = chart_metrics(&c);
        assert_eq!(m.net_slope, 3.0);
        assert_eq!(m.pct_up, 1.0);
        assert_eq!(m.inflection_count, 0);
    }

    #[test]
    fn flat_chart() {
        let c = Chart::from_segments("a", "x", [Flat; 7], 1.0, 0.0);
        assert!(c.unscaled_ys().iter().all(|&y| y == 0.0));
        assert_eq!(chart_metrics(&c).inflection_count, 0);
    }

    #[test]
    fn alternating_chart_has_six_inflections() {
        let c = Chart::from_segments("a", "x", [Up, Down, Up, Down, Up, Down, Up], 1.0, 0.0);
        assert_eq!(chart_metrics(&c).inflection_count, 6);
    }

    #[test]
    fn mixed_chart_metrics() {
        let c = Chart::from_segments("a", "x", [Up, Up, Flat, Down, Down, GentleUp, Flat], 1.0, 0.0);
        let m = chart_metrics(&c);
        assert_eq!(m.pct_up, 3.0 / 7.0);
        assert_eq!(m.pct_flat, 2.0 / 7.0);
        assert_eq!(m.pct_down, 2.0 / 7.0);
        // (1 + 1 + 0 - 1 - 1 + 0.5 + 0) / 7
        assert!((m.net_slope - 0.5 / 7.0).abs() < 1e-15);
        // + + 0 - - + 0
        assert_eq!(m.inflection_count, 4);
    }

    #[test]
    fn generated_chart_shape() {
        let c = generate_chart(42, "Consumer Debt");
        assert_eq!(c.points.len(), POINTS);
        assert_eq!(c.segments.len(), SEGMENTS);
        assert_eq!(c.points[0][0], X_MIN);
        assert_eq!(c.points[70][0], X_MAX);
        assert_eq!(c.unscaled_ys()[0], 0.0);
        assert_eq!(c.points[0][1], c.y_offset);
        assert_eq!((c.y_scale, c.y_offset), (25.0, 4000.0));
        c.validate().unwrap();
        assert_eq!(c, generate_chart(42, "Consumer Debt"));
    }

    #[test]
    fn unknown_subject_is_unscaled() {
        let c = generate_chart(3, "Moon Phases");
        assert_eq!((c.y_scale, c.y_offset), (1.0, 0.0));
    }

    #[test]
    fn batch_is_deterministic() {
        let a = generate_batch(1, 16);
        assert_eq!(a.len(), 16);
        assert_eq!(a.iter().map(|c| c.segments.len()).sum::<usize>(), 112);
        assert_eq!(a, generate_batch(1, 16));
        let ids: std::collections::BTreeSet<_> = a.iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids.len(), 16);
        assert_eq!(generate_batch(1, 1).len(), 1);
        // prefix-stable
        assert_eq!(generate_batch(1, 4)[..], a[..4]);
    }

    #[test]
    fn segment_boundaries_belong_to_the_right() {
        assert_eq!(Chart::segment_of(1990.0), 3);
        assert_eq!(Chart::segment_of(1989.999), 2);
        assert_eq!(Chart::segment_of(1960.0), 0);
        assert_eq!(Chart::segment_of(2030.0), 6);
        assert_eq!(Chart::segment_of(2020.0), 6);
    }

    #[test]
    fn validate_catches_tampering() {
        let mut c = generate_chart(5, "Retail Sales");
        c.points[10][1] += 1.0;
        assert!(matches!(c.validate(), Err(ChartError::Point { index: 10, .. })));
        let mut c = generate_chart(5, "Retail Sales");
        c.segments.pop();
        assert!(matches!(c.validate(), Err(ChartError::Count { .. })));
    }

    #[test]
    fn batch_metrics_cover_all_inflection_counts() {
        let seen = |count| {
            let mut seen = [false; 7];
            for c in &generate_batch(7, count) {
                let m = chart_metrics(c);
                assert!((-3.0..=3.0).contains(&m.net_slope));
                assert!((m.pct_up + m.pct_flat + m.pct_down - 1.0).abs() < 1e-12);
                seen[m.inflection_count] = true;
            }
            seen
        };
        assert!(seen(1000)[1..=5].iter().all(|&s| s));
        // an all-same-direction chart has probability 1/729 per draw
        assert!(seen(10_000).iter().all(|&s| s));
    }
}
