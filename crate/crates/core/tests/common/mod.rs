#![allow(dead_code)]

use std::collections::BTreeMap;

use molehill::chartgen::generate_chart;
use molehill::detect::{kernel_variants, Kernel};
use molehill::sigproc::{Signal, TOLERANCES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PLANT_SIGNAL_LEN: usize = 300;

pub struct Plant {
    pub signal: Signal,
    /// Depth variants of the planted kernel.
    pub kernels: Vec<Kernel>,
    /// Inclusive index range the kernel occupies in the signal.
    pub span: (usize, usize),
    pub word: String,
    /// The variant added to the signal.
    pub depth_tenths: u8,
}

/// A gentle random walk with uniform jitter, plus one non-flat kernel of a
/// freshly generated chart embedded at a random offset and depth.
pub fn planted(seed: u64) -> Plant {
    planted_with_noise(seed, 1.0)
}

/// [`planted`] with the walk and jitter scaled by `noise`; zero embeds an
/// exact copy of the kernel in a flat line.
pub fn planted_with_noise(seed: u64, noise: f64) -> Plant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = generate_chart(rng.random(), "Plant");
    // a kernel over flat segments has no shape to find
    let segment = loop {
        let s = rng.random_range(0..7);
        if kernel_variants(&chart, s, BTreeMap::new())[0].ys.iter().any(|&y| y != 0.0) {
            break s;
        }
    };
    let word = format!("shape-{seed}");
    let kernels = kernel_variants(&chart, segment, BTreeMap::from([(word.clone(), 1)]));
    let plant = &kernels[rng.random_range(0..kernels.len())];
    let len = plant.ys.len();
    let offset = rng.random_range(0..=PLANT_SIGNAL_LEN - len);
    let mut level = 0.0;
    let mut ys: Vec<f64> = (0..PLANT_SIGNAL_LEN)
        .map(|_| {
            level += noise * rng.random_range(-0.005..0.005);
            level + noise * rng.random_range(-0.01..0.01)
        })
        .collect();
    // shifted so the walk runs into and out of the shape without a step
    let (first, last) = (plant.ys[0], plant.ys[len - 1]);
    for (i, y) in ys.iter_mut().enumerate().skip(offset) {
        *y += plant.ys.get(i - offset).unwrap_or(&last) - first;
    }
    let depth_tenths = plant.depth_tenths;
    Plant { signal: Signal::from_values(ys).unwrap(), kernels, span: (offset, offset + len - 1), word, depth_tenths }
}

pub fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = if hi >= lo { (hi - lo + 1) as f64 } else { 0.0 };
    inter / ((a.1 - a.0 + 1) as f64 + (b.1 - b.0 + 1) as f64 - inter)
}

/// One agglomeration step from the naive Ward reference: cluster ids in
/// scipy style (leaves `0..n`, step `k` creates `n + k`) with `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefMerge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Exhaustive Ward clustering from centroids. Every step recomputes all
/// pairwise costs `sqrt(2 na nb / (na + nb)) * |ca - cb|`; costs within the
/// Ward tie tolerance go to the pair whose smallest member leaves compare lowest.
pub fn naive_ward(rows: &[Vec<f64>]) -> Vec<RefMerge> {
    let n = rows.len();
    let dim = rows.first().map_or(0, |r| r.len());
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| -> Vec<f64> {
        (0..dim).map(|d| members.iter().map(|&m| rows[m][d]).sum::<f64>() / members.len() as f64).collect()
    };
    let mut out = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let mut costs = Vec::new();
        for i in 0..clusters.len() {
            for j in 0..clusters.len() {
                let (a, b) = (&clusters[i].1, &clusters[j].1);
                let (min_a, min_b) = (*a.iter().min().unwrap(), *b.iter().min().unwrap());
                if min_a >= min_b {
                    continue;
                }
                let (ca, cb) = (centroid(a), centroid(b));
                let gap = ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                let (na, nb) = (a.len() as f64, b.len() as f64);
                costs.push(((2.0 * na * nb / (na + nb)).sqrt() * gap, (min_a, min_b), i, j));
            }
        }
        let cheapest = costs.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let limit = cheapest + cheapest.abs() * TOLERANCES.ward_tie_rel;
        let &(cost, _, i, j) = costs.iter().filter(|c| c.0 <= limit).min_by_key(|c| c.1).unwrap();
        let (id_i, id_j) = (clusters[i].0, clusters[j].0);
        let mut members = clusters[i].1.clone();
        members.extend(&clusters[j].1);
        out.push(RefMerge { a: id_i.min(id_j), b: id_i.max(id_j), distance: cost, size: members.len() });
        let (hi, lo) = (i.max(j), i.min(j));
        clusters.remove(hi);
        clusters.remove(lo);
        clusters.push((n + step, members));
    }
    out
}
