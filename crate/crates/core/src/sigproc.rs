//! Numeric primitives shared by shape detection and slope labeling.
//!
//! Everything here operates on plain `f64` samples. A [`Signal`] pairs
//! strictly increasing coordinates with finite values; the free functions
//! below never mutate their inputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numeric tolerance constants used across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// A population standard deviation at or below `zero_variance_rel * |mean|`
    /// is treated as zero by [`z_scores`]. Rounding noise from affine
    /// rescaling must not turn a flat error trace into large z-scores.
    pub zero_variance_rel: f64,
    /// Absolute floor for the same test when the mean is zero.
    pub zero_variance_abs: f64,
    /// RDP distances within this relative margin of the maximum count as
    /// tied, and the earliest tied point is split on.
    pub rdp_tie_rel: f64,
    /// Ward merge costs within this relative margin of the cheapest count as
    /// tied, and the tie goes to the smallest leaf indices.
    pub ward_tie_rel: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    zero_variance_rel: 1e-9,
    zero_variance_abs: 1e-15,
    rdp_tie_rel: 1e-9,
    ward_tie_rel: 1e-9,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("xs has {xs} samples but ys has {ys}")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("xs must be strictly increasing (violated at index {0})")]
    NotIncreasing(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("bad Savitzky-Golay window {window} (order {order}, length {len})")]
    BadWindow { window: usize, order: usize, len: usize },
    #[error("kernel of length {kernel} does not fit in signal of length {signal}")]
    KernelTooLong { kernel: usize, signal: usize },
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// A univariate series: strictly increasing `xs` with one finite `y` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal", into = "RawSignal")]
pub struct Signal {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSignal {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TryFrom<RawSignal> for Signal {
    type Error = SignalError;
    fn try_from(raw: RawSignal) -> Result<Self> {
        Signal::new(raw.xs, raw.ys)
    }
}

impl From<Signal> for RawSignal {
    fn from(s: Signal) -> Self {
        RawSignal { xs: s.xs, ys: s.ys }
    }
}

impl Signal {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(SignalError::LengthMismatch { xs: xs.len(), ys: ys.len() });
        }
        if xs.len() < 2 {
            return Err(SignalError::TooShort(xs.len()));
        }
        for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(SignalError::NonFinite(i));
            }
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SignalError::NotIncreasing(i + 1));
        }
        Ok(Signal { xs, ys })
    }

    /// Signal sampled at `0, 1, 2, ...`.
    pub fn from_values(ys: Vec<f64>) -> Result<Self> {
        let xs = (0..ys.len()).map(|i| i as f64).collect();
        Signal::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Replaces the values, keeping the coordinates.
    pub fn with_values(&self, ys: Vec<f64>) -> Result<Self> {
        Signal::new(self.xs.clone(), ys)
    }

    /// Same values re-indexed on `0, 1, 2, ...`.
    pub fn reindexed(&self) -> Signal {
        Signal {
            xs: (0..self.len()).map(|i| i as f64).collect(),
            ys: self.ys.clone(),
        }
    }
}

/// Affine map of `ys` onto `[0, 1]`. A constant signal maps to all zeros.
pub fn normalize(s: &Signal) -> Signal {
    Signal {
        xs: s.xs.clone(),
        ys: normalize_values(&s.ys),
    }
}

pub(crate) fn normalize_values(ys: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(ys);
    let range = hi - lo;
    if range <= 0.0 {
        return vec![0.0; ys.len()];
    }
    ys.iter().map(|y| (y - lo) / range).collect()
}

pub(crate) fn min_max(ys: &[f64]) -> (f64, f64) {
    ys.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)))
}

/// Per-sample Savitzky-Golay weights for a fixed set of coordinates.
///
/// Each sample gets its own least-squares polynomial fit over the window
/// centred on it. Near the ends the window is truncated to the available
/// samples (a one-sided fit) and the polynomial order drops if the window
/// has too few points to support it. Fits are done in x units, so
/// non-uniform spacing is handled and derivatives come out per unit of x.
#[derive(Debug, Clone)]
pub struct SavGolPlan {
    window: usize,
    order: usize,
    rows: Vec<PlanRow>,
}

#[derive(Debug, Clone)]
struct PlanRow {
    start: usize,
    smooth: Vec<f64>,
    deriv: Vec<f64>,
}

impl SavGolPlan {
    pub fn new(xs: &[f64], window: usize, order: usize) -> Result<Self> {
        let n = xs.len();
        if window < 3 || window.is_multiple_of(2) || window > n || order >= window {
            return Err(SignalError::BadWindow { window, order, len: n });
        }
        let half = window / 2;
        let rows = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(n - 1);
                fit_row(&xs[lo..=hi], xs[i], order, lo)
            })
            .collect();
        Ok(SavGolPlan { window, order, rows })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Weights of the fitted value at sample `i`, indexed from the window start.
    pub fn smoothing_weights(&self, i: usize) -> (usize, &[f64]) {
        let row = &self.rows[i];
        (row.start, &row.smooth)
    }

    pub fn smooth(&self, ys: &[f64]) -> Vec<f64> {
        assert_eq!(ys.len(), self.rows.len(), "plan built for a different length");
        self.rows.iter().map(|r| dot(&r.smooth, &ys[r.start..])).collect()
    }

    pub fn derivative(&self, ys: &[f64]) -> Vec<f64> {
        assert_eq!(ys.len(), self.rows.len(), "plan built for a different length");
        self.rows.iter().map(|r| dot(&r.deriv, &ys[r.start..])).collect()
    }
}

fn dot(w: &[f64], ys: &[f64]) -> f64 {
    w.iter().zip(ys).map(|(a, b)| a * b).sum()
}

fn fit_row(xs: &[f64], center: f64, order: usize, start: usize) -> PlanRow {
    let m = xs.len();
    let degree = order.min(m - 1);
    // Scale to roughly [-1, 1] to keep the Vandermonde system well conditioned.
    let scale = (xs[m - 1] - xs[0]) / 2.0;
    let vander = DMatrix::from_fn(m, degree + 1, |r, c| ((xs[r] - center) / scale).powi(c as i32));
    let qr = vander.qr();
    let r_inv = qr
        .r()
        .try_inverse()
        .expect("distinct abscissae give a full-rank Vandermonde matrix");
    // Row k of R^-1 Q^T maps samples onto polynomial coefficient k.
    let pinv = r_inv * qr.q().transpose();
    let smooth = pinv.row(0).iter().copied().collect();
    let deriv = if degree >= 1 {
        pinv.row(1).iter().map(|w| w / scale).collect()
    } else {
        vec![0.0; m]
    };
    PlanRow { start, smooth, deriv }
}

/// Savitzky-Golay smoothing with the given odd `window` and polynomial `order`.
pub fn savgol(s: &Signal, window: usize, order: usize) -> Result<Signal> {
    let plan = SavGolPlan::new(&s.xs, window, order)?;
    Ok(Signal { xs: s.xs.clone(), ys: plan.smooth(&s.ys) })
}

/// Savitzky-Golay first derivative, in y units per x unit.
pub fn first_derivative(s: &Signal, window: usize, order: usize) -> Result<Signal> {
    let plan = SavGolPlan::new(&s.xs, window, order)?;
    Ok(Signal { xs: s.xs.clone(), ys: plan.derivative(&s.ys) })
}

/// Smoothing window used for a kernel of `len` samples: the odd integer
/// nearest `len / 4`, clamped to `[5, largest odd <= len]`.
pub fn smoothing_window(len: usize) -> usize {
    let target = len as f64 / 4.0;
    let nearest_odd = 2 * ((target - 1.0) / 2.0).round().max(0.0) as usize + 1;
    let upper = if len % 2 == 1 { len } else { len.saturating_sub(1) };
    nearest_odd.max(5).min(upper)
}

/// Linear interpolation onto `n` uniformly spaced points over `[x_min, x_max]`.
pub fn resample(s: &Signal, n: usize) -> Result<Signal> {
    if n < 2 {
        return Err(SignalError::TooShort(n));
    }
    let x0 = s.xs[0];
    let x1 = s.xs[s.len() - 1];
    let step = (x1 - x0) / (n - 1) as f64;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let x = if k == n - 1 { x1 } else { x0 + step * k as f64 };
        while seg + 2 < s.len() && s.xs[seg + 1] < x {
            seg += 1;
        }
        let (xa, xb) = (s.xs[seg], s.xs[seg + 1]);
        let (ya, yb) = (s.ys[seg], s.ys[seg + 1]);
        let t = ((x - xa) / (xb - xa)).clamp(0.0, 1.0);
        xs.push(x);
        ys.push(ya + t * (yb - ya));
    }
    Signal::new(xs, ys)
}

/// Sliding mean-absolute-error trace of a kernel against a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub offsets: Vec<usize>,
    pub mae: Vec<f64>,
    pub z: Vec<f64>,
}

/// MAE between `kernel` and every same-length window of `signal`.
pub fn windowed_mae(kernel: &[f64], signal: &[f64]) -> Result<ErrorTrace> {
    if kernel.is_empty() || kernel.len() > signal.len() {
        return Err(SignalError::KernelTooLong { kernel: kernel.len(), signal: signal.len() });
    }
    let count = signal.len() - kernel.len() + 1;
    let klen = kernel.len() as f64;
    let mae: Vec<f64> = (0..count)
        .map(|o| {
            kernel
                .iter()
                .zip(&signal[o..])
                .map(|(k, s)| (k - s).abs())
                .sum::<f64>()
                / klen
        })
        .collect();
    let z = z_scores(&mae);
    Ok(ErrorTrace { offsets: (0..count).collect(), mae, z })
}

/// Standardize with the population standard deviation. Zero variance
/// (within [`TOLERANCES`]) yields all zeros.
pub fn z_scores(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let floor = (TOLERANCES.zero_variance_rel * mean.abs()).max(TOLERANCES.zero_variance_abs);
    if std <= floor {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Ramer-Douglas-Peucker simplification; returns the kept points.
pub fn rdp(s: &Signal, epsilon: f64) -> Signal {
    let keep = rdp_indices(&s.xs, &s.ys, epsilon);
    Signal {
        xs: keep.iter().map(|&i| s.xs[i]).collect(),
        ys: keep.iter().map(|&i| s.ys[i]).collect(),
    }
}

/// Indices kept by Ramer-Douglas-Peucker, in increasing order. Endpoints
/// are always kept; an interior point survives when its perpendicular
/// distance to the current chord exceeds `epsilon`.
pub fn rdp_indices(xs: &[f64], ys: &[f64], epsilon: f64) -> Vec<usize> {
    let n = xs.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let dist: Vec<f64> =
            (a + 1..b).map(|i| chord_distance((xs[a], ys[a]), (xs[b], ys[b]), (xs[i], ys[i]))).collect();
        let max = dist.iter().cloned().fold(0.0, f64::max);
        if max > epsilon {
            let floor = max * (1.0 - TOLERANCES.rdp_tie_rel);
            let split = a + 1 + dist.iter().position(|&d| d >= floor).unwrap_or(0);
            keep[split] = true;
            stack.push((split, b));
            stack.push((a, split));
        }
    }
    keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
}

fn chord_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    (dy * (p.0 - a.0) - dx * (p.1 - a.1)).abs() / len
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sig(ys: &[f64]) -> Signal {
        Signal::from_values(ys.to_vec()).unwrap()
    }

    #[test]
    fn signal_validation() {
        assert_eq!(Signal::new(vec![0.0], vec![1.0]), Err(SignalError::TooShort(1)));
        assert_eq!(
            Signal::new(vec![0.0, 0.0], vec![1.0, 2.0]),
            Err(SignalError::NotIncreasing(1))
        );
        assert_eq!(
            Signal::new(vec![0.0, 1.0], vec![f64::NAN, 2.0]),
            Err(SignalError::NonFinite(0))
        );
        assert!(matches!(
            Signal::new(vec![0.0, 1.0], vec![1.0]),
            Err(SignalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&sig(&[2.0, 4.0, 6.0])).ys(), &[0.0, 0.5, 1.0]);
        assert_eq!(normalize(&sig(&[5.0, 5.0, 5.0])).ys(), &[0.0, 0.0, 0.0]);
        // (y + 1) / 4
        assert_eq!(normalize(&sig(&[-1.0, 0.0, 3.0])).ys(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn savgol_rejects_bad_windows() {
        let s = sig(&[0.0; 9]);
        assert!(matches!(savgol(&s, 4, 2), Err(SignalError::BadWindow { .. })));
        assert!(matches!(savgol(&s, 11, 2), Err(SignalError::BadWindow { .. })));
        assert!(matches!(savgol(&s, 5, 5), Err(SignalError::BadWindow { .. })));
        assert!(matches!(savgol(&s, 1, 0), Err(SignalError::BadWindow { .. })));
    }

    #[test]
    fn savgol_reproduces_quadratics() {
        let s = Signal::new(
            (0..30).map(|i| i as f64 * 0.5).collect(),
            (0..30).map(|i| (i as f64 * 0.5).powi(2) - 3.0 * i as f64).collect(),
        )
        .unwrap();
        let out = savgol(&s, 7, 2).unwrap();
        for (a, b) in out.ys().iter().zip(s.ys()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn savgol_constant_unchanged() {
        let s = sig(&[4.25; 12]);
        let out = savgol(&s, 5, 2).unwrap();
        for y in out.ys() {
            assert_abs_diff_eq!(*y, 4.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_linear_and_constant() {
        let s = Signal::new(
            (0..20).map(|i| 1.5 * i as f64).collect(),
            (0..20).map(|i| 3.0 * i as f64).collect(),
        )
        .unwrap();
        // y = 2x on a 1.5-spaced grid
        let d = first_derivative(&s, 5, 2).unwrap();
        for v in d.ys() {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-9);
        }
        let d = first_derivative(&sig(&[7.0; 10]), 5, 2).unwrap();
        for v in d.ys() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_square() {
        let s = sig(&(0..15).map(|i| (i * i) as f64).collect::<Vec<_>>());
        let d = first_derivative(&s, 5, 2).unwrap();
        for k in 2..13 {
            assert_abs_diff_eq!(d.ys()[k], 2.0 * k as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn smoothing_window_rule() {
        assert_eq!(smoothing_window(51), 13);
        assert_eq!(smoothing_window(31), 7);
        assert_eq!(smoothing_window(21), 5);
        assert_eq!(smoothing_window(8), 5);
        assert_eq!(smoothing_window(102), 25);
        assert_eq!(smoothing_window(5), 5);
    }

    #[test]
    fn resample_examples() {
        let v = sig(&[0.0, 1.0, 0.0]);
        assert_eq!(resample(&v, 5).unwrap().ys(), &[0.0, 0.5, 1.0, 0.5, 0.0]);
        let same = sig(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        assert_eq!(resample(&same, 5).unwrap(), same);
        let line = Signal::new(vec![0.0, 10.0], vec![0.0, 10.0]).unwrap();
        let r = resample(&line, 7).unwrap();
        for (x, y) in r.xs().iter().zip(r.ys()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn windowed_mae_examples() {
        let t = windowed_mae(&[1.0, 1.0], &[1.0, 1.0, 3.0, 1.0]).unwrap();
        assert_eq!(t.mae, vec![0.0, 1.0, 1.0]);
        assert_eq!(t.offsets, vec![0, 1, 2]);
        let s = [-2.0, 0.5, 3.0];
        let t = windowed_mae(&[0.0], &s).unwrap();
        assert_eq!(t.mae, vec![2.0, 0.5, 3.0]);
        assert_eq!(
            windowed_mae(&[0.0; 4], &s),
            Err(SignalError::KernelTooLong { kernel: 4, signal: 3 })
        );
    }

    #[test]
    fn z_score_examples() {
        let z = z_scores(&[1.0, 2.0, 3.0]);
        // popstd = sqrt(2/3)
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(z[0], -expected, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[2], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.2247, epsilon = 1e-4);
        assert_eq!(z_scores(&[5.0, 5.0, 5.0]), vec![0.0; 3]);
        assert!(z_scores(&[]).is_empty());
    }

    #[test]
    fn rdp_examples() {
        let line = Signal::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(rdp(&line, 0.1).len(), 2);
        let v = Signal::new(vec![-1.0, -0.5, 0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        // chord y = 0, apex 1.0 above it
        let out = rdp(&v, 0.5);
        assert_eq!(out.xs(), &[-1.0, 0.0, 1.0]);
        assert_eq!(rdp_indices(&[0.0], &[0.0], 1.0), vec![0]);
    }
}
