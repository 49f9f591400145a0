//! Intensity histograms, noise-cusp detection and opacity transfer functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{DenseVolume, SparsePoints};

pub const DEFAULT_BINS: usize = 256;
pub const SMOOTHING_WINDOW: usize = 5;

/// Log10-spaced intensity histogram.
///
/// Bins are half-open `[e_b, e_{b+1})` except the last, which also includes
/// its upper edge so that the maximum is counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges in log10(intensity).
    #[serde(rename = "edges")]
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// NaN and non-positive samples.
    #[serde(rename = "excluded")]
    pub n_excluded: u64,
}

impl Histogram {
    /// Bins every positive finite value; everything else is counted as excluded.
    pub fn from_values<I>(values: I, n_bins: usize) -> Result<Self>
    where
        I: IntoIterator<Item = f64> + Clone,
    {
        if n_bins < 2 {
            return Err(Error::param("bins", "need at least 2 bins"));
        }
        let usable = |v: &f64| v.is_finite() && *v > 0.0;
        let (lo, hi) = values
            .clone()
            .into_iter()
            .filter(usable)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if !lo.is_finite() {
            return Err(Error::EmptyData);
        }
        let (mut lo, mut hi) = (lo.log10(), hi.log10());
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / n_bins as f64;
        let mut bin_edges: Vec<f64> = (0..n_bins).map(|b| lo + b as f64 * width).collect();
        bin_edges.push(hi);

        let mut counts = vec![0u64; n_bins];
        let mut n_excluded = 0u64;
        let inner = &bin_edges[1..n_bins];
        for v in values {
            if !usable(&v) {
                n_excluded += 1;
                continue;
            }
            let x = v.log10();
            let b = inner.partition_point(|&e| e <= x);
            counts[b] += 1;
        }
        Ok(Self {
            bin_edges,
            counts,
            n_excluded,
        })
    }

    pub fn from_volume(v: &DenseVolume, n_bins: usize) -> Result<Self> {
        Self::from_values(v.values().iter().map(|&x| x as f64), n_bins)
    }

    pub fn from_sparse(p: &SparsePoints, n_bins: usize) -> Result<Self> {
        Self::from_values(p.intensities().iter().copied(), n_bins)
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.n_excluded
    }

    /// Bin center in intensity units (geometric mean of the edge intensities).
    pub fn bin_center(&self, b: usize) -> f64 {
        10f64.powf(0.5 * (self.bin_edges[b] + self.bin_edges[b + 1]))
    }

    /// Centered moving average, window truncated at both ends.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let n = self.counts.len();
        let half = window / 2;
        (0..n)
            .map(|b| {
                let lo = b.saturating_sub(half);
                let hi = (b + half).min(n - 1);
                let sum: u64 = self.counts[lo..=hi].iter().sum();
                sum as f64 / (hi - lo + 1) as f64
            })
            .collect()
    }
}

/// Locates the valley after the background-noise mode.
///
/// The smoothed histogram's global maximum is searched in the lower half of
/// the bins; the first strict local minimum after it is the cusp. A flat
/// valley floor counts as one minimum, located at the middle of the plateau.
pub fn detect_cusp(h: &Histogram) -> Option<f64> {
    let s = h.smoothed(SMOOTHING_WINDOW);
    let n = s.len();
    let half = n / 2;
    let (peak, _) = s[..half.max(1)]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (b, &v)| if v > best.1 { (b, v) } else { best });

    let mut b = peak + 1;
    while b + 1 < n {
        if s[b] < s[b - 1] {
            let mut end = b;
            while end + 1 < n && s[end + 1] == s[b] {
                end += 1;
            }
            if end + 1 < n && s[end + 1] > s[b] {
                return Some(h.bin_center((b + end) / 2));
            }
            b = end + 1;
        } else {
            b += 1;
        }
    }
    None
}

/// Two-segment opacity map: linear ramp on `(cusp, threshold)`, opaque above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    cusp: f64,
    threshold: f64,
}

impl TransferFunction {
    pub fn new(cusp: f64, threshold: f64) -> Result<Self> {
        if !(cusp > 0.0 && cusp.is_finite()) {
            return Err(Error::param("cusp", "must be positive and finite"));
        }
        if !(threshold > cusp && threshold.is_finite()) {
            return Err(Error::param("threshold", "must be finite and above cusp"));
        }
        Ok(Self { cusp, threshold })
    }

    pub fn cusp(&self) -> f64 {
        self.cusp
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn alpha(&self, intensity: f64) -> f64 {
        if intensity.is_nan() || intensity <= self.cusp {
            0.0
        } else if intensity >= self.threshold {
            1.0
        } else {
            ((intensity - self.cusp) / (self.threshold - self.cusp)).clamp(0.0, 1.0)
        }
    }
}

/// Min-max normalizes the intensities of one cluster to `[0, 1]`.
///
/// A constant cluster (including a single point) maps to all ones.
pub fn cluster_alpha(intensities: &[f64]) -> Vec<f64> {
    let (lo, hi) = intensities
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![1.0; intensities.len()];
    }
    intensities.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_decades_two_bins() {
        let h = Histogram::from_values([1.0, 10.0, 100.0], 2).unwrap();
        assert_eq!(h.bin_edges, vec![0.0, 1.0, 2.0]);
        assert_eq!(h.counts, vec![1, 2]);
        assert_eq!(h.n_excluded, 0);
    }

    #[test]
    fn constant_values_widen_range() {
        let h = Histogram::from_values([5.0; 7], 4).unwrap();
        let l = 5f64.log10();
        assert!((h.bin_edges[0] - (l - 0.5)).abs() < 1e-12);
        assert!((h.bin_edges[4] - (l + 0.5)).abs() < 1e-12);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<u64>(), 7);
    }

    #[test]
    fn nan_and_nonpositive_are_excluded() {
        let base = Histogram::from_values([1.0, 10.0, 100.0], 2).unwrap();
        let h = Histogram::from_values([1.0, f64::NAN, 10.0, 0.0, -3.0, 100.0], 2).unwrap();
        assert_eq!(h.counts, base.counts);
        assert_eq!(h.n_excluded, 3);
        assert_eq!(h.total(), 6);
    }

    #[test]
    fn empty_data_errors() {
        assert!(matches!(
            Histogram::from_values([f64::NAN, 0.0], 8),
            Err(Error::EmptyData)
        ));
        assert!(Histogram::from_values([1.0], 1).is_err());
    }

    fn hist_from_counts(counts: Vec<u64>) -> Histogram {
        let n = counts.len();
        Histogram {
            bin_edges: (0..=n).map(|b| b as f64 * 0.1 - 5.0).collect(),
            counts,
            n_excluded: 0,
        }
    }

    #[test]
    fn decreasing_counts_have_no_cusp() {
        let h = hist_from_counts((0..32).rev().map(|c| c * 10).collect());
        assert_eq!(detect_cusp(&h), None);
    }

    /// Brute-force reading of the rule: scan the smoothed curve for
    /// `s[m-1] > s[m] < s[m+1]` (no plateaus in this fixture).
    #[test]
    fn cusp_matches_direct_scan() {
        let mut counts = vec![0u64; 64];
        for (b, c) in counts.iter_mut().enumerate() {
            let x = b as f64;
            let noise = 5000.0 * (-(x - 12.0).powi(2) / 18.0).exp();
            let signal = 800.0 * (-(x - 44.0).powi(2) / 50.0).exp();
            *c = (noise + signal + 3.0).round() as u64;
        }
        let h = hist_from_counts(counts);
        let s = h.smoothed(5);
        let peak = (0..32).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        let m = (peak + 1..63).find(|&m| s[m - 1] > s[m] && s[m] < s[m + 1]).unwrap();
        assert_eq!(detect_cusp(&h), Some(h.bin_center(m)));
    }

    #[test]
    fn cusp_in_flat_valley() {
        let mut counts = vec![0u64; 40];
        counts[2..8].copy_from_slice(&[50, 300, 900, 1000, 700, 100]);
        counts[25..35].copy_from_slice(&[5, 40, 120, 300, 400, 300, 120, 40, 5, 1]);
        let h = hist_from_counts(counts);
        let c = detect_cusp(&h).unwrap().log10();
        // empty gap spans bins 10..=22 after smoothing
        assert!(c > h.bin_edges[12] && c < h.bin_edges[21], "{c}");
    }

    #[test]
    fn transfer_function_segments() {
        let tf = TransferFunction::new(2.0, 10.0).unwrap();
        assert_eq!(tf.alpha(2.0), 0.0);
        assert_eq!(tf.alpha(10.0), 1.0);
        assert_eq!(tf.alpha(6.0), 0.5);
        assert_eq!(tf.alpha(1.0), 0.0);
        assert_eq!(tf.alpha(1e9), 1.0);
        assert!(TransferFunction::new(3.0, 3.0).is_err());
        assert!(TransferFunction::new(0.0, 3.0).is_err());
    }

    #[test]
    fn cluster_alpha_examples() {
        assert_eq!(cluster_alpha(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(cluster_alpha(&[7.0]), vec![1.0]);
        assert_eq!(cluster_alpha(&[3.0, 3.0]), vec![1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn alpha_monotone_and_clamped(c in 1e-6f64..1e3, span in 1e-3f64..1e6, a in 0f64..1e9, b in 0f64..1e9) {
            let tf = TransferFunction::new(c, c + span).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (x, y) = (tf.alpha(lo), tf.alpha(hi));
            prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
            prop_assert!(x <= y);
        }

        #[test]
        fn cluster_alpha_spans_unit_interval(v in proptest::collection::vec(1e-3f64..1e6, 2..200)) {
            let a = cluster_alpha(&v);
            let distinct = v.iter().any(|&x| x != v[0]);
            let min = a.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(max, 1.0);
            prop_assert_eq!(min, if distinct { 0.0 } else { 1.0 });
        }

        #[test]
        fn histogram_is_permutation_invariant(mut v in proptest::collection::vec(1e-4f64..1e4, 1..300), seed in any::<u64>()) {
            let h1 = Histogram::from_values(v.iter().copied(), 32).unwrap();
            // deterministic shuffle
            let mut s = seed | 1;
            for i in (1..v.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                v.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let h2 = Histogram::from_values(v.iter().copied(), 32).unwrap();
            prop_assert_eq!(h1, h2);
        }
    }
}
