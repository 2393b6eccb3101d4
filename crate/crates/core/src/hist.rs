//! Binned counts of error series.
//!
//! Two binning schemes cover the crate's reporting needs: a fixed number of
//! equal-width bins over a symmetric range around zero (fit-report error
//! histograms) and a fixed bin width with bins centered on multiples of that
//! width (sensor-comparison histograms).  Both schemes count every input
//! sample, so `counts` always sums to the input length.

use serde::{Deserialize, Serialize};

/// Equal-width binned counts.  `edges` has one more entry than `counts`;
/// bin `i` covers `[edges[i], edges[i+1])`, with the last bin closed on the
/// right so boundary samples are never dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `n_bins` equal-width bins spanning `[-m, m]` with `m = max |x|`.
    ///
    /// An all-zero (or empty) series has no scale, so the range falls back
    /// to `[-1, 1]`; every sample still lands in the middle bin.
    pub fn symmetric(data: &[f64], n_bins: usize) -> Self {
        assert!(n_bins >= 1, "histogram needs at least one bin");
        let mut m = data.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
        if m == 0.0 {
            m = 1.0;
        }
        let width = 2.0 * m / n_bins as f64;
        let edges: Vec<f64> = (0..=n_bins).map(|i| -m + i as f64 * width).collect();
        let mut counts = vec![0usize; n_bins];
        for &x in data {
            let idx = (((x + m) / width) as usize).min(n_bins - 1);
            counts[idx] += 1;
        }
        Self { edges, counts }
    }

    /// Bins of the given width centered on integer multiples of it, so one
    /// bin is always centered on zero.  The bin range adapts to the data.
    pub fn centered(data: &[f64], bin_width: f64) -> Self {
        assert!(bin_width > 0.0, "bin width must be positive");
        let index = |x: f64| (x / bin_width).round() as i64;
        let (mut lo, mut hi) = (0i64, 0i64);
        for &x in data {
            lo = lo.min(index(x));
            hi = hi.max(index(x));
        }
        let n_bins = (hi - lo + 1) as usize;
        let edges: Vec<f64> = (0..=n_bins)
            .map(|i| (lo + i as i64) as f64 * bin_width - bin_width / 2.0)
            .collect();
        let mut counts = vec![0usize; n_bins];
        for &x in data {
            counts[(index(x) - lo) as usize] += 1;
        }
        Self { edges, counts }
    }

    pub fn n_samples(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_reference() {
        let h = Histogram::symmetric(&[-1.0, 0.5, 2.0], 4);
        assert_eq!(h.edges, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(h.counts, vec![0, 1, 1, 1]);
    }

    #[test]
    fn symmetric_all_zero_falls_back() {
        let h = Histogram::symmetric(&[0.0, 0.0, 0.0], 50);
        assert_eq!(h.edges[0], -1.0);
        assert_eq!(*h.edges.last().unwrap(), 1.0);
        assert_eq!(h.n_samples(), 3);
    }

    #[test]
    fn centered_reference() {
        // round(x / 0.1): -3, 0, 1, 3 -> seven bins from -0.35 to 0.35.
        let h = Histogram::centered(&[-0.26, 0.0, 0.07, 0.26], 0.1);
        assert_eq!(h.counts, vec![1, 0, 0, 1, 1, 0, 1]);
        assert_abs_diff_eq!(h.edges[0], -0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(*h.edges.last().unwrap(), 0.35, epsilon = 1e-12);
    }

    #[test]
    fn centered_zero_bin_for_empty_data() {
        let h = Histogram::centered(&[], 0.1);
        assert_eq!(h.counts, vec![0]);
        assert_eq!(h.n_samples(), 0);
    }

    proptest! {
        #[test]
        fn symmetric_counts_everything(data in prop::collection::vec(-100.0..100.0f64, 0..200)) {
            let h = Histogram::symmetric(&data, 50);
            prop_assert_eq!(h.n_samples(), data.len());
            prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
            // Edges cover the data range and are symmetric about zero.
            let m: f64 = data.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            if m > 0.0 {
                prop_assert!(h.edges[0] <= -m + 1e-12);
                prop_assert!(*h.edges.last().unwrap() >= m - 1e-12);
            }
            prop_assert!((h.edges[0] + h.edges.last().unwrap()).abs() < 1e-12);
        }

        #[test]
        fn centered_counts_everything(
            data in prop::collection::vec(-10.0..10.0f64, 1..200),
            width in 0.01..1.0f64,
        ) {
            let h = Histogram::centered(&data, width);
            prop_assert_eq!(h.n_samples(), data.len());
            let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(h.edges[0] <= lo + 1e-12);
            prop_assert!(*h.edges.last().unwrap() >= hi - 1e-12);
        }
    }
}
