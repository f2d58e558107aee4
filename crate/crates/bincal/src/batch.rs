//! Batch histogram-binning calibration with finite-sample per-bin intervals.
//!
//! Fitting replaces each bin's score with the bin's empirical label mean.
//! Each bin also carries an empirical-Bernstein radius valid simultaneously
//! across all bins with probability `1 - alpha`:
//!
//! ```text
//! radius = sqrt(2 * var * ln(3B/alpha) / count) + 3 * ln(3B/alpha) / count
//! ```
//!
//! The worst radius over nonempty bins is the model's calibration radius.

use serde::{Deserialize, Serialize};

use crate::binning::BinningScheme;
use crate::error::{Error, Result};
use crate::tripod::Interval;

/// Count, empirical mean and empirical variance of the labels in one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Per-bin estimate as serialized: empty bins keep `count = 0` and `null`
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEstimate {
    pub count: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub radius: Option<f64>,
}

impl BinEstimate {
    fn empty() -> Self {
        Self {
            count: 0,
            mean: None,
            variance: None,
            radius: None,
        }
    }
}

/// Empirical-Bernstein radius for one bin, simultaneous over `bins` bins at
/// level `alpha`. Decreasing in `count`; the variance term adapts, giving
/// `O(1/count)` widths in near-homogeneous bins.
pub fn bernstein_radius(variance: f64, count: usize, bins: usize, alpha: f64) -> Result<f64> {
    if count == 0 {
        return Err(Error::UndefinedBin);
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("bin count must be >= 1".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(variance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    let n = count as f64;
    let log_term = (3.0 * bins as f64 / alpha).ln();
    Ok((2.0 * variance * log_term / n).sqrt() + 3.0 * log_term / n)
}

/// Lower bound on the smallest bin count after uniform-mass binning:
/// `n/(2B) - sqrt(n * ln(2B/alpha) / 2)`. May be negative; callers clamp.
pub fn hoeffding_min_count_bound(n: usize, bins: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    let b = bins as f64;
    nf / (2.0 * b) - (nf * (2.0 * b / alpha).ln() / 2.0).sqrt()
}

/// A fitted binned calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorModel {
    scheme: BinningScheme,
    alpha: f64,
    bins: Vec<BinEstimate>,
}

impl CalibratorModel {
    /// Fit per-bin label means, variances and radii on a calibration set.
    ///
    /// Bins that receive no data are kept but flagged empty; predicting into
    /// them errors.
    pub fn fit(
        scheme: BinningScheme,
        scores: &[f64],
        labels: &[u8],
        alpha: f64,
    ) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::InvalidInput(
                "empty calibration set: every bin would be empty".into(),
            ));
        }
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        check_labels(labels)?;
        let b = scheme.bin_count();
        let mut count = vec![0usize; b];
        let mut sum = vec![0u64; b];
        let mut assigned = Vec::with_capacity(scores.len());
        for (&s, &y) in scores.iter().zip(labels) {
            let bin = scheme.assign(s)?;
            count[bin] += 1;
            sum[bin] += u64::from(y);
            assigned.push(bin);
        }
        let means: Vec<f64> = (0..b)
            .map(|i| {
                if count[i] == 0 {
                    f64::NAN
                } else {
                    sum[i] as f64 / count[i] as f64
                }
            })
            .collect();
        let mut sq_dev = vec![0.0f64; b];
        for (&bin, &y) in assigned.iter().zip(labels) {
            let d = f64::from(y) - means[bin];
            sq_dev[bin] += d * d;
        }
        let bins: Vec<BinEstimate> = (0..b)
            .map(|i| {
                if count[i] == 0 {
                    return Ok(BinEstimate::empty());
                }
                let variance = sq_dev[i] / count[i] as f64;
                let radius = bernstein_radius(variance, count[i], b, alpha)?;
                Ok(BinEstimate {
                    count: count[i],
                    mean: Some(means[i]),
                    variance: Some(variance),
                    radius: Some(radius),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            scheme,
            alpha,
            bins,
        })
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bins(&self) -> &[BinEstimate] {
        &self.bins
    }

    pub fn bin_stats(&self, bin: usize) -> Result<BinStats> {
        let est = self.bins.get(bin).ok_or(Error::EmptyBin(bin))?;
        match (est.mean, est.variance) {
            (Some(mean), Some(variance)) => Ok(BinStats {
                count: est.count,
                mean,
                variance,
            }),
            _ => Err(Error::EmptyBin(bin)),
        }
    }

    /// Calibrated probability for a score: the assigned bin's label mean.
    pub fn predict(&self, score: f64) -> Result<f64> {
        let bin = self.scheme.assign(score)?;
        self.bins[bin].mean.ok_or(Error::EmptyBin(bin))
    }

    /// `[mean - radius, mean + radius]` for one bin, clipped to `[0, 1]`.
    pub fn bin_interval(&self, bin: usize) -> Result<Interval> {
        if bin >= self.bins.len() {
            return Err(Error::EmptyBin(bin));
        }
        let est = &self.bins[bin];
        match (est.mean, est.radius) {
            (Some(mean), Some(radius)) => Interval::around(mean, radius),
            _ => Err(Error::EmptyBin(bin)),
        }
    }

    /// Prediction plus its bin interval.
    pub fn predict_interval(&self, score: f64) -> Result<(f64, Interval)> {
        let bin = self.scheme.assign(score)?;
        let mean = self.bins[bin].mean.ok_or(Error::EmptyBin(bin))?;
        Ok((mean, self.bin_interval(bin)?))
    }

    /// Worst-case radius over nonempty bins: the model's calibration radius.
    pub fn epsilon_star(&self) -> Option<f64> {
        self.bins
            .iter()
            .filter_map(|b| b.radius)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// Radius evaluated at the nonempty bin with the fewest calibration
    /// points (ties broken toward the lowest index). Can be smaller than
    /// [`epsilon_star`](Self::epsilon_star) when variances differ across
    /// bins; both are reported.
    pub fn epsilon_min_count(&self) -> Option<f64> {
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .min_by_key(|b| b.count)
            .and_then(|b| b.radius)
    }
}

pub(crate) fn check_labels(labels: &[u8]) -> Result<()> {
    for (i, &y) in labels.iter().enumerate() {
        if y > 1 {
            return Err(Error::InvalidInput(format!(
                "label {y} at index {i} is not binary"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernstein_radius_hand_values() {
        let r = bernstein_radius(0.0, 100, 3, 0.3).unwrap();
        assert!((r - 0.10203592144986466).abs() < 1e-12);
        let r = bernstein_radius(0.25, 100, 3, 0.3).unwrap();
        assert!((r - 0.23244292627825103).abs() < 1e-12);
    }

    #[test]
    fn bernstein_radius_limits() {
        let r = bernstein_radius(0.0, 1_000_000_000, 3, 0.3).unwrap();
        assert!(r < 1e-7);
        assert!(matches!(
            bernstein_radius(0.1, 0, 3, 0.3),
            Err(Error::UndefinedBin)
        ));
    }

    #[test]
    fn bernstein_radius_monotone_in_count() {
        let r1 = bernstein_radius(0.2, 50, 10, 0.1).unwrap();
        let r2 = bernstein_radius(0.2, 100, 10, 0.1).unwrap();
        assert!(r2 < r1);
    }

    #[test]
    fn fit_constant_and_balanced_labels() {
        let scheme = BinningScheme::fixed_width(1).unwrap();
        let m = CalibratorModel::fit(scheme.clone(), &[0.1, 0.4, 0.6, 0.9], &[1, 1, 1, 1], 0.1)
            .unwrap();
        let s = m.bin_stats(0).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);

        let m =
            CalibratorModel::fit(scheme, &[0.1, 0.4, 0.6, 0.9], &[1, 0, 1, 0], 0.1).unwrap();
        let s = m.bin_stats(0).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.variance, 0.25);
    }

    #[test]
    fn fit_two_bins_hand_example() {
        let scheme = BinningScheme::fixed_width(2).unwrap();
        let m = CalibratorModel::fit(
            scheme,
            &[0.1, 0.2, 0.8, 0.9],
            &[0, 1, 1, 1],
            0.1,
        )
        .unwrap();
        let b0 = m.bin_stats(0).unwrap();
        assert_eq!((b0.count, b0.mean, b0.variance), (2, 0.5, 0.25));
        let b1 = m.bin_stats(1).unwrap();
        assert_eq!((b1.count, b1.mean, b1.variance), (2, 1.0, 0.0));

        assert_eq!(m.predict(0.15).unwrap(), 0.5);
        assert_eq!(m.predict(0.95).unwrap(), 1.0);
        assert!(matches!(m.predict(1.2), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let scheme = BinningScheme::fixed_width(2).unwrap();
        assert!(matches!(
            CalibratorModel::fit(scheme.clone(), &[], &[], 0.1),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            CalibratorModel::fit(scheme.clone(), &[0.5], &[1, 0], 0.1),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            CalibratorModel::fit(scheme, &[0.5], &[2], 0.1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn empty_bin_prediction_errors() {
        let scheme = BinningScheme::fixed_width(2).unwrap();
        let m = CalibratorModel::fit(scheme, &[0.1, 0.2], &[0, 1], 0.1).unwrap();
        assert!(matches!(m.predict(0.9), Err(Error::EmptyBin(1))));
        assert!(matches!(m.bin_interval(1), Err(Error::EmptyBin(1))));
        assert_eq!(m.predict(0.4).unwrap(), 0.5);
    }

    #[test]
    fn bin_interval_clips() {
        let scheme = BinningScheme::fixed_width(2).unwrap();
        // 100 all-one labels in bin 1 give a zero-variance radius
        // 3 ln(20)/100, so the interval clips only at the top.
        let mut scores = vec![0.25, 0.25];
        let mut labels = vec![0u8, 1];
        scores.extend(std::iter::repeat(0.75).take(100));
        labels.extend(std::iter::repeat(1u8).take(100));
        let m = CalibratorModel::fit(scheme, &scores, &labels, 0.3).unwrap();
        let iv = m.bin_interval(1).unwrap();
        assert_eq!(iv.upper(), 1.0);
        let r1 = bernstein_radius(0.0, 100, 2, 0.3).unwrap();
        assert!((iv.lower() - (1.0 - r1)).abs() < 1e-15);
        // Bin 0: two balanced labels give a radius past 1; full clipping.
        let iv = m.bin_interval(0).unwrap();
        assert_eq!((iv.lower(), iv.upper()), (0.0, 1.0));
    }

    #[test]
    fn hoeffding_bound_hand_values() {
        let v = hoeffding_min_count_bound(10_000, 10, 0.1);
        assert!((v - 337.2376369281271).abs() < 1e-9);
        assert!(hoeffding_min_count_bound(1, 10, 0.1) < 0.0);
        // Dominant term is n/2B for large n.
        let v = hoeffding_min_count_bound(100_000_000, 10, 0.1);
        assert!((v / (100_000_000.0 / 20.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn epsilon_star_is_max_and_min_count_variant() {
        let scheme = BinningScheme::fixed_width(2).unwrap();
        // Bin 0: 100 balanced labels (max variance); bin 1: 80 all-one
        // labels (zero variance). The smallest-count bin is 1, but bin 0's
        // radius is larger because of its variance term.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            scores.push(0.25);
            labels.push((i % 2) as u8);
        }
        for _ in 0..80 {
            scores.push(0.75);
            labels.push(1u8);
        }
        let m = CalibratorModel::fit(scheme, &scores, &labels, 0.1).unwrap();
        let r0 = m.bins()[0].radius.unwrap();
        let r1 = m.bins()[1].radius.unwrap();
        assert!(r0 > r1);
        assert_eq!(m.epsilon_star().unwrap(), r0);
        assert_eq!(m.epsilon_min_count().unwrap(), r1);
    }

    #[test]
    fn model_json_schema() {
        let scheme = BinningScheme::fixed_width(2).unwrap();
        let m = CalibratorModel::fit(scheme, &[0.1, 0.2], &[0, 1], 0.1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert!(v.get("scheme").is_some());
        assert_eq!(v["alpha"], 0.1);
        assert_eq!(v["bins"][1]["count"], 0);
        assert!(v["bins"][1]["mean"].is_null());
        let back: CalibratorModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
