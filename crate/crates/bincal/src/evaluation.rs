//! Reliability diagrams and expected calibration error.
//!
//! Predictions are grouped into evaluation bins (fixed-width by default);
//! each occupied bin reports its fraction of positive labels and mean
//! predicted probability, and the l1 calibration error is the
//! mass-weighted sum of their gaps. Empty bins carry zero mass and no
//! statistics, rendered as gaps downstream.

use serde::{Deserialize, Serialize};

use crate::batch::check_labels;
use crate::binning::{check_score, BinningScheme};
use crate::error::{Error, Result};
use crate::tripod::Interval;

/// One evaluation bin of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub count: usize,
    /// Fraction of positive labels among points in the bin.
    pub fraction_positive: Option<f64>,
    /// Mean predicted probability among points in the bin.
    pub mean_predicted: Option<f64>,
    /// Share of all points falling in the bin.
    pub proportion: f64,
}

/// Reliability data plus the l1 expected calibration error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    scheme: BinningScheme,
    bins: Vec<ReliabilityBin>,
    ece: f64,
}

impl ReliabilityReport {
    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    pub fn bins(&self) -> &[ReliabilityBin] {
        &self.bins
    }

    pub fn ece(&self) -> f64 {
        self.ece
    }
}

/// Reliability report over `eval_bins` fixed-width bins.
pub fn reliability(
    predictions: &[f64],
    labels: &[u8],
    eval_bins: usize,
) -> Result<ReliabilityReport> {
    reliability_with_scheme(predictions, labels, BinningScheme::fixed_width(eval_bins)?)
}

/// Reliability report over an arbitrary scheme (e.g. uniform-mass bins for
/// diagnostics).
pub fn reliability_with_scheme(
    predictions: &[f64],
    labels: &[u8],
    scheme: BinningScheme,
) -> Result<ReliabilityReport> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions to evaluate".into()));
    }
    check_labels(labels)?;
    for &p in predictions {
        check_score(p)?;
    }
    let b = scheme.bin_count();
    let mut count = vec![0usize; b];
    let mut label_sum = vec![0u64; b];
    let mut pred_sum = vec![0.0f64; b];
    for (&p, &y) in predictions.iter().zip(labels) {
        let bin = scheme.assign(p)?;
        count[bin] += 1;
        label_sum[bin] += u64::from(y);
        pred_sum[bin] += p;
    }
    let m = predictions.len() as f64;
    let mut ece = 0.0;
    let bins: Vec<ReliabilityBin> = (0..b)
        .map(|i| {
            if count[i] == 0 {
                return ReliabilityBin {
                    count: 0,
                    fraction_positive: None,
                    mean_predicted: None,
                    proportion: 0.0,
                };
            }
            let c = count[i] as f64;
            let fp = label_sum[i] as f64 / c;
            let mp = pred_sum[i] / c;
            let proportion = c / m;
            ece += proportion * (mp - fp).abs();
            ReliabilityBin {
                count: count[i],
                fraction_positive: Some(fp),
                mean_predicted: Some(mp),
                proportion,
            }
        })
        .collect();
    Ok(ReliabilityReport { scheme, bins, ece })
}

/// Fraction of intervals containing their paired truth value.
pub fn coverage_rate(intervals: &[Interval], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} intervals vs {} truths",
            intervals.len(),
            truths.len()
        )));
    }
    if intervals.is_empty() {
        return Err(Error::InvalidInput("nothing to cover".into()));
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(iv, &t)| iv.contains(t))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_example() {
        let preds = vec![0.7; 4];
        let labels = [1, 0, 1, 0];
        let r = reliability(&preds, &labels, 1).unwrap();
        let bin = &r.bins()[0];
        assert_eq!(bin.fraction_positive.unwrap(), 0.5);
        assert!((bin.mean_predicted.unwrap() - 0.7).abs() < 1e-15);
        assert!((r.ece() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictor_has_zero_ece() {
        let preds = vec![0.5; 6];
        let labels = [1, 0, 1, 0, 1, 0];
        let r = reliability(&preds, &labels, 1).unwrap();
        assert_eq!(r.ece(), 0.0);
    }

    #[test]
    fn two_bin_hand_example() {
        let preds = [0.1, 0.1, 0.9, 0.9];
        let labels = [0, 0, 1, 1];
        let r = reliability(&preds, &labels, 2).unwrap();
        let b0 = &r.bins()[0];
        assert_eq!(b0.fraction_positive.unwrap(), 0.0);
        assert!((b0.mean_predicted.unwrap() - 0.1).abs() < 1e-15);
        let b1 = &r.bins()[1];
        assert_eq!(b1.fraction_positive.unwrap(), 1.0);
        assert!((b1.mean_predicted.unwrap() - 0.9).abs() < 1e-15);
        assert!((r.ece() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_bins_are_gaps_with_zero_mass() {
        let preds = [0.05, 0.95];
        let labels = [0, 1];
        let r = reliability(&preds, &labels, 10).unwrap();
        let occupied: Vec<usize> = r
            .bins()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.count > 0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(occupied, vec![0, 9]);
        assert!(r.bins()[4].fraction_positive.is_none());
        let mass: f64 = r.bins().iter().map(|b| b.proportion).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance() {
        let preds = [0.2, 0.4, 0.6, 0.8, 0.3];
        let labels = [0, 1, 1, 1, 0];
        let a = reliability(&preds, &labels, 4).unwrap();
        let perm = [4usize, 2, 0, 3, 1];
        let preds_p: Vec<f64> = perm.iter().map(|&i| preds[i]).collect();
        let labels_p: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
        let b = reliability(&preds_p, &labels_p, 4).unwrap();
        assert_eq!(a.ece(), b.ece());
        assert_eq!(a.bins(), b.bins());
    }

    #[test]
    fn ece_stays_in_unit_range_and_zero_only_when_aligned() {
        let mut state = 99u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let n = 5 + (next() * 200.0) as usize;
            let preds: Vec<f64> = (0..n).map(|_| next()).collect();
            let labels: Vec<u8> = (0..n).map(|_| u8::from(next() < 0.5)).collect();
            let r = reliability(&preds, &labels, 7).unwrap();
            assert!((0.0..=1.0).contains(&r.ece()));
            let aligned = r.bins().iter().all(|b| {
                b.count == 0 || (b.mean_predicted.unwrap() - b.fraction_positive.unwrap()).abs() < 1e-15
            });
            assert_eq!(r.ece() < 1e-14, aligned);
        }
    }

    #[test]
    fn coverage_rate_examples() {
        let vac = vec![Interval::new(0.0, 1.0).unwrap(); 3];
        assert_eq!(coverage_rate(&vac, &[0.1, 0.5, 0.9]).unwrap(), 1.0);
        let tight = vec![Interval::new(0.4, 0.6).unwrap(); 2];
        assert_eq!(coverage_rate(&tight, &[0.5, 0.5]).unwrap(), 1.0);
        let disjoint = [
            Interval::new(0.0, 0.4).unwrap(),
            Interval::new(0.6, 1.0).unwrap(),
        ];
        assert_eq!(coverage_rate(&disjoint, &[0.5, 0.5]).unwrap(), 0.0);
        assert!(coverage_rate(&disjoint, &[0.5]).is_err());
    }
}
