//! Binned calibration on a shifted target domain via importance weights.
//!
//! With likelihood-ratio weights `w` bounded in `[L, U]`, the self-normalized
//! per-bin estimator
//!
//! ```text
//! weighted_mean_b = sum_b(w * y) / sum_b(w)
//! ```
//!
//! estimates the *target* conditional label mean of the bin from *source*
//! labels. Its simultaneous deviation bound scales as
//! `c (U/L)^2 sqrt(B ln(6B/alpha) / 2n)`. Two comparison estimators are also
//! provided: the oracle relative-mass form (with its own per-bin
//! empirical-Bernstein radius) and the frequency-ratio relative mass, which
//! needs extra unlabeled data and behaves worse in practice.

use serde::{Deserialize, Serialize};

use crate::batch::check_labels;
use crate::binning::BinningScheme;
use crate::error::{Error, Result};

/// Per-bin quantities of a weighted fit. Bins that received no calibration
/// data keep `None` statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftBin {
    pub count: usize,
    /// Self-normalized weighted label mean (the target-domain estimate).
    pub weighted_mean: Option<f64>,
    /// Mean importance weight in the bin.
    pub weight_mean: Option<f64>,
    /// Relative source/target mass of the bin: inverse of the mean weight.
    pub rel_mass: Option<f64>,
}

/// A weighted binned calibrator for a covariate-shifted target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftModel {
    scheme: BinningScheme,
    alpha: f64,
    n: usize,
    lower: f64,
    upper: f64,
    bins: Vec<ShiftBin>,
}

impl ShiftModel {
    /// Fit the self-normalized weighted estimator per bin.
    ///
    /// Every weight must lie in `[lower, upper]` with
    /// `0 < lower <= 1 <= upper`. Empty bins are flagged, not errors;
    /// prediction into them errors.
    pub fn fit_weighted(
        scheme: BinningScheme,
        scores: &[f64],
        labels: &[u8],
        weights: &[f64],
        alpha: f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        if scores.len() != labels.len() || scores.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores vs {} labels vs {} weights",
                scores.len(),
                labels.len(),
                weights.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::InvalidInput("empty calibration set".into()));
        }
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(0.0 < lower && lower <= 1.0 && 1.0 <= upper) {
            return Err(Error::InvalidParameter(format!(
                "weight bounds must satisfy 0 < L <= 1 <= U, got L={lower}, U={upper}"
            )));
        }
        check_labels(labels)?;
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= lower && w <= upper) {
                return Err(Error::BoundsViolation {
                    index: i,
                    weight: w,
                    lower,
                    upper,
                });
            }
        }
        let b = scheme.bin_count();
        let mut count = vec![0usize; b];
        let mut w_sum = vec![0.0f64; b];
        let mut wy_sum = vec![0.0f64; b];
        for ((&s, &y), &w) in scores.iter().zip(labels).zip(weights) {
            let bin = scheme.assign(s)?;
            count[bin] += 1;
            w_sum[bin] += w;
            wy_sum[bin] += w * f64::from(y);
        }
        let bins = (0..b)
            .map(|i| {
                if count[i] == 0 {
                    return Ok(ShiftBin {
                        count: 0,
                        weighted_mean: None,
                        weight_mean: None,
                        rel_mass: None,
                    });
                }
                if w_sum[i] <= 0.0 {
                    return Err(Error::DegenerateBin {
                        bin: i,
                        reason: format!("weight sum {} is not positive", w_sum[i]),
                    });
                }
                let weight_mean = w_sum[i] / count[i] as f64;
                Ok(ShiftBin {
                    count: count[i],
                    weighted_mean: Some(wy_sum[i] / w_sum[i]),
                    weight_mean: Some(weight_mean),
                    rel_mass: Some(1.0 / weight_mean),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scheme,
            alpha,
            n: scores.len(),
            lower,
            upper,
            bins,
        })
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn bins(&self) -> &[ShiftBin] {
        &self.bins
    }

    /// Target-domain calibrated probability for a score.
    pub fn predict(&self, score: f64) -> Result<f64> {
        let bin = self.scheme.assign(score)?;
        self.bins[bin].weighted_mean.ok_or(Error::EmptyBin(bin))
    }

    /// Simultaneous deviation radius for this model's parameters.
    pub fn radius(&self, c_const: f64) -> f64 {
        shift_deviation_radius(
            self.lower,
            self.upper,
            self.scheme.bin_count(),
            self.n,
            self.alpha,
            c_const,
        )
    }

    /// Whether the fit's sample size meets the bound's precondition.
    pub fn sample_size_ok(&self, c_const: f64) -> bool {
        shift_sample_size_ok(
            self.lower,
            self.upper,
            self.scheme.bin_count(),
            self.n,
            self.alpha,
            c_const,
        )
    }
}

/// `c (U/L)^2 sqrt(B ln(6B/alpha) / 2n)`.
pub fn shift_deviation_radius(
    lower: f64,
    upper: f64,
    bins: usize,
    n: usize,
    alpha: f64,
    c_const: f64,
) -> f64 {
    let ratio = upper / lower;
    c_const * ratio * ratio * (bins as f64 * (6.0 * bins as f64 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sample-size precondition `n >= c (U/L)^2 B ln^2(6B/alpha)` with the same
/// constant.
pub fn shift_sample_size_ok(
    lower: f64,
    upper: f64,
    bins: usize,
    n: usize,
    alpha: f64,
    c_const: f64,
) -> bool {
    let ratio = upper / lower;
    let log = (6.0 * bins as f64 / alpha).ln();
    n as f64 >= c_const * ratio * ratio * bins as f64 * log * log
}

/// One bin of the oracle relative-mass estimator. `mean` is reported
/// unclipped (it can exceed 1 with oracle masses); use
/// [`mean_clipped`](Self::mean_clipped) when a probability is required.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleWeightedBin {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub radius: f64,
}

impl OracleWeightedBin {
    pub fn mean_clipped(&self) -> f64 {
        self.mean.clamp(0.0, 1.0)
    }
}

/// Per-bin estimator `mean_b = (1/N_b) sum_b m_b w y` given oracle relative
/// masses, with radius
/// `sqrt(2 V ln(3B/alpha) / N) + 3 m_b U ln(3B/alpha) / N` where `V` is the
/// empirical variance of the products `m_b w y`.
pub fn fit_oracle_weighted(
    scheme: &BinningScheme,
    scores: &[f64],
    labels: &[u8],
    weights: &[f64],
    rel_mass: &[f64],
    alpha: f64,
    upper: f64,
) -> Result<Vec<Option<OracleWeightedBin>>> {
    if scores.len() != labels.len() || scores.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores vs {} labels vs {} weights",
            scores.len(),
            labels.len(),
            weights.len()
        )));
    }
    let b = scheme.bin_count();
    if rel_mass.len() != b {
        return Err(Error::InvalidInput(format!(
            "need {} relative masses, got {}",
            b,
            rel_mass.len()
        )));
    }
    if rel_mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidParameter(
            "relative masses must be positive".into(),
        ));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(upper >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "weight cap must be >= 1, got {upper}"
        )));
    }
    check_labels(labels)?;
    for (i, &w) in weights.iter().enumerate() {
        if !(w >= 0.0 && w <= upper) {
            return Err(Error::BoundsViolation {
                index: i,
                weight: w,
                lower: 0.0,
                upper,
            });
        }
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); b];
    for ((&s, &y), &w) in scores.iter().zip(labels).zip(weights) {
        let bin = scheme.assign(s)?;
        per_bin[bin].push(rel_mass[bin] * w * f64::from(y));
    }
    let log_term = (3.0 * b as f64 / alpha).ln();
    Ok(per_bin
        .into_iter()
        .enumerate()
        .map(|(i, products)| {
            if products.is_empty() {
                return None;
            }
            let n = products.len() as f64;
            let mean = products.iter().sum::<f64>() / n;
            let variance = products.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
            let radius =
                (2.0 * variance * log_term / n).sqrt() + 3.0 * rel_mass[i] * upper * log_term / n;
            Some(OracleWeightedBin {
                count: products.len(),
                mean,
                variance,
                radius,
            })
        })
        .collect())
}

/// Relative masses from unlabeled source/target bin counts:
/// `(count_s/n_s) / (count_t/n_t)`. Provided for comparison; the inverse
/// mean-weight estimator is the recommended route, and empty target bins
/// make this one blow up.
pub fn alt_rel_mass(source_counts: &[usize], target_counts: &[usize]) -> Result<Vec<f64>> {
    if source_counts.len() != target_counts.len() {
        return Err(Error::InvalidInput(format!(
            "{} source bins vs {} target bins",
            source_counts.len(),
            target_counts.len()
        )));
    }
    let n_s: usize = source_counts.iter().sum();
    let n_t: usize = target_counts.iter().sum();
    if n_s == 0 || n_t == 0 {
        return Err(Error::InvalidInput("empty unlabeled sample".into()));
    }
    source_counts
        .iter()
        .zip(target_counts)
        .enumerate()
        .map(|(i, (&cs, &ct))| {
            if ct == 0 {
                return Err(Error::DegenerateBin {
                    bin: i,
                    reason: "no unlabeled target points".into(),
                });
            }
            Ok((cs as f64 / n_s as f64) / (ct as f64 / n_t as f64))
        })
        .collect()
}
