//! Partitions of the score range `[0, 1]` into `B` intervals.
//!
//! Two constructions are provided: fixed-width bins and uniform-mass bins
//! whose interior edges are empirical quantiles of a calibration score
//! sample. Intervals are half-open `[e_{b-1}, e_b)` with the last bin closed
//! at 1, so every score in `[0, 1]` maps to exactly one bin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a scheme's edges were constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinningKind {
    FixedWidth,
    UniformMass,
}

/// An ordered partition of `[0, 1]` into `bin_count` intervals.
///
/// Invariants: `edges` is strictly increasing with `edges[0] == 0`,
/// `edges[bin_count] == 1`, and exactly `bin_count + 1` entries. Schemes are
/// immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme")]
pub struct BinningScheme {
    kind: BinningKind,
    bin_count: usize,
    edges: Vec<f64>,
}

#[derive(Deserialize)]
struct RawScheme {
    kind: BinningKind,
    bin_count: usize,
    edges: Vec<f64>,
}

impl TryFrom<RawScheme> for BinningScheme {
    type Error = Error;

    fn try_from(raw: RawScheme) -> Result<Self> {
        if raw.edges.len() != raw.bin_count + 1 {
            return Err(Error::InvalidInput(format!(
                "scheme with {} bins must carry {} edges, got {}",
                raw.bin_count,
                raw.bin_count + 1,
                raw.edges.len()
            )));
        }
        BinningScheme::from_edges(raw.kind, raw.edges)
    }
}

impl BinningScheme {
    fn from_edges(kind: BinningKind, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidParameter(
                "a scheme needs at least one bin".into(),
            ));
        }
        if edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "edges must start at 0 and end at 1, got [{}, {}]",
                edges[0],
                edges.last().unwrap()
            )));
        }
        for w in edges.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::DegeneratePartition(format!(
                    "edges {} and {} collide",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self {
            kind,
            bin_count: edges.len() - 1,
            edges,
        })
    }

    /// Scheme with edges `(0, 1/B, 2/B, ..., 1)`.
    pub fn fixed_width(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("bin count must be >= 1".into()));
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Self::from_edges(BinningKind::FixedWidth, edges)
    }

    /// Scheme whose interior edges are the empirical `j/B` quantiles of
    /// `scores`, computed as the `ceil(j * n / B)`-th order statistic.
    ///
    /// Ties among the quantiles would collapse a bin to zero width; that is
    /// reported as a degenerate partition rather than silently merged.
    pub fn uniform_mass(scores: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("bin count must be >= 1".into()));
        }
        if scores.len() < bins {
            return Err(Error::InvalidInput(format!(
                "need at least {} scores for {} bins, got {}",
                bins,
                bins,
                scores.len()
            )));
        }
        for &s in scores {
            check_score(s)?;
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let mut edges = Vec::with_capacity(bins + 1);
        edges.push(0.0);
        for j in 1..bins {
            // ceil(j*n/B) as a 1-based order statistic.
            let rank = (j * n).div_ceil(bins);
            edges.push(sorted[rank - 1]);
        }
        edges.push(1.0);
        for w in edges.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::DegeneratePartition(format!(
                    "quantiles {} and {} collide; reduce the bin count",
                    w[0], w[1]
                )));
            }
        }
        let scheme = Self::from_edges(BinningKind::UniformMass, edges)?;
        // Tied scores can leave a bin with none of the construction mass
        // even when the edges stay distinct; that bin cannot carry its
        // 1/B share and the partition is degenerate.
        for (bin, &c) in scheme.counts(&sorted)?.iter().enumerate() {
            if c == 0 {
                let (lo, hi) = scheme.interval(bin);
                return Err(Error::DegeneratePartition(format!(
                    "quantile ties leave bin [{lo}, {hi}) without mass; reduce the bin count"
                )));
            }
        }
        Ok(scheme)
    }

    pub fn kind(&self) -> BinningKind {
        self.kind
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Endpoints `(e_b, e_{b+1})` of bin `b` (0-based).
    pub fn interval(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }

    /// The unique 0-based bin containing `score`.
    ///
    /// Interior boundaries belong to the bin they open: `[e_b, e_{b+1})`,
    /// with the last bin closed at 1.
    pub fn assign(&self, score: f64) -> Result<usize> {
        check_score(score)?;
        let interior = &self.edges[1..self.bin_count];
        Ok(interior.partition_point(|&e| e <= score))
    }

    /// Number of scores per bin.
    pub fn counts(&self, scores: &[f64]) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; self.bin_count];
        for &s in scores {
            counts[self.assign(s)?] += 1;
        }
        Ok(counts)
    }

    /// Checks that each bin's empirical frequency lies in
    /// `[1/(beta*B), beta/B]`, per-bin and overall.
    pub fn well_balanced(&self, scores: &[f64], beta: f64) -> Result<BalanceReport> {
        if scores.is_empty() {
            return Err(Error::InvalidInput("no scores to balance-check".into()));
        }
        if !(beta >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be >= 1, got {beta}"
            )));
        }
        let counts = self.counts(scores)?;
        let n = scores.len() as f64;
        let b = self.bin_count as f64;
        let (lo, hi) = (1.0 / (beta * b), beta / b);
        let per_bin: Vec<bool> = counts
            .iter()
            .map(|&c| {
                let freq = c as f64 / n;
                lo <= freq && freq <= hi
            })
            .collect();
        let all = per_bin.iter().all(|&ok| ok);
        Ok(BalanceReport { per_bin, all })
    }
}

/// Outcome of a well-balancedness check.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub per_bin: Vec<bool>,
    pub all: bool,
}

pub(crate) fn check_score(score: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::OutOfDomain(score));
    }
    Ok(())
}
