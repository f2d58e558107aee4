//! Streaming per-bin label statistics with time-uniform intervals.
//!
//! Each bin keeps a running count, sum, mean and the cumulative
//! (unnormalized) squared deviation of each arriving label from the mean
//! *before* that label. Two interval constructions are offered, both valid
//! simultaneously over all bins and all stream lengths with probability
//! `1 - alpha`:
//!
//! * `ClosedForm` — the citable closed form
//!   `(7 * sqrt(v * ln(1 + ln v)) + 5.3 * ln(6.3 B / alpha)) / count`
//!   with `v = max(1, cumulative variance)`;
//! * `Stitched` — the tighter polynomial-stitching boundary it was derived
//!   from, evaluated at the per-bin level `alpha / (2B)`.
//!
//! The closed form upper-bounds the stitched radius everywhere, so
//! `Stitched` is the sharper choice and `ClosedForm` the quotable one.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::binning::BinningScheme;
use crate::error::{Error, Result};
use crate::tripod::Interval;

/// Riemann zeta by partial summation with an Euler–Maclaurin tail, accurate
/// to well below 1e-12 for `s > 1`.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta series requires s > 1");
    let cutoff = 1_000_000u64;
    let mut sum = 0.0;
    // Summing ascending keeps the small tail terms from being absorbed.
    for n in (1..=cutoff).rev() {
        sum += (n as f64).powf(-s);
    }
    let n = cutoff as f64;
    sum + n.powf(1.0 - s) / (s - 1.0) - 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0)
}

static ZETA_1_4: LazyLock<f64> = LazyLock::new(|| riemann_zeta(1.4));

/// Running state for one bin's label stream. Single-writer; queries may run
/// concurrently with no writer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamBinState {
    count: u64,
    sum: u64,
    mean: f64,
    cum_var_raw: f64,
}

impl StreamBinState {
    /// Fresh state. The predictable centering sequence starts at 1/2, the
    /// minimax choice for binary labels, so the first observation always
    /// contributes 0.25 to the raw variance.
    pub fn new() -> Self {
        Self {
            count: 0,
            sum: 0,
            mean: 0.5,
            cum_var_raw: 0.0,
        }
    }

    /// Absorb one label. The squared deviation is taken against the mean
    /// before this update, keeping the accumulator exactly replayable.
    pub fn update(&mut self, label: u8) -> Result<()> {
        if label > 1 {
            return Err(Error::InvalidInput(format!("label {label} is not binary")));
        }
        let y = f64::from(label);
        let d = y - self.mean;
        self.cum_var_raw += d * d;
        self.count += 1;
        self.sum += u64::from(label);
        self.mean = self.sum as f64 / self.count as f64;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }

    /// Running label mean; 1/2 by convention before the first observation.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Raw cumulative squared deviation, before the `max(1, .)` floor.
    pub fn cum_var_raw(&self) -> f64 {
        self.cum_var_raw
    }

    /// Floored variance process used by every boundary: `max(1, raw)`.
    pub fn v_plus(&self) -> f64 {
        self.cum_var_raw.max(1.0)
    }
}

impl Default for StreamBinState {
    fn default() -> Self {
        Self::new()
    }
}

/// Parameters of the polynomial stitching boundary, fixed to the instance
/// `eta = e`, `s = 1.4`, `m = 1`, scale `c = 1`, with the level split
/// `alpha / (2B)` across bins and interval sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StitchingParams {
    pub eta: f64,
    pub s: f64,
    pub m: f64,
    pub c: f64,
    pub k1: f64,
    pub k2: f64,
    pub zeta_s: f64,
    pub alpha_per_bin: f64,
}

impl StitchingParams {
    pub fn new(bins: usize, alpha: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("bin count must be >= 1".into()));
        }
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let eta = std::f64::consts::E;
        Ok(Self {
            eta,
            s: 1.4,
            m: 1.0,
            c: 1.0,
            k1: (eta.powf(0.25) + eta.powf(-0.25)) / 2f64.sqrt(),
            k2: (eta.sqrt() + 1.0) / 2f64.sqrt(),
            zeta_s: *ZETA_1_4,
            alpha_per_bin: alpha / (2.0 * bins as f64),
        })
    }

    /// `l(v) = s * ln(ln_eta(v/m) + 1) + ln(zeta(s) / alpha_per_bin)`.
    fn log_term(&self, v: f64) -> f64 {
        let epochs = (v / self.m).ln() / self.eta.ln();
        self.s * (epochs + 1.0).ln() + (self.zeta_s / self.alpha_per_bin).ln()
    }
}

/// The stitched uniform boundary
/// `sqrt(k1^2 * v * l(v) + k2^2 * c^2 * l(v)^2) + k2 * c * l(v)`.
///
/// Callers pass `v` already floored at `m` (the boundary is used as
/// `S(max(v, m))`). Strictly increasing in `v`.
pub fn stitched_boundary(v: f64, params: &StitchingParams) -> Result<f64> {
    if !(v >= params.m) {
        return Err(Error::InvalidParameter(format!(
            "boundary evaluated below its floor: v = {v} < m = {}",
            params.m
        )));
    }
    let l = params.log_term(v);
    let c = params.c;
    Ok((params.k1 * params.k1 * v * l + params.k2 * params.k2 * c * c * l * l).sqrt()
        + params.k2 * c * l)
}

/// Interval construction to use at query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    ClosedForm,
    Stitched,
}

/// Closed-form time-uniform radius
/// `(7 sqrt(v ln(1 + ln v)) + 5.3 ln(6.3 B / alpha)) / count`.
pub fn closed_form_radius(state: &StreamBinState, bins: usize, alpha: f64) -> Result<f64> {
    if state.count() == 0 {
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
    let v = state.v_plus();
    let n = state.count() as f64;
    Ok((7.0 * (v * (1.0 + v.ln()).ln()).sqrt() + 5.3 * (6.3 * bins as f64 / alpha).ln()) / n)
}

/// Stitched-boundary radius at the same simultaneous level.
pub fn stitched_radius(state: &StreamBinState, bins: usize, alpha: f64) -> Result<f64> {
    if state.count() == 0 {
        return Err(Error::UndefinedBin);
    }
    let params = StitchingParams::new(bins, alpha)?;
    let bound = stitched_boundary(state.v_plus().max(params.m), &params)?;
    Ok(bound / state.count() as f64)
}

/// `[mean - r, mean + r]` clipped to `[0, 1]`, with `r` from the chosen
/// construction.
pub fn stream_interval(
    state: &StreamBinState,
    bins: usize,
    alpha: f64,
    mode: StreamMode,
) -> Result<Interval> {
    let radius = match mode {
        StreamMode::ClosedForm => closed_form_radius(state, bins, alpha)?,
        StreamMode::Stitched => stitched_radius(state, bins, alpha)?,
    };
    Interval::around(state.mean(), radius)
}

/// Convenience wrapper tying a scheme to one stream state per bin.
#[derive(Debug, Clone)]
pub struct StreamCalibrator {
    scheme: BinningScheme,
    alpha: f64,
    states: Vec<StreamBinState>,
}

impl StreamCalibrator {
    pub fn new(scheme: BinningScheme, alpha: f64) -> Result<Self> {
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let states = vec![StreamBinState::new(); scheme.bin_count()];
        Ok(Self {
            scheme,
            alpha,
            states,
        })
    }

    /// Route one observation to its bin; returns the bin index.
    pub fn observe(&mut self, score: f64, label: u8) -> Result<usize> {
        let bin = self.scheme.assign(score)?;
        self.states[bin].update(label)?;
        Ok(bin)
    }

    pub fn state(&self, bin: usize) -> Option<&StreamBinState> {
        self.states.get(bin)
    }

    pub fn interval(&self, bin: usize, mode: StreamMode) -> Result<Interval> {
        let state = self.states.get(bin).ok_or(Error::EmptyBin(bin))?;
        stream_interval(state, self.scheme.bin_count(), self.alpha, mode)
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_hand_sequence() {
        let mut st = StreamBinState::new();
        st.update(1).unwrap();
        assert_eq!(st.count(), 1);
        assert_eq!(st.mean(), 1.0);
        assert_eq!(st.cum_var_raw(), 0.25);

        st.update(0).unwrap();
        assert_eq!(st.count(), 2);
        assert_eq!(st.mean(), 0.5);
        assert_eq!(st.cum_var_raw(), 1.25);

        let mut st = StreamBinState::new();
        st.update(0).unwrap();
        assert_eq!(st.mean(), 0.0);
        assert_eq!(st.cum_var_raw(), 0.25);

        assert!(st.update(2).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let stream: Vec<u8> = (0..500).map(|i| ((i * 7 + 3) % 5 < 2) as u8).collect();
        let mut a = StreamBinState::new();
        let mut b = StreamBinState::new();
        for &y in &stream {
            a.update(y).unwrap();
        }
        for &y in &stream {
            b.update(y).unwrap();
        }
        assert_eq!(a.mean().to_bits(), b.mean().to_bits());
        assert_eq!(a.cum_var_raw().to_bits(), b.cum_var_raw().to_bits());
    }

    #[test]
    fn zeta_value() {
        let z = riemann_zeta(1.4);
        assert!((z - 3.10554727797758).abs() < 1e-10, "zeta(1.4) = {z}");
        // basel series as a sanity anchor
        let z2 = riemann_zeta(2.0);
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn stitching_constants() {
        let p = StitchingParams::new(1, 0.05).unwrap();
        assert!((p.k1 - 1.458638394258968).abs() < 1e-12);
        assert!((p.k2 - 1.8729287719851095).abs() < 1e-12);
        assert!(p.k1 <= 1.46 && p.k2 <= 1.88);
        assert!((p.alpha_per_bin - 0.025).abs() < 1e-15);
    }

    #[test]
    fn log_term_at_floor() {
        // At v = 1 the epoch term vanishes: l(1) = ln(zeta(1.4) / (alpha/2B)).
        let p = StitchingParams::new(1, 0.05).unwrap();
        let l = p.log_term(1.0);
        assert!((l - (40.0 * *ZETA_1_4).ln()).abs() < 1e-12);
        assert!((l - 4.822069410972769).abs() < 1e-9);
    }

    #[test]
    fn stitched_boundary_monotone_and_guarded() {
        let p = StitchingParams::new(3, 0.1).unwrap();
        let s1 = stitched_boundary(1.0, &p).unwrap();
        let s2 = stitched_boundary(2.0, &p).unwrap();
        assert!(s2 > s1);
        assert!(stitched_boundary(0.5, &p).is_err());
        assert!(stitched_boundary(-1.0, &p).is_err());
    }

    #[test]
    fn closed_form_hand_values() {
        let mut st = StreamBinState::new();
        // 100 labels alternating... we need cum_var_raw <= 1: use all-zeros
        // after the first, which keeps deviations at 0 past step one.
        st.update(0).unwrap();
        for _ in 0..99 {
            st.update(0).unwrap();
        }
        assert!(st.cum_var_raw() <= 1.0);
        let r = closed_form_radius(&st, 1, 0.05).unwrap();
        assert!((r - 0.2563229410684283).abs() < 1e-12);
        assert!(matches!(
            closed_form_radius(&StreamBinState::new(), 1, 0.05),
            Err(Error::UndefinedBin)
        ));
    }

    #[test]
    fn closed_form_scales_inversely_with_count() {
        let mut a = StreamBinState::new();
        a.update(0).unwrap();
        for _ in 0..9_999 {
            a.update(0).unwrap();
        }
        let r = closed_form_radius(&a, 1, 0.05).unwrap();
        assert!((r - 0.002563229410684283).abs() < 1e-12);
    }

    #[test]
    fn single_observation_interval_is_vacuous() {
        let mut st = StreamBinState::new();
        st.update(1).unwrap();
        let iv = stream_interval(&st, 1, 0.05, StreamMode::ClosedForm).unwrap();
        assert_eq!((iv.lower(), iv.upper()), (0.0, 1.0));
    }

    #[test]
    fn stitched_dominated_by_closed_form_on_grid() {
        for &(bins, alpha) in &[(1usize, 0.1f64), (5, 0.1), (10, 0.05), (2, 0.01)] {
            let params = StitchingParams::new(bins, alpha).unwrap();
            for i in 0..50 {
                let v: f64 = 10f64.powf(i as f64 * 8.0 / 49.0); // 1 .. 1e8
                for j in 0..50 {
                    let n = 1 + j * 211;
                    let closed = (7.0 * (v * (1.0 + v.ln()).ln()).sqrt()
                        + 5.3 * (6.3 * bins as f64 / alpha).ln())
                        / n as f64;
                    let stitched = stitched_boundary(v, &params).unwrap() / n as f64;
                    assert!(
                        stitched <= closed,
                        "dominance fails at v={v}, n={n}, B={bins}, alpha={alpha}"
                    );
                }
            }
        }
    }

    #[test]
    fn calibrator_routes_and_reports() {
        let scheme = BinningScheme::fixed_width(2).unwrap();
        let mut cal = StreamCalibrator::new(scheme, 0.1).unwrap();
        assert_eq!(cal.observe(0.2, 1).unwrap(), 0);
        assert_eq!(cal.observe(0.8, 0).unwrap(), 1);
        let iv = cal.interval(0, StreamMode::Stitched).unwrap();
        assert_eq!((iv.lower(), iv.upper()), (0.0, 1.0));
        assert!(cal.interval(5, StreamMode::Stitched).is_err());
    }
}
