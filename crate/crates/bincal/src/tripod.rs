//! Conversions between the three uncertainty objects for binary
//! classification: calibrated predictions, confidence intervals for the
//! conditional label mean, and prediction sets over `{0, 1}`.
//!
//! A prediction with radius `eps` yields the interval
//! `[p - eps, p + eps]`; an interval yields a corrected predictor at its
//! midpoint (with half-width as the new radius); and an interval yields a
//! prediction set by intersecting with `{0, 1}`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binning::check_score;
use crate::error::{Error, Result};

/// A closed subinterval of `[0, 1]`. Construction clips to the unit
/// interval, so `lower <= upper` and both endpoints stay in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidParameter(format!(
                "[{lower}, {upper}] is not an interval"
            )));
        }
        Ok(Self {
            lower: lower.clamp(0.0, 1.0),
            upper: upper.clamp(0.0, 1.0),
        })
    }

    /// `[center - radius, center + radius]` clipped to `[0, 1]`.
    pub fn around(center: f64, radius: f64) -> Result<Self> {
        if radius < 0.0 || radius.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "radius must be nonnegative, got {radius}"
            )));
        }
        Self::new(center - radius, center + radius)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        (self.lower + self.upper) / 2.0
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// A subset of `{0, 1}` encoded as two membership flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub contains_zero: bool,
    pub contains_one: bool,
}

impl PredictionSet {
    /// Width of the convex hull: 1 iff both labels are present, else 0.
    pub fn diameter(&self) -> f64 {
        if self.contains_zero && self.contains_one {
            1.0
        } else {
            0.0
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.contains_zero && !self.contains_one
    }
}

impl fmt::Display for PredictionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.contains_zero, self.contains_one) {
            (false, false) => write!(f, "{{}}"),
            (true, false) => write!(f, "{{0}}"),
            (false, true) => write!(f, "{{1}}"),
            (true, true) => write!(f, "{{0,1}}"),
        }
    }
}

/// Interval induced by a calibrated prediction and its radius.
pub fn calibrator_to_ci(prediction: f64, epsilon: f64) -> Result<Interval> {
    check_score(prediction)?;
    Interval::around(prediction, epsilon)
}

/// Midpoint predictor and half-width of an interval. Aggregating the
/// half-widths (sup over the score range) gives the corrected predictor's
/// calibration radius; that aggregation is the caller's.
pub fn ci_to_calibrator(interval: Interval) -> (f64, f64) {
    (interval.midpoint(), interval.half_width())
}

/// Intersection of an interval with `{0, 1}`. The result may be empty.
pub fn ci_to_prediction_set(interval: Interval) -> PredictionSet {
    PredictionSet {
        contains_zero: interval.contains(0.0),
        contains_one: interval.contains(1.0),
    }
}
