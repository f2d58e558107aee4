//! Distribution-free post-hoc calibration for binary classifiers.
//!
//! The crate fits histogram-binning calibrators whose per-bin confidence
//! intervals hold with finite samples and no distributional assumptions, in
//! three regimes: a fixed calibration batch, a growing stream (time-uniform
//! intervals), and a covariate-shifted target domain (importance-weighted
//! estimators, with a uLSIF likelihood-ratio estimator when the ratio is
//! unknown). Conversions between calibrated predictions, confidence
//! intervals and prediction sets live in [`tripod`]; reliability diagrams
//! and calibration error in [`evaluation`]; reproducible synthetic
//! experiments in [`simlab`].

pub mod batch;
pub mod binning;
pub mod density_ratio;
pub mod error;
pub mod evaluation;
pub mod shift;
pub mod simlab;
pub mod stream;
pub mod tripod;

pub use batch::{bernstein_radius, hoeffding_min_count_bound, CalibratorModel};
pub use binning::{BinningKind, BinningScheme};
pub use error::{Error, Result};
pub use evaluation::{coverage_rate, reliability, ReliabilityReport};
pub use shift::{shift_deviation_radius, ShiftModel};
pub use stream::{StreamBinState, StreamCalibrator, StreamMode};
pub use tripod::{Interval, PredictionSet};
