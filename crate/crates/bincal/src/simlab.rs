//! Synthetic data for the covariate-shift and adversarial experiments.
//!
//! Features are product-Beta vectors on the unit cube; source and target
//! share the label law `P(Y=1|x) = (1 + sin(omega * ||x||^2)) / 2` while the
//! per-coordinate Beta parameters shift. The closed-form likelihood ratio of
//! the two product densities is available for oracle-weighted estimators.
//!
//! The base score fed to the calibrators is deliberately imperfect twice
//! over: it sees only a truncated feature view (all coordinates but the
//! last), and its output is squared — an informative, miscalibrated score
//! whose level sets genuinely mix label probabilities, as a learned scorer's
//! would.
//!
//! Everything is driven by a seeded counter-based generator (ChaCha with an
//! explicit stream index per trial), so runs are bit-reproducible and trials
//! parallelize without coordination. Beta draws go through the inverse CDF,
//! consuming exactly one uniform each.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};

/// Configuration of the synthetic covariate-shift setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShiftConfig {
    pub dim: usize,
    /// Per-coordinate Beta parameters on the source domain.
    pub source_beta: (f64, f64),
    /// Per-coordinate Beta parameters on the target domain.
    pub target_beta: (f64, f64),
    /// Frequency of the label wave.
    pub omega: f64,
    pub seed: u64,
}

impl SyntheticShiftConfig {
    /// The reference experiment: `d = 3`, uniform source, Beta(2, 1) target,
    /// `omega = 20`.
    pub fn reference(seed: u64) -> Self {
        Self {
            dim: 3,
            source_beta: (1.0, 1.0),
            target_beta: (2.0, 1.0),
            omega: 20.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be >= 1".into()));
        }
        for (a, b) in [self.source_beta, self.target_beta] {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "Beta parameters must be positive, got ({a}, {b})"
                )));
            }
        }
        Ok(())
    }
}

/// A generated experiment sample. Target labels are drawn under the shared
/// conditional law; callers that need the target unlabeled simply ignore
/// them.
#[derive(Debug, Clone)]
pub struct ShiftSample {
    pub source_x: Vec<Vec<f64>>,
    pub source_y: Vec<u8>,
    pub target_x: Vec<Vec<f64>>,
    pub target_y: Vec<u8>,
}

/// Deterministic per-trial generator: one seed, one stream index.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF Beta draw; closed forms for the one-sided shapes, numeric
/// inversion otherwise.
fn sample_beta(rng: &mut ChaCha12Rng, a: f64, b: f64) -> f64 {
    let u: f64 = rng.gen();
    if a == 1.0 && b == 1.0 {
        u
    } else if b == 1.0 {
        u.powf(1.0 / a)
    } else if a == 1.0 {
        1.0 - (1.0 - u).powf(1.0 / b)
    } else {
        Beta::new(a, b).unwrap().inverse_cdf(u)
    }
}

/// `P(Y = 1 | x)`: half of one plus the sine of `omega * sum(x_i^2)`.
pub fn label_prob(config: &SyntheticShiftConfig, x: &[f64]) -> Result<f64> {
    if x.len() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: x.len(),
        });
    }
    let t: f64 = x.iter().map(|v| v * v).sum();
    Ok(0.5 * (1.0 + (config.omega * t).sin()))
}

/// The miscalibrated base score: the label wave computed from the truncated
/// feature view (all but the last coordinate; at least one), squared.
pub fn distorted_score(config: &SyntheticShiftConfig, x: &[f64]) -> Result<f64> {
    if x.len() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: x.len(),
        });
    }
    let view = config.dim.saturating_sub(1).max(1);
    let t: f64 = x[..view].iter().map(|v| v * v).sum();
    let p = 0.5 * (1.0 + (config.omega * t).sin());
    Ok(p * p)
}

/// Labeled samples from both domains, reproducible from `(seed, stream)`.
pub fn gen_shift_data(
    config: &SyntheticShiftConfig,
    n_source: usize,
    n_target: usize,
    stream: u64,
) -> Result<ShiftSample> {
    config.validate()?;
    if n_source == 0 || n_target == 0 {
        return Err(Error::InvalidParameter(
            "sample sizes must be >= 1".into(),
        ));
    }
    let mut rng = trial_rng(config.seed, stream);
    let draw = |n: usize, (a, b): (f64, f64), rng: &mut ChaCha12Rng| -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..config.dim).map(|_| sample_beta(rng, a, b)).collect();
            let p = label_prob(config, &x).expect("dimension is consistent");
            let y = u8::from(rng.gen::<f64>() < p);
            xs.push(x);
            ys.push(y);
        }
        (xs, ys)
    };
    let (source_x, source_y) = draw(n_source, config.source_beta, &mut rng);
    let (target_x, target_y) = draw(n_target, config.target_beta, &mut rng);
    Ok(ShiftSample {
        source_x,
        source_y,
        target_x,
        target_y,
    })
}

/// Closed-form likelihood ratio target/source of the two product-Beta
/// densities. For the reference configuration this is `8 x1 x2 x3`.
pub fn true_ratio(config: &SyntheticShiftConfig, x: &[f64]) -> Result<f64> {
    if x.len() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: x.len(),
        });
    }
    let (a_s, b_s) = config.source_beta;
    let (a_t, b_t) = config.target_beta;
    let ln_norm = ln_beta(a_s, b_s) - ln_beta(a_t, b_t);
    let mut value = (config.dim as f64 * ln_norm).exp();
    for &xi in x {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::OutOfDomain(xi));
        }
        value *= power_or_limit(xi, a_t - a_s) * power_or_limit(1.0 - xi, b_t - b_s);
    }
    Ok(value)
}

/// `x^e` with the density-ratio boundary convention: `0^0 = 1`, and `0^e`
/// for negative `e` is infinite.
fn power_or_limit(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if x == 0.0 {
        if e > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        x.powf(e)
    }
}

/// Density of the sum of `k` independent uniforms on `[0, 1]`.
fn irwin_hall_pdf(k: usize, t: f64) -> f64 {
    if t < 0.0 || t > k as f64 {
        return 0.0;
    }
    let mut fact = 1.0;
    for i in 1..k {
        fact *= i as f64;
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    for j in 0..=(t.floor() as usize).min(k) {
        let term = binom * (t - j as f64).powi(k as i32 - 1);
        sum += if j % 2 == 0 { term } else { -term };
        binom *= (k - j) as f64 / (j + 1) as f64;
    }
    sum / fact
}

/// Target-domain conditional label mean per bin of `scheme`, by 1-D
/// numerical integration, for configurations with Beta(2, 1) target
/// coordinates and `dim >= 2` scored by [`distorted_score`].
///
/// Under the target law each squared coordinate is uniform, so the score's
/// driving statistic (the truncated-view squared norm) has an Irwin-Hall
/// density, and averaging the label wave over the one unseen coordinate has
/// a closed form. A midpoint rule over `grid_points` abscissae then yields
/// the per-bin means; the indicator edges limit accuracy to O(1/grid_points).
pub fn reference_target_bin_means(
    config: &SyntheticShiftConfig,
    scheme: &crate::binning::BinningScheme,
    grid_points: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    if config.dim < 2 {
        return Err(Error::InvalidParameter(
            "the integration oracle needs dim >= 2".into(),
        ));
    }
    if config.target_beta != (2.0, 1.0) {
        return Err(Error::InvalidParameter(
            "the integration oracle is derived for a Beta(2, 1) target".into(),
        ));
    }
    if grid_points < 1000 {
        return Err(Error::InvalidParameter(
            "use at least 1000 grid points".into(),
        ));
    }
    let view = config.dim - 1;
    let omega = config.omega;
    let b = scheme.bin_count();
    let mut num = vec![0.0f64; b];
    let mut den = vec![0.0f64; b];
    let span = view as f64;
    for i in 0..grid_points {
        let t = (i as f64 + 0.5) * span / grid_points as f64;
        let density = irwin_hall_pdf(view, t);
        let p_view = 0.5 * (1.0 + (omega * t).sin());
        let score = p_view * p_view;
        // Mean label over the unseen squared coordinate, itself uniform.
        let label_mean =
            0.5 * (1.0 + ((omega * t).cos() - (omega * (t + 1.0)).cos()) / omega);
        let bin = scheme.assign(score.clamp(0.0, 1.0))?;
        num[bin] += label_mean * density;
        den[bin] += density;
    }
    (0..b)
        .map(|i| {
            if den[i] <= 0.0 {
                Err(Error::DegenerateBin {
                    bin: i,
                    reason: "no target mass in bin".into(),
                })
            } else {
                Ok(num[i] / den[i])
            }
        })
        .collect()
}

/// Continuous nonatomic scores paired with labels that carry no signal:
/// scores uniform on `[0, 1]`, labels fair coins. The conditional label mean
/// is 1/2 everywhere, so the shortest honest interval at any score is the
/// point 1/2 — the regime where injective recalibration has nothing to hold
/// on to.
pub fn gen_adversary(n: usize, seed: u64, stream: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = trial_rng(seed, stream);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        scores.push(rng.gen::<f64>());
        labels.push(u8::from(rng.gen::<f64>() < 0.5));
    }
    (scores, labels)
}

/// Fitted sigmoid recalibration `p(s) = 1 / (1 + exp(slope * s + intercept))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattParams {
    /// Constrained negative so the map is strictly increasing (injective).
    pub slope: f64,
    pub intercept: f64,
    pub iterations: usize,
    /// Set when the unconstrained optimum had nonnegative slope and the fit
    /// was pinned at the constraint boundary.
    pub boundary: bool,
}

impl PlattParams {
    pub fn predict(&self, score: f64) -> f64 {
        platt_predict(self.slope, self.intercept, score)
    }
}

pub fn platt_predict(slope: f64, intercept: f64, score: f64) -> f64 {
    1.0 / (1.0 + (slope * score + intercept).exp())
}

const PLATT_MAX_ITER: usize = 100;
/// Tolerance on the mean (per-point) gradient, keeping the stopping rule
/// scale-free in the sample size.
const PLATT_GRAD_TOL: f64 = 1e-8;
/// Pulling the slope past this magnitude means the classes are separated and
/// the likelihood is maximized only in the limit.
const PLATT_SLOPE_CAP: f64 = 1e4;

/// Maximum-likelihood sigmoid fit by damped Newton iteration.
///
/// The slope is constrained negative; when the unconstrained optimum is
/// nonnegative (labels uncorrelated with or decreasing in the score), the
/// fit returns the boundary solution: an infinitesimal negative slope with
/// the intercept matching the base rate.
pub fn platt_fit(scores: &[f64], labels: &[u8]) -> Result<PlattParams> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    crate::batch::check_labels(labels)?;
    let n = scores.len();
    let positives: usize = labels.iter().map(|&y| y as usize).sum();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateFit(
            "labels contain a single class".into(),
        ));
    }
    // Perfect separation in the monotone-increasing direction has no finite
    // optimum: the slope diverges and damping only delays it.
    let min_pos = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(&s, _)| s)
        .fold(f64::INFINITY, f64::min);
    let max_neg = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_neg < min_pos {
        return Err(Error::DegenerateFit(format!(
            "scores separate the labels perfectly (negatives <= {max_neg}, positives >= {min_pos}); the sigmoid likelihood has no finite optimum"
        )));
    }

    let nll = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| {
                let z = a * s + b;
                // -ln p for y=1 is ln(1+e^z); -ln(1-p) for y=0 is ln(1+e^-z).
                let zy = if y == 1 { z } else { -z };
                if zy > 35.0 {
                    zy
                } else {
                    zy.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = -1.0f64;
    let mut b = 0.0f64;
    let mut value = nll(a, b);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < PLATT_MAX_ITER {
        iterations += 1;
        // Gradient and Hessian of the negative log-likelihood in z = a*s + b.
        let mut ga = 0.0;
        let mut gb = 0.0;
        let mut haa = 0.0;
        let mut hab = 0.0;
        let mut hbb = 0.0;
        for (&s, &y) in scores.iter().zip(labels) {
            let p = platt_predict(a, b, s);
            let g = f64::from(y) - p;
            ga += g * s;
            gb += g;
            let w = p * (1.0 - p);
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if ga.abs().max(gb.abs()) < PLATT_GRAD_TOL * n as f64 {
            converged = true;
            break;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 || !det.is_finite() {
            return Err(Error::NonConvergence { iterations });
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        // Damped step: halve until the objective stops getting worse.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (na, nb) = (a - step * da, b - step * db);
            let cand = nll(na, nb);
            if cand <= value {
                // A step too small to move the parameters means the
                // objective is flat to working precision.
                if na == a && nb == b {
                    converged = true;
                }
                a = na;
                b = nb;
                value = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            // No representable descent left at this scale.
            converged = true;
            break;
        }
        if a.abs() > PLATT_SLOPE_CAP || b.abs() > PLATT_SLOPE_CAP {
            return Err(Error::NonConvergence { iterations });
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations });
    }
    if a >= 0.0 {
        // Constrained optimum sits on the boundary: flatten the curve at the
        // base rate with a vanishing negative slope.
        let rate = positives as f64 / n as f64;
        return Ok(PlattParams {
            slope: -1e-9,
            intercept: -(rate / (1.0 - rate)).ln(),
            iterations,
            boundary: true,
        });
    }
    Ok(PlattParams {
        slope: a,
        intercept: b,
        iterations,
        boundary: false,
    })
}
