//! Likelihood-ratio estimation by unconstrained least-squares importance
//! fitting (uLSIF).
//!
//! The ratio target/source is approximated in a Gaussian-kernel basis
//! centered at target points. The quadratic fit uses second moments of the
//! basis on the source sample and first moments on the target sample, with a
//! ridge term; bandwidth and ridge strength are chosen by an exact
//! closed-form leave-one-out criterion (one held-out source/target pair per
//! fold, coefficients clipped at zero for the held-out evaluation). The
//! fitted expansion is floored at zero when evaluated, and can optionally be
//! clipped into `[floor, cap]` so downstream weighted estimators get honest
//! bounds.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted kernel model of the likelihood ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    centers: Vec<Vec<f64>>,
    bandwidth: f64,
    ridge: f64,
    coefficients: Vec<f64>,
    floor: f64,
    /// Upper clip; `null` in JSON means uncapped.
    #[serde(with = "optional_cap")]
    cap: f64,
}

mod optional_cap {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(cap: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if cap.is_finite() {
            ser.serialize_some(cap)
        } else {
            ser.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::INFINITY))
    }
}

impl RatioModel {
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Restrict evaluations to `[floor, cap]`, e.g. to certify the weight
    /// bounds a downstream deviation bound needs.
    pub fn with_clip(mut self, floor: f64, cap: f64) -> Result<Self> {
        if !(floor >= 0.0 && floor <= cap) {
            return Err(Error::InvalidParameter(format!(
                "clip range [{floor}, {cap}] is invalid"
            )));
        }
        self.floor = floor;
        self.cap = cap;
        Ok(self)
    }

    /// Kernel expansion at `x`, floored at zero, then clipped if configured.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let dim = self.centers.first().map_or(0, Vec::len);
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        let two_sigma_sq = 2.0 * self.bandwidth * self.bandwidth;
        let mut value = 0.0;
        for (center, &theta) in self.centers.iter().zip(&self.coefficients) {
            let d2: f64 = center
                .iter()
                .zip(x)
                .map(|(c, v)| (c - v) * (c - v))
                .sum();
            value += theta * (-d2 / two_sigma_sq).exp();
        }
        Ok(value.max(0.0).clamp(self.floor, self.cap))
    }

    pub fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.eval(x)).collect()
    }
}

/// 25 geometrically spaced bandwidths spanning 1e-2 ..= 1e2.
pub fn default_sigma_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, 25)
}

/// 100 geometrically spaced ridge strengths spanning 1e-3 ..= 1e3.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 100)
}

/// `count` points geometrically spaced over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Fit the ratio target/source from unlabeled samples of each domain.
///
/// Kernel centers are the first `min(n_centers, target.len())` target rows;
/// shuffle beforehand if the sample is not already in random order. Grid
/// search over `(sigma, lambda)` minimizes the closed-form leave-one-out
/// score and runs in parallel across bandwidths.
pub fn fit_ulsif(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    sigma_grid: &[f64],
    lambda_grid: &[f64],
    n_centers: usize,
) -> Result<RatioModel> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput("empty unlabeled sample".into()));
    }
    if sigma_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::InvalidInput("empty parameter grid".into()));
    }
    if n_centers == 0 {
        return Err(Error::InvalidParameter("need at least one center".into()));
    }
    let dim = source[0].len();
    if dim == 0 {
        return Err(Error::InvalidInput("zero-dimensional features".into()));
    }
    for row in source.iter().chain(target) {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    let b = n_centers.min(target.len());
    let centers: Vec<Vec<f64>> = target[..b].to_vec();
    let src = to_matrix(source, dim);
    let tgt = to_matrix(target, dim);
    let ctr = to_matrix(&centers, dim);

    let best = sigma_grid
        .par_iter()
        .map(|&sigma| {
            let phi_de = kernel_design(&src, &ctr, sigma);
            let phi_nu = kernel_design(&tgt, &ctr, sigma);
            let mut best: Option<(f64, f64)> = None; // (score, lambda)
            for &lambda in lambda_grid {
                let score = loocv_from_designs(&phi_de, &phi_nu, lambda)?;
                if best.map_or(true, |(s, _)| score < s) {
                    best = Some((score, lambda));
                }
            }
            let (score, lambda) = best.unwrap();
            Ok((score, sigma, lambda))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    let (_, sigma, lambda) = best;

    // Final solve on the full data at the selected pair.
    let phi_de = kernel_design(&src, &ctr, sigma);
    let phi_nu = kernel_design(&tgt, &ctr, sigma);
    let n_de = phi_de.nrows() as f64;
    let gram = phi_de.t().dot(&phi_de) / n_de;
    let response = phi_nu.mean_axis(Axis(0)).unwrap();
    let mut system = gram;
    for i in 0..b {
        system[(i, i)] += lambda;
    }
    let inv = cholesky_inverse(&system).ok_or_else(|| {
        Error::Numeric(format!("singular kernel system at lambda={lambda}"))
    })?;
    let theta = inv.dot(&response);

    Ok(RatioModel {
        centers,
        bandwidth: sigma,
        ridge: lambda,
        coefficients: theta.to_vec(),
        floor: 0.0,
        cap: f64::INFINITY,
    })
}

/// Closed-form leave-one-out score for one `(sigma, lambda)` pair: the
/// average of `w(x_source)^2 / 2 - w(x_target)` over held-out pairs, each
/// evaluated with the coefficients refit without that pair (and clipped at
/// zero). Exactly equals the naive refit computation.
pub fn loocv_score(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    centers: &[Vec<f64>],
    sigma: f64,
    lambda: f64,
) -> Result<f64> {
    let dim = centers.first().map_or(0, Vec::len);
    let src = to_matrix(source, dim);
    let tgt = to_matrix(target, dim);
    let ctr = to_matrix(centers, dim);
    let phi_de = kernel_design(&src, &ctr, sigma);
    let phi_nu = kernel_design(&tgt, &ctr, sigma);
    loocv_from_designs(&phi_de, &phi_nu, lambda)
}

fn loocv_from_designs(phi_de: &Array2<f64>, phi_nu: &Array2<f64>, lambda: f64) -> Result<f64> {
    let n_de = phi_de.nrows();
    let n_nu = phi_nu.nrows();
    let b = phi_de.ncols();
    let n = n_de.min(n_nu);
    if n < 2 {
        return Err(Error::InvalidInput(
            "leave-one-out needs at least two points per sample".into(),
        ));
    }
    let nf_de = n_de as f64;
    let nf_nu = n_nu as f64;
    let gram = phi_de.t().dot(phi_de) / nf_de;
    let response = phi_nu.mean_axis(Axis(0)).unwrap();
    let mut system = gram;
    for i in 0..b {
        system[(i, i)] += lambda * (nf_de - 1.0) / nf_de;
    }
    let inv = cholesky_inverse(&system)
        .ok_or_else(|| Error::Numeric(format!("singular kernel system at lambda={lambda}")))?;

    // Held-out designs, as (b x n) so columns are points.
    let x_de = phi_de.slice(ndarray::s![..n, ..]).t().to_owned();
    let x_nu = phi_nu.slice(ndarray::s![..n, ..]).t().to_owned();
    let p0 = inv.dot(&response); // b
    let p_de = inv.dot(&x_de); // b x n
    let p_nu = inv.dot(&x_nu); // b x n

    // Rank-one downdate of the source Gram estimate via Sherman-Morrison,
    // then the response downdate, for each held-out pair i.
    let kappa = (nf_de - 1.0) / (nf_de * (nf_nu - 1.0));
    let mut total = 0.0;
    let mut theta = Array1::<f64>::zeros(b);
    for i in 0..n {
        let phi_i = x_de.column(i);
        let phit_i = x_nu.column(i);
        let self_sens = phi_i.dot(&p_de.column(i)); // phi' Binv phi
        let denom = nf_de - self_sens;
        let resp_sens = p0.dot(&phi_i); // h' Binv phi
        let cross_sens = phit_i.dot(&p_de.column(i)); // phit' Binv phi
        let coef = (nf_nu * resp_sens - cross_sens) / denom;
        for j in 0..b {
            let v = kappa * (nf_nu * p0[j] - p_nu[(j, i)] + coef * p_de[(j, i)]);
            theta[j] = v.max(0.0);
        }
        let w_de = theta.dot(&phi_i);
        let w_nu = theta.dot(&phit_i);
        total += 0.5 * w_de * w_de - w_nu;
    }
    Ok(total / n as f64)
}

fn to_matrix(rows: &[Vec<f64>], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

/// Gaussian kernel design matrix, rows = points, columns = centers.
fn kernel_design(points: &Array2<f64>, centers: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let n = points.nrows();
    let b = centers.nrows();
    let two_sigma_sq = 2.0 * sigma * sigma;
    let mut design = Array2::zeros((n, b));
    for i in 0..n {
        let p = points.row(i);
        for j in 0..b {
            let c = centers.row(j);
            let d2: f64 = p
                .iter()
                .zip(c.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            design[(i, j)] = (-d2 / two_sigma_sq).exp();
        }
    }
    design
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
/// Returns `None` when the matrix is not numerically positive definite.
fn cholesky_inverse(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    // Lower factor L with A = L L'.
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    // M = L^{-1} by forward substitution on the identity.
    let mut linv = Array2::<f64>::zeros((n, n));
    for col in 0..n {
        linv[(col, col)] = 1.0 / l[(col, col)];
        for i in col + 1..n {
            let mut s = 0.0;
            for k in col..i {
                s += l[(i, k)] * linv[(k, col)];
            }
            linv[(i, col)] = -s / l[(i, i)];
        }
    }
    // A^{-1} = L^{-T} L^{-1}.
    Some(linv.t().dot(&linv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(theta: Vec<f64>) -> RatioModel {
        RatioModel {
            centers: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            bandwidth: 0.5,
            ridge: 0.1,
            coefficients: theta,
            floor: 0.0,
            cap: f64::INFINITY,
        }
    }

    #[test]
    fn zero_coefficients_evaluate_to_zero() {
        let m = toy_model(vec![0.0, 0.0]);
        assert_eq!(m.eval(&[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn kernel_at_its_center_is_one() {
        let m = RatioModel {
            centers: vec![vec![0.25, 0.5]],
            bandwidth: 0.3,
            ridge: 0.1,
            coefficients: vec![1.0],
            floor: 0.0,
            cap: f64::INFINITY,
        };
        assert!((m.eval(&[0.25, 0.5]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_expansion_is_floored() {
        let m = toy_model(vec![-2.0, -1.0]);
        assert_eq!(m.eval(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn cap_clips_evaluations() {
        let m = toy_model(vec![50.0, 0.0]).with_clip(0.0, 8.0).unwrap();
        assert_eq!(m.eval(&[0.0, 0.0]).unwrap(), 8.0);
        assert!(toy_model(vec![1.0]).with_clip(-1.0, 8.0).is_err());
    }

    #[test]
    fn eval_checks_dimension() {
        let m = toy_model(vec![1.0, 1.0]);
        assert!(matches!(
            m.eval(&[0.5]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn fit_rejects_empty_grids_and_samples() {
        let pts = vec![vec![0.1], vec![0.9]];
        assert!(fit_ulsif(&pts, &pts, &[], &[1.0], 10).is_err());
        assert!(fit_ulsif(&pts, &pts, &[1.0], &[], 10).is_err());
        assert!(fit_ulsif(&[], &pts, &[1.0], &[1.0], 10).is_err());
        let ragged = vec![vec![0.1], vec![0.2, 0.3]];
        assert!(matches!(
            fit_ulsif(&ragged, &pts, &[1.0], &[1.0], 10),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn default_grids_match_declared_shape() {
        let s = default_sigma_grid();
        assert_eq!(s.len(), 25);
        assert!((s[0] - 1e-2).abs() < 1e-12 && (s[24] - 1e2).abs() < 1e-10);
        let l = default_lambda_grid();
        assert_eq!(l.len(), 100);
        assert!((l[0] - 1e-3).abs() < 1e-13 && (l[99] - 1e3).abs() < 1e-9);
        // geometric spacing: constant successive ratio
        let r0 = s[1] / s[0];
        let r1 = s[13] / s[12];
        assert!((r0 - r1).abs() < 1e-9);
    }

    #[test]
    fn ridge_sends_coefficients_to_zero() {
        // Fixed grids at the extremes: the huge-lambda fit must have
        // uniformly tiny coefficients.
        let src: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0]).collect();
        let tgt: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 + 0.5) / 41.0]).collect();
        let m_small = fit_ulsif(&src, &tgt, &[0.3], &[1e-3], 20).unwrap();
        let m_big = fit_ulsif(&src, &tgt, &[0.3], &[1e6], 20).unwrap();
        let max_small = m_small
            .coefficients()
            .iter()
            .fold(0.0f64, |a, c| a.max(c.abs()));
        let max_big = m_big
            .coefficients()
            .iter()
            .fold(0.0f64, |a, c| a.max(c.abs()));
        assert!(max_big < 1e-4 && max_big < max_small * 1e-2);
    }

    #[test]
    fn model_json_round_trip_with_and_without_cap() {
        let m = toy_model(vec![0.4, -0.2]);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"cap\":null"));
        let back: RatioModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        let capped = toy_model(vec![0.4, -0.2]).with_clip(0.1, 8.0).unwrap();
        let back: RatioModel =
            serde_json::from_str(&serde_json::to_string(&capped).unwrap()).unwrap();
        assert_eq!(capped, back);
    }

    #[test]
    fn cholesky_inverse_matches_known_inverse() {
        let a = ndarray::arr2(&[[4.0, 2.0], [2.0, 3.0]]);
        let inv = cholesky_inverse(&a).unwrap();
        let expect = ndarray::arr2(&[[0.375, -0.25], [-0.25, 0.5]]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - expect[(i, j)]).abs() < 1e-12);
            }
        }
        let not_pd = ndarray::arr2(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(cholesky_inverse(&not_pd).is_none());
    }
}
