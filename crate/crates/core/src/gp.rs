//! Gaussian-process regression and marginal likelihood on top of the
//! hierarchical solver.
//!
//! A fitted model holds the factorization of the training covariance
//! `C = sigma^2 I + K` and the weight vector `alpha = C^{-1} y`, so
//! predictions and the likelihood are cheap follow-ups:
//!
//! ```text
//! mean_j = k_j^T alpha
//! var_j  = k(q_j, q_j) - k_j^T C^{-1} k_j
//! log p(y) = -y^T alpha / 2 - log det C / 2 - n ln(2 pi) / 2
//! ```
//!
//! with `k_j` the cross-covariance between the training points and query
//! `q_j` (no noise term — predictions target the latent function).

use crate::error::{Error, Result};
use crate::geometry::{kd_sort, PointSet};
use crate::hodlr::{assemble, factorize, HodlrFactorization, HodlrTree};
use crate::kernels::{eval_kernel, KernelSpec};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Queries per linear solve when computing predictive variances.
const VARIANCE_BATCH: usize = 64;

/// A Gaussian process conditioned on training data.
#[derive(Debug)]
pub struct GpModel {
    spec: KernelSpec,
    points: PointSet,
    y: DVector<f64>,
    tree: HodlrTree,
    fact: HodlrFactorization,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Fit on `n` points (`coords` row-major, original order) with targets
    /// `y`. Sorting, assembly, factorization, and the `alpha` solve happen
    /// here; everything afterwards reuses them.
    pub fn fit(
        spec: &KernelSpec,
        coords: &[f64],
        dim: usize,
        y: &[f64],
        eps: f64,
        p_max: usize,
    ) -> Result<GpModel> {
        let points = kd_sort(coords, dim, p_max)?;
        if y.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} targets for {} points",
                y.len(),
                points.len()
            )));
        }
        if let Some(bad) = y.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "targets must be finite, found {bad}"
            )));
        }
        let tree = assemble(spec, &points, eps, p_max)?;
        let fact = factorize(&tree)?;
        let y = DVector::from_column_slice(y);
        let alpha = fact.solve_vector(&y)?;
        Ok(GpModel {
            spec: spec.clone(),
            points,
            y,
            tree,
            fact,
            alpha,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Training targets, original order.
    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    /// `C^{-1} y`, original order.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn tree(&self) -> &HodlrTree {
        &self.tree
    }

    pub fn factorization(&self) -> &HodlrFactorization {
        &self.fact
    }

    /// Posterior means at `queries` (row-major, same dimension as training).
    pub fn predict_mean(&self, queries: &[f64]) -> Result<DVector<f64>> {
        let q = self.check_queries(queries)?;
        let mut mean = DVector::zeros(q);
        for j in 0..q {
            let cross = self.cross_column(queries, j)?;
            mean[j] = cross.dot(&self.alpha);
        }
        Ok(mean)
    }

    /// Posterior means and variances at `queries`.
    ///
    /// Variances need one linear solve per query; they are batched
    /// [`VARIANCE_BATCH`] columns at a time. Values that land a hair below
    /// zero from rounding are clamped to zero.
    pub fn predict(&self, queries: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let q = self.check_queries(queries)?;
        let n = self.len();
        let mut mean = DVector::zeros(q);
        let mut var = DVector::zeros(q);
        let mut batch_start = 0;
        while batch_start < q {
            let width = VARIANCE_BATCH.min(q - batch_start);
            let mut cross = DMatrix::zeros(n, width);
            for c in 0..width {
                cross.set_column(c, &self.cross_column(queries, batch_start + c)?);
            }
            let solved = self.fact.solve(&cross)?;
            for c in 0..width {
                let j = batch_start + c;
                let k_col = cross.column(c);
                mean[j] = k_col.dot(&self.alpha);
                let point = &queries[j * self.dim()..(j + 1) * self.dim()];
                let prior = eval_kernel(&self.spec, point, point)?;
                let posterior = prior - k_col.dot(&solved.column(c));
                if posterior < 0.0 {
                    if posterior < -1e-8 * prior.abs().max(1.0) {
                        log::warn!(
                            "predictive variance at query {j} clamped from {posterior:e} to 0"
                        );
                    }
                    var[j] = 0.0;
                } else {
                    var[j] = posterior;
                }
            }
            batch_start += width;
        }
        Ok((mean, var))
    }

    /// `log p(y)` under the fitted covariance.
    ///
    /// Returns `-inf` (with a warning) if the determinant sign is not
    /// positive — the covariance was not numerically positive definite.
    pub fn log_marginal_likelihood(&self) -> f64 {
        if self.fact.det_sign() <= 0.0 || !self.fact.log_abs_det().is_finite() {
            log::warn!("covariance is not positive definite; likelihood is -inf");
            return f64::NEG_INFINITY;
        }
        let n = self.len() as f64;
        -0.5 * self.y.dot(&self.alpha)
            - 0.5 * self.fact.log_abs_det()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    fn check_queries(&self, queries: &[f64]) -> Result<usize> {
        let dim = self.dim();
        if queries.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} query coordinates do not tile into dimension {dim}",
                queries.len()
            )));
        }
        if let Some(bad) = queries.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "query coordinates must be finite, found {bad}"
            )));
        }
        Ok(queries.len() / dim)
    }

    /// Cross-covariance column `k(x_i, q_j)` over training points `i`
    /// (original order).
    fn cross_column(&self, queries: &[f64], j: usize) -> Result<DVector<f64>> {
        let dim = self.dim();
        let point = &queries[j * dim..(j + 1) * dim];
        let mut col = DVector::zeros(self.len());
        for i in 0..self.len() {
            col[i] = eval_kernel(&self.spec, self.points.point(i), point)?;
        }
        Ok(col)
    }
}

/// One evaluation in a likelihood scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    /// parameter value this row was evaluated at
    pub value: f64,
    /// `log p(y)`; absent when the fit failed
    pub log_likelihood: Option<f64>,
    /// failure description when the fit failed
    pub error: Option<String>,
}

/// Evaluate the marginal likelihood over a grid of values for one kernel
/// parameter (named as in [`KernelSpec::with_param`]), refitting per value.
///
/// Individual fit failures are recorded in the returned rows rather than
/// aborting the scan.
pub fn loglik_grid_scan(
    template: &KernelSpec,
    coords: &[f64],
    dim: usize,
    y: &[f64],
    param: &str,
    grid: &[f64],
    eps: f64,
    p_max: usize,
) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("scan grid is empty".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    for &value in grid {
        let fit = template
            .clone()
            .with_param(param, value)
            .and_then(|spec| GpModel::fit(&spec, coords, dim, y, eps, p_max));
        out.push(match fit {
            Ok(model) => ScanPoint {
                value,
                log_likelihood: Some(model.log_marginal_likelihood()),
                error: None,
            },
            Err(e) => ScanPoint {
                value,
                log_likelihood: None,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{dense_assemble, dense_logdet, dense_solve};
    use crate::geometry::uniform_points;
    use crate::kernels::KernelFamily;
    use approx::assert_abs_diff_eq;

    fn gaussian(noise: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Gaussian, noise).unwrap()
    }

    #[test]
    fn zero_targets_give_zero_weights_and_prior_variance() {
        let coords = uniform_points(64, 1, 3.0, 1);
        let model = GpModel::fit(&gaussian(1.0), &coords, 1, &vec![0.0; 64], 1e-12, 20).unwrap();
        assert_eq!(model.alpha().as_slice(), &[0.0; 64]);
        let (mean, var) = model.predict(&[100.0]).unwrap();
        assert_eq!(mean[0], 0.0);
        // far from all data the posterior variance recovers the prior k(q, q)
        assert_abs_diff_eq!(var[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn single_training_point_reduces_to_scalars() {
        // n = 1: C = [sigma^2 + 1], alpha = y / (sigma^2 + 1)
        let model = GpModel::fit(&gaussian(3.0), &[0.5], 1, &[2.0], 1e-12, 20).unwrap();
        assert_abs_diff_eq!(model.alpha()[0], 0.5, epsilon = 1e-15);
        let (mean, var) = model.predict(&[0.5]).unwrap();
        assert_abs_diff_eq!(mean[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(var[0], 1.0 - 0.25, epsilon = 1e-15);
        let want = -0.5 * (2.0 * 0.5 + 4.0f64.ln() + (2.0 * std::f64::consts::PI).ln());
        assert_abs_diff_eq!(model.log_marginal_likelihood(), want, epsilon = 1e-14);
    }

    #[test]
    fn identity_covariance_likelihood_in_closed_form() {
        // amplitude 0, sigma^2 = 1, y = 0: log p = -(n/2) ln(2 pi)
        let spec = gaussian(1.0).with_amplitude(0.0).unwrap();
        let coords = uniform_points(32, 1, 3.0, 2);
        let model = GpModel::fit(&spec, &coords, 1, &vec![0.0; 32], 1e-12, 8).unwrap();
        let want = -16.0 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(model.log_marginal_likelihood(), want, epsilon = 1e-12);
    }

    #[test]
    fn scaled_identity_likelihood_in_closed_form() {
        // C = 2I: log p = -y^T y / 4 - (n/2) ln 2 - (n/2) ln(2 pi)
        let spec = gaussian(2.0).with_amplitude(0.0).unwrap();
        let coords = uniform_points(10, 1, 3.0, 3);
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let yy: f64 = y.iter().map(|t| t * t).sum();
        let model = GpModel::fit(&spec, &coords, 1, &y, 1e-12, 4).unwrap();
        let want = -0.25 * yy - 5.0 * 2.0f64.ln() - 5.0 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(model.log_marginal_likelihood(), want, epsilon = 1e-12);
    }

    #[test]
    fn weights_solve_the_training_system() {
        let coords = uniform_points(128, 1, 3.0, 4);
        let y: Vec<f64> = coords.iter().map(|x| (2.0 * x).sin()).collect();
        let model = GpModel::fit(&gaussian(2.0), &coords, 1, &y, 1e-12, 20).unwrap();
        let back = model.tree().apply_vector(model.alpha()).unwrap();
        let y = DVector::from_column_slice(&y);
        assert!((back - &y).norm() / y.norm() <= 1e-11);
    }

    #[test]
    fn training_point_means_differ_from_targets_by_noise_times_weights() {
        // at a training point the cross-covariance row is the matrix row
        // minus the noise on the diagonal, so exactly
        // mean_i = y_i - sigma^2 alpha_i; with small noise the posterior
        // nearly interpolates
        let coords = uniform_points(96, 1, 3.0, 5);
        let y: Vec<f64> = coords.iter().map(|x| (2.0 * x).sin()).collect();
        let noise = 1e-6;
        let spec = gaussian(noise);
        let model = GpModel::fit(&spec, &coords, 1, &y, 1e-13, 20).unwrap();
        let mean = model.predict_mean(&coords).unwrap();
        for ((&m, &t), &a) in mean.iter().zip(&y).zip(model.alpha().iter()) {
            assert_abs_diff_eq!(m, t - noise * a, epsilon = 1e-9);
            assert_abs_diff_eq!(m, t, epsilon = 1e-3);
        }
    }

    #[test]
    fn matches_dense_posterior_formulas() {
        let n = 64;
        let coords = uniform_points(n, 1, 3.0, 6);
        let y: Vec<f64> = coords.iter().map(|x| x.cos() + 0.1 * x).collect();
        let spec = gaussian(2.0);
        let model = GpModel::fit(&spec, &coords, 1, &y, 1e-13, 16).unwrap();

        let queries = uniform_points(17, 1, 3.0, 7);
        let (mean, var) = model.predict(&queries).unwrap();

        let pts = kd_sort(&coords, 1, 16).unwrap();
        let dense = dense_assemble(&spec, &pts).unwrap();
        let y_vec = DMatrix::from_column_slice(n, 1, &y);
        let alpha = dense_solve(&dense, &y_vec).unwrap();
        for (j, q) in queries.iter().enumerate() {
            let mut cross = DMatrix::zeros(n, 1);
            for i in 0..n {
                cross[(i, 0)] = eval_kernel(&spec, &coords[i..=i], &[*q]).unwrap();
            }
            let want_mean = (cross.transpose() * &alpha)[(0, 0)];
            let solved = dense_solve(&dense, &cross).unwrap();
            let want_var = eval_kernel(&spec, &[*q], &[*q]).unwrap()
                - (cross.transpose() * solved)[(0, 0)];
            assert_abs_diff_eq!(mean[j], want_mean, epsilon = 1e-9);
            assert_abs_diff_eq!(var[j], want_var, epsilon = 1e-9);
        }
    }

    #[test]
    fn likelihood_matches_dense_evaluation() {
        let n = 128;
        let coords = uniform_points(n, 2, 3.0, 8);
        let y: Vec<f64> = (0..n).map(|i| ((i * 31 % 17) as f64 - 8.0) / 4.0).collect();
        let spec = KernelSpec::new(KernelFamily::Exponential, 1.0).unwrap();
        let model = GpModel::fit(&spec, &coords, 2, &y, 1e-12, 16).unwrap();

        let pts = kd_sort(&coords, 2, 16).unwrap();
        let dense = dense_assemble(&spec, &pts).unwrap();
        let y_vec = DMatrix::from_column_slice(n, 1, &y);
        let alpha = dense_solve(&dense, &y_vec).unwrap();
        let (logdet, sign) = dense_logdet(&dense).unwrap();
        assert_eq!(sign, 1.0);
        let yta: f64 = y.iter().zip(alpha.column(0).iter()).map(|(a, b)| a * b).sum();
        let want = -0.5 * yta - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(model.log_marginal_likelihood(), want, epsilon = 1e-6);
    }

    #[test]
    fn grid_scan_peaks_at_generating_length_scale() {
        // y drawn smoothly at length scale 1: the scan should prefer 1 over
        // the extremes, matching a dense-likelihood scan point by point
        let n = 96;
        let coords = uniform_points(n, 1, 3.0, 9);
        let y: Vec<f64> = coords.iter().map(|x| (2.0 * x).sin() + 0.3 * x).collect();
        let spec = gaussian(0.1);
        let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
        let scan = loglik_grid_scan(&spec, &coords, 1, &y, "length_scale", &grid, 1e-12, 16)
            .unwrap();
        assert_eq!(scan.len(), grid.len());

        let mut best = (0usize, f64::NEG_INFINITY);
        for (idx, (point, &value)) in scan.iter().zip(&grid).enumerate() {
            assert_eq!(point.value, value);
            let ll = point.log_likelihood.expect("fit should succeed");
            // dense reference for the same spec
            let s = spec.clone().with_length_scale(value).unwrap();
            let pts = kd_sort(&coords, 1, 16).unwrap();
            let dense = dense_assemble(&s, &pts).unwrap();
            let alpha = dense_solve(&dense, &DMatrix::from_column_slice(n, 1, &y)).unwrap();
            let (logdet, _) = dense_logdet(&dense).unwrap();
            let yta: f64 = y.iter().zip(alpha.column(0).iter()).map(|(a, b)| a * b).sum();
            let want =
                -0.5 * yta - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            assert_abs_diff_eq!(ll, want, epsilon = 1e-6);
            if ll > best.1 {
                best = (idx, ll);
            }
        }
        assert_eq!(grid[best.0], 1.0, "likelihood should peak at the true scale");
    }

    #[test]
    fn scan_records_per_point_failures() {
        let coords = uniform_points(16, 1, 3.0, 10);
        let y = vec![0.5; 16];
        let scan = loglik_grid_scan(
            &gaussian(1.0),
            &coords,
            1,
            &y,
            "length_scale",
            &[1.0, -2.0],
            1e-12,
            8,
        )
        .unwrap();
        assert!(scan[0].log_likelihood.is_some());
        assert!(scan[1].log_likelihood.is_none());
        assert!(scan[1].error.as_deref().unwrap().contains("length_scale"));
    }

    #[test]
    fn input_validation() {
        let coords = uniform_points(16, 2, 3.0, 11);
        let spec = gaussian(1.0);
        // target count mismatch
        assert!(GpModel::fit(&spec, &coords, 2, &[0.0; 7], 1e-12, 8).is_err());
        // non-finite target
        let mut y = vec![0.0; 16];
        y[3] = f64::NAN;
        assert!(GpModel::fit(&spec, &coords, 2, &y, 1e-12, 8).is_err());
        let model = GpModel::fit(&spec, &coords, 2, &vec![0.0; 16], 1e-12, 8).unwrap();
        // query coordinates must tile into dim = 2
        assert!(model.predict_mean(&[1.0, 2.0, 3.0]).is_err());
        assert!(model.predict(&[f64::INFINITY, 0.0]).is_err());
        // empty grid
        assert!(loglik_grid_scan(&spec, &coords, 2, &vec![0.0; 16], "nu", &[], 1e-12, 8).is_err());
    }
}
