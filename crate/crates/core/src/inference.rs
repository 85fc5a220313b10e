//! Naive and covariance-aware estimation.
//!
//! `mean_ci_naive` and `ols` treat observations as independent. `gls` uses a
//! supplied covariance. `LmmModel` fits `y = Xβ + g + ε` with
//! `cov(g) = σ_g² K`, `cov(ε) = σ_e² I` by maximum likelihood.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::deptest::NodeValues;
use crate::error::{Error, Result};

/// Two-sided normal critical value for a confidence level, e.g. 1.96 at 0.95.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + level / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub ybar: f64,
    /// `s / √n`, ignoring all pairwise covariances.
    pub se_naive: f64,
    pub ci: (f64, f64),
    pub level: f64,
}

impl MeanEstimate {
    pub fn covers(&self, target: f64) -> bool {
        self.ci.0 <= target && target <= self.ci.1
    }
}

pub fn mean_ci_naive(y: &NodeValues, level: f64) -> Result<MeanEstimate> {
    let n = y.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2 for a standard error, got {n}")));
    }
    let z = normal_quantile(level)?;
    let ybar = y.mean();
    let ss: f64 = y.as_slice().iter().map(|v| (v - ybar).powi(2)).sum();
    let se = (ss / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt();
    Ok(MeanEstimate { ybar, se_naive: se, ci: (ybar - z * se, ybar + z * se), level })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
    pub level: f64,
}

impl RegressionFit {
    fn assemble(beta: DVector<f64>, se: Vec<f64>, residuals: DVector<f64>, level: f64) -> Result<Self> {
        let z = normal_quantile(level)?;
        let ci = beta.iter().zip(&se).map(|(b, s)| (b - z * s, b + z * s)).collect();
        Ok(RegressionFit { beta: beta.as_slice().to_vec(), se, ci, residuals: residuals.as_slice().to_vec(), level })
    }

    pub fn covers(&self, coef: usize, target: f64) -> bool {
        let (lo, hi) = self.ci[coef];
        lo <= target && target <= hi
    }
}

/// Stacks an intercept column in front of the given covariates.
pub fn design_with_intercept(columns: &[&[f64]]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] })
}

/// Least squares through a QR factorization. Returns `β̂` and `(XᵀX)⁻¹`.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InvalidParameter(format!("need more observations ({n}) than columns ({p})")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * rmax.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularDesign);
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).ok_or(Error::SingularDesign)?;
    Ok((beta, &r_inv * r_inv.transpose()))
}

fn check_rows(y: &NodeValues, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: x.nrows() });
    }
    Ok(DVector::from_column_slice(y.as_slice()))
}

/// Ordinary least squares with i.i.d. standard errors `s² (XᵀX)⁻¹`,
/// `s² = RSS / (n - p)`. `x` must already contain any intercept column.
pub fn ols(y: &NodeValues, x: &DMatrix<f64>, level: f64) -> Result<RegressionFit> {
    let yv = check_rows(y, x)?;
    let (beta, xtx_inv) = least_squares(x, &yv)?;
    let resid = &yv - x * &beta;
    let s2 = resid.norm_squared() / (x.nrows() - x.ncols()) as f64;
    let se = (0..x.ncols()).map(|j| (s2 * xtx_inv[(j, j)]).sqrt()).collect();
    RegressionFit::assemble(beta, se, resid, level)
}

/// How GLS treats the overall scale of the supplied covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlsScale {
    /// The covariance is the true one: `Var β̂ = (XᵀΣ⁻¹X)⁻¹`.
    #[default]
    Known,
    /// Only the shape is known; the scale is estimated from whitened
    /// residuals, so `Σ = I` reproduces OLS exactly.
    Estimated,
}

/// Cholesky factor of a covariance matrix, reusable across outcomes.
#[derive(Debug, Clone)]
pub struct GlsModel {
    factor: DMatrix<f64>,
}

impl GlsModel {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::BadCovariance(format!("matrix is {}x{}", sigma.nrows(), sigma.ncols())));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCovariance("matrix has non-finite entries".into()));
        }
        let tol = 1e-10 * sigma.amax().max(f64::MIN_POSITIVE);
        if (sigma - sigma.transpose()).amax() > tol {
            return Err(Error::BadCovariance("matrix is not symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::BadCovariance("matrix is not positive definite".into()))?;
        Ok(GlsModel { factor: chol.l() })
    }

    pub fn n(&self) -> usize {
        self.factor.nrows()
    }

    /// `β̂ = (XᵀΣ⁻¹X)⁻¹ XᵀΣ⁻¹y`, computed as OLS on `L⁻¹X`, `L⁻¹y`.
    pub fn fit(&self, y: &NodeValues, x: &DMatrix<f64>, scale: GlsScale, level: f64) -> Result<RegressionFit> {
        let yv = check_rows(y, x)?;
        let n = y.len();
        if n != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: n });
        }
        let l = &self.factor;
        let xw = l.solve_lower_triangular(x).ok_or_else(|| Error::BadCovariance("singular factor".into()))?;
        let yw = l.solve_lower_triangular(&yv).ok_or_else(|| Error::BadCovariance("singular factor".into()))?;
        let (beta, cov_unit) = least_squares(&xw, &yw)?;
        let s2 = match scale {
            GlsScale::Known => 1.0,
            GlsScale::Estimated => (&yw - &xw * &beta).norm_squared() / (n - x.ncols()) as f64,
        };
        let se = (0..x.ncols()).map(|j| (s2 * cov_unit[(j, j)]).sqrt()).collect();
        let resid = &yv - x * &beta;
        RegressionFit::assemble(beta, se, resid, level)
    }
}

/// Generalized least squares with covariance `sigma`.
pub fn gls(y: &NodeValues, x: &DMatrix<f64>, sigma: &DMatrix<f64>, scale: GlsScale, level: f64) -> Result<RegressionFit> {
    if sigma.nrows() != y.len() {
        return Err(Error::BadCovariance(format!("expected {0}x{0}, got {1}x{2}", y.len(), sigma.nrows(), sigma.ncols())));
    }
    GlsModel::new(sigma)?.fit(y, x, scale, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub sigma_g2: f64,
    pub sigma_e2: f64,
    /// Variance ratio `σ_g² / σ_e²` at the optimum.
    pub delta: f64,
    pub loglik: f64,
    pub level: f64,
    pub ci: Vec<(f64, f64)>,
}

impl LmmFit {
    pub fn covers(&self, coef: usize, target: f64) -> bool {
        let (lo, hi) = self.ci[coef];
        lo <= target && target <= hi
    }
}

/// Bounds of the search over `ln δ`.
pub const LOG_DELTA_RANGE: (f64, f64) = (-10.0, 10.0);
const LOG_DELTA_TOL: f64 = 1e-8;
const GRID_STEP: f64 = 0.5;

/// Eigendecomposition of a kinship/structure matrix, reusable across
/// outcomes that share `K`.
#[derive(Debug, Clone)]
pub struct LmmModel {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

struct Profile {
    beta: DVector<f64>,
    xtwx_inv: DMatrix<f64>,
    sigma_e2: f64,
    loglik: f64,
}

impl LmmModel {
    pub fn new(k: &DMatrix<f64>) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::BadCovariance(format!("kinship is {}x{}", k.nrows(), k.ncols())));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCovariance("kinship has non-finite entries".into()));
        }
        let scale = k.amax();
        if (k - k.transpose()).amax() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::BadCovariance("kinship is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(k.clone());
        let min = eig.eigenvalues.min();
        if min < -1e-8 * scale.max(1.0) {
            return Err(Error::BadCovariance(format!("kinship is not positive semidefinite (eigenvalue {min:.3e})")));
        }
        Ok(LmmModel { eigenvalues: eig.eigenvalues.map(|v| v.max(0.0)), eigenvectors: eig.eigenvectors })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    fn profile(&self, yr: &DVector<f64>, xr: &DMatrix<f64>, delta: f64) -> Result<Profile> {
        let n = yr.len();
        let w = self.eigenvalues.map(|s| 1.0 / (1.0 + delta * s));
        let sw = w.map(f64::sqrt);
        let xw = DMatrix::from_fn(n, xr.ncols(), |i, j| xr[(i, j)] * sw[i]);
        let yw = yr.component_mul(&sw);
        let (beta, xtwx_inv) = least_squares(&xw, &yw)?;
        let rss = (&yw - &xw * &beta).norm_squared();
        let sigma_e2 = rss / n as f64;
        let logdet: f64 = self.eigenvalues.iter().map(|s| (1.0 + delta * s).ln()).sum();
        let nf = n as f64;
        let loglik = -0.5 * nf * ((2.0 * std::f64::consts::PI * sigma_e2).ln() + 1.0) - 0.5 * logdet;
        Ok(Profile { beta, xtwx_inv, sigma_e2, loglik })
    }

    fn rotate(&self, y: &NodeValues, x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: y.len() });
        }
        let yv = check_rows(y, x)?;
        let ut = self.eigenvectors.transpose();
        Ok((&ut * yv, &ut * x))
    }

    /// Profile log-likelihood at a fixed variance ratio `δ` (β and σ_e² at
    /// their conditional maximizers).
    pub fn profile_loglik(&self, y: &NodeValues, x: &DMatrix<f64>, delta: f64) -> Result<f64> {
        let (yr, xr) = self.rotate(y, x)?;
        Ok(self.profile(&yr, &xr, delta)?.loglik)
    }

    /// Maximum-likelihood fit. The search is a grid over `ln δ` followed by
    /// golden-section refinement around the best grid point, then compared
    /// with the boundary `δ = 0`.
    pub fn fit(&self, y: &NodeValues, x: &DMatrix<f64>, level: f64) -> Result<LmmFit> {
        let (yr, xr) = self.rotate(y, x)?;
        let eval = |ld: f64| self.profile(&yr, &xr, ld.exp()).map(|p| p.loglik);
        let (lo, hi) = LOG_DELTA_RANGE;
        let steps = ((hi - lo) / GRID_STEP).round() as usize;
        let mut best = (lo, f64::NEG_INFINITY);
        for k in 0..=steps {
            let ld = lo + k as f64 * GRID_STEP;
            let ll = eval(ld)?;
            if ll > best.1 {
                best = (ld, ll);
            }
        }
        let (mut a, mut b) = ((best.0 - GRID_STEP).max(lo), (best.0 + GRID_STEP).min(hi));
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (eval(c)?, eval(d)?);
        while b - a > LOG_DELTA_TOL {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval(d)?;
            }
        }
        let mut delta = (0.5 * (a + b)).exp();
        let mut prof = self.profile(&yr, &xr, delta)?;
        if best.1 > prof.loglik {
            delta = best.0.exp();
            prof = self.profile(&yr, &xr, delta)?;
        }
        let boundary = self.profile(&yr, &xr, 0.0)?;
        if boundary.loglik >= prof.loglik {
            delta = 0.0;
            prof = boundary;
        }
        if !(prof.loglik.is_finite() && prof.sigma_e2 > 0.0) {
            return Err(Error::Optimization(format!(
                "no finite optimum (delta = {delta:.3e}, sigma_e2 = {:.3e}, loglik = {})",
                prof.sigma_e2, prof.loglik
            )));
        }
        let (n, p) = xr.shape();
        // Residual-df scaling so that K = 0 reproduces OLS standard errors.
        let s2 = prof.sigma_e2 * n as f64 / (n - p) as f64;
        let se: Vec<f64> = (0..p).map(|j| (s2 * prof.xtwx_inv[(j, j)]).sqrt()).collect();
        let z = normal_quantile(level)?;
        let ci = prof.beta.iter().zip(&se).map(|(b, s)| (b - z * s, b + z * s)).collect();
        Ok(LmmFit {
            beta: prof.beta.as_slice().to_vec(),
            se,
            sigma_g2: delta * prof.sigma_e2,
            sigma_e2: prof.sigma_e2,
            delta,
            loglik: prof.loglik,
            level,
            ci,
        })
    }
}

/// One-shot mixed-model fit; use [`LmmModel`] directly to reuse the decomposition.
pub fn lmm_fit(y: &NodeValues, x: &DMatrix<f64>, k: &DMatrix<f64>, level: f64) -> Result<LmmFit> {
    LmmModel::new(k)?.fit(y, x, level)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vals(v: &[f64]) -> NodeValues {
        NodeValues::new(v.to_vec()).unwrap()
    }

    #[test]
    fn naive_mean_ci() {
        let m = mean_ci_naive(&vals(&[1., 1., 1., 1.]), 0.95).unwrap();
        assert_eq!((m.ybar, m.se_naive, m.ci), (1.0, 0.0, (1.0, 1.0)));
        let m = mean_ci_naive(&vals(&[0., 2.]), 0.95).unwrap();
        assert!((m.ybar - 1.0).abs() < 1e-15 && (m.se_naive - 1.0).abs() < 1e-15);
        assert!((m.ci.0 - (1.0 - 1.96)).abs() < 1e-4 && (m.ci.1 - 2.96).abs() < 1e-4);
        assert!(mean_ci_naive(&vals(&[1.0]), 0.95).is_err());
        assert!(mean_ci_naive(&vals(&[1.0, 2.0]), 1.5).is_err());
    }

    #[test]
    fn ols_hand_values() {
        let x = design_with_intercept(&[&[0., 1., 2.]]);
        let fit = ols(&vals(&[1., 2., 3.]), &x, 0.95).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12 && (fit.beta[1] - 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        let x = design_with_intercept(&[&[0.3, 1., 2., -4.]]);
        let fit = ols(&vals(&[5., 5., 5., 5.]), &x, 0.95).unwrap();
        assert!(fit.beta[1].abs() < 1e-12 && (fit.beta[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ols_rejects_singular_design() {
        let c = [0.3, 1., 2., -4.];
        let x = design_with_intercept(&[&c, &c]);
        assert!(matches!(ols(&vals(&[1., 2., 3., 4.]), &x, 0.95), Err(Error::SingularDesign)));
        let x = design_with_intercept(&[&[1., 2.]]);
        assert!(ols(&vals(&[1., 2.]), &x, 0.95).is_err());
    }

    fn example() -> (NodeValues, DMatrix<f64>) {
        let x1 = [0.5, -1.2, 2.2, 0.1, 3.3, -0.7, 1.9, 0.0];
        let x2 = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let y = [1.2, -0.4, 3.9, 1.1, 2.8, -1.5, 3.0, 0.2];
        (vals(&y), design_with_intercept(&[&x1, &x2]))
    }

    #[test]
    fn gls_identity_reduces_to_ols() {
        let (y, x) = example();
        let o = ols(&y, &x, 0.95).unwrap();
        let g = gls(&y, &x, &DMatrix::identity(8, 8), GlsScale::Estimated, 0.95).unwrap();
        for j in 0..3 {
            assert!((o.beta[j] - g.beta[j]).abs() < 1e-12);
            assert!((o.se[j] - g.se[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gls_known_scale_doubles_se_under_4i() {
        let (y, x) = example();
        let one = gls(&y, &x, &DMatrix::identity(8, 8), GlsScale::Known, 0.95).unwrap();
        let four = gls(&y, &x, &(DMatrix::identity(8, 8) * 4.0), GlsScale::Known, 0.95).unwrap();
        for j in 0..3 {
            assert!((one.beta[j] - four.beta[j]).abs() < 1e-12);
            assert!((four.se[j] - 2.0 * one.se[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gls_rejects_bad_covariance() {
        let (y, x) = example();
        let mut s = DMatrix::identity(8, 8);
        s[(0, 0)] = -1.0;
        assert!(matches!(gls(&y, &x, &s, GlsScale::Known, 0.95), Err(Error::BadCovariance(_))));
        let mut s = DMatrix::identity(8, 8);
        s[(0, 1)] = 0.5;
        assert!(matches!(gls(&y, &x, &s, GlsScale::Known, 0.95), Err(Error::BadCovariance(_))));
    }

    #[test]
    fn lmm_zero_kinship_is_ols() {
        let (y, x) = example();
        let fit = lmm_fit(&y, &x, &DMatrix::zeros(8, 8), 0.95).unwrap();
        let o = ols(&y, &x, 0.95).unwrap();
        assert_eq!(fit.sigma_g2, 0.0);
        for j in 0..3 {
            assert!((fit.beta[j] - o.beta[j]).abs() < 1e-10);
            assert!((fit.se[j] - o.se[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn lmm_rejects_non_psd() {
        let mut k = DMatrix::identity(3, 3);
        k[(0, 1)] = 2.0;
        k[(1, 0)] = 2.0;
        assert!(matches!(LmmModel::new(&k), Err(Error::BadCovariance(_))));
    }

    #[test]
    fn lmm_optimum_dominates_boundary() {
        let (y, x) = example();
        let k = DMatrix::from_fn(8, 8, |i, j| 0.7f64.powi((i as i32 - j as i32).abs()));
        let model = LmmModel::new(&k).unwrap();
        let fit = model.fit(&y, &x, 0.95).unwrap();
        let at_zero = model.profile_loglik(&y, &x, 0.0).unwrap();
        assert!(fit.loglik >= at_zero);
        assert!(fit.sigma_g2 >= 0.0 && fit.sigma_e2 > 0.0);
    }
}
