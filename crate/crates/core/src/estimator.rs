//! Maximum-likelihood estimation of the spectral mean and noise variances
//! from `T + 1` contours, and integrated-squared-error accounting.
//!
//! With per-contour Riemann coefficients `F_j^t`, `G_j^t` the estimators are
//! the coefficient means `μ̂_j`, `ν̂_j` and
//!
//! ```text
//! σ̂²_j = 1/(4(T+1)) Σ_t ‖F_j^t − μ̂_j‖² + ‖G_j^t − ν̂_j‖²   (j ≥ 1)
//! σ̂²_0 = 1/(2(T+1)) Σ_t ‖F_0^t − μ̂_0‖²
//! ```
//!
//! The ISE `(1/π)∫‖Γ̂ − Γ‖²` splits into the power of the ignored
//! frequencies (tail bias) plus a scaled χ² variance term.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::noise::NoiseSpectrum;
use crate::quadrature::integrate;
use crate::spectral::{parseval_distance, smoother_weight, synthesize, Analyzer, ContourSamples, Grid};
use crate::{Error, FourierCoeffs, Result, Vec2};

/// `T + 1` contours observed on one common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourStack {
    grid: Grid,
    contours: Vec<Vec<Vec2>>,
    labels: Option<Vec<String>>,
}

impl ContourStack {
    pub fn new(grid: Grid, contours: Vec<Vec<Vec2>>) -> Result<Self> {
        if contours.is_empty() {
            return Err(Error::EmptyStack);
        }
        for (index, c) in contours.iter().enumerate() {
            if c.len() != grid.n() {
                return Err(Error::LengthMismatch {
                    index,
                    expected: grid.n(),
                    got: c.len(),
                });
            }
            if c.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite(format!("contour {index}")));
            }
        }
        Ok(ContourStack {
            grid,
            contours,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.contours.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} contours",
                labels.len(),
                self.contours.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn contours(&self) -> &[Vec<Vec2>] {
        &self.contours
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of contours, `T + 1`.
    pub fn len(&self) -> usize {
        self.contours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    pub fn contour(&self, t: usize) -> ContourSamples {
        ContourSamples {
            grid: self.grid.clone(),
            points: self.contours[t].clone(),
        }
    }
}

/// Closed-form maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    /// Grid size the coefficients were computed on.
    pub n: usize,
    /// Truncation order `J`.
    pub order: usize,
    /// Replicate count minus one.
    pub t: usize,
    pub mean_coeffs: FourierCoeffs,
    /// `σ̂²_0..=σ̂²_J`; absent when there is a single contour.
    pub noise_var: Option<Vec<f64>>,
    pub per_contour_coeffs: Vec<FourierCoeffs>,
}

impl MleFit {
    /// The variance estimates, or an error for single-contour fits.
    pub fn noise_variances(&self) -> Result<&[f64]> {
        self.noise_var
            .as_deref()
            .ok_or(Error::InsufficientReplicates { contours: self.t + 1 })
    }

    /// The log-likelihood evaluated at the fit's own estimates.
    pub fn log_likelihood(&self) -> Result<f64> {
        Ok(log_likelihood(
            &self.per_contour_coeffs,
            &self.mean_coeffs,
            self.noise_variances()?,
        ))
    }
}

/// Fits mean coefficients and (for two or more contours) noise variances up
/// to order `order`, truncated to `(n − 1)/2`.
pub fn fit(stack: &ContourStack, order: usize) -> Result<MleFit> {
    let analyzer = Analyzer::new(stack.grid(), order);
    let per_contour: Vec<FourierCoeffs> = stack
        .contours()
        .par_iter()
        .map(|c| analyzer.analyze(c))
        .collect();
    fit_from_coeffs(stack.grid().n(), per_contour)
}

/// The estimator applied to already analyzed per-contour coefficients, all
/// of the same order. The reduction runs in contour order.
pub fn fit_from_coeffs(n: usize, per_contour: Vec<FourierCoeffs>) -> Result<MleFit> {
    let first = per_contour.first().ok_or(Error::EmptyStack)?;
    let order = first.order();
    if per_contour.iter().any(|c| c.order() != order) {
        return Err(Error::InvalidCoefficients("per-contour orders differ".into()));
    }
    let count = per_contour.len();
    let inv = 1.0 / count as f64;
    let mut mean = FourierCoeffs::zeros(order);
    for j in 0..=order {
        mean.set_mu(j, per_contour.iter().map(|c| c.mu(j)).sum::<Vec2>() * inv);
        if j > 0 {
            mean.set_nu(j, per_contour.iter().map(|c| c.nu(j)).sum::<Vec2>() * inv);
        }
    }
    let noise_var = (count >= 2).then(|| {
        (0..=order)
            .map(|j| {
                let ss: f64 = per_contour
                    .iter()
                    .map(|c| (c.mu(j) - mean.mu(j)).norm_sq() + (c.nu(j) - mean.nu(j)).norm_sq())
                    .sum();
                if j == 0 {
                    ss / (2.0 * count as f64)
                } else {
                    ss / (4.0 * count as f64)
                }
            })
            .collect()
    });
    Ok(MleFit {
        n,
        order,
        t: count - 1,
        mean_coeffs: mean,
        noise_var,
        per_contour_coeffs: per_contour,
    })
}

/// Joint Fourier-domain log-likelihood, up to constants:
///
/// ```text
/// −Σ_t [log σ²_0 + Σ_j 2 log σ²_j]
///   − ½ Σ_t ‖f_0^t − μ_0‖²/σ²_0 − ½ Σ_t Σ_j (‖f_j^t − μ_j‖² + ‖g_j^t − ν_j‖²)/σ²_j
/// ```
///
/// with `J = sigma2.len() − 1`. Coefficients beyond `J` are ignored.
pub fn log_likelihood(per_contour: &[FourierCoeffs], mean: &FourierCoeffs, sigma2: &[f64]) -> f64 {
    let count = per_contour.len() as f64;
    let mut ll = 0.0;
    for (j, &s2) in sigma2.iter().enumerate() {
        let ss: f64 = per_contour
            .iter()
            .map(|c| (c.mu(j) - mean.mu(j)).norm_sq() + (c.nu(j) - mean.nu(j)).norm_sq())
            .sum();
        let mult = if j == 0 { 1.0 } else { 2.0 };
        ll -= count * mult * s2.ln() + 0.5 * ss / s2;
    }
    ll
}

/// The spectral-mean curve at `theta`.
pub fn estimate_curve(fit: &MleFit, theta: f64) -> Vec2 {
    synthesize(&fit.mean_coeffs, theta)
}

/// The same estimate written as a smoother over the raw samples:
/// `(1/(T+1)) Σ_t Σ_l X_t^l S_l(θ)`.
pub fn estimate_curve_smoother(stack: &ContourStack, order: usize, theta: f64) -> Vec2 {
    let grid = stack.grid();
    let order = order.min(grid.max_order());
    let weights: Vec<f64> = (0..grid.n())
        .map(|l| smoother_weight(grid, l, order, theta))
        .collect();
    let total: Vec2 = stack
        .contours()
        .iter()
        .map(|c| c.iter().zip(&weights).map(|(&p, &w)| p * w).sum::<Vec2>())
        .sum();
    total / stack.len() as f64
}

/// Power of the true curve above order `order`.
pub fn tail_bias(truth: &FourierCoeffs, order: usize) -> f64 {
    (order + 1..=truth.order()).map(|j| truth.power(j)).sum()
}

/// Expected ISE: `Σ_{j>J} (‖μ_j‖² + ‖ν_j‖²) + (4/(T+1)) Σ_{j≤J} σ²_j`.
pub fn expected_ise(truth: &FourierCoeffs, spec: &NoiseSpectrum, order: usize, t: usize) -> f64 {
    let var: f64 = (0..=order).map(|j| spec.variance(j)).sum();
    tail_bias(truth, order) + 4.0 * var / (t as f64 + 1.0)
}

/// The two terms of the expected ISE as functions of the truncation order.
pub fn ise_tradeoff(
    truth: &FourierCoeffs,
    spec: &NoiseSpectrum,
    t: usize,
    max_order: usize,
) -> Vec<TradeoffPoint> {
    (0..=max_order)
        .map(|order| {
            let tail = tail_bias(truth, order);
            TradeoffPoint {
                order,
                tail_bias: tail,
                variance_term: expected_ise(truth, spec, order, t) - tail,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub order: usize,
    pub tail_bias: f64,
    pub variance_term: f64,
}

/// Split of the integrated squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IseBudget {
    /// `Σ_{j>J} (‖μ_j‖² + ‖ν_j‖²)`.
    pub tail_bias: f64,
    /// Realized `Z_J = 2‖μ̂_0 − μ_0‖² + Σ_{j≤J} (‖μ̂_j − μ_j‖² + ‖ν̂_j − ν_j‖²)`.
    pub variance_term: f64,
    /// `(1/π)∫‖Γ̂ − Γ‖²`.
    pub ise: f64,
}

/// Realized ISE of a fit against known true coefficients.
pub fn realized_ise(fit: &MleFit, truth: &FourierCoeffs) -> IseBudget {
    let est = &fit.mean_coeffs;
    let order = est.order();
    let z = (1..=order).fold(2.0 * (est.mu(0) - truth.mu(0)).norm_sq(), |acc, j| {
        acc + (est.mu(j) - truth.mu(j)).norm_sq() + (est.nu(j) - truth.nu(j)).norm_sq()
    });
    IseBudget {
        tail_bias: tail_bias(truth, order),
        variance_term: z,
        ise: parseval_distance(est, truth),
    }
}

/// Discretization effects of Riemann-sum coefficients on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOffsets {
    /// `c_{j,n}` for `j = 0..=J`.
    pub c: Vec<f64>,
    /// `σ²_{j,n}` for `j = 0..=J`.
    pub sigma2_n: Vec<f64>,
    /// Coefficients of the truth by adaptive quadrature.
    pub exact: FourierCoeffs,
    /// Riemann-sum coefficients of the truth on the grid.
    pub riemann: FourierCoeffs,
}

impl DiscreteOffsets {
    /// `2c_{0,n} + Σ_j c_{j,n}`, the almost-sure limit of `Z_{J,n}`.
    pub fn limit(&self) -> f64 {
        self.c
            .iter()
            .enumerate()
            .map(|(j, &c)| if j == 0 { 2.0 * c } else { c })
            .sum()
    }

    /// Expected discrete variance term for `t + 1` contours: the means of the
    /// non-central χ² terms, `(2σ²_{0,n}·2 + Σ_j σ²_{j,n}·4)/(T+1) + limit`.
    pub fn expected_variance_term(&self, t: usize) -> f64 {
        let scale = 1.0 / (t as f64 + 1.0);
        // E[2σ²_{0,n} χ²_2] and E[σ²_{j,n} χ²_4] are both 4σ².
        let central: f64 = self.sigma2_n.iter().map(|s| 4.0 * s).sum();
        central * scale + self.limit()
    }
}

/// Quadrature tolerance for the exact coefficients of the truth.
const COEFF_TOL: f64 = 1e-10;

/// Compares Riemann-sum and exact Fourier coefficients of `truth` up to
/// order `order` and evaluates the discretized noise variances.
pub fn discrete_offsets<F>(truth: F, spec: &NoiseSpectrum, grid: &Grid, order: usize) -> DiscreteOffsets
where
    F: Fn(f64) -> Vec2 + Sync,
{
    let analyzer = Analyzer::new(grid, order);
    let order = analyzer.order();
    let samples: Vec<Vec2> = grid.theta().iter().map(|&t| truth(t)).collect();
    let riemann = analyzer.analyze(&samples);

    let coeff = |j: usize, basis: fn(f64) -> f64| -> Vec2 {
        let norm = if j == 0 { 1.0 / (2.0 * PI) } else { 1.0 / PI };
        let jf = j as f64;
        let x = integrate(|t| truth(t).x * basis(jf * t), -PI, PI, COEFF_TOL);
        let y = integrate(|t| truth(t).y * basis(jf * t), -PI, PI, COEFF_TOL);
        Vec2::new(x, y) * norm
    };
    let mut exact = FourierCoeffs::zeros(order);
    let terms: Vec<(Vec2, Vec2)> = (0..=order)
        .into_par_iter()
        .map(|j| (coeff(j, f64::cos), if j > 0 { coeff(j, f64::sin) } else { Vec2::ZERO }))
        .collect();
    for (j, (m, v)) in terms.into_iter().enumerate() {
        exact.set_mu(j, m);
        if j > 0 {
            exact.set_nu(j, v);
        }
    }

    let c = (0..=order)
        .map(|j| (riemann.mu(j) - exact.mu(j)).norm_sq() + (riemann.nu(j) - exact.nu(j)).norm_sq())
        .collect();
    let n = grid.n() as f64;
    let rho: Vec<f64> = grid.theta().iter().map(|&t| spec.covariance(t)).collect();
    let sigma2_n = (0..=order)
        .map(|j| {
            let s: f64 = rho
                .iter()
                .zip(grid.theta())
                .map(|(r, &t)| r * (j as f64 * t).cos())
                .sum();
            if j == 0 {
                s / n
            } else {
                2.0 * s / n
            }
        })
        .collect();
    DiscreteOffsets {
        c,
        sigma2_n,
        exact,
        riemann,
    }
}
