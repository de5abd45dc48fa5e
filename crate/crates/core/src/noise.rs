//! Stationary cyclic Gaussian noise defined by per-frequency variances.
//!
//! A process `N(θ) = Σ_j [A_j cos(jθ) + B_j sin(jθ)]` with independent
//! `A_j, B_j ~ Normal(0, σ²_j)` in each planar component has covariance
//! `ρ(θ) = Σ_j σ²_j cos(jθ)`. Samples are drawn directly in this spectral
//! form, which is exact for a truncated spectrum.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;
use crate::spectral::{synthesize, Grid};
use crate::{Error, FourierCoeffs, Result, Vec2};

/// Per-frequency variances `σ²_0..=σ²_{J_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumRepr", into = "SpectrumRepr")]
pub struct NoiseSpectrum {
    sigma2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    sigma2: Vec<f64>,
}

impl TryFrom<SpectrumRepr> for NoiseSpectrum {
    type Error = Error;
    fn try_from(r: SpectrumRepr) -> Result<Self> {
        NoiseSpectrum::new(r.sigma2)
    }
}

impl From<NoiseSpectrum> for SpectrumRepr {
    fn from(s: NoiseSpectrum) -> Self {
        SpectrumRepr { sigma2: s.sigma2 }
    }
}

/// Whether `Σ_j j^{2k+ε} σ²_j` looks convergent for `k = 0` (continuous
/// paths) and `k = 1` (differentiable paths), judged from the power-law decay
/// of the stored variances. Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// Fitted exponent `s` in `σ²_j ≈ C j^{−s}`, when enough positive
    /// variances exist to fit one.
    pub decay_exponent: Option<f64>,
    pub continuous: bool,
    pub differentiable: bool,
}

impl NoiseSpectrum {
    pub fn new(sigma2: Vec<f64>) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(Error::InvalidParameter("spectrum needs at least σ²_0".into()));
        }
        if let Some(j) = sigma2.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "σ²_{j} = {} must be finite and nonnegative",
                sigma2[j]
            )));
        }
        Ok(NoiseSpectrum { sigma2 })
    }

    /// All-zero spectrum up to `j_max`.
    pub fn zero(j_max: usize) -> Self {
        NoiseSpectrum {
            sigma2: vec![0.0; j_max + 1],
        }
    }

    /// Generalised p-order model: `σ²_j = 1/(α + β j^{2p})` for `j ≥ 1` and
    /// `σ²_0 = 1/α`.
    pub fn p_order(alpha: f64, beta: f64, p: f64, j_max: usize) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("p", p)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        let sigma2 = (0..=j_max)
            .map(|j| {
                if j == 0 {
                    1.0 / alpha
                } else {
                    1.0 / (alpha + beta * (j as f64).powf(2.0 * p))
                }
            })
            .collect();
        Ok(NoiseSpectrum { sigma2 })
    }

    pub fn j_max(&self) -> usize {
        self.sigma2.len() - 1
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    /// `σ²_j`, zero beyond the truncation.
    pub fn variance(&self, j: usize) -> f64 {
        self.sigma2.get(j).copied().unwrap_or(0.0)
    }

    /// `ρ(θ) = Σ_j σ²_j cos(jθ)`.
    pub fn covariance(&self, theta: f64) -> f64 {
        self.sigma2
            .iter()
            .enumerate()
            .map(|(j, s)| s * (j as f64 * theta).cos())
            .sum()
    }

    pub fn smoothness(&self) -> SmoothnessReport {
        let positive: Vec<(f64, f64)> = self
            .sigma2
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &s)| s > 0.0)
            .map(|(j, &s)| ((j as f64).ln(), s.ln()))
            .collect();
        // Fit the upper half, where the power law dominates constants.
        let tail = &positive[positive.len() / 2..];
        if tail.len() < 3 {
            return SmoothnessReport {
                decay_exponent: None,
                continuous: true,
                differentiable: true,
            };
        }
        let m = tail.len() as f64;
        let mx = tail.iter().map(|p| p.0).sum::<f64>() / m;
        let my = tail.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let s = -sxy / sxx;
        SmoothnessReport {
            decay_exponent: Some(s),
            continuous: s > 1.0,
            differentiable: s > 3.0,
        }
    }
}

pub fn p_order_spectrum(alpha: f64, beta: f64, p: f64, j_max: usize) -> Result<NoiseSpectrum> {
    NoiseSpectrum::p_order(alpha, beta, p, j_max)
}

pub fn covariance(spec: &NoiseSpectrum, theta: f64) -> f64 {
    spec.covariance(theta)
}

/// One realization of the process on a grid, with its Fourier amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSample {
    pub grid: Grid,
    pub values: Vec<Vec2>,
    /// `mu[j] = (A_{j,1}, A_{j,2})`, `nu[j] = (B_{j,1}, B_{j,2})`.
    pub coeffs: FourierCoeffs,
}

impl GpSample {
    /// The sample path at an arbitrary angle.
    pub fn eval(&self, theta: f64) -> Vec2 {
        synthesize(&self.coeffs, theta)
    }
}

/// Draws samples of one spectrum on one grid, reusing the basis tables.
#[derive(Debug, Clone)]
pub struct GpSampler {
    spec: NoiseSpectrum,
    grid: Grid,
    std: Vec<f64>,
    /// Row `j` holds `cos(jθ_l)` / `sin(jθ_l)` for all `l`.
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl GpSampler {
    pub fn new(spec: &NoiseSpectrum, grid: &Grid) -> Self {
        let n = grid.n();
        let jm = spec.j_max();
        let mut cos = Vec::with_capacity((jm + 1) * n);
        let mut sin = Vec::with_capacity((jm + 1) * n);
        for j in 0..=jm {
            for &t in grid.theta() {
                let (s, c) = (j as f64 * t).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        GpSampler {
            spec: spec.clone(),
            grid: grid.clone(),
            std: spec.sigma2.iter().map(|v| v.sqrt()).collect(),
            cos,
            sin,
        }
    }

    /// Draws the amplitudes only. Per order `j` the draw sequence is
    /// `A_{j,1}, A_{j,2}` and then, for `j ≥ 1`, `B_{j,1}, B_{j,2}`.
    pub fn draw_coeffs<R: Rng + ?Sized>(&self, rng: &mut R) -> FourierCoeffs {
        let jm = self.spec.j_max();
        let mut c = FourierCoeffs::zeros(jm);
        for j in 0..=jm {
            let sd = self.std[j];
            let mut normal = || -> f64 { rng.sample::<f64, _>(StandardNormal) * sd };
            c.set_mu(j, Vec2::new(normal(), normal()));
            if j > 0 {
                c.set_nu(j, Vec2::new(normal(), normal()));
            }
        }
        c
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GpSample {
        let coeffs = self.draw_coeffs(rng);
        let n = self.grid.n();
        let values = (0..n)
            .map(|l| {
                let mut acc = coeffs.mu(0);
                for j in 1..=coeffs.order() {
                    acc += coeffs.mu(j) * self.cos[j * n + l] + coeffs.nu(j) * self.sin[j * n + l];
                }
                acc
            })
            .collect();
        GpSample {
            grid: self.grid.clone(),
            values,
            coeffs,
        }
    }
}

/// One sample of the process on `grid`, deterministic in `seed`.
pub fn sample_gp(spec: &NoiseSpectrum, grid: &Grid, seed: u64) -> GpSample {
    GpSampler::new(spec, grid).sample(&mut rng_for(seed))
}
