//! Seeded Monte Carlo experiments for the estimator and the aligner.
//!
//! Replication `r` draws from its own stream `derive_seed(seed, r)`, so
//! results do not depend on thread scheduling and are reduced in order.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align, AlignOptions, AlignStatus, AlignmentParams, ConstraintMode, DEFAULT_SHIFT_CANDIDATES};
use crate::diffeo::{flow, DiffeoSpec, FlowConfig};
use crate::estimator::{discrete_offsets, expected_ise, fit, realized_ise, tail_bias};
use crate::noise::{GpSampler, NoiseSpectrum};
use crate::plot::{Plot, Style};
use crate::rng::{derive_seed, rng_for, GENERATOR};
use crate::spectral::{synthesize, wrap_angle};
use crate::{ContourStack, Error, FourierCoeffs, Grid, Result, Vec2, SCHEMA_VERSION};

/// Band-limited test curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    /// Unit circle.
    Circle,
    /// Semi-axes 2 and 1.
    Ellipse,
    /// `r(θ) = 1 + 0.3 cos 3θ`.
    ThreeLobe,
    /// `r(θ) = 1 + 0.25 cos 5θ`.
    FiveLobeRose,
}

fn ellipse(a: f64, b: f64) -> FourierCoeffs {
    let mut c = FourierCoeffs::zeros(1);
    c.set_mu(1, Vec2::new(a, 0.0));
    c.set_nu(1, Vec2::new(0.0, b));
    c
}

impl Template {
    pub fn coeffs(self) -> FourierCoeffs {
        // r(θ) = 1 + a cos kθ gives x = cos θ + (a/2)(cos(k+1)θ + cos(k−1)θ),
        // y = sin θ + (a/2)(sin(k+1)θ − sin(k−1)θ).
        let lobed = |k: usize, a: f64| {
            let mut c = FourierCoeffs::zeros(k + 1);
            c.set_mu(1, Vec2::new(1.0, 0.0));
            c.set_nu(1, Vec2::new(0.0, 1.0));
            c.set_mu(k + 1, Vec2::new(a / 2.0, 0.0));
            c.set_nu(k + 1, Vec2::new(0.0, a / 2.0));
            c.set_mu(k - 1, Vec2::new(a / 2.0, 0.0));
            c.set_nu(k - 1, Vec2::new(0.0, -a / 2.0));
            c
        };
        match self {
            Template::Circle => ellipse(1.0, 1.0),
            Template::Ellipse => ellipse(2.0, 1.0),
            Template::ThreeLobe => lobed(3, 0.3),
            Template::FiveLobeRose => lobed(5, 0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthConfig {
    Template(Template),
    Coeffs(FourierCoeffs),
}

impl TruthConfig {
    pub fn coeffs(&self) -> FourierCoeffs {
        match self {
            TruthConfig::Template(t) => t.coeffs(),
            TruthConfig::Coeffs(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct POrderParams {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub j_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpectrumConfig {
    POrder(POrderParams),
    Sigma2(Vec<f64>),
}

impl SpectrumConfig {
    pub fn spectrum(&self) -> Result<NoiseSpectrum> {
        match self {
            SpectrumConfig::POrder(p) => NoiseSpectrum::p_order(p.alpha, p.beta, p.p, p.j_max),
            SpectrumConfig::Sigma2(s) => NoiseSpectrum::new(s.clone()),
        }
    }
}

/// Random mis-registration applied to contours `t ≥ 1`: shifts uniform in
/// `[−max_shift, max_shift]`, weights uniform in `[−max_weight, max_weight]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisalignmentConfig {
    pub max_shift: f64,
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub max_weight: f64,
    #[serde(default = "default_shift_candidates")]
    pub grid_search_shifts: Option<usize>,
    #[serde(default)]
    pub mode: ConstraintMode,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_shift_candidates() -> Option<usize> {
    Some(DEFAULT_SHIFT_CANDIDATES)
}

fn default_max_iter() -> usize {
    500
}

fn default_tol() -> f64 {
    1e-6
}

fn default_version() -> String {
    SCHEMA_VERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: String,
    pub truth: TruthConfig,
    pub spectrum: SpectrumConfig,
    pub n: usize,
    /// Truncation order `J` of the estimator.
    #[serde(rename = "J")]
    pub order: usize,
    /// Number of contours `T + 1` per replication.
    pub contours: usize,
    #[serde(default = "one")]
    pub replications: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misalignment: Option<MisalignmentConfig>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                self.version
            )));
        }
        let grid = Grid::standard(self.n)?;
        if self.order > grid.max_order() {
            return Err(Error::Schema(format!(
                "J = {} exceeds (n − 1)/2 = {} for n = {}",
                self.order,
                grid.max_order(),
                self.n
            )));
        }
        if self.contours == 0 {
            return Err(Error::Schema("contours must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Schema("replications must be at least 1".into()));
        }
        self.spectrum.spectrum()?;
        if let Some(mis) = &self.misalignment {
            for (name, v) in [("max_shift", mis.max_shift), ("max_weight", mis.max_weight), ("tol", mis.tol)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Schema(format!("misalignment.{name} = {v} must be nonnegative")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One simulated data set with the transformation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub stack: ContourStack,
    /// Known shifts and weights; identity without a misalignment section.
    pub truth_params: AlignmentParams,
}

/// Contour `t` is `Γ(φ_{w_t}(θ_l − α_t)) + ε_t(θ_l)`, so reading it at
/// `φ_{−w_t}(θ) + α_t` recovers `Γ(θ)` up to noise.
fn misregistered(truth: &FourierCoeffs, spec: &DiffeoSpec, alpha: f64, flow_cfg: FlowConfig, theta: f64) -> Vec2 {
    let z = wrap_angle(theta - alpha);
    let z = if spec.weights().iter().all(|&w| w == 0.0) { z } else { flow(spec, flow_cfg, z) };
    synthesize(truth, z)
}

fn uniform(rng: &mut ChaCha20Rng, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..=half_width)
    }
}

/// Simulates replication `replication` of `cfg`.
pub fn simulate(cfg: &ExperimentConfig, replication: u64) -> Result<Simulation> {
    cfg.validate()?;
    let grid = Grid::standard(cfg.n)?;
    let truth = cfg.truth.coeffs();
    let spec = cfg.spectrum.spectrum()?;
    simulate_with(cfg, &grid, &truth, &GpSampler::new(&spec, &grid), replication)
}

fn simulate_with(
    cfg: &ExperimentConfig,
    grid: &Grid,
    truth: &FourierCoeffs,
    sampler: &GpSampler,
    replication: u64,
) -> Result<Simulation> {
    let rep_seed = derive_seed(cfg.seed, replication);
    let mut noise_rng = rng_for(derive_seed(rep_seed, 0));
    let mut params = AlignmentParams::identity(cfg.contours, cfg.misalignment.as_ref().map_or(0, |m| m.m));
    if let Some(mis) = &cfg.misalignment {
        let mut rng = rng_for(derive_seed(rep_seed, 1));
        for t in 1..cfg.contours {
            params.alphas[t] = uniform(&mut rng, mis.max_shift);
            let w = (0..2 * mis.m).map(|_| uniform(&mut rng, mis.max_weight)).collect();
            params.weights[t] = DiffeoSpec::new(mis.m, w)?;
        }
    }
    let flow_cfg = FlowConfig::default();
    let contours = (0..cfg.contours)
        .map(|t| {
            let noise = sampler.sample(&mut noise_rng);
            grid.theta()
                .iter()
                .zip(noise.values)
                .map(|(&th, e)| misregistered(truth, &params.weights[t], params.alphas[t], flow_cfg, th) + e)
                .collect()
        })
        .collect();
    Ok(Simulation {
        stack: ContourStack::new(grid.clone(), contours)?,
        truth_params: params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub version: String,
    pub generator: String,
    pub grid: String,
}

impl ReportMetadata {
    fn new() -> Self {
        ReportMetadata {
            version: SCHEMA_VERSION.into(),
            generator: GENERATOR.into(),
            grid: "standard-odd".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReplication {
    pub ise: f64,
    pub variance_term: f64,
    /// `σ̂²_j`, absent with a single contour.
    pub sigma2_hat: Option<Vec<f64>>,
}

/// Moments of `k(T+1)σ̂²_j/σ²_j` against its `χ²` law, `k = 4` for `j ≥ 1`
/// and `k = 2` for `j = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareCheck {
    pub j: usize,
    pub dof: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    pub mean_ise: f64,
    pub sd_ise: f64,
    pub mean_variance_term: f64,
    pub tail_bias: f64,
    pub expected_ise: f64,
    /// Expected ISE with Riemann-sum coefficients and aliased variances.
    pub expected_ise_discrete: f64,
    pub sigma2_true: Vec<f64>,
    pub sigma2_hat_mean: Option<Vec<f64>>,
    pub chi_square: Vec<ChiSquareCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub metadata: ReportMetadata,
    pub config: ExperimentConfig,
    pub summary: EstimationSummary,
    pub replications: Vec<EstimationReplication>,
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Simulates, fits and scores every replication.
pub fn run_estimation_experiment(cfg: &ExperimentConfig) -> Result<EstimationReport> {
    cfg.validate()?;
    let grid = Grid::standard(cfg.n)?;
    let truth = cfg.truth.coeffs();
    let spec = cfg.spectrum.spectrum()?;
    let sampler = GpSampler::new(&spec, &grid);
    let reps = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_with(cfg, &grid, &truth, &sampler, r)?;
            let fitted = fit(&sim.stack, cfg.order)?;
            let budget = realized_ise(&fitted, &truth);
            Ok(EstimationReplication {
                ise: budget.ise,
                variance_term: budget.variance_term,
                sigma2_hat: fitted.noise_var,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let t = cfg.contours - 1;
    let (mean_ise, var_ise) = mean_var(reps.iter().map(|r| r.ise));
    let (mean_z, _) = mean_var(reps.iter().map(|r| r.variance_term));
    let sigma2_true: Vec<f64> = (0..=cfg.order).map(|j| spec.variance(j)).collect();
    let offsets = discrete_offsets(|th| synthesize(&truth, th), &spec, &grid, cfg.order);
    let mut summary = EstimationSummary {
        mean_ise,
        sd_ise: var_ise.sqrt(),
        mean_variance_term: mean_z,
        tail_bias: tail_bias(&truth, cfg.order),
        expected_ise: expected_ise(&truth, &spec, cfg.order, t),
        expected_ise_discrete: tail_bias(&truth, cfg.order) + offsets.expected_variance_term(t),
        sigma2_true: sigma2_true.clone(),
        sigma2_hat_mean: None,
        chi_square: Vec::new(),
    };
    if t >= 1 {
        let hats: Vec<&Vec<f64>> = reps.iter().filter_map(|r| r.sigma2_hat.as_ref()).collect();
        summary.sigma2_hat_mean = Some(
            (0..=cfg.order)
                .map(|j| hats.iter().map(|h| h[j]).sum::<f64>() / hats.len() as f64)
                .collect(),
        );
        for (j, &s2) in sigma2_true.iter().enumerate() {
            if s2 <= 0.0 {
                continue;
            }
            let k = if j == 0 { 2.0 } else { 4.0 };
            let scale = k * cfg.contours as f64 / s2;
            let (mean, variance) = mean_var(hats.iter().map(|h| h[j] * scale));
            summary.chi_square.push(ChiSquareCheck {
                j,
                dof: k as usize * t,
                mean,
                variance,
            });
        }
    }
    Ok(EstimationReport {
        metadata: ReportMetadata::new(),
        config: cfg.clone(),
        summary,
        replications: reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReplication {
    pub true_params: AlignmentParams,
    pub params: AlignmentParams,
    /// Largest wrapped shift error over contours.
    pub shift_error: f64,
    /// Largest weight error over contours and components.
    pub weight_error: f64,
    pub identity_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub status: AlignStatus,
    pub trace_non_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub max_shift_error: f64,
    pub max_weight_error: f64,
    /// Mean of `M / M_identity`.
    pub mean_objective_ratio: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub metadata: ReportMetadata,
    pub config: ExperimentConfig,
    pub summary: AlignmentSummary,
    pub replications: Vec<AlignmentReplication>,
}

/// Simulates misregistered stacks with known parameters, aligns them and
/// scores the recovery.
pub fn run_alignment_experiment(cfg: &ExperimentConfig) -> Result<AlignmentReport> {
    cfg.validate()?;
    let mis = cfg
        .misalignment
        .as_ref()
        .ok_or_else(|| Error::Schema("alignment experiment needs a misalignment section".into()))?;
    if cfg.contours < 2 {
        return Err(Error::InsufficientReplicates { contours: cfg.contours });
    }
    let grid = Grid::standard(cfg.n)?;
    let truth = cfg.truth.coeffs();
    let spec = cfg.spectrum.spectrum()?;
    let sampler = GpSampler::new(&spec, &grid);
    let opts = AlignOptions {
        order: cfg.order,
        m: mis.m,
        mode: mis.mode,
        max_iter: mis.max_iter,
        tol: mis.tol,
        grid_search_shifts: mis.grid_search_shifts,
        ..AlignOptions::default()
    };
    let reps = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_with(cfg, &grid, &truth, &sampler, r)?;
            let res = align(&sim.stack, &opts)?;
            let shift_error = (0..cfg.contours)
                .map(|t| wrap_angle(res.params.alphas[t] - sim.truth_params.alphas[t]).abs())
                .fold(0.0, f64::max);
            let weight_error = res
                .params
                .weights
                .iter()
                .zip(&sim.truth_params.weights)
                .flat_map(|(a, b)| a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            Ok(AlignmentReplication {
                true_params: sim.truth_params,
                shift_error,
                weight_error,
                identity_objective: res.identity_objective,
                objective: res.objective,
                iterations: res.iterations,
                status: res.status,
                trace_non_increasing: res.trace.windows(2).all(|w| w[1] <= w[0]),
                params: res.params,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = AlignmentSummary {
        max_shift_error: reps.iter().map(|r| r.shift_error).fold(0.0, f64::max),
        max_weight_error: reps.iter().map(|r| r.weight_error).fold(0.0, f64::max),
        mean_objective_ratio: reps
            .iter()
            .map(|r| if r.identity_objective > 0.0 { r.objective / r.identity_objective } else { 0.0 })
            .sum::<f64>()
            / reps.len() as f64,
        converged: reps.iter().filter(|r| r.status == AlignStatus::Converged).count(),
    };
    Ok(AlignmentReport {
        metadata: ReportMetadata::new(),
        config: cfg.clone(),
        summary,
        replications: reps,
    })
}

impl EstimationReport {
    /// One row per replication.
    pub fn replications_csv(&self) -> String {
        let order = self.config.order;
        let mut out = String::from("replication,ise,variance_term");
        for j in 0..=order {
            out.push_str(&format!(",sigma2_hat_{j}"));
        }
        out.push('\n');
        for (r, rep) in self.replications.iter().enumerate() {
            out.push_str(&format!("{r},{},{}", rep.ise, rep.variance_term));
            for j in 0..=order {
                match &rep.sigma2_hat {
                    Some(h) => out.push_str(&format!(",{}", h[j])),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// True and mean estimated variance per order.
    pub fn variances_csv(&self) -> String {
        let mut out = String::from("j,sigma2_true,sigma2_hat_mean\n");
        for (j, s) in self.summary.sigma2_true.iter().enumerate() {
            let hat = self.summary.sigma2_hat_mean.as_ref().map(|h| h[j].to_string()).unwrap_or_default();
            out.push_str(&format!("{j},{s},{hat}\n"));
        }
        out
    }

    /// `log10 σ²_j` true (line) against the estimates of the first
    /// replication (points).
    pub fn variances_svg(&self) -> String {
        let mut p = Plot::new("log10 noise variance by order").equal_aspect(false).size(640.0, 400.0);
        let log_pts = |v: &[f64]| -> Vec<(f64, f64)> {
            v.iter()
                .enumerate()
                .filter(|(_, &s)| s > 0.0)
                .map(|(j, &s)| (j as f64, s.log10()))
                .collect()
        };
        p.xy("true", log_pts(&self.summary.sigma2_true), Style::Line);
        if let Some(h) = self.replications.first().and_then(|r| r.sigma2_hat.as_ref()) {
            p.xy("estimated", log_pts(h), Style::Points);
        }
        p.render()
    }
}

impl AlignmentReport {
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("replication,identity_objective,objective,iterations,status,shift_error,weight_error\n");
        for (r, rep) in self.replications.iter().enumerate() {
            let status = serde_json::to_value(rep.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            out.push_str(&format!(
                "{r},{},{},{},{status},{},{}\n",
                rep.identity_objective, rep.objective, rep.iterations, rep.shift_error, rep.weight_error
            ));
        }
        out
    }
}
