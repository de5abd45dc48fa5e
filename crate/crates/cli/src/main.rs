//! `curvespec`: simulate, estimate, align and evaluate closed-curve samples.
//!
//! Exit status is 0 on success, 1 for usage, I/O or schema problems, and 2
//! for numerical failures.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use curvespec::align::{self, AlignOptions, AlignStatus, AlignmentParams, ConstraintMode};
use curvespec::estimator::{self, discrete_offsets, expected_ise, realized_ise, MleFit};
use curvespec::harness::{self, ExperimentConfig};
use curvespec::io::{self, TruthFile};
use curvespec::plot::{Plot, Style};
use curvespec::rng::GENERATOR;
use curvespec::spectral::synthesize;
use curvespec::{Error, Grid, Result, Vec2, SCHEMA_VERSION};

const CURVE_POINTS: usize = 512;

#[derive(Parser)]
#[command(name = "curvespec", version, about = "Spectral mean estimation and alignment of closed curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noisy contours from an experiment config.
    Simulate(SimulateArgs),
    /// Fit the mean curve and per-order noise variances.
    Estimate(EstimateArgs),
    /// Estimate shifts and reparametrisations that align the contours.
    Align(AlignArgs),
    /// Score a fit against a truth file, or recompute the average error of
    /// an alignment result.
    Evaluate(EvaluateArgs),
    /// Run a Monte Carlo experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Contour file to write (`.json` or `.csv`); the truth goes to
    /// `<stem>.truth.json` next to it.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    replication: u64,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Truncation order; defaults to min(10, (n − 1)/2).
    #[arg(long = "J")]
    order: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Curve samples; defaults to `<stem>.curve.csv` next to `--out`.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Truth file whose curve is added to the CSV and plot.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Also write the variance estimates here; fails with a single contour.
    #[arg(long)]
    variances: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    W0Zero,
    MeanZero,
}

impl From<Mode> for ConstraintMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::W0Zero => ConstraintMode::W0Zero,
            Mode::MeanZero => ConstraintMode::MeanZero,
        }
    }
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "J")]
    order: Option<usize>,
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long, value_enum, default_value = "w0-zero")]
    mode: Mode,
    /// Coarse search over this many equidistant shifts before descent.
    #[arg(long)]
    grid_search_shifts: Option<usize>,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
    /// Aligned contours; defaults to `<stem>.aligned.json` next to `--out`.
    #[arg(long)]
    aligned: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "alignment", requires = "truth")]
    fit: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Alignment result whose stored `M` is converted to an average error.
    #[arg(long, conflicts_with = "fit")]
    alignment: Option<PathBuf>,
    /// Written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-replication table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Variance plot (estimation experiments only).
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn default_order(n: usize) -> usize {
    10.min((n - 1) / 2)
}

fn read_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = io::read_text(path)?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = read_config(&args.config, args.seed)?;
    let sim = harness::simulate(&cfg, args.replication)?;
    io::write_stack(&args.out, &sim.stack)?;
    let truth = TruthFile {
        version: SCHEMA_VERSION.into(),
        truth: cfg.truth.coeffs(),
        spectrum: cfg.spectrum.spectrum()?,
        seed: cfg.seed,
        n: cfg.n,
        contours: cfg.contours,
        rng: GENERATOR.into(),
        alignment: cfg.misalignment.as_ref().map(|_| sim.truth_params),
    };
    io::write_json(&io::truth_path(&args.out), &truth)
}

fn curve_points(coeffs: &curvespec::FourierCoeffs) -> Vec<(f64, Vec2)> {
    (0..CURVE_POINTS)
        .map(|i| {
            let th = -PI + TAU * i as f64 / CURVE_POINTS as f64;
            (th, synthesize(coeffs, th))
        })
        .collect()
}

#[derive(Serialize)]
struct VarianceOutput<'a> {
    version: &'a str,
    order: usize,
    contours: usize,
    sigma2_hat: &'a [f64],
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let stack = io::read_stack(&args.input)?;
    let order = args.order.unwrap_or_else(|| default_order(stack.grid().n()));
    let fit = estimator::fit(&stack, order)?;
    if fit.noise_var.is_none() {
        log::warn!("a single contour gives no variance estimates");
    }
    if let Some(path) = &args.variances {
        let v = fit.noise_variances()?;
        io::write_json(
            path,
            &VarianceOutput {
                version: SCHEMA_VERSION,
                order: fit.order,
                contours: stack.len(),
                sigma2_hat: v,
            },
        )?;
    }
    io::write_json(&args.out, &fit)?;

    let truth = args.truth.as_deref().map(io::read_json::<TruthFile>).transpose()?;
    let est = curve_points(&fit.mean_coeffs);
    let true_pts = truth.as_ref().map(|t| curve_points(&t.truth));
    let mut csv = String::from(if true_pts.is_some() { "theta,x,y,truth_x,truth_y\n" } else { "theta,x,y\n" });
    for (i, (th, p)) in est.iter().enumerate() {
        match &true_pts {
            Some(tp) => csv.push_str(&format!("{th},{},{},{},{}\n", p.x, p.y, tp[i].1.x, tp[i].1.y)),
            None => csv.push_str(&format!("{th},{},{}\n", p.x, p.y)),
        }
    }
    fs::write(args.curve.unwrap_or_else(|| sibling(&args.out, "curve.csv")), csv)?;

    if let Some(svg) = &args.svg {
        let mut plot = Plot::new(&format!("estimated mean curve, J = {}", fit.order));
        for (t, c) in stack.contours().iter().enumerate() {
            plot.curve(&format!("contour {t}"), c, Style::Points);
        }
        plot.curve("estimate", &est.iter().map(|p| p.1).collect::<Vec<_>>(), Style::Loop);
        if let Some(tp) = &true_pts {
            plot.curve("truth", &tp.iter().map(|p| p.1).collect::<Vec<_>>(), Style::Loop);
        }
        fs::write(svg, plot.render())?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct AlignmentOutput {
    version: String,
    #[serde(rename = "J")]
    order: usize,
    m: usize,
    mode: ConstraintMode,
    n: usize,
    contours: usize,
    alphas: Vec<f64>,
    weights: Vec<curvespec::diffeo::DiffeoSpec>,
    #[serde(rename = "M")]
    objective: f64,
    #[serde(rename = "M_identity")]
    identity_objective: f64,
    average_error: f64,
    average_error_rounded: String,
    iterations: usize,
    status: AlignStatus,
    trace: Vec<f64>,
}

fn align(args: AlignArgs) -> Result<()> {
    let stack = io::read_stack(&args.input)?;
    let n = stack.grid().n();
    let opts = AlignOptions {
        order: args.order.unwrap_or_else(|| default_order(n)),
        m: args.m,
        mode: args.mode.into(),
        max_iter: args.max_iter,
        tol: args.tol,
        grid_search_shifts: args.grid_search_shifts,
        ..AlignOptions::default()
    };
    let res = align::align(&stack, &opts)?;
    let avg = align::average_error(res.objective, stack.len(), n);
    let AlignmentParams { alphas, weights } = res.params;
    let out = AlignmentOutput {
        version: SCHEMA_VERSION.into(),
        order: opts.order.min(stack.grid().max_order()),
        m: opts.m,
        mode: opts.mode,
        n,
        contours: stack.len(),
        alphas,
        weights,
        objective: res.objective,
        identity_objective: res.identity_objective,
        average_error: avg,
        average_error_rounded: format!("{avg:.2}"),
        iterations: res.iterations,
        status: res.status,
        trace: res.trace,
    };
    io::write_json(&args.out, &out)?;
    io::write_stack(&args.aligned.unwrap_or_else(|| sibling(&args.out, "aligned.json")), &res.aligned)?;
    if let Some(svg) = &args.svg {
        let mut plot = Plot::new("aligned contours");
        for (t, c) in res.aligned.contours().iter().enumerate() {
            plot.curve(&format!("contour {t}"), c, Style::Loop);
        }
        fs::write(svg, plot.render())?;
    }
    if res.status != AlignStatus::Converged {
        log::warn!("alignment stopped without converging ({:?})", res.status);
    }
    println!("M = {:.6e}  average error = {avg:.2}", res.objective);
    Ok(())
}

#[derive(Serialize)]
struct EvaluationOutput {
    version: String,
    #[serde(rename = "J")]
    order: usize,
    n: usize,
    contours: usize,
    tail_bias: f64,
    variance_term: f64,
    ise: f64,
    expected_ise: f64,
    expected_ise_discrete: f64,
    /// `c_{j,n}` for `j = 0..=J`.
    offsets: Vec<f64>,
    sigma2_n: Vec<f64>,
}

#[derive(Serialize)]
struct AverageErrorOutput {
    #[serde(rename = "M")]
    objective: f64,
    contours: usize,
    n: usize,
    average_error: f64,
    average_error_rounded: String,
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value),
        None => {
            print!("{}", io::to_json_string(value)?);
            Ok(())
        }
    }
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    if let Some(path) = &args.alignment {
        let text = io::read_text(path)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let field = |k: &str| v.get(k).ok_or_else(|| Error::Schema(format!("{}: missing field `{k}`", path.display())));
        let objective = field("M")?
            .as_f64()
            .ok_or_else(|| Error::Schema("`M` must be a number".into()))?;
        let count = |k: &str| -> Result<usize> {
            field(k)?
                .as_u64()
                .map(|x| x as usize)
                .filter(|&x| x > 0)
                .ok_or_else(|| Error::Schema(format!("`{k}` must be a positive integer")))
        };
        let (contours, n) = (count("contours")?, count("n")?);
        let avg = align::average_error(objective, contours, n);
        return emit(
            args.out.as_deref(),
            &AverageErrorOutput {
                objective,
                contours,
                n,
                average_error: avg,
                average_error_rounded: format!("{avg:.2}"),
            },
        );
    }
    let (Some(fit_path), Some(truth_path)) = (&args.fit, &args.truth) else {
        return Err(Error::Schema("evaluate needs --fit with --truth, or --alignment".into()));
    };
    let fit: MleFit = io::read_json(fit_path)?;
    let truth: TruthFile = io::read_json(truth_path)?;
    let grid = Grid::standard(fit.n)?;
    let budget = realized_ise(&fit, &truth.truth);
    let offsets = discrete_offsets(|th| synthesize(&truth.truth, th), &truth.spectrum, &grid, fit.order);
    let out = EvaluationOutput {
        version: SCHEMA_VERSION.into(),
        order: fit.order,
        n: fit.n,
        contours: fit.t + 1,
        tail_bias: budget.tail_bias,
        variance_term: budget.variance_term,
        ise: budget.ise,
        expected_ise: expected_ise(&truth.truth, &truth.spectrum, fit.order, fit.t),
        expected_ise_discrete: budget.tail_bias + offsets.expected_variance_term(fit.t),
        offsets: offsets.c,
        sigma2_n: offsets.sigma2_n,
    };
    emit(args.out.as_deref(), &out)
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let cfg = read_config(&args.config, args.seed)?;
    let start = Instant::now();
    if cfg.misalignment.is_some() {
        let report = harness::run_alignment_experiment(&cfg)?;
        io::write_json(&args.out, &report)?;
        if let Some(p) = &args.csv {
            fs::write(p, report.replications_csv())?;
        }
        if args.svg.is_some() {
            log::warn!("--svg is ignored for alignment experiments");
        }
    } else {
        let report = harness::run_estimation_experiment(&cfg)?;
        io::write_json(&args.out, &report)?;
        if let Some(p) = &args.csv {
            fs::write(p, report.replications_csv())?;
            fs::write(sibling(p, "variances.csv"), report.variances_csv())?;
        }
        if let Some(p) = &args.svg {
            fs::write(p, report.variances_svg())?;
        }
    }
    eprintln!(
        "{} replications in {:.3} s",
        cfg.replications,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Align(a) => align(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
