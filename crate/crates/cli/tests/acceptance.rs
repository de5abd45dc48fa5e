//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use curvespec::align::{Aligner, AlignmentParams, ConstraintMode};
use curvespec::diffeo::{check_monotone, flow, flow_sensitivity, inverse_flow, DiffeoSpec, FlowConfig};
use curvespec::estimator::{expected_ise, fit, realized_ise, tail_bias};
use curvespec::harness::{
    run_alignment_experiment, run_estimation_experiment, ExperimentConfig, MisalignmentConfig, POrderParams,
    SpectrumConfig, Template, TruthConfig,
};
use curvespec::rng::rng_for;
use curvespec::spectral::{analyze, synthesize};
use curvespec::{ContourSamples, ContourStack, FourierCoeffs, Grid, Vec2, SCHEMA_VERSION};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn p_order(j_max: usize) -> SpectrumConfig {
    SpectrumConfig::POrder(POrderParams {
        alpha: 1.0,
        beta: 10.0,
        p: 2.0,
        j_max,
    })
}

fn config(truth: TruthConfig, spectrum: SpectrumConfig, n: usize, order: usize, contours: usize, replications: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        version: SCHEMA_VERSION.into(),
        truth,
        spectrum,
        n,
        order,
        contours,
        replications,
        seed,
        misalignment: None,
    }
}

fn random_coeffs(rng: &mut impl Rng, order: usize, scale: f64) -> FourierCoeffs {
    let mut c = FourierCoeffs::zeros(order);
    for j in 0..=order {
        let s = scale / (1.0 + j as f64);
        c.set_mu(j, Vec2::new(rng.random_range(-s..s), rng.random_range(-s..s)));
        if j > 0 {
            c.set_nu(j, Vec2::new(rng.random_range(-s..s), rng.random_range(-s..s)));
        }
    }
    c
}

fn exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(1);
    let truth = random_coeffs(&mut rng, 5, 2.0);
    let grid = Grid::standard(31).unwrap();
    let contour: Vec<Vec2> = grid.theta().iter().map(|&t| synthesize(&truth, t)).collect();
    let stack = ContourStack::new(grid, vec![contour; 4]).unwrap();
    let ise = realized_ise(&fit(&stack, 5).unwrap(), &truth).ise;
    let secs = start.elapsed().as_secs_f64();
    outcome(ise <= 1e-20 && secs < 1.0, format!("ISE = {ise:.3e} (<= 1e-20), {secs:.3} s (< 1 s)"))
}

fn orthogonality() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [3usize, 5, 31, 73, 101] {
        let grid = Grid::standard(n).unwrap();
        let th = grid.theta();
        let half = (n - 1) / 2;
        let nf = n as f64;
        let sum = |f: &dyn Fn(f64) -> f64| th.iter().map(|&t| f(t)).sum::<f64>();
        for j in 0..=half {
            let jf = j as f64;
            let mean_cos = sum(&|t| (jf * t).cos()) / nf;
            worst = worst.max((mean_cos - if j == 0 { 1.0 } else { 0.0 }).abs());
            for k in 0..=half {
                let kf = k as f64;
                let delta = if j == k { 1.0 } else { 0.0 };
                if j >= 1 && k >= 1 {
                    let cc = 2.0 / nf * sum(&|t| (jf * t).cos() * (kf * t).cos());
                    let ss = 2.0 / nf * sum(&|t| (jf * t).sin() * (kf * t).sin());
                    worst = worst.max((cc - delta).abs()).max((ss - delta).abs());
                }
                let cs = 2.0 / nf * sum(&|t| (jf * t).cos() * (kf * t).sin());
                worst = worst.max(cs.abs());
            }
            // The library's analysis of a single basis function returns a
            // unit coefficient and nothing else.
            if j >= 1 {
                let pts: Vec<Vec2> = th.iter().map(|&t| Vec2::new((jf * t).cos(), (jf * t).sin())).collect();
                let c = analyze(&ContourSamples::new(grid.clone(), pts).unwrap(), half);
                for k in 0..=half {
                    let d = if k == j { 1.0 } else { 0.0 };
                    worst = worst.max((c.mu(k).x - d).abs()).max(c.mu(k).y.abs());
                    worst = worst.max(c.nu(k).x.abs()).max((c.nu(k).y - d).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.3e} (<= 1e-10) over n in {{3, 5, 31, 73, 101}}"))
}

fn chi_square() -> Outcome {
    let start = Instant::now();
    let cfg = config(TruthConfig::Template(Template::FiveLobeRose), p_order(5), 31, 5, 5, 10_000, 3);
    let report = run_estimation_experiment(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut pass = secs < 30.0;
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for j in 1..=5 {
        let c = report.summary.chi_square.iter().find(|c| c.j == j).unwrap();
        let em = (c.mean - 16.0).abs() / 16.0;
        let ev = (c.variance - 32.0).abs() / 32.0;
        pass &= c.dof == 16 && em <= 0.02 && ev <= 0.10;
        worst_mean = worst_mean.max(em);
        worst_var = worst_var.max(ev);
    }
    outcome(
        pass,
        format!(
            "worst relative error: mean {:.2}% (<= 2%), variance {:.2}% (<= 10%), {secs:.2} s (< 30 s)",
            100.0 * worst_mean,
            100.0 * worst_var
        ),
    )
}

fn expected_ise_check() -> Outcome {
    let start = Instant::now();
    let cfg = config(TruthConfig::Template(Template::FiveLobeRose), p_order(10), 125, 10, 100, 200, 2026);
    let report = run_estimation_experiment(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let s = &report.summary;
    let rel = (s.mean_ise - s.expected_ise).abs() / s.expected_ise;
    outcome(
        rel <= 0.10 && secs < 60.0,
        format!(
            "mean ISE {:.5} vs formula {:.5}: {:.2}% (<= 10%), {secs:.2} s (< 60 s)",
            s.mean_ise,
            s.expected_ise,
            100.0 * rel
        ),
    )
}

fn tail_slope() -> Outcome {
    let truth = TruthConfig::Template(Template::FiveLobeRose);
    let tail = tail_bias(&truth.coeffs(), 4);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut means = Vec::new();
    for (i, contours) in [10usize, 100, 1000].into_iter().enumerate() {
        let cfg = config(truth.clone(), p_order(10), 31, 4, contours, 200, 50 + i as u64);
        let s = run_estimation_experiment(&cfg).unwrap().summary;
        means.push(s.mean_ise);
        xs.push((contours as f64).ln());
        ys.push((s.mean_ise - tail).ln());
    }
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]) && means.iter().all(|&m| m > tail);
    outcome(
        decreasing && (slope + 1.0).abs() <= 0.15,
        format!(
            "mean ISE {:.4e} > {:.4e} > {:.4e} -> tail {tail:.4e}; slope {slope:.3} (-1 +/- 0.15)",
            means[0], means[1], means[2]
        ),
    )
}

fn flow_inverse() -> Outcome {
    let cfg = FlowConfig::new(200).unwrap();
    let mut rng = rng_for(6);
    let angles: Vec<f64> = (0..500).map(|i| -PI + TAU * i as f64 / 500.0).collect();
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let w = (0..2 * m).map(|_| rng.random_range(-0.5..=0.5)).collect();
        let spec = DiffeoSpec::new(m, w).unwrap();
        let mut prev_fwd = f64::NEG_INFINITY;
        let mut prev_inv = f64::NEG_INFINITY;
        for &a in &angles {
            let f = flow(&spec, cfg, a);
            let back = inverse_flow(&spec, cfg, f);
            worst = worst.max((back - a).abs());
            let g = inverse_flow(&spec, cfg, a);
            monotone &= f > prev_fwd && g > prev_inv;
            prev_fwd = f;
            prev_inv = g;
        }
        monotone &= check_monotone(&spec, cfg).is_ok();
    }
    outcome(
        worst <= 1e-6 && monotone,
        format!("max |phi_-w(phi_w(t)) - t| = {worst:.3e} (<= 1e-6), strictly monotone: {monotone}"),
    )
}

fn gradient_fidelity() -> Outcome {
    let n = 31;
    let grid = Grid::standard(n).unwrap();
    let flow_cfg = FlowConfig::default();
    let mut rng = rng_for(7);
    let mut worst_grad: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..50 {
        let base = random_coeffs(&mut rng, 6, 2.0);
        let contours = (0..3)
            .map(|_| {
                let shift = rng.random_range(-1.0..1.0);
                let wiggle = random_coeffs(&mut rng, 10, 0.1);
                grid.theta()
                    .iter()
                    .map(|&t| synthesize(&base, t - shift) + synthesize(&wiggle, t))
                    .collect()
            })
            .collect();
        let stack = ContourStack::new(grid.clone(), contours).unwrap();
        let aligner = Aligner::new(&stack, 8, flow_cfg).unwrap();
        let mut params = AlignmentParams::identity(3, 2);
        for t in 0..3 {
            params.alphas[t] = rng.random_range(-1.0..1.0);
            params.weights[t] = DiffeoSpec::new(2, (0..4).map(|_| rng.random_range(-0.3..0.3)).collect()).unwrap();
        }
        let g = aligner.evaluate_unconstrained(&params).unwrap().gradient;
        let x = params.to_vector();
        let fd: Vec<f64> = (0..x.len())
            .map(|i| {
                let at = |d: f64| {
                    let mut y = x.clone();
                    y[i] += d;
                    aligner.objective(&AlignmentParams::from_vector(&y, 3, 2).unwrap()).unwrap()
                };
                (at(h) - at(-h)) / (2.0 * h)
            })
            .collect();
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_grad = worst_grad.max(err / norm);
    }

    let mut worst_sens: f64 = 0.0;
    for _ in 0..50 {
        let m = rng.random_range(1..=3);
        let w: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-0.4..0.4)).collect();
        let spec = DiffeoSpec::new(m, w.clone()).unwrap();
        let theta = rng.random_range(-PI..PI);
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for i in 1..=2 * m {
            let at = |d: f64| {
                let mut v = w.clone();
                v[i - 1] += d;
                inverse_flow(&DiffeoSpec::new(m, v).unwrap(), flow_cfg, theta)
            };
            fd.push((at(h) - at(-h)) / (2.0 * h));
            an.push(flow_sensitivity(&spec, flow_cfg, theta, i).unwrap());
        }
        let err = an.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = an.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_sens = worst_sens.max(err / norm);
    }
    outcome(
        worst_grad <= 1e-5 && worst_sens <= 1e-5,
        format!(
            "worst relative error: alignment gradient {worst_grad:.3e}, flow sensitivity {worst_sens:.3e} (<= 1e-5)"
        ),
    )
}

fn alignment_recovery() -> Outcome {
    let mis = |m: usize, max_weight: f64| MisalignmentConfig {
        max_shift: 2.5,
        m,
        max_weight,
        grid_search_shifts: Some(36),
        mode: ConstraintMode::W0Zero,
        max_iter: 500,
        tol: 1e-6,
    };
    let mut clean = config(TruthConfig::Template(Template::ThreeLobe), SpectrumConfig::Sigma2(vec![0.0]), 73, 10, 3, 10, 8);
    clean.misalignment = Some(mis(0, 0.0));
    let r = run_alignment_experiment(&clean).unwrap();
    let shift_ok = r.summary.max_shift_error <= 0.01;
    let worst_ratio = r
        .replications
        .iter()
        .map(|x| x.objective / x.identity_objective)
        .fold(0.0, f64::max);
    let reduce_ok = worst_ratio < 1e-6;

    let noisy_spec = SpectrumConfig::POrder(POrderParams {
        alpha: 400.0,
        beta: 4000.0,
        p: 2.0,
        j_max: 10,
    });
    let mut noisy = config(TruthConfig::Template(Template::ThreeLobe), noisy_spec, 73, 10, 3, 10, 9);
    noisy.misalignment = Some(mis(2, 0.1));
    let r2 = run_alignment_experiment(&noisy).unwrap();
    let monotone = r2.replications.iter().all(|x| x.trace_non_increasing);
    let worst_noisy = r2
        .replications
        .iter()
        .map(|x| x.objective / x.identity_objective)
        .fold(0.0, f64::max);
    outcome(
        shift_ok && reduce_ok && monotone && worst_noisy <= 0.5,
        format!(
            "noise-free: shift error {:.2e} rad (<= 0.01), M/M_identity {:.2e} (< 1e-6); \
             diffeo+noise: trace non-increasing {monotone}, M/M_identity {:.3} (<= 0.5)",
            r.summary.max_shift_error, worst_ratio, worst_noisy
        ),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_curvespec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run curvespec")
}

fn average_error_rounding() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut got = Vec::new();
    for m in [1195.048, 568.0997] {
        let file = dir.path().join("result.json");
        fs::write(&file, format!(r#"{{"M": {m}, "contours": 3, "n": 73}}"#)).unwrap();
        let out = run_cli(&["evaluate", "--alignment", "result.json"], dir.path());
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
        got.push(v["average_error_rounded"].as_str().unwrap_or("?").to_string());
    }
    outcome(
        got == ["2.34", "1.61"],
        format!("M = 1195.048 -> {}, M = 568.0997 -> {} (expect 2.34, 1.61)", got[0], got[1]),
    )
}

/// Runs every command in a fresh directory and returns all produced files.
fn cli_session(est_cfg: &str, align_cfg: &str) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("est.json"), est_cfg).unwrap();
    fs::write(d.join("al.json"), align_cfg).unwrap();
    let steps: [&[&str]; 7] = [
        &["simulate", "--config", "est.json", "--out", "sim.json"],
        &["estimate", "--input", "sim.json", "--J", "6", "--out", "fit.json", "--truth", "sim.truth.json", "--svg", "fit.svg", "--variances", "var.json"],
        &["evaluate", "--fit", "fit.json", "--truth", "sim.truth.json", "--out", "budget.json"],
        &["experiment", "--config", "est.json", "--out", "report.json", "--csv", "report.csv", "--svg", "report.svg"],
        &["simulate", "--config", "al.json", "--out", "mis.json"],
        &["align", "--input", "mis.json", "--J", "8", "--m", "1", "--grid-search-shifts", "36", "--max-iter", "40", "--out", "align.json", "--svg", "align.svg"],
        &["experiment", "--config", "al.json", "--out", "areport.json", "--csv", "areport.csv"],
    ];
    for args in steps {
        let out = run_cli(args, d);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(d)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let est = r#"{"truth": {"template": "five-lobe-rose"},
        "spectrum": {"p-order": {"alpha": 1.0, "beta": 10.0, "p": 2.0, "j_max": 10}},
        "n": 41, "J": 6, "contours": 8, "replications": 12, "seed": 4}"#;
    let al = r#"{"truth": {"template": "three-lobe"}, "spectrum": {"sigma2": [0.001, 0.0005]},
        "n": 31, "J": 8, "contours": 3, "replications": 2, "seed": 5,
        "misalignment": {"max_shift": 2.0, "m": 1, "max_weight": 0.1, "max_iter": 40}}"#;
    let a = cli_session(est, al);
    let b = cli_session(est, al);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let same = a == b;
    outcome(same, format!("{} output files byte-identical across two runs: {same} ({})", a.len(), names.join(", ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exactness for band-limited truth", exactness),
        ("orthogonality on odd grids", orthogonality),
        ("chi-square law of variance estimates", chi_square),
        ("expected ISE", expected_ise_check),
        ("asymptotic tail", tail_slope),
        ("flow invertibility", flow_inverse),
        ("gradient fidelity", gradient_fidelity),
        ("alignment recovery", alignment_recovery),
        ("average-error rounding", average_error_rounding),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    // Formula check used by criterion 4, kept here so a drift in either side shows up.
    let truth = Template::FiveLobeRose.coeffs();
    let spec = p_order(10).spectrum().unwrap();
    let direct = 4.0 * spec.sigma2().iter().sum::<f64>() / 100.0;
    assert!((expected_ise(&truth, &spec, 10, 99) - direct).abs() < 1e-15);
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
