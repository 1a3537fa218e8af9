//! Acceptance suite: one line per criterion with its runtime and the
//! numbers it was judged on. Set `ACCEPTANCE_ONLY=3,10` to run a subset.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use skorohod_core::geometry::Domain;
use skorohod_core::montecarlo::{ExperimentReport, Verdict};
use skorohod_core::paths::{uniform_grid, SamplePath};
use skorohod_core::rng::stream_rng;
use skorohod_core::skorohod::{bv_constant, half_line_reflection, solve, verify_bv_comparison};

type Outcome = Result<String, String>;

struct Ctx {
    scratch: tempfile::TempDir,
    wz_level9_mean: Option<f64>,
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

/// Runs the CLI on a shipped configuration; returns the exit code and the
/// output directory.
fn cli(ctx: &Ctx, name: &str, tag: &str, extra: &[&str]) -> Result<(i32, PathBuf), String> {
    let out = ctx.scratch.path().join(tag);
    let res = Command::new(env!("CARGO_BIN_EXE_skorohod"))
        .arg("run")
        .arg(config(name))
        .arg("--output")
        .arg(&out)
        .args(extra)
        .output()
        .map_err(|e| format!("cannot start the CLI: {e}"))?;
    let code = res.status.code().unwrap_or(-1);
    if code != 0 && code != 1 {
        return Err(format!(
            "{name}: exit {code}: {}",
            String::from_utf8_lossy(&res.stderr).trim()
        ));
    }
    Ok((code, out))
}

fn report(dir: &Path) -> Result<ExperimentReport, String> {
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn run_report(ctx: &Ctx, name: &str, tag: &str, extra: &[&str]) -> Result<ExperimentReport, String> {
    let (_, dir) = cli(ctx, name, tag, extra)?;
    report(&dir)
}

fn require_checks(r: &ExperimentReport, labels: &[&str]) -> Result<(), String> {
    for l in labels {
        match r.check(l) {
            Some(c) if c.passed => {}
            Some(c) => return Err(format!("{l}: {}", c.detail)),
            None => return Err(format!("check {l} missing")),
        }
    }
    if r.verdict != Verdict::Pass {
        return Err(format!("verdict {}", r.verdict.label()));
    }
    Ok(())
}

fn detail(r: &ExperimentReport, labels: &[&str]) -> String {
    labels
        .iter()
        .filter_map(|l| r.check(l).map(|c| c.detail.clone()))
        .collect::<Vec<_>>()
        .join("; ")
}

fn value(r: &ExperimentReport, label: &str) -> Result<f64, String> {
    r.estimate(label)
        .map(|e| e.value)
        .ok_or_else(|| format!("estimate {label} missing"))
}

fn half_line_oracle(_: &mut Ctx) -> Outcome {
    let domain = Domain::half_line();
    let mut worst = 0.0f64;
    for j in 0..1000u64 {
        let mut rng = stream_rng(1, j);
        let nodes = rng.random_range(2..=600usize);
        let mut times = vec![0.0];
        for _ in 1..nodes {
            let last = *times.last().unwrap();
            times.push(last + rng.random_range(1e-3..0.1));
        }
        let mut w = 0.0;
        let rows: Vec<Vec<f64>> = (0..nodes)
            .map(|i| {
                if i > 0 {
                    w += rng.random_range(-0.5..0.5);
                }
                vec![w]
            })
            .collect();
        let x0 = if j % 4 == 0 { 0.0 } else { rng.random_range(0.0..1.5) };
        let driver = SamplePath::from_rows(times, &rows).map_err(|e| e.to_string())?;
        let sol = solve(&domain, &driver, &[x0]).map_err(|e| e.to_string())?;
        let (xs, ks) = half_line_reflection(&driver, x0);
        for i in 0..nodes {
            worst = worst.max((sol.x.node(i)[0] - xs[i]).abs());
            worst = worst.max((sol.k.node(i)[0] - ks[i]).abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max node error {worst:.2e} over 1000 drivers"))
    } else {
        Err(format!("max node error {worst:.2e} exceeds 1e-12"))
    }
}

fn bv_comparison(_: &mut Ctx) -> Outcome {
    let bound = bv_constant() + 1e-6;
    let grid = uniform_grid(1.0, 256);
    let mut summary = Vec::new();
    for (name, domain) in [("unit square", Domain::unit_square()), ("unit disc", Domain::unit_disc())] {
        let mut worst = 0.0f64;
        for j in 0..1000u64 {
            let mut rng = stream_rng(2, j);
            let scale = [0.02, 0.1, 0.4][(j % 3) as usize];
            let mut p = loop {
                let c = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                if domain.in_closure(&c) {
                    break c;
                }
            };
            let mut rows = vec![p.clone()];
            for _ in 1..grid.len() {
                p = vec![p[0] + scale * rng.random_range(-1.0..1.0), p[1] + scale * rng.random_range(-1.0..1.0)];
                rows.push(p.clone());
            }
            let driver = SamplePath::from_rows(grid.clone(), &rows).map_err(|e| e.to_string())?;
            let r = verify_bv_comparison(&domain, &driver).map_err(|e| e.to_string())?;
            worst = worst.max(r.worst_ratio);
        }
        if worst > bound {
            return Err(format!("{name}: worst ratio {worst:.6} > {bound:.6}"));
        }
        summary.push(format!("{name} worst ratio {worst:.4}"));
    }
    Ok(format!("{} (bound {:.4})", summary.join(", "), bv_constant()))
}

fn wong_zakai(ctx: &mut Ctx) -> Outcome {
    let r = run_report(ctx, "wz_convergence", "c3", &[])?;
    let levels = r.estimates.iter().filter(|e| e.label.starts_with("sup_error n=")).count();
    if levels != 6 {
        return Err(format!("{levels} levels reported"));
    }
    ctx.wz_level9_mean = Some(value(&r, "sup_error n=9")?);
    let labels = ["strictly_decreasing", "rate_slope", "rate_r2"];
    require_checks(&r, &labels)?;
    Ok(detail(&r, &labels[1..]))
}

fn skeleton(ctx: &mut Ctx) -> Outcome {
    let r = run_report(ctx, "skeleton_convergence", "c4", &[])?;
    let labels = ["sup_error_decrease", "node_bound_constant_stable"];
    require_checks(&r, &labels)?;
    Ok(detail(&r, &labels))
}

fn approx_continuity(ctx: &mut Ctx) -> Outcome {
    let r = run_report(ctx, "approx_continuity", "c5", &[])?;
    let labels = ["joint_nondecreasing", "regulator_nondecreasing", "final_probability"];
    require_checks(&r, &labels)?;
    let joint: Vec<String> = [0.8, 0.6, 0.5]
        .iter()
        .map(|d| value(&r, &format!("joint delta={d}")).map(|v| format!("{v:.3}")))
        .collect::<Result<_, _>>()?;
    let reg = value(&r, "regulator delta=0.5")?;
    Ok(format!("joint proportions {} ; regulator channel at 0.5: {reg:.3}", joint.join(", ")))
}

fn moments(ctx: &mut Ctx) -> Outcome {
    let r = run_report(ctx, "moment_scaling", "c6", &[])?;
    let labels = ["state_exponent_in_band", "regulator_exponent_in_band"];
    require_checks(&r, &labels)?;
    Ok(detail(&r, &labels))
}

fn tail(ctx: &mut Ctx) -> Outcome {
    let r = run_report(ctx, "exp_tail", "c7", &[])?;
    let labels = ["positive_coefficient", "reference_factor"];
    require_checks(&r, &labels)?;
    Ok(detail(&r, &labels))
}

fn small_ball(ctx: &mut Ctx) -> Outcome {
    let r = run_report(ctx, "smallball_and_levy", "c8", &[])?;
    let labels = [
        "small_ball_slope_negative",
        "small_ball_r2",
        "small_ball_slope_vs_series",
        "levy_decreasing_in_m",
        "levy_decreasing_in_delta",
    ];
    require_checks(&r, &labels)?;
    Ok(detail(&r, &labels[2..]))
}

fn holder(ctx: &mut Ctx) -> Outcome {
    let r = run_report(ctx, "holder_tightness", "c9", &[])?;
    let labels = ["level_means_within_ratio"];
    require_checks(&r, &labels)?;
    Ok(detail(&r, &labels))
}

fn support(ctx: &mut Ctx) -> Outcome {
    let reference = ctx
        .wz_level9_mean
        .ok_or("needs the level-9 mean from the Wong–Zakai criterion")?;
    let set = format!("params.reference_mean={reference}");
    let r = run_report(ctx, "support_inclusions", "c10", &["--set", &set])?;
    let labels = ["forward_p95", "reverse_positive"];
    require_checks(&r, &labels)?;
    Ok(detail(&r, &labels))
}

fn max_principle(ctx: &mut Ctx) -> Outcome {
    let constant = run_report(ctx, "max_principle", "c11a", &[])?;
    require_checks(&constant, &["constant_on_reachable_set"])?;
    let osc = value(&constant, "u_oscillation")?;
    if osc != 0.0 {
        return Err(format!("constant u has oscillation {osc}"));
    }
    let quad = run_report(ctx, "max_principle", "c11b", &["--set", "params.u={ kind = \"norm_squared\" }"])?;
    if quad.verdict != Verdict::PremiseNotMet {
        return Err(format!("|x|^2 at the centre gave {}", quad.verdict.label()));
    }
    let sub = run_report(ctx, "submartingale_test", "c11c", &[])?;
    if sub.verdict != Verdict::Pass {
        return Err(format!("|x|^2 submartingale test gave {}", sub.verdict.label()));
    }
    let neg = run_report(
        ctx,
        "submartingale_test",
        "c11d",
        &["--set", "params.u={ kind = \"norm_squared\", scale = -1.0 }"],
    )?;
    if neg.verdict != Verdict::Fail {
        return Err(format!("-|x|^2 submartingale test gave {}", neg.verdict.label()));
    }
    Ok(format!(
        "constant: pass, oscillation 0; |x|^2 at centre: {}; submartingale |x|^2: {}, -|x|^2: {}",
        quad.verdict.label(),
        sub.verdict.label(),
        neg.verdict.label()
    ))
}

fn determinism(ctx: &mut Ctx) -> Outcome {
    let mut notes = Vec::new();
    for name in ["exp_tail", "regulator_conditional"] {
        let (_, one) = cli(ctx, name, &format!("c12-{name}-1"), &["--workers", "1"])?;
        let (_, eight) = cli(ctx, name, &format!("c12-{name}-8"), &["--workers", "8"])?;
        let a = std::fs::read(one.join("report.json")).map_err(|e| e.to_string())?;
        let b = std::fs::read(eight.join("report.json")).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name}: report.json differs between 1 and 8 workers"));
        }
        notes.push(format!("{name} ({} bytes)", a.len()));
    }
    Ok(format!("byte-identical report.json for workers 1 and 8: {}", notes.join(", ")))
}

type Criterion = (u32, &'static str, f64, fn(&mut Ctx) -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "half-line oracle exactness", 5.0, half_line_oracle),
    (2, "BV comparison constant", 30.0, bv_comparison),
    (3, "Wong–Zakai error decrease", 180.0, wong_zakai),
    (4, "skeleton convergence", 240.0, skeleton),
    (5, "approximate continuity", 300.0, approx_continuity),
    (6, "moment scaling", 120.0, moments),
    (7, "Gaussian tail of the regulator", 120.0, tail),
    (8, "small-ball and Lévy-area conditionals", 180.0, small_ball),
    (9, "Hölder tightness", 120.0, holder),
    (10, "support inclusions", 180.0, support),
    (11, "maximum principle", 120.0, max_principle),
    (12, "determinism across worker counts", 300.0, determinism),
];

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut ctx = Ctx {
        scratch: tempfile::tempdir().expect("scratch directory"),
        wz_level9_mean: None,
    };
    let mut failed = 0;
    let mut ran = 0;
    for &(id, name, limit, f) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = f(&mut ctx);
        let secs = start.elapsed().as_secs_f64();
        let (ok, text) = match outcome {
            Ok(t) if secs <= limit => (true, t),
            Ok(t) => (false, format!("{t}; runtime over the {limit} s limit")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] criterion {id:>2} {name} ({secs:.1} s / {limit} s): {text}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
