//! Strong convergence studies with common random numbers: the Wong–Zakai
//! scheme against the reflected Euler reference, the shifted-driver scheme
//! against the skeleton, and Hölder tightness of the approximations.

use serde::Serialize;

use super::params::{HolderParams, SkeletonParams, WzParams};
use super::report::{Basis, Estimate, ExperimentReport, RateFit, Seeds, Verdict};
use super::stats::{least_squares, mean_ci, quantile_sorted, sorted};
use super::{anchor_of, par_collect};
use crate::error::Result;
use crate::geometry::Domain;
use crate::paths::{
    adapted_interpolation, dyadic_grid, holder_dyadic_lags, holder_norm, holder_seminorm, sample_brownian, Control,
    SamplePath,
};
use crate::rsde::{euler_reflected, shifted_driver, skeleton_on_grid, sup_distance, wong_zakai, Coefficients};

fn params_json<T: Serialize>(p: &T) -> serde_json::Value {
    serde_json::to_value(p).expect("parameters serialize")
}

/// `a − b` on the nodes of `a`.
fn difference(a: &SamplePath, b: &SamplePath) -> SamplePath {
    let bv = b.values_at(a.times());
    let values = a.values().iter().zip(&bv).map(|(x, y)| x - y).collect();
    SamplePath::from_parts_unchecked(a.times().to_vec(), values, a.dim())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Least-squares fit of `log₂ value` against `log₂ Δ_n`, `Δ_n = T 2^{-n}`.
fn level_rate(horizon: f64, levels: &[u32], values: &[f64]) -> Option<RateFit> {
    let xs: Vec<f64> = levels.iter().map(|&n| horizon.log2() - n as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.log2()).collect();
    least_squares(&xs, &ys).map(|f| RateFit::from_fit(&f, "log2 estimate vs log2 step"))
}

#[derive(Default)]
struct WzPath {
    sup: Vec<f64>,
    holder: Vec<f64>,
    sup_doubled: Vec<f64>,
    crn: bool,
}

/// `E‖X − X^n‖_T` per level, `X` the reflected Euler solution on the fine
/// grid and `X^n` the Wong–Zakai scheme driven by the same Brownian path.
pub fn wz_convergence(domain: &Domain, coeffs: &Coefficients, params: &WzParams, seed: u64) -> Result<ExperimentReport> {
    let mut p = params.clone();
    p.resolve()?;
    let fine = p.fine_level.expect("resolved");
    let max_level = *p.levels.last().unwrap();
    let mut seeds = Seeds::new(seed, "path i draws its fine-grid Brownian path from stream i");
    let driver_seed = seeds.phase("driver", 1);
    let grid = dyadic_grid(p.horizon, fine);
    // the supplementary Hölder distance is taken on a coarser dyadic grid
    let hold_level = (max_level + 2).min(fine);
    let hold_stride = 1usize << (fine - hold_level);

    let per_path = par_collect(p.paths, |i| {
        let w = sample_brownian(coeffs.d1, &grid, driver_seed, i)?;
        let x = euler_reflected(domain, coeffs, &w, &p.x0)?;
        let xh = x.x.restrict(hold_stride)?;
        let mut out = WzPath {
            crn: true,
            ..Default::default()
        };
        for &n in &p.levels {
            let xn = wong_zakai(domain, coeffs, &w, n, p.substeps, &p.x0)?;
            let sup = sup_distance(&x.x, &xn.x);
            out.sup.push(sup);
            let diff = difference(&xh, &xn.x);
            out.holder
                .push(sup + holder_dyadic_lags(&diff, 0, diff.len() - 1, p.theta));
            if p.replicate_substeps {
                let xn2 = wong_zakai(domain, coeffs, &w, n, 2 * p.substeps, &p.x0)?;
                out.sup_doubled.push(sup_distance(&x.x, &xn2.x));
            }
            let restricted = w.restrict(1usize << (fine - n))?;
            out.crn &= adapted_interpolation(&restricted, n, p.horizon)?.fingerprint()
                == adapted_interpolation(&w, n, p.horizon)?.fingerprint();
        }
        Ok(out)
    })?;

    let mut report = ExperimentReport::new("wz_convergence", anchor_of("wz_convergence"), params_json(&p), seeds);
    let mut means = Vec::new();
    let mut halfwidths = Vec::new();
    for (li, &n) in p.levels.iter().enumerate() {
        let sup: Vec<f64> = per_path.iter().map(|r| r.sup[li]).collect();
        let e = Estimate::mean(format!("sup_error n={n}"), &sup, true);
        means.push(e.value);
        halfwidths.push(e.ci_halfwidth);
        report.estimates.push(e);
        let hold: Vec<f64> = per_path.iter().map(|r| r.holder[li]).collect();
        report
            .estimates
            .push(Estimate::mean(format!("holder_error n={n}"), &hold, true));
    }
    if p.replicate_substeps {
        let mut ok = true;
        for (li, &n) in p.levels.iter().enumerate() {
            let sup: Vec<f64> = per_path.iter().map(|r| r.sup_doubled[li]).collect();
            let e = Estimate::mean(format!("sup_error_doubled_substeps n={n}"), &sup, true);
            ok &= (e.value - means[li]).abs() < halfwidths[li];
            report.estimates.push(e);
        }
        report.push_check(
            "substep_insensitivity",
            Basis::Policy,
            ok,
            "doubling substeps moves every level estimate by less than its CI halfwidth",
        );
    }
    report.push_check(
        "crn_restriction",
        Basis::Policy,
        per_path.iter().all(|r| r.crn),
        "every level is driven by the restriction of the fine path",
    );
    if means.iter().all(|&m| m == 0.0) {
        report.verdict = Verdict::Degenerate;
        report
            .notes
            .push("all errors vanish: scheme and reference solve the same ODE".into());
        return Ok(report);
    }
    report.push_check(
        "strictly_decreasing",
        Basis::Claim,
        strictly_decreasing(&means),
        format!("sup-error means {means:?}"),
    );
    let fit = level_rate(p.horizon, &p.levels, &means);
    let (slope, r2) = fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r2));
    report.push_check(
        "rate_slope",
        Basis::Policy,
        slope >= p.min_slope,
        format!("slope {slope:.4} >= {}", p.min_slope),
    );
    report.push_check("rate_r2", Basis::Policy, r2 >= p.min_r2, format!("R² {r2:.4} >= {}", p.min_r2));
    report.rate_fit = fit;
    report
        .notes
        .push("pass/fail uses sup distances; the Hölder distance is supplementary".into());
    report.conclude();
    Ok(report)
}

struct SkeletonPath {
    sup_sq: Vec<f64>,
    /// Per level, `|Y^n_{t_k} − Z_{t_k}|²` for `k = 0..=2^n`.
    nodes: Vec<Vec<f64>>,
}

/// `E sup_t |Y^n_t − Z_t|²` per level, `Y^n = X(w − w^n + h)` and `Z` the
/// skeleton of `h`, plus the grid-node statistic `sup_k E|Y^n_{t_k} − Z_{t_k}|²`
/// measured against `Δ^{θ/2} + sup_k (∫_{t_{k−2}}^{t_k} |ḣ|²)^{1/2}`.
pub fn skeleton_convergence(
    domain: &Domain,
    coeffs: &Coefficients,
    params: &SkeletonParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let mut p = params.clone();
    p.resolve()?;
    let fine = p.fine_level.expect("resolved");
    let h = p.control.build(coeffs.d1, p.horizon)?;
    let mut seeds = Seeds::new(seed, "path i draws its fine-grid Brownian path from stream i");
    let driver_seed = seeds.phase("driver", 1);
    let grid = dyadic_grid(p.horizon, fine);
    let z = skeleton_on_grid(domain, coeffs, &h, &grid, 1, &p.x0)?;
    let zv = z.x.values_at(&grid);
    let d = coeffs.d;

    let per_path = par_collect(p.paths, |i| {
        let w = sample_brownian(coeffs.d1, &grid, driver_seed, i)?;
        let mut out = SkeletonPath {
            sup_sq: Vec::with_capacity(p.levels.len()),
            nodes: Vec::with_capacity(p.levels.len()),
        };
        for &n in &p.levels {
            let y = shifted_driver(domain, coeffs, &w, n, &h, &p.x0)?;
            let sq: Vec<f64> = y
                .x
                .values()
                .chunks_exact(d)
                .zip(zv.chunks_exact(d))
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum())
                .collect();
            out.sup_sq.push(sq.iter().copied().fold(0.0, f64::max));
            let stride = 1usize << (fine - n);
            out.nodes.push(sq.iter().step_by(stride).copied().collect());
        }
        Ok(out)
    })?;

    let mut report = ExperimentReport::new(
        "skeleton_convergence",
        anchor_of("skeleton_convergence"),
        params_json(&p),
        seeds,
    );
    let mut sup_means = Vec::new();
    let mut constants = Vec::new();
    for (li, &n) in p.levels.iter().enumerate() {
        let sup: Vec<f64> = per_path.iter().map(|r| r.sup_sq[li]).collect();
        let e = Estimate::mean(format!("sup_sq_error n={n}"), &sup, true);
        sup_means.push(e.value);
        report.estimates.push(e);

        let cells = 1usize << n;
        let mut best = Estimate::exact(format!("node_statistic n={n}"), 0.0, p.paths as u64);
        for k in 1..=cells {
            let col: Vec<f64> = per_path.iter().map(|r| r.nodes[li][k]).collect();
            let m = mean_ci(&col);
            if m.mean > best.value {
                best = Estimate::mean(format!("node_statistic n={n}"), &col, true);
            }
        }
        let delta = p.horizon / cells as f64;
        let modulus = control_modulus(&h, p.horizon, n);
        let rate = delta.powf(p.theta / 2.0) + modulus;
        let c = best.value / rate;
        constants.push(c);
        report.estimates.push(best);
        report
            .estimates
            .push(Estimate::exact(format!("control_modulus n={n}"), modulus, 0));
        report
            .estimates
            .push(Estimate::exact(format!("fitted_constant n={n}"), c, p.paths as u64));
    }
    if sup_means.iter().all(|&m| m == 0.0) {
        report.verdict = Verdict::Degenerate;
        report
            .notes
            .push("Y^n coincides with the skeleton at every level".into());
        return Ok(report);
    }
    let (first, last) = (sup_means[0], *sup_means.last().unwrap());
    report.push_check(
        "sup_error_decrease",
        Basis::Claim,
        last <= p.max_ratio * first,
        format!("last level {last:.4e} <= {} x first level {first:.4e}", p.max_ratio),
    );
    let c_max = constants.iter().copied().fold(0.0, f64::max);
    let c_min = constants.iter().copied().fold(f64::INFINITY, f64::min);
    report.push_check(
        "node_bound_constant_stable",
        Basis::Claim,
        c_max <= p.constant_spread * constants[0],
        format!(
            "max fitted constant {c_max:.4e} <= {} x first-level constant {:.4e} (max/min {:.3})",
            p.constant_spread,
            constants[0],
            c_max / c_min
        ),
    );
    report.rate_fit = level_rate(p.horizon, &p.levels, &sup_means);
    report.conclude();
    Ok(report)
}

/// `sup_{2≤k≤2^n} (∫_{t_{k−2}}^{t_k} |ḣ|²)^{1/2}` on the level-`n` grid.
pub fn control_modulus(h: &Control, horizon: f64, level: u32) -> f64 {
    let grid = dyadic_grid(horizon, level);
    (2..grid.len())
        .map(|k| (h.energy_at(grid[k]) - h.energy_at(grid[k - 2])).max(0.0).sqrt())
        .fold(0.0, f64::max)
}

struct HolderPath {
    norm: Vec<f64>,
    semi: Vec<f64>,
    shifted: Vec<f64>,
}

/// Level means and upper quantiles of `‖X^n‖_{T,θ}`.
pub fn holder_tightness(
    domain: &Domain,
    coeffs: &Coefficients,
    params: &HolderParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let mut p = params.clone();
    p.resolve()?;
    let max_level = *p.levels.last().unwrap();
    let w_level = if p.shifted { max_level + 2 } else { max_level };
    let mut seeds = Seeds::new(seed, "path i draws its Brownian path from stream i");
    let driver_seed = seeds.phase("driver", 1);
    let grid = dyadic_grid(p.horizon, w_level);
    let zero = Control::zero(coeffs.d1, p.horizon);

    let per_path = par_collect(p.paths, |i| {
        let w = sample_brownian(coeffs.d1, &grid, driver_seed, i)?;
        let mut out = HolderPath {
            norm: Vec::new(),
            semi: Vec::new(),
            shifted: Vec::new(),
        };
        for &n in &p.levels {
            let xn = wong_zakai(domain, coeffs, &w, n, p.substeps, &p.x0)?;
            out.norm.push(holder_norm(&xn.x, p.horizon, p.theta)?.value);
            out.semi.push(holder_seminorm(&xn.x, p.horizon, p.theta)?.value);
            if p.shifted {
                let y = shifted_driver(domain, coeffs, &w, n, &zero, &p.x0)?;
                out.shifted.push(holder_norm(&y.x, p.horizon, p.theta)?.value);
            }
        }
        Ok(out)
    })?;

    let mut report = ExperimentReport::new("holder_tightness", anchor_of("holder_tightness"), params_json(&p), seeds);
    let mut means = Vec::new();
    for (li, &n) in p.levels.iter().enumerate() {
        let norm: Vec<f64> = per_path.iter().map(|r| r.norm[li]).collect();
        let e = Estimate::mean(format!("holder_norm n={n}"), &norm, true);
        means.push(e.value);
        report.estimates.push(e);
        let s = sorted(&norm);
        for q in [0.9, 0.99] {
            report.estimates.push(Estimate::exact(
                format!("holder_norm_q{} n={n}", (q * 100.0) as u32),
                quantile_sorted(&s, q),
                p.paths as u64,
            ));
        }
        let semi: Vec<f64> = per_path.iter().map(|r| r.semi[li]).collect();
        report
            .estimates
            .push(Estimate::mean(format!("holder_seminorm n={n}"), &semi, true));
        if p.shifted {
            let sh: Vec<f64> = per_path.iter().map(|r| r.shifted[li]).collect();
            report
                .estimates
                .push(Estimate::mean(format!("shifted_holder_norm n={n}"), &sh, true));
        }
    }
    let hi = means.iter().copied().fold(0.0, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 {
        report.verdict = Verdict::Degenerate;
        return Ok(report);
    }
    let ratio = hi / lo;
    report.push_check(
        "level_means_within_ratio",
        Basis::Policy,
        ratio <= p.max_ratio,
        format!("max/min of level means {ratio:.4} <= {}", p.max_ratio),
    );
    report.rate_fit = level_rate(p.horizon, &p.levels, &means);
    if p.theta >= p.critical_theta {
        report.notes.push(format!(
            "theta {} is at or above {}, outside the range where the moment bound is asserted",
            p.theta, p.critical_theta
        ));
        report.verdict = Verdict::NearCritical;
    }
    report.conclude();
    Ok(report)
}
