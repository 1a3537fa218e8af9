//! The two inclusions behind the support theorem, checked by simulation.

use serde::Serialize;

use super::params::SupportParams;
use super::report::{Basis, Estimate, ExperimentReport, Seeds};
use super::stats::{quantile_sorted, sorted, wilson};
use super::{anchor_of, par_collect};
use crate::error::Result;
use crate::geometry::Domain;
use crate::paths::{control_from_path, dyadic_grid, sample_brownian};
use crate::rsde::{euler_reflected, skeleton, skeleton_on_grid, sup_distance, Coefficients};

fn params_json<T: Serialize>(p: &T) -> serde_json::Value {
    serde_json::to_value(p).expect("parameters serialize")
}

/// Forward: `‖X(w) − Z(h^n(w))‖_T` is small, `h^n(w)` the adapted
/// interpolation of `w`. Reverse: `‖X − Z(h)‖_T < ε` has positive
/// probability, shown by a hit count over unconditioned paths.
pub fn support_inclusions(
    domain: &Domain,
    coeffs: &Coefficients,
    params: &SupportParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let mut p = params.clone();
    p.resolve()?;
    let fine = p.fine_level.expect("resolved");
    let mut seeds = Seeds::new(seed, "path i uses stream i in each phase");
    let forward_seed = seeds.phase("forward driver", 1);
    let reverse_seed = seeds.phase("reverse driver", 2);

    let grid = dyadic_grid(p.horizon, fine);
    let forward = par_collect(p.paths, |i| {
        let w = sample_brownian(coeffs.d1, &grid, forward_seed, i)?;
        let x = euler_reflected(domain, coeffs, &w, &p.x0)?;
        let hn = control_from_path(&w, p.level, p.horizon)?;
        let z = skeleton(domain, coeffs, &hn, p.substeps, &p.x0)?;
        Ok(sup_distance(&x.x, &z.x))
    })?;
    let fwd_mean = Estimate::mean(format!("forward_distance_mean n={}", p.level), &forward, true);
    let p95 = quantile_sorted(&sorted(&forward), 0.95);
    let reference = p.reference_mean.unwrap_or(fwd_mean.value);

    let h = p.control.build(coeffs.d1, p.horizon)?;
    let rgrid = dyadic_grid(p.horizon, p.reverse_level);
    let z = skeleton_on_grid(domain, coeffs, &h, &rgrid, 1, &p.x0)?;
    let zv = z.x.values_at(&rgrid);
    let d = coeffs.d;
    let close = par_collect(p.reverse_paths, |i| {
        let w = sample_brownian(coeffs.d1, &rgrid, reverse_seed, i)?;
        let x = euler_reflected(domain, coeffs, &w, &p.x0)?;
        let dist = x
            .x
            .values()
            .chunks_exact(d)
            .zip(zv.chunks_exact(d))
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt();
        Ok(dist < p.epsilon)
    })?;
    let hits = close.iter().filter(|&&c| c).count() as u64;
    let n = p.reverse_paths as u64;

    let mut report = ExperimentReport::new(
        "support_inclusions",
        anchor_of("support_inclusions"),
        params_json(&p),
        seeds,
    );
    report.estimates.push(fwd_mean);
    report
        .estimates
        .push(Estimate::exact(format!("forward_distance_p95 n={}", p.level), p95, p.paths as u64));
    report.estimates.push(Estimate::proportion("reverse_proportion", hits, n));
    report.estimates.push(Estimate::exact("reverse_hits", hits as f64, n));
    report.push_check(
        "forward_p95",
        Basis::Policy,
        p95 < p.forward_factor * reference,
        format!("p95 {p95:.4e} < {} x reference mean {reference:.4e}", p.forward_factor),
    );
    let w = wilson(hits, n);
    report.push_check(
        "reverse_positive",
        Basis::Claim,
        hits >= 1,
        format!("{hits} of {n} paths within {} of Z(h) (Wilson [{:.2e}, {:.2e}])", p.epsilon, w.lo, w.hi),
    );
    report.notes.push(
        "the tube-conditioned version of the reverse event is the approx_continuity experiment".into(),
    );
    report.conclude();
    Ok(report)
}
