//! Reachable sets of controlled skeletons, an empirical submartingale test
//! for candidate subharmonic functions, and the maximum-principle check.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Membership};
use crate::montecarlo::params::{MaxPrincipleParams, ScalarField, SubmartingaleParams};
use crate::montecarlo::{anchor_of, par_collect, Basis, Estimate, ExperimentReport, Seeds, Verdict};
use crate::paths::{fmt17, sample_brownian, uniform_grid, Control, Interpolation, SamplePath};
use crate::rng::stream_rng;
use crate::rsde::{euler_reflected, skeleton, Coefficients};

/// How random controls are drawn: `pieces` linear pieces on `[0, T]` with
/// slopes uniform in `[−max_slope, max_slope]` per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSampler {
    pub pieces: usize,
    pub max_slope: f64,
    /// Euler substeps per piece.
    pub substeps: usize,
}

impl Default for ControlSampler {
    fn default() -> Self {
        ControlSampler {
            pieces: 4,
            max_slope: 3.0,
            substeps: 16,
        }
    }
}

/// Provenance of one cloud point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub id: u64,
    pub t0: f64,
    /// Row-major `pieces × d1` slopes of `h`.
    pub slopes: Vec<f64>,
    /// `|l|_{t0}` of the skeleton.
    pub regulator: f64,
}

/// Points `y = Z_{t0}(x, h)` of the reachable set of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachableCloud {
    pub base: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub controls: Vec<ControlRecord>,
}

impl ReachableCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with columns `y1..yd, t0, control_id`.
    pub fn to_csv(&self) -> String {
        let d = self.base.len();
        let mut out = String::new();
        for k in 1..=d {
            let _ = write!(out, "y{k},");
        }
        out.push_str("t0,control_id\n");
        for (y, c) in self.points.iter().zip(&self.controls) {
            for v in y {
                out.push_str(&fmt17(*v));
                out.push(',');
            }
            let _ = writeln!(out, "{},{}", fmt17(c.t0), c.id);
        }
        out
    }
}

/// Samples `n_controls` points of the reachable set. Control `j` is drawn
/// from stream `j`, so a larger count extends a smaller one; control 0 is
/// stopped at `t0 = 0` and contributes `x` itself.
pub fn reachable_sample(
    domain: &Domain,
    coeffs: &Coefficients,
    x: &[f64],
    n_controls: usize,
    horizon: f64,
    sampler: &ControlSampler,
    seed: u64,
) -> Result<ReachableCloud> {
    if sampler.pieces == 0 || sampler.substeps == 0 || !(sampler.max_slope > 0.0) || !(horizon > 0.0) {
        return Err(Error::invalid("sampler", "pieces, substeps, max_slope and horizon must be positive"));
    }
    let d1 = coeffs.d1;
    let steps = sampler.pieces * sampler.substeps;
    let times = uniform_grid(horizon, sampler.pieces);
    let rows = par_collect(n_controls, |j| {
        let mut rng = stream_rng(seed, j);
        let slopes: Vec<f64> = (0..sampler.pieces * d1)
            .map(|_| rng.random_range(-sampler.max_slope..=sampler.max_slope))
            .collect();
        let node = if j == 0 { 0 } else { rng.random_range(1..=steps) };
        let mut values = vec![0.0; d1];
        for p in 0..sampler.pieces {
            let dt = times[p + 1] - times[p];
            let last = values[p * d1..].to_vec();
            values.extend(last.iter().zip(&slopes[p * d1..(p + 1) * d1]).map(|(v, s)| v + s * dt));
        }
        let h = Control::from_path(SamplePath::new(times.clone(), values, d1, Interpolation::PiecewiseLinear)?);
        let z = skeleton(domain, coeffs, &h, sampler.substeps, x)?;
        let record = ControlRecord {
            id: j,
            t0: z.x.times()[node],
            slopes,
            regulator: z.tv[node],
        };
        Ok((z.x.node(node).to_vec(), record))
    })?;
    let (points, controls) = rows.into_iter().unzip();
    Ok(ReachableCloud {
        base: x.to_vec(),
        points,
        controls,
    })
}

/// Result of the maximum-principle check on a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleOutcome {
    pub verdict: Verdict,
    pub u_base: f64,
    pub cloud_max: f64,
    pub cloud_min: f64,
}

impl MaxPrincipleOutcome {
    pub fn oscillation(&self) -> f64 {
        self.cloud_max - self.cloud_min
    }
}

/// If `u(x)` attains the maximum of `u` over the cloud (within `tolerance`),
/// `u` must be constant on the cloud; otherwise the premise is not met.
pub fn max_principle_check(u: &ScalarField, cloud: &ReachableCloud, tolerance: f64) -> MaxPrincipleOutcome {
    let u_base = u(&cloud.base);
    let (mut lo, mut hi) = (u_base, u_base);
    for y in &cloud.points {
        let v = u(y);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let verdict = if u_base < hi - tolerance {
        Verdict::PremiseNotMet
    } else if hi - lo <= 2.0 * tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    MaxPrincipleOutcome {
        verdict,
        u_base,
        cloud_max: hi,
        cloud_min: lo,
    }
}

fn params_json<T: Serialize>(p: &T) -> serde_json::Value {
    serde_json::to_value(p).expect("parameters serialize")
}

/// Reachable-set sampling followed by the maximum-principle check.
pub fn max_principle_experiment(
    domain: &Domain,
    coeffs: &Coefficients,
    params: &MaxPrincipleParams,
    seed: u64,
) -> Result<(ExperimentReport, ReachableCloud)> {
    let mut p = params.clone();
    p.resolve()?;
    let u = p.u.build(coeffs.d)?;
    let sampler = ControlSampler {
        pieces: p.pieces,
        max_slope: p.max_slope,
        substeps: p.substeps,
    };
    let mut seeds = Seeds::new(seed, "control j (slopes and stopping node) uses stream j");
    let cloud_seed = seeds.phase("controls", 1);
    let cloud = reachable_sample(domain, coeffs, &p.x0, p.controls, p.horizon, &sampler, cloud_seed)?;
    let outcome = max_principle_check(&u, &cloud, p.tolerance);
    let mut report = ExperimentReport::new("max_principle", anchor_of("max_principle"), params_json(&p), seeds);
    let n = cloud.len() as u64;
    report.estimates.push(Estimate::exact("u_at_base", outcome.u_base, 1));
    report.estimates.push(Estimate::exact("u_cloud_max", outcome.cloud_max, n));
    report.estimates.push(Estimate::exact("u_cloud_min", outcome.cloud_min, n));
    report.estimates.push(Estimate::exact("u_oscillation", outcome.oscillation(), n));
    let inside = cloud
        .points
        .iter()
        .all(|y| domain.contains(y).membership != Membership::Exterior);
    report.push_check("cloud_in_closure", Basis::Policy, inside, "every cloud point lies in the closed domain");
    match outcome.verdict {
        Verdict::PremiseNotMet => {
            report.verdict = Verdict::PremiseNotMet;
            report.notes.push(format!(
                "u(x) = {:.6} is below the cloud maximum {:.6}; the maximum principle says nothing",
                outcome.u_base, outcome.cloud_max
            ));
        }
        v => report.push_check(
            "constant_on_reachable_set",
            Basis::Claim,
            v == Verdict::Pass,
            format!("oscillation {:.3e} <= 2 x tolerance {}", outcome.oscillation(), p.tolerance),
        ),
    }
    report.conclude();
    Ok((report, cloud))
}

/// `t ↦ E u(X_t)` on the observation times; passes if it is nondecreasing
/// up to CI overlap at each consecutive pair.
pub fn submartingale_test(
    domain: &Domain,
    coeffs: &Coefficients,
    u: &ScalarField,
    params: &SubmartingaleParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let mut p = params.clone();
    p.resolve()?;
    let tmax = *p.times.last().unwrap();
    let mut grid = uniform_grid(tmax, p.steps);
    grid.extend(&p.times);
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + tmax));
    let probe = SamplePath::constant(grid.clone(), &[0.0])?;
    let idx: Vec<usize> = p.times.iter().map(|&t| probe.node_index(t).expect("merged")).collect();
    let mut seeds = Seeds::new(seed, "path i uses stream i");
    let brownian = seeds.phase("brownian", 1);
    let rows = par_collect(p.paths, |i| {
        let w = sample_brownian(coeffs.d1, &grid, brownian, i)?;
        let x = euler_reflected(domain, coeffs, &w, &p.x0)?;
        Ok(idx.iter().map(|&k| u(x.x.node(k))).collect::<Vec<f64>>())
    })?;
    let mut report = ExperimentReport::new(
        "submartingale_test",
        anchor_of("submartingale_test"),
        params_json(&p),
        seeds,
    );
    let mut ests = Vec::new();
    for (j, t) in p.times.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        ests.push(Estimate::mean(format!("mean_u t={t}"), &col, false));
    }
    let mut failures = Vec::new();
    for (j, w) in ests.windows(2).enumerate() {
        if !(w[1].value >= w[0].value || w[0].overlaps(&w[1])) {
            failures.push(format!("t={} -> t={}", p.times[j], p.times[j + 1]));
        }
    }
    report.estimates = ests;
    report.push_check(
        "nondecreasing_mean",
        Basis::Claim,
        failures.is_empty(),
        if failures.is_empty() {
            "E u(X_t) nondecreasing up to CI overlap".to_string()
        } else {
            format!("E u(X_t) drops beyond its CI on {}", failures.join(", "))
        },
    );
    report.notes.push(
        "bounded domain and bounded u stand in for the localizing stopping times".into(),
    );
    report.conclude();
    Ok(report)
}

pub(crate) fn submartingale_experiment(
    domain: &Domain,
    coeffs: &Coefficients,
    params: &SubmartingaleParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let u = params.u.build(coeffs.d)?;
    submartingale_test(domain, coeffs, &u, params, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::params::ScalarFieldSpec;
    use std::sync::Arc;

    fn disc_identity() -> (Domain, Coefficients) {
        (Domain::unit_disc(), Coefficients::scaled_identity(2, 1.0))
    }

    fn norm_sq() -> ScalarField {
        ScalarFieldSpec::NormSquared { scale: 1.0, center: None }.build(2).unwrap()
    }

    #[test]
    fn no_diffusion_no_drift_gives_a_single_point() {
        let d = Domain::unit_disc();
        let c = Coefficients::scaled_identity(2, 0.0);
        let cloud = reachable_sample(&d, &c, &[0.2, 0.1], 50, 1.0, &ControlSampler::default(), 3).unwrap();
        assert!(cloud.points.iter().all(|y| y == &vec![0.2, 0.1]));
    }

    #[test]
    fn base_is_in_the_cloud_and_counts_extend() {
        let (d, c) = disc_identity();
        let s = ControlSampler::default();
        let small = reachable_sample(&d, &c, &[0.0, 0.0], 40, 1.0, &s, 9).unwrap();
        let large = reachable_sample(&d, &c, &[0.0, 0.0], 80, 1.0, &s, 9).unwrap();
        assert_eq!(small.points[0], vec![0.0, 0.0]);
        assert_eq!(small.controls[0].t0, 0.0);
        assert_eq!(&large.points[..40], &small.points[..]);
        assert_eq!(&large.controls[..40], &small.controls[..]);
    }

    #[test]
    fn identity_diffusion_covers_the_disc() {
        let (d, c) = disc_identity();
        let cloud = reachable_sample(&d, &c, &[0.0, 0.0], 10_000, 1.0, &ControlSampler::default(), 1).unwrap();
        let mut worst = 0.0f64;
        for i in -10..=10 {
            for j in -10..=10 {
                let g = [i as f64 * 0.1, j as f64 * 0.1];
                if g[0] * g[0] + g[1] * g[1] > 1.0 {
                    continue;
                }
                let near = cloud
                    .points
                    .iter()
                    .map(|y| ((y[0] - g[0]).powi(2) + (y[1] - g[1]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(near);
            }
        }
        assert!(worst <= 0.1, "coverage radius {worst}");
    }

    #[test]
    fn degenerate_diffusion_keeps_the_second_coordinate_until_reflection() {
        let d = Domain::unit_disc();
        let c = Coefficients::constant(2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let cloud = reachable_sample(&d, &c, &[0.1, 0.3], 2000, 1.0, &ControlSampler::default(), 4).unwrap();
        let free: Vec<_> = cloud
            .points
            .iter()
            .zip(&cloud.controls)
            .filter(|(_, r)| r.regulator == 0.0)
            .collect();
        assert!(free.len() > 100);
        assert!(free.iter().all(|(y, _)| y[1] == 0.3));
        assert!(cloud.controls.iter().any(|r| r.regulator > 0.0));
    }

    #[test]
    fn check_outcomes() {
        let (d, c) = disc_identity();
        let s = ControlSampler::default();
        let cloud = reachable_sample(&d, &c, &[0.0, 0.0], 500, 1.0, &s, 2).unwrap();
        let constant: ScalarField = Arc::new(|_| 4.0);
        let out = max_principle_check(&constant, &cloud, 1e-9);
        assert_eq!(out.verdict, Verdict::Pass);
        assert_eq!(out.oscillation(), 0.0);
        assert_eq!(max_principle_check(&norm_sq(), &cloud, 1e-9).verdict, Verdict::PremiseNotMet);

        let edge = reachable_sample(&d, &c, &[1.0, 0.0], 500, 1.0, &s, 2).unwrap();
        let out = max_principle_check(&norm_sq(), &edge, 1e-9);
        assert_eq!(out.verdict, Verdict::Fail, "{out:?}");
    }

    #[test]
    fn cloud_csv_layout() {
        let (d, c) = disc_identity();
        let cloud = reachable_sample(&d, &c, &[0.0, 0.0], 3, 1.0, &ControlSampler::default(), 2).unwrap();
        let csv = cloud.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "y1,y2,t0,control_id");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",0"));
    }

    #[test]
    fn submartingale_sign() {
        let (d, c) = disc_identity();
        let mut p = SubmartingaleParams::new(vec![0.0, 0.0], ScalarFieldSpec::Constant { value: 0.0 });
        p.paths = 2000;
        p.steps = 256;
        let up = submartingale_test(&d, &c, &norm_sq(), &p, 5).unwrap();
        assert_eq!(up.verdict, Verdict::Pass);
        let v = up.estimate("mean_u t=0.05").unwrap().value;
        assert!((v - 0.1).abs() < 0.01, "{v}");
        let neg: ScalarField = Arc::new(|x: &[f64]| -(x[0] * x[0] + x[1] * x[1]));
        assert_eq!(submartingale_test(&d, &c, &neg, &p, 5).unwrap().verdict, Verdict::Fail);
        let flat: ScalarField = Arc::new(|_| 1.5);
        assert_eq!(submartingale_test(&d, &c, &flat, &p, 5).unwrap().verdict, Verdict::Pass);
    }
}
