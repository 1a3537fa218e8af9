//! Monte Carlo experiments. Every experiment is embarrassingly parallel over
//! a path index, draws path `i` from its own random stream, and reduces the
//! per-path results in index order, so reports do not depend on the number
//! of worker threads.

mod conditional;
mod convergence;
pub mod params;
pub mod report;
mod scaling;
pub mod stats;
mod support;

pub use conditional::{approx_continuity, regulator_conditional, smallball_and_levy};
pub use convergence::{control_modulus, holder_tightness, skeleton_convergence, wz_convergence};
pub use report::{Basis, Check, Estimate, ExperimentReport, RateFit, Seeds, Verdict};
pub use scaling::{exp_tail, moment_scaling};
pub use support::support_inclusions;

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::maxprinciple;
use crate::rsde::Coefficients;
use params::*;

/// Runs `f` on `0..n` in parallel and returns the results in index order.
pub(crate) fn par_collect<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let out: Vec<Result<T>> = (0..n as u64).into_par_iter().map(f).collect();
    out.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    /// Keys of `[params]` without a default.
    pub required: &'static [&'static str],
    /// Whether `[domain]` and `[coefficients]` are needed.
    pub needs_model: bool,
    /// The statement the experiment tests.
    pub anchor: &'static str,
    pub summary: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "wz_convergence",
        required: &["x0"],
        needs_model: true,
        anchor: "Wong–Zakai approximation theorem",
        summary: "E sup|X - X^n| per level against the reflected Euler reference, with a log2 rate fit",
    },
    CatalogEntry {
        name: "skeleton_convergence",
        required: &["x0"],
        needs_model: true,
        anchor: "shifted-driver convergence to the skeleton",
        summary: "E sup|Y^n - Z|^2 per level and the grid-node statistic against the rate bound",
    },
    CatalogEntry {
        name: "approx_continuity",
        required: &["x0", "epsilon", "deltas"],
        needs_model: true,
        anchor: "approximate continuity of the Itô map",
        summary: "P(|X - Y| + |K - l| < eps | |w - h| < delta) for shrinking tubes",
    },
    CatalogEntry {
        name: "moment_scaling",
        required: &["x0"],
        needs_model: true,
        anchor: "moment bounds for solution and regulator",
        summary: "fitted exponents of the 2p-th moments of the oscillation of X and of |K| over windows",
    },
    CatalogEntry {
        name: "exp_tail",
        required: &["x0"],
        needs_model: true,
        anchor: "Gaussian integrability of the regulator",
        summary: "quadratic coefficient of -ln P(|K|_T > k) against k^2",
    },
    CatalogEntry {
        name: "smallball_and_levy",
        required: &[],
        needs_model: false,
        anchor: "small-ball and Lévy-area estimates",
        summary: "1-D small-ball regression and Lévy-area exceedances conditioned on a tube",
    },
    CatalogEntry {
        name: "regulator_conditional",
        required: &["x0", "deltas", "c3", "epsilon"],
        needs_model: true,
        anchor: "regulator bounds on small-ball events",
        summary: "P(|K|_T >= eps delta^(-1/2) | tube) and P(|K|_T > c3 | tube) as delta shrinks",
    },
    CatalogEntry {
        name: "holder_tightness",
        required: &["x0"],
        needs_model: true,
        anchor: "Hölder tightness of the approximations",
        summary: "per-level means and quantiles of the theta-Hölder norm of X^n",
    },
    CatalogEntry {
        name: "support_inclusions",
        required: &["x0", "epsilon"],
        needs_model: true,
        anchor: "support theorem",
        summary: "forward distance |X(w) - Z(h^n(w))| and reverse hit count of |X - Z(h)| < eps",
    },
    CatalogEntry {
        name: "submartingale_test",
        required: &["x0", "u"],
        needs_model: true,
        anchor: "A-subharmonic functions",
        summary: "E u(X_t) on a time grid, nondecreasing up to CI overlap",
    },
    CatalogEntry {
        name: "max_principle",
        required: &["x0", "u"],
        needs_model: true,
        anchor: "strong maximum principle on reachable sets",
        summary: "samples the reachable set and checks that an interior maximum forces u to be constant",
    },
];

pub fn catalog_entry(name: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name == name)
}

pub(crate) fn anchor_of(name: &str) -> &'static str {
    catalog_entry(name).map_or("", |e| e.anchor)
}

/// A finished run: the report plus extra files (name, contents).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub artifacts: Vec<(String, String)>,
}

fn parse<T: DeserializeOwned>(params: &serde_json::Value) -> Result<T> {
    serde_json::from_value(params.clone()).map_err(|e| Error::invalid("params", e.to_string()))
}

/// Parses `params` for experiment `name` and fills in every default, so the
/// result can be echoed as a complete configuration.
pub fn resolve_params(name: &str, params: &serde_json::Value) -> Result<serde_json::Value> {
    fn go<T: DeserializeOwned + Serialize>(v: &serde_json::Value, resolve: impl Fn(&mut T) -> Result<()>) -> Result<serde_json::Value> {
        let mut p: T = parse(v)?;
        resolve(&mut p)?;
        Ok(serde_json::to_value(&p).expect("parameters serialize"))
    }
    match name {
        "wz_convergence" => go(params, WzParams::resolve),
        "skeleton_convergence" => go(params, SkeletonParams::resolve),
        "approx_continuity" => go(params, ApproxParams::resolve),
        "moment_scaling" => go(params, MomentParams::resolve),
        "exp_tail" => go(params, ExpTailParams::resolve),
        "smallball_and_levy" => go(params, SmallBallParams::resolve),
        "regulator_conditional" => go(params, RegulatorParams::resolve),
        "holder_tightness" => go(params, HolderParams::resolve),
        "support_inclusions" => go(params, SupportParams::resolve),
        "submartingale_test" => go(params, SubmartingaleParams::resolve),
        "max_principle" => go(params, MaxPrincipleParams::resolve),
        other => Err(unknown_experiment(other)),
    }
}

fn unknown_experiment(name: &str) -> Error {
    let names: Vec<&str> = CATALOG.iter().map(|e| e.name).collect();
    Error::invalid("experiment", format!("unknown experiment `{name}`; expected one of {}", names.join(", ")))
}

/// Runs experiment `name` on the current rayon pool.
pub fn run_experiment(
    name: &str,
    params: &serde_json::Value,
    model: Option<(&Domain, &Coefficients)>,
    seed: u64,
) -> Result<RunOutput> {
    let entry = catalog_entry(name).ok_or_else(|| unknown_experiment(name))?;
    let model = match (entry.needs_model, model) {
        (true, None) => {
            return Err(Error::invalid(
                "domain",
                format!("experiment `{name}` needs [domain] and [coefficients] sections"),
            ))
        }
        (_, m) => m,
    };
    let plain = |report| {
        Ok(RunOutput {
            report,
            artifacts: Vec::new(),
        })
    };
    if name == "smallball_and_levy" {
        return plain(smallball_and_levy(&parse(params)?, seed)?);
    }
    let (domain, coeffs) = model.expect("checked above");
    if domain.dim() != coeffs.d {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: coeffs.d,
        });
    }
    match name {
        "wz_convergence" => plain(wz_convergence(domain, coeffs, &parse(params)?, seed)?),
        "skeleton_convergence" => plain(skeleton_convergence(domain, coeffs, &parse(params)?, seed)?),
        "approx_continuity" => plain(approx_continuity(domain, coeffs, &parse(params)?, seed)?),
        "moment_scaling" => plain(moment_scaling(domain, coeffs, &parse(params)?, seed)?),
        "exp_tail" => plain(exp_tail(domain, coeffs, &parse(params)?, seed)?),
        "regulator_conditional" => plain(regulator_conditional(domain, coeffs, &parse(params)?, seed)?),
        "holder_tightness" => plain(holder_tightness(domain, coeffs, &parse(params)?, seed)?),
        "support_inclusions" => plain(support_inclusions(domain, coeffs, &parse(params)?, seed)?),
        "submartingale_test" => plain(maxprinciple::submartingale_experiment(domain, coeffs, &parse(params)?, seed)?),
        "max_principle" => {
            let (report, cloud) = maxprinciple::max_principle_experiment(domain, coeffs, &parse(params)?, seed)?;
            Ok(RunOutput {
                report,
                artifacts: vec![("cloud.csv".into(), cloud.to_csv())],
            })
        }
        other => Err(unknown_experiment(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_collect_keeps_index_order() {
        let v = par_collect(1000, |i| Ok(i * 3)).unwrap();
        assert!(v.iter().enumerate().all(|(i, &x)| x == 3 * i as u64));
    }

    #[test]
    fn par_collect_propagates_errors() {
        let r = par_collect(10, |i| if i == 7 { Err(Error::NonFinite("x".into())) } else { Ok(i) });
        assert!(r.is_err());
    }

    #[test]
    fn catalog_names_are_unique_and_resolvable() {
        assert!(CATALOG.len() >= 9);
        for e in CATALOG {
            assert_eq!(CATALOG.iter().filter(|f| f.name == e.name).count(), 1);
            assert!(!e.anchor.is_empty());
        }
        assert!(resolve_params("nope", &serde_json::json!({})).is_err());
    }

    #[test]
    fn resolution_materializes_defaults() {
        let v = resolve_params("wz_convergence", &serde_json::json!({ "x0": [0.0] })).unwrap();
        assert_eq!(v["fine_level"], 18);
        assert_eq!(v["paths"], 2000);
    }

    #[test]
    fn negative_delta_names_the_key() {
        let err = resolve_params(
            "approx_continuity",
            &serde_json::json!({ "x0": [1.0], "epsilon": 0.3, "deltas": [-1.0] }),
        )
        .unwrap_err();
        assert!(err.to_string().contains("deltas"), "{err}");
    }
}
