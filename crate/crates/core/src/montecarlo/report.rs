//! Experiment reports: estimates, checks, verdicts and seed provenance.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{mean_ci, wilson, LinearFit};
use crate::paths::fmt17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub label: String,
    pub value: f64,
    pub ci_halfwidth: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
}

impl Estimate {
    /// Mean with a symmetric normal interval, the lower end clipped at 0
    /// when the statistic is nonnegative.
    pub fn mean(label: impl Into<String>, xs: &[f64], nonnegative: bool) -> Self {
        let m = mean_ci(xs);
        let mut lo = m.mean - m.halfwidth;
        if nonnegative {
            lo = lo.max(0.0);
        }
        Estimate {
            label: label.into(),
            value: m.mean,
            ci_halfwidth: m.halfwidth,
            ci_low: lo,
            ci_high: m.mean + m.halfwidth,
            samples: xs.len() as u64,
        }
    }

    /// Proportion with its Wilson interval.
    pub fn proportion(label: impl Into<String>, hits: u64, n: u64) -> Self {
        let w = wilson(hits, n);
        Estimate {
            label: label.into(),
            value: w.p,
            ci_halfwidth: 0.5 * (w.hi - w.lo),
            ci_low: w.lo,
            ci_high: w.hi,
            samples: n,
        }
    }

    /// A value with a symmetric interval (fit coefficients and the like).
    pub fn with_halfwidth(label: impl Into<String>, value: f64, halfwidth: f64, samples: u64) -> Self {
        Estimate {
            label: label.into(),
            value,
            ci_halfwidth: halfwidth,
            ci_low: value - halfwidth,
            ci_high: value + halfwidth,
            samples,
        }
    }

    /// Deterministic quantity (oracle, control modulus, quantile point value).
    pub fn exact(label: impl Into<String>, value: f64, samples: u64) -> Self {
        Self::with_halfwidth(label, value, 0.0, samples)
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Whether a check tests the qualitative statement being verified or a
/// numeric threshold chosen by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Claim,
    Policy,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub basis: Basis,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(label: impl Into<String>, basis: Basis, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            label: label.into(),
            basis,
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The statistic has no spread, so the claim cannot be tested.
    Degenerate,
    /// Parameters sit outside the range where the bound is asserted.
    NearCritical,
    /// The hypothesis of the implication being checked does not hold.
    PremiseNotMet,
}

impl Verdict {
    pub fn from_checks(checks: &[Check]) -> Self {
        if checks.iter().all(|c| c.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Only an outright failure counts against a run.
    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Degenerate => "degenerate",
            Verdict::NearCritical => "near-critical",
            Verdict::PremiseNotMet => "premise not met",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    pub slope_ci_halfwidth: f64,
    /// What was regressed on what.
    pub axes: String,
}

impl RateFit {
    pub fn from_fit(fit: &LinearFit, axes: impl Into<String>) -> Self {
        RateFit {
            slope: fit.slope,
            intercept: fit.intercept,
            r2: fit.r2,
            points: fit.points,
            slope_ci_halfwidth: 1.96 * fit.slope_se,
            axes: axes.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPhase {
    pub phase: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub generator: String,
    pub stream_rule: String,
    pub phases: Vec<SeedPhase>,
}

impl Seeds {
    pub fn new(master: u64, stream_rule: &str) -> Self {
        Seeds {
            master,
            generator: "ChaCha8 (seed_from_u64, set_stream)".into(),
            stream_rule: stream_rule.into(),
            phases: Vec::new(),
        }
    }

    /// Records and returns the sub-seed of a named phase.
    pub fn phase(&mut self, name: &str, id: u64) -> u64 {
        let seed = crate::rng::derive_seed(self.master, id);
        self.phases.push(SeedPhase {
            phase: name.into(),
            seed,
        });
        seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub anchor: String,
    pub parameters: serde_json::Value,
    pub estimates: Vec<Estimate>,
    pub rate_fit: Option<RateFit>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(name: &str, anchor: &str, parameters: serde_json::Value, seeds: Seeds) -> Self {
        ExperimentReport {
            name: name.into(),
            anchor: anchor.into(),
            parameters,
            estimates: Vec::new(),
            rate_fit: None,
            checks: Vec::new(),
            verdict: Verdict::Pass,
            seeds,
            notes: Vec::new(),
        }
    }

    pub fn estimate(&self, label: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.label == label)
    }

    pub fn check(&self, label: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.label == label)
    }

    pub fn push_check(&mut self, label: impl Into<String>, basis: Basis, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(label, basis, passed, detail));
    }

    /// Sets the verdict from the checks unless a special verdict was chosen.
    pub fn conclude(&mut self) {
        if self.verdict == Verdict::Pass {
            self.verdict = Verdict::from_checks(&self.checks);
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per estimate.
    pub fn estimates_csv(&self) -> String {
        let mut out = String::from("label,value,ci_halfwidth,ci_low,ci_high,samples\n");
        for e in &self.estimates {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.label,
                fmt17(e.value),
                fmt17(e.ci_halfwidth),
                fmt17(e.ci_low),
                fmt17(e.ci_high),
                e.samples
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_follows_checks() {
        let mut r = ExperimentReport::new("x", "y", serde_json::Value::Null, Seeds::new(1, "i"));
        r.push_check("a", Basis::Claim, true, "");
        r.conclude();
        assert_eq!(r.verdict, Verdict::Pass);
        r.push_check("b", Basis::Policy, false, "");
        r.verdict = Verdict::Pass;
        r.conclude();
        assert_eq!(r.verdict, Verdict::Fail);
        r.verdict = Verdict::NearCritical;
        r.conclude();
        assert_eq!(r.verdict, Verdict::NearCritical);
        assert!(!Verdict::NearCritical.is_failure());
    }

    #[test]
    fn json_round_trip() {
        let mut seeds = Seeds::new(7, "path i uses stream i");
        seeds.phase("driver", 1);
        let mut r = ExperimentReport::new("x", "y", serde_json::json!({"paths": 3}), seeds);
        r.estimates.push(Estimate::proportion("p", 3, 10));
        r.estimates.push(Estimate::mean("m", &[1.0, 2.0], true));
        let back: ExperimentReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.estimates_csv().lines().count(), 3);
    }

    #[test]
    fn proportions_stay_in_unit_interval() {
        for (k, n) in [(0, 5), (5, 5), (2, 7)] {
            let e = Estimate::proportion("p", k, n);
            assert!(0.0 <= e.ci_low && e.ci_low <= e.value && e.value <= e.ci_high && e.ci_high <= 1.0);
        }
    }
}
