//! Experiment parameters as read from the `[params]` section of a run
//! configuration. Every struct rejects unknown keys, and `resolve` fills in
//! derived defaults so an echoed copy is complete.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{uniform_grid, Control, SamplePath};

fn invalid<T>(key: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::invalid(format!("params.{key}"), message))
}

fn require_positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return invalid(key, format!("must be positive and finite, got {v}"));
    }
    Ok(())
}

fn require_count(key: &str, v: usize, min: usize) -> Result<()> {
    if v < min {
        return invalid(key, format!("must be at least {min}, got {v}"));
    }
    Ok(())
}

fn require_levels(key: &str, levels: &[u32]) -> Result<()> {
    if levels.len() < 2 {
        return invalid(key, "need at least two levels");
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return invalid(key, "levels must be strictly increasing");
    }
    if levels[0] == 0 || *levels.last().unwrap() > 24 {
        return invalid(key, "levels must lie in 1..=24");
    }
    Ok(())
}

fn require_decreasing_positive(key: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return invalid(key, "must not be empty");
    }
    for &v in values {
        require_positive(key, v)?;
    }
    if values.windows(2).any(|w| w[1] >= w[0]) {
        return invalid(key, "must be strictly decreasing");
    }
    Ok(())
}

fn require_x0(x0: &[f64]) -> Result<()> {
    if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
        return invalid("x0", "must be a nonempty list of finite numbers");
    }
    Ok(())
}

fn default_horizon() -> f64 {
    1.0
}
fn default_levels() -> Vec<u32> {
    (4..=9).collect()
}
fn default_paths() -> usize {
    2000
}
fn default_substeps() -> usize {
    4
}
fn default_theta() -> f64 {
    0.2
}
fn default_grid_level() -> u32 {
    10
}
fn default_pilot() -> u64 {
    20_000
}
fn default_max_attempts() -> u64 {
    10_000_000
}
fn default_accepted() -> usize {
    2000
}
fn default_pieces() -> usize {
    1024
}
fn one() -> f64 {
    1.0
}

/// Piecewise-linear Cameron–Martin control `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Zero,
    /// `h_t = velocity · t`.
    Linear { velocity: Vec<f64> },
    /// `h_t = amplitude · sin(2π frequency t) e_axis`, interpolated on
    /// `pieces` equal intervals.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        axis: usize,
        #[serde(default = "default_pieces")]
        pieces: usize,
    },
    /// Explicit breakpoints; `times` must start at 0.
    Points { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Zero
    }
}

impl ControlSpec {
    pub fn build(&self, dim: usize, horizon: f64) -> Result<Control> {
        match self {
            ControlSpec::Zero => Ok(Control::zero(dim, horizon)),
            ControlSpec::Linear { velocity } => {
                if velocity.len() != dim {
                    return invalid("control.velocity", format!("expected {dim} entries"));
                }
                let v = velocity.clone();
                Control::from_fn(vec![0.0, horizon], dim, move |t| v.iter().map(|c| c * t).collect())
            }
            ControlSpec::Sine {
                amplitude,
                frequency,
                axis,
                pieces,
            } => {
                if *axis >= dim {
                    return invalid("control.axis", format!("must be below {dim}"));
                }
                require_count("control.pieces", *pieces, 1)?;
                let (a, f, ax) = (*amplitude, *frequency, *axis);
                Control::from_fn(uniform_grid(horizon, *pieces), dim, move |t| {
                    let mut v = vec![0.0; dim];
                    v[ax] = a * (2.0 * std::f64::consts::PI * f * t).sin();
                    v
                })
            }
            ControlSpec::Points { times, values } => {
                if values.iter().any(|r| r.len() != dim) {
                    return invalid("control.values", format!("rows must have {dim} entries"));
                }
                Ok(Control::from_path(SamplePath::from_rows(times.clone(), values)?))
            }
        }
    }
}

/// Continuous test function `u` on the state space.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFieldSpec {
    Constant {
        value: f64,
    },
    /// `scale · |x − center|²`.
    NormSquared {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// `coefficients · x`.
    Linear {
        coefficients: Vec<f64>,
    },
}

impl ScalarFieldSpec {
    pub fn build(&self, dim: usize) -> Result<ScalarField> {
        match self.clone() {
            ScalarFieldSpec::Constant { value } => Ok(Arc::new(move |_| value)),
            ScalarFieldSpec::NormSquared { scale, center } => {
                let c = center.unwrap_or_else(|| vec![0.0; dim]);
                if c.len() != dim {
                    return invalid("u.center", format!("expected {dim} entries"));
                }
                Ok(Arc::new(move |x| scale * x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            }
            ScalarFieldSpec::Linear { coefficients } => {
                if coefficients.len() != dim {
                    return invalid("u.coefficients", format!("expected {dim} entries"));
                }
                Ok(Arc::new(move |x| x.iter().zip(&coefficients).map(|(a, b)| a * b).sum()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WzParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Level of the reference Euler grid; twice the largest level if unset.
    #[serde(default)]
    pub fine_level: Option<u32>,
    /// Exponent of the supplementary Hölder distance.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "WzParams::default_min_slope")]
    pub min_slope: f64,
    #[serde(default = "WzParams::default_min_r2")]
    pub min_r2: f64,
    /// Rerun every level with doubled substeps on the same paths.
    #[serde(default)]
    pub replicate_substeps: bool,
}

impl WzParams {
    fn default_min_slope() -> f64 {
        0.25
    }
    fn default_min_r2() -> f64 {
        0.9
    }

    pub fn new(x0: Vec<f64>) -> Self {
        serde_json::from_value(serde_json::json!({ "x0": x0 })).expect("defaults")
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_positive("horizon", self.horizon)?;
        require_levels("levels", &self.levels)?;
        require_count("paths", self.paths, 2)?;
        require_count("substeps", self.substeps, 1)?;
        let max = *self.levels.last().unwrap();
        let fine = *self.fine_level.get_or_insert(2 * max);
        if fine < max || fine > 24 {
            return invalid("fine_level", format!("must lie in {max}..=24"));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return invalid("theta", "must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub fine_level: Option<u32>,
    /// Exponent in the `Δ^{θ/2}` term of the node-statistic bound.
    #[serde(default = "SkeletonParams::default_theta")]
    pub theta: f64,
    /// Required ratio of the last to the first level's sup statistic.
    #[serde(default = "SkeletonParams::default_max_ratio")]
    pub max_ratio: f64,
    /// Allowed growth of the fitted constant relative to the first level.
    #[serde(default = "SkeletonParams::default_spread")]
    pub constant_spread: f64,
}

impl SkeletonParams {
    fn default_theta() -> f64 {
        0.5
    }
    fn default_max_ratio() -> f64 {
        0.5
    }
    fn default_spread() -> f64 {
        2.0
    }

    pub fn new(x0: Vec<f64>, control: ControlSpec) -> Self {
        let mut p: Self = serde_json::from_value(serde_json::json!({ "x0": x0 })).expect("defaults");
        p.control = control;
        p
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_positive("horizon", self.horizon)?;
        require_levels("levels", &self.levels)?;
        require_count("paths", self.paths, 2)?;
        let max = *self.levels.last().unwrap();
        let fine = *self.fine_level.get_or_insert(2 * max);
        if fine < max || fine > 24 {
            return invalid("fine_level", format!("must lie in {max}..=24"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid("theta", "must lie in (0, 1)");
        }
        require_positive("max_ratio", self.max_ratio)?;
        require_positive("constant_spread", self.constant_spread)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub control: ControlSpec,
    pub epsilon: f64,
    pub deltas: Vec<f64>,
    #[serde(default = "default_accepted")]
    pub accepted: usize,
    #[serde(default = "default_grid_level")]
    pub grid_level: u32,
    #[serde(default = "default_pilot")]
    pub pilot_attempts: u64,
    /// Attempts allowed per accepted sample before giving up.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
    /// Required conditional probability at the smallest δ.
    #[serde(default = "ApproxParams::default_min_final")]
    pub min_final: f64,
}

impl ApproxParams {
    fn default_min_final() -> f64 {
        0.9
    }

    pub fn new(x0: Vec<f64>, epsilon: f64, deltas: Vec<f64>) -> Self {
        serde_json::from_value(serde_json::json!({ "x0": x0, "epsilon": epsilon, "deltas": deltas }))
            .expect("defaults")
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_positive("horizon", self.horizon)?;
        require_positive("epsilon", self.epsilon)?;
        require_decreasing_positive("deltas", &self.deltas)?;
        require_count("accepted", self.accepted, 1)?;
        require_count("pilot_attempts", self.pilot_attempts as usize, 1)?;
        require_count("max_attempts", self.max_attempts as usize, 1)?;
        if !(1..=20).contains(&self.grid_level) {
            return invalid("grid_level", "must lie in 1..=20");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentParams {
    pub x0: Vec<f64>,
    /// Windows `[s, t]`.
    #[serde(default = "MomentParams::default_windows")]
    pub windows: Vec<[f64; 2]>,
    /// Moments of order `2p` are estimated.
    #[serde(default = "MomentParams::default_p")]
    pub p: u32,
    #[serde(default = "MomentParams::default_paths")]
    pub paths: usize,
    /// Dyadic level of the Euler grid on `[0, max t]`.
    #[serde(default = "MomentParams::default_level")]
    pub grid_level: u32,
    /// Accepted exponents, in units of `p`.
    #[serde(default = "MomentParams::default_band")]
    pub exponent_band: [f64; 2],
}

impl MomentParams {
    fn default_windows() -> Vec<[f64; 2]> {
        (2..=6).rev().map(|k| [0.0, 0.5f64.powi(k)]).collect()
    }
    fn default_p() -> u32 {
        1
    }
    fn default_paths() -> usize {
        10_000
    }
    fn default_level() -> u32 {
        12
    }
    fn default_band() -> [f64; 2] {
        [0.8, 1.2]
    }

    pub fn new(x0: Vec<f64>) -> Self {
        serde_json::from_value(serde_json::json!({ "x0": x0 })).expect("defaults")
    }

    pub fn horizon(&self) -> f64 {
        self.windows.iter().map(|w| w[1]).fold(0.0, f64::max)
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        if self.windows.len() < 2 {
            return invalid("windows", "need at least two windows");
        }
        for w in &self.windows {
            if !(w[0] >= 0.0 && w[1] > w[0] && w[1].is_finite()) {
                return invalid("windows", format!("bad window {w:?}"));
            }
        }
        require_count("p", self.p as usize, 1)?;
        require_count("paths", self.paths, 2)?;
        if !(1..=20).contains(&self.grid_level) {
            return invalid("grid_level", "must lie in 1..=20");
        }
        if !(self.exponent_band[0] < self.exponent_band[1]) {
            return invalid("exponent_band", "lower end must be below the upper end");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpTailParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "ExpTailParams::default_paths")]
    pub paths: usize,
    #[serde(default = "default_grid_level")]
    pub grid_level: u32,
    /// Survival probabilities bounding the fitted tail region.
    #[serde(default = "ExpTailParams::default_range")]
    pub survival_range: [f64; 2],
    /// Number of thresholds `k` in the fit.
    #[serde(default = "ExpTailParams::default_points")]
    pub points: usize,
    /// Jackknife groups for the coefficient interval.
    #[serde(default = "ExpTailParams::default_groups")]
    pub groups: usize,
    /// Expected quadratic coefficient, checked within `reference_factor`.
    #[serde(default)]
    pub reference_coefficient: Option<f64>,
    #[serde(default = "ExpTailParams::default_factor")]
    pub reference_factor: f64,
}

impl ExpTailParams {
    fn default_paths() -> usize {
        100_000
    }
    fn default_range() -> [f64; 2] {
        [1e-3, 1e-1]
    }
    fn default_points() -> usize {
        9
    }
    fn default_groups() -> usize {
        20
    }
    fn default_factor() -> f64 {
        2.0
    }

    pub fn new(x0: Vec<f64>) -> Self {
        serde_json::from_value(serde_json::json!({ "x0": x0 })).expect("defaults")
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_positive("horizon", self.horizon)?;
        require_count("groups", self.groups, 2)?;
        require_count("paths", self.paths, 10 * self.groups)?;
        require_count("points", self.points, 3)?;
        let [lo, hi] = self.survival_range;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return invalid("survival_range", "need 0 < low < high < 1");
        }
        if let Some(c) = self.reference_coefficient {
            require_positive("reference_coefficient", c)?;
        }
        if !(self.reference_factor > 1.0) {
            return invalid("reference_factor", "must exceed 1");
        }
        if !(1..=20).contains(&self.grid_level) {
            return invalid("grid_level", "must lie in 1..=20");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallParams {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Radii for the one-dimensional small-ball regression.
    #[serde(default = "SmallBallParams::default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "SmallBallParams::default_draws")]
    pub draws: usize,
    #[serde(default = "SmallBallParams::default_level")]
    pub level: u32,
    #[serde(default = "SmallBallParams::default_levy_dim")]
    pub levy_dim: usize,
    #[serde(default = "SmallBallParams::default_levy_deltas")]
    pub levy_deltas: Vec<f64>,
    /// Thresholds `M` of the events `‖ζ‖ > Mδ`.
    #[serde(default = "SmallBallParams::default_m")]
    pub m_values: Vec<f64>,
    /// Scale of the event `‖ζ‖ > ε δ^{1/2}`.
    #[serde(default = "SmallBallParams::default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "SmallBallParams::default_accepted")]
    pub accepted: usize,
    #[serde(default = "SmallBallParams::default_levy_level")]
    pub levy_level: u32,
    #[serde(default = "default_pilot")]
    pub pilot_attempts: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
    #[serde(default = "SmallBallParams::default_min_r2")]
    pub min_r2: f64,
    /// Allowed factor between the fitted slope and `−π²T/8`.
    #[serde(default = "SmallBallParams::default_slope_factor")]
    pub slope_factor: f64,
}

impl SmallBallParams {
    fn default_deltas() -> Vec<f64> {
        vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5]
    }
    fn default_draws() -> usize {
        100_000
    }
    fn default_level() -> u32 {
        12
    }
    fn default_levy_dim() -> usize {
        2
    }
    fn default_levy_deltas() -> Vec<f64> {
        vec![0.8, 0.5]
    }
    fn default_m() -> Vec<f64> {
        vec![0.25, 0.4, 0.6]
    }
    fn default_epsilon() -> f64 {
        0.5
    }
    fn default_accepted() -> usize {
        1000
    }
    fn default_levy_level() -> u32 {
        8
    }
    fn default_min_r2() -> f64 {
        0.95
    }
    fn default_slope_factor() -> f64 {
        1.5
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_positive("horizon", self.horizon)?;
        require_decreasing_positive("deltas", &self.deltas)?;
        if self.deltas.len() < 3 {
            return invalid("deltas", "need at least three radii for the regression");
        }
        require_count("draws", self.draws, 2)?;
        require_count("levy_dim", self.levy_dim, 1)?;
        require_decreasing_positive("levy_deltas", &self.levy_deltas)?;
        if self.m_values.is_empty()
            || self.m_values.iter().any(|m| !(*m > 0.0))
            || self.m_values.windows(2).any(|w| w[1] <= w[0])
        {
            return invalid("m_values", "must be positive and strictly increasing");
        }
        require_positive("epsilon", self.epsilon)?;
        require_count("accepted", self.accepted, 1)?;
        for (key, l) in [("level", self.level), ("levy_level", self.levy_level)] {
            if !(1..=20).contains(&l) {
                return invalid(key, "must lie in 1..=20");
            }
        }
        if !(self.slope_factor > 1.0) {
            return invalid("slope_factor", "must exceed 1");
        }
        Ok(())
    }
}

impl Default for SmallBallParams {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub deltas: Vec<f64>,
    /// Threshold of the event `|K|_T > c3`.
    pub c3: f64,
    /// Scale of the event `|K|_T ≥ ε δ^{-1/2}`.
    pub epsilon: f64,
    #[serde(default = "default_accepted")]
    pub accepted: usize,
    #[serde(default = "default_grid_level")]
    pub grid_level: u32,
    #[serde(default = "default_pilot")]
    pub pilot_attempts: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
}

impl RegulatorParams {
    pub fn new(x0: Vec<f64>, deltas: Vec<f64>, c3: f64, epsilon: f64) -> Self {
        serde_json::from_value(serde_json::json!({ "x0": x0, "deltas": deltas, "c3": c3, "epsilon": epsilon }))
            .expect("defaults")
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_positive("horizon", self.horizon)?;
        require_decreasing_positive("deltas", &self.deltas)?;
        require_positive("c3", self.c3)?;
        require_positive("epsilon", self.epsilon)?;
        require_count("accepted", self.accepted, 1)?;
        if !(1..=20).contains(&self.grid_level) {
            return invalid("grid_level", "must lie in 1..=20");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "HolderParams::default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Allowed max/min ratio of the level means.
    #[serde(default = "HolderParams::default_max_ratio")]
    pub max_ratio: f64,
    /// Exponents at or above this are outside the asserted range.
    #[serde(default = "HolderParams::default_critical")]
    pub critical_theta: f64,
    /// Also report the shifted-driver scheme with `h = 0`.
    #[serde(default)]
    pub shifted: bool,
}

impl HolderParams {
    fn default_levels() -> Vec<u32> {
        (4..=8).collect()
    }
    fn default_max_ratio() -> f64 {
        2.0
    }
    fn default_critical() -> f64 {
        0.25
    }

    pub fn new(x0: Vec<f64>) -> Self {
        serde_json::from_value(serde_json::json!({ "x0": x0 })).expect("defaults")
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_positive("horizon", self.horizon)?;
        require_levels("levels", &self.levels)?;
        require_count("paths", self.paths, 2)?;
        require_count("substeps", self.substeps, 1)?;
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid("theta", "must lie in (0, 1)");
        }
        if !(self.max_ratio > 1.0) {
            return invalid("max_ratio", "must exceed 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Level `n` of the interpolated controls `h^n(w)`.
    #[serde(default = "SupportParams::default_level")]
    pub level: u32,
    #[serde(default)]
    pub fine_level: Option<u32>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Control `h` of the reverse inclusion.
    #[serde(default)]
    pub control: ControlSpec,
    pub epsilon: f64,
    #[serde(default = "SupportParams::default_reverse_paths")]
    pub reverse_paths: usize,
    #[serde(default = "default_grid_level")]
    pub reverse_level: u32,
    /// The forward 95th percentile must stay below this multiple of the
    /// reference mean.
    #[serde(default = "SupportParams::default_factor")]
    pub forward_factor: f64,
    /// Reference mean distance; the forward mean itself if unset.
    #[serde(default)]
    pub reference_mean: Option<f64>,
}

impl SupportParams {
    fn default_level() -> u32 {
        9
    }
    fn default_reverse_paths() -> usize {
        100_000
    }
    fn default_factor() -> f64 {
        3.0
    }

    pub fn new(x0: Vec<f64>, control: ControlSpec, epsilon: f64) -> Self {
        let mut p: Self =
            serde_json::from_value(serde_json::json!({ "x0": x0, "epsilon": epsilon })).expect("defaults");
        p.control = control;
        p
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_positive("horizon", self.horizon)?;
        require_positive("epsilon", self.epsilon)?;
        if !(1..=20).contains(&self.level) {
            return invalid("level", "must lie in 1..=20");
        }
        let fine = *self.fine_level.get_or_insert(2 * self.level);
        if fine < self.level || fine > 24 {
            return invalid("fine_level", format!("must lie in {}..=24", self.level));
        }
        require_count("substeps", self.substeps, 1)?;
        require_count("paths", self.paths, 2)?;
        require_count("reverse_paths", self.reverse_paths, 1)?;
        if !(1..=20).contains(&self.reverse_level) {
            return invalid("reverse_level", "must lie in 1..=20");
        }
        require_positive("forward_factor", self.forward_factor)?;
        if let Some(m) = self.reference_mean {
            require_positive("reference_mean", m)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmartingaleParams {
    pub x0: Vec<f64>,
    pub u: ScalarFieldSpec,
    #[serde(default = "SubmartingaleParams::default_times")]
    pub times: Vec<f64>,
    #[serde(default = "SubmartingaleParams::default_paths")]
    pub paths: usize,
    /// Euler steps on `[0, max time]`; the observation times are added.
    #[serde(default = "SubmartingaleParams::default_steps")]
    pub steps: usize,
}

impl SubmartingaleParams {
    fn default_times() -> Vec<f64> {
        vec![0.0, 0.05, 0.1, 0.2]
    }
    fn default_paths() -> usize {
        10_000
    }
    fn default_steps() -> usize {
        1024
    }

    pub fn new(x0: Vec<f64>, u: ScalarFieldSpec) -> Self {
        let mut p: Self = serde_json::from_value(serde_json::json!({ "x0": x0, "u": { "kind": "constant", "value": 0.0 } }))
            .expect("defaults");
        p.u = u;
        p
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        if self.times.len() < 2
            || self.times[0] < 0.0
            || self.times.windows(2).any(|w| w[1] <= w[0])
            || !self.times.iter().all(|t| t.is_finite())
        {
            return invalid("times", "need at least two increasing nonnegative times");
        }
        require_count("paths", self.paths, 2)?;
        require_count("steps", self.steps, 1)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxPrincipleParams {
    pub x0: Vec<f64>,
    pub u: ScalarFieldSpec,
    #[serde(default = "MaxPrincipleParams::default_controls")]
    pub controls: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Linear pieces per random control.
    #[serde(default = "MaxPrincipleParams::default_pieces")]
    pub pieces: usize,
    /// Bound on each component of `ḣ`.
    #[serde(default = "MaxPrincipleParams::default_slope")]
    pub max_slope: f64,
    /// Euler substeps per piece.
    #[serde(default = "MaxPrincipleParams::default_substeps")]
    pub substeps: usize,
    #[serde(default = "MaxPrincipleParams::default_tolerance")]
    pub tolerance: f64,
}

impl MaxPrincipleParams {
    fn default_controls() -> usize {
        10_000
    }
    fn default_pieces() -> usize {
        4
    }
    fn default_slope() -> f64 {
        3.0
    }
    fn default_substeps() -> usize {
        16
    }
    fn default_tolerance() -> f64 {
        1e-9
    }

    pub fn new(x0: Vec<f64>, u: ScalarFieldSpec) -> Self {
        let mut p: Self = serde_json::from_value(serde_json::json!({ "x0": x0, "u": { "kind": "constant", "value": 0.0 } }))
            .expect("defaults");
        p.u = u;
        p
    }

    pub fn resolve(&mut self) -> Result<()> {
        require_x0(&self.x0)?;
        require_count("controls", self.controls, 1)?;
        require_positive("horizon", self.horizon)?;
        require_count("pieces", self.pieces, 1)?;
        require_positive("max_slope", self.max_slope)?;
        require_count("substeps", self.substeps, 1)?;
        if !(self.tolerance >= 0.0) {
            return invalid("tolerance", "must be nonnegative");
        }
        Ok(())
    }
}
