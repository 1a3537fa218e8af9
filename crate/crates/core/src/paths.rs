//! Sampled paths and path functionals: Brownian sampling and bridge
//! refinement, the adapted interpolation `w^n`, Cameron–Martin controls,
//! sup and Hölder norms, Lévy areas, and tube-conditioned sampling.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};

/// Exact O(N²) Hölder scans are used up to this many nodes.
pub const HOLDER_EXACT_MAX_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    PiecewiseLinear,
    PiecewiseConstantLeft,
}

/// Values in ℝ^m on a strictly increasing time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    times: Vec<f64>,
    /// Row-major: node `i` occupies `values[i*dim..(i+1)*dim]`.
    values: Vec<f64>,
    dim: usize,
    interpolation: Interpolation,
}

/// `n_steps + 1` equally spaced nodes on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps)
        .map(|i| horizon * i as f64 / n_steps as f64)
        .collect()
}

/// Nodes `t_i = i T 2^{-level}` of the dyadic grid.
pub fn dyadic_grid(horizon: f64, level: u32) -> Vec<f64> {
    uniform_grid(horizon, 1usize << level)
}

fn validate_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::GridMismatch("empty time grid".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::GridMismatch(format!("grid starts at {} instead of 0", times[0])));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::GridMismatch("grid is not strictly increasing".into()));
    }
    Ok(())
}

impl SamplePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize, interpolation: Interpolation) -> Result<Self> {
        validate_grid(&times)?;
        if dim == 0 || values.len() != times.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: times.len() * dim.max(1),
                got: values.len(),
            });
        }
        Ok(SamplePath {
            times,
            values,
            dim,
            interpolation,
        })
    }

    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("values", "ragged rows"));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(times, values, dim, Interpolation::PiecewiseLinear)
    }

    /// Path `t ↦ f(t)` sampled on `times`.
    pub fn from_fn(times: Vec<f64>, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(times.len() * dim);
        for &t in &times {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            values.extend(v);
        }
        Self::new(times, values, dim, Interpolation::PiecewiseLinear)
    }

    pub fn constant(times: Vec<f64>, value: &[f64]) -> Result<Self> {
        let values = value.iter().copied().cycle().take(times.len() * value.len()).collect();
        Self::new(times, values, value.len(), Interpolation::PiecewiseLinear)
    }

    pub(crate) fn from_parts_unchecked(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Self {
        debug_assert_eq!(values.len(), times.len() * dim);
        SamplePath {
            times,
            values,
            dim,
            interpolation: Interpolation::PiecewiseLinear,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty grid")
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Value at time `t` under the declared interpolation rule; clamps `t`
    /// to the grid.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        if t <= self.times[0] {
            out.copy_from_slice(self.node(0));
            return;
        }
        if t >= self.times[n - 1] {
            out.copy_from_slice(self.node(n - 1));
            return;
        }
        // index of the last node <= t
        let i = self.times.partition_point(|&s| s <= t) - 1;
        match self.interpolation {
            Interpolation::PiecewiseConstantLeft => out.copy_from_slice(self.node(i)),
            Interpolation::PiecewiseLinear => {
                let (t0, t1) = (self.times[i], self.times[i + 1]);
                let u = (t - t0) / (t1 - t0);
                let a = self.node(i);
                let b = self.node(i + 1);
                for k in 0..self.dim {
                    out[k] = a[k] + u * (b[k] - a[k]);
                }
            }
        }
    }

    /// Index of a grid node equal to `t` within a relative tolerance.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + self.horizon().abs());
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    /// Keeps every `stride`-th node (the endpoint must be kept).
    pub fn restrict(&self, stride: usize) -> Result<SamplePath> {
        if stride == 0 || (self.len() - 1) % stride != 0 {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide {} intervals",
                self.len() - 1
            )));
        }
        let times = self.times.iter().step_by(stride).copied().collect();
        let values = self
            .rows()
            .step_by(stride)
            .flat_map(|r| r.iter().copied())
            .collect();
        Ok(SamplePath {
            times,
            values,
            dim: self.dim,
            interpolation: self.interpolation,
        })
    }

    /// Values of this path at the nondecreasing times `grid`, row-major.
    /// Agrees with [`SamplePath::eval`] node by node in a single sweep.
    pub fn values_at(&self, grid: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let n = self.times.len();
        let mut out = vec![0.0; grid.len() * d];
        let mut i = 0;
        for (g, &t) in grid.iter().enumerate() {
            let row = &mut out[g * d..(g + 1) * d];
            if t <= self.times[0] {
                row.copy_from_slice(self.node(0));
                continue;
            }
            if t >= self.times[n - 1] {
                row.copy_from_slice(self.node(n - 1));
                continue;
            }
            while self.times[i + 1] <= t {
                i += 1;
            }
            while self.times[i] > t {
                i -= 1;
            }
            match self.interpolation {
                Interpolation::PiecewiseConstantLeft => row.copy_from_slice(self.node(i)),
                Interpolation::PiecewiseLinear => {
                    let (t0, t1) = (self.times[i], self.times[i + 1]);
                    let u = (t - t0) / (t1 - t0);
                    let a = self.node(i);
                    let b = self.node(i + 1);
                    for k in 0..d {
                        row[k] = a[k] + u * (b[k] - a[k]);
                    }
                }
            }
        }
        out
    }

    /// Values of this path at the nodes of `grid`, as a new path.
    pub fn resample(&self, grid: &[f64]) -> Result<SamplePath> {
        let values = self.values_at(grid);
        SamplePath::new(grid.to_vec(), values, self.dim, Interpolation::PiecewiseLinear)
    }

    /// FNV-1a digest of the bit patterns of times and values.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.times.iter().chain(&self.values) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// CSV with header `t,x1,...,xm` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 1..=self.dim {
            let _ = write!(s, ",x{k}");
        }
        s.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{}", fmt17(*t));
            for v in self.node(i) {
                let _ = write!(s, ",{}", fmt17(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<SamplePath> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("csv", "empty input"))?;
        let dim = header.split(',').count().saturating_sub(1);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::invalid("csv", format!("row {} has {} fields", ln + 2, fields.len())));
            }
            let parse = |f: &str| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid("csv", format!("row {}: {e}", ln + 2)))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                values.push(parse(f)?);
            }
        }
        SamplePath::new(times, values, dim, Interpolation::PiecewiseLinear)
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// A piecewise-linear Cameron–Martin path with its per-interval derivative and
/// cumulative energy `∫_0^t |ḣ|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    path: SamplePath,
    /// Row-major per-interval derivative, `(len-1) * dim` entries.
    derivative: Vec<f64>,
    energy: Vec<f64>,
}

impl Control {
    pub fn from_path(path: SamplePath) -> Control {
        let path = path.with_interpolation(Interpolation::PiecewiseLinear);
        let d = path.dim();
        let n = path.len();
        let mut derivative = Vec::with_capacity((n - 1) * d);
        let mut energy = Vec::with_capacity(n);
        energy.push(0.0);
        for i in 0..n - 1 {
            let dt = path.times[i + 1] - path.times[i];
            let mut sq = 0.0;
            for k in 0..d {
                let v = (path.node(i + 1)[k] - path.node(i)[k]) / dt;
                derivative.push(v);
                sq += v * v;
            }
            energy.push(energy[i] + sq * dt);
        }
        Control {
            path,
            derivative,
            energy,
        }
    }

    /// Piecewise-linear interpolant of `f` on `times`.
    pub fn from_fn(times: Vec<f64>, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Control> {
        Ok(Control::from_path(SamplePath::from_fn(times, dim, f)?))
    }

    pub fn zero(dim: usize, horizon: f64) -> Control {
        Control::from_path(SamplePath::constant(vec![0.0, horizon], &vec![0.0; dim]).expect("valid grid"))
    }

    pub fn path(&self) -> &SamplePath {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.path.horizon()
    }

    pub fn derivative(&self, interval: usize) -> &[f64] {
        let d = self.dim();
        &self.derivative[interval * d..(interval + 1) * d]
    }

    /// Cumulative energy at each node.
    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    /// `∫_0^t |ḣ_s|² ds`, exact for piecewise-constant ḣ.
    pub fn energy_at(&self, t: f64) -> f64 {
        let times = self.path.times();
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.horizon() {
            return *self.energy.last().unwrap();
        }
        let i = times.partition_point(|&s| s <= t) - 1;
        let rate: f64 = self.derivative(i).iter().map(|v| v * v).sum();
        self.energy[i] + rate * (t - times[i])
    }

    /// Finest grid containing both the control's breakpoints and `grid`.
    pub fn merged_grid(&self, grid: &[f64]) -> Vec<f64> {
        let mut all: Vec<f64> = self.path.times().iter().chain(grid).copied().collect();
        all.sort_by(|a, b| a.total_cmp(b));
        let tol = 1e-13 * (1.0 + self.horizon());
        all.dedup_by(|a, b| (*a - *b).abs() <= tol);
        all
    }
}

/// Standard Brownian motion in ℝ^dim on `grid`, drawn from stream
/// `(seed, stream)`.
pub fn sample_brownian(dim: usize, grid: &[f64], seed: u64, stream: u64) -> Result<SamplePath> {
    validate_grid(grid)?;
    let mut rng = stream_rng(seed, stream);
    Ok(brownian_from_rng(dim, grid, &mut rng))
}

pub(crate) fn brownian_from_rng(dim: usize, grid: &[f64], rng: &mut StreamRng) -> SamplePath {
    let mut values = vec![0.0; grid.len() * dim];
    for i in 1..grid.len() {
        let sd = (grid[i] - grid[i - 1]).sqrt();
        for k in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            values[i * dim + k] = values[(i - 1) * dim + k] + sd * z;
        }
    }
    SamplePath::from_parts_unchecked(grid.to_vec(), values, dim)
}

/// Inserts the midpoint of every interval, drawn from the Brownian-bridge law
/// `N((a+b)/2, Δ/4)` given the endpoint values.
pub fn refine_bridge(w: &SamplePath, seed: u64, stream: u64) -> SamplePath {
    let mut rng = stream_rng(seed, stream);
    let d = w.dim();
    let n = w.len();
    let mut times = Vec::with_capacity(2 * n - 1);
    let mut values = Vec::with_capacity((2 * n - 1) * d);
    for i in 0..n {
        times.push(w.times[i]);
        values.extend_from_slice(w.node(i));
        if i + 1 < n {
            let (t0, t1) = (w.times[i], w.times[i + 1]);
            times.push(0.5 * (t0 + t1));
            let sd = (0.25 * (t1 - t0)).sqrt();
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                values.push(0.5 * (w.node(i)[k] + w.node(i + 1)[k]) + sd * z);
            }
        }
    }
    SamplePath {
        times,
        values,
        dim: d,
        interpolation: w.interpolation,
    }
}

/// Grid index stride between consecutive level-`n` dyadic nodes of `w`.
pub fn dyadic_stride(w: &SamplePath, level: u32, horizon: f64) -> Result<usize> {
    let cells = 1usize << level;
    let mut idx = Vec::with_capacity(cells + 1);
    for i in 0..=cells {
        let t = horizon * i as f64 / cells as f64;
        idx.push(w.node_index(t).ok_or_else(|| {
            Error::GridMismatch(format!("dyadic node t = {t} of level {level} is not on the driver grid"))
        })?);
    }
    let stride = idx[1] - idx[0];
    if idx.windows(2).all(|p| p[1] - p[0] == stride) {
        Ok(stride)
    } else {
        Err(Error::GridMismatch("dyadic nodes are not uniformly spaced on the grid".into()))
    }
}

/// The adapted, one-cell-delayed piecewise-linear interpolation `w^n` on
/// `[0, T]`: `w^n ≡ w_0` on the first cell and `w^n(t_{i+1}) = w(t_i)`.
pub fn adapted_interpolation(w: &SamplePath, level: u32, horizon: f64) -> Result<SamplePath> {
    let cells = 1usize << level;
    let d = w.dim();
    let mut idx = Vec::with_capacity(cells + 1);
    for i in 0..=cells {
        let t = horizon * i as f64 / cells as f64;
        idx.push(w.node_index(t).ok_or_else(|| {
            Error::GridMismatch(format!("dyadic node t = {t} of level {level} is not on the driver grid"))
        })?);
    }
    let times = dyadic_grid(horizon, level);
    let mut values = Vec::with_capacity((cells + 1) * d);
    values.extend_from_slice(w.node(idx[0]));
    for i in 1..=cells {
        values.extend_from_slice(w.node(idx[i - 1]));
    }
    Ok(SamplePath::from_parts_unchecked(times, values, d))
}

/// `H_n(ω) = w^n(ω)` as a control.
pub fn control_from_path(w: &SamplePath, level: u32, horizon: f64) -> Result<Control> {
    Ok(Control::from_path(adapted_interpolation(w, level, horizon)?))
}

fn last_node_at_or_before(x: &SamplePath, horizon: f64) -> Result<usize> {
    let tol = 1e-12 * (1.0 + horizon.abs());
    if horizon > x.horizon() + tol {
        return Err(Error::GridMismatch(format!(
            "grid ends at {} before horizon {horizon}",
            x.horizon()
        )));
    }
    Ok(x.times.partition_point(|&s| s <= horizon + tol) - 1)
}

/// `sup_{t ≤ T} |x_t|` over grid nodes.
pub fn sup_norm(x: &SamplePath, horizon: f64) -> Result<f64> {
    let last = last_node_at_or_before(x, horizon)?;
    Ok((0..=last)
        .map(|i| x.node(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

/// Hölder seminorm value and whether it was an exact all-pairs scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderValue {
    pub value: f64,
    pub exact: bool,
}

/// `sup_{s<t≤T} |x_t − x_s| / |t − s|^α` over node pairs; exact up to
/// [`HOLDER_EXACT_MAX_NODES`] nodes, a dyadic-lag lower bound beyond.
pub fn holder_seminorm(x: &SamplePath, horizon: f64, alpha: f64) -> Result<HolderValue> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", "Hölder exponent must lie in [0, 1)"));
    }
    let last = last_node_at_or_before(x, horizon)?;
    Ok(holder_on_range(x, 0, last, alpha))
}

pub(crate) fn holder_on_range(x: &SamplePath, first: usize, last: usize, alpha: f64) -> HolderValue {
    if last + 1 - first <= HOLDER_EXACT_MAX_NODES {
        HolderValue {
            value: holder_exact(x, first, last, alpha),
            exact: true,
        }
    } else {
        HolderValue {
            value: holder_dyadic_lags(x, first, last, alpha),
            exact: false,
        }
    }
}

fn increment_sq(x: &SamplePath, i: usize, j: usize) -> f64 {
    let d = x.dim;
    let a = &x.values[i * d..(i + 1) * d];
    let b = &x.values[j * d..(j + 1) * d];
    a.iter().zip(b).map(|(u, v)| (v - u) * (v - u)).sum()
}

/// Spacing of a uniform grid on `[first, last]`, if it is one.
fn uniform_step(times: &[f64], first: usize, last: usize) -> Option<f64> {
    if last == first {
        return None;
    }
    let h = (times[last] - times[first]) / (last - first) as f64;
    let tol = 1e-9 * h;
    (first..last)
        .all(|i| (times[i + 1] - times[i] - h).abs() <= tol)
        .then_some(h)
}

fn holder_exact(x: &SamplePath, first: usize, last: usize, alpha: f64) -> f64 {
    let mut best: f64 = 0.0;
    if let Some(h) = uniform_step(&x.times, first, last) {
        // quotient denominators depend on the lag only
        let inv: Vec<f64> = (0..=last - first)
            .map(|lag| if lag == 0 { 0.0 } else { (lag as f64 * h).powf(-alpha) })
            .collect();
        if x.dim == 1 {
            for i in first..=last {
                let a = x.values[i];
                for j in i + 1..=last {
                    best = best.max((x.values[j] - a).abs() * inv[j - i]);
                }
            }
            return best;
        }
        for i in first..=last {
            for j in i + 1..=last {
                best = best.max(increment_sq(x, i, j).sqrt() * inv[j - i]);
            }
        }
        return best;
    }
    for i in first..=last {
        for j in i + 1..=last {
            let dt = x.times[j] - x.times[i];
            best = best.max(increment_sq(x, i, j).sqrt() / dt.powf(alpha));
        }
    }
    best
}

/// Hölder quotient maximized over node pairs at lags `1, 2, 4, …` and the
/// full range; a lower bound for the seminorm.
pub(crate) fn holder_dyadic_lags(x: &SamplePath, first: usize, last: usize, alpha: f64) -> f64 {
    let nodes = last + 1 - first;
    let mut best: f64 = 0.0;
    let mut lag = 1;
    while lag < nodes {
        for i in first..=last - lag {
            let dt = x.times[i + lag] - x.times[i];
            best = best.max(increment_sq(x, i, i + lag).sqrt() / dt.powf(alpha));
        }
        lag *= 2;
    }
    if last > first {
        let dt = x.times[last] - x.times[first];
        best = best.max(increment_sq(x, first, last).sqrt() / dt.powf(alpha));
    }
    best
}

/// `‖x‖_{T,α} = ‖x‖_T + seminorm`.
pub fn holder_norm(x: &SamplePath, horizon: f64, alpha: f64) -> Result<HolderValue> {
    let semi = holder_seminorm(x, horizon, alpha)?;
    Ok(HolderValue {
        value: sup_norm(x, horizon)? + semi.value,
        exact: semi.exact,
    })
}

/// `sup_{u,v ∈ [s,t]} |x_u − x_v|` over the nodes with indices in `[first, last]`.
pub fn oscillation(x: &SamplePath, first: usize, last: usize) -> f64 {
    if x.dim == 1 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in first..=last {
            lo = lo.min(x.values[i]);
            hi = hi.max(x.values[i]);
        }
        return hi - lo;
    }
    holder_exact(x, first, last, 0.0)
}

/// Square matrices indexed `[i][j]`.
pub type Matrix = Vec<Vec<f64>>;

/// Terminal Stratonovich iterated integrals `ζ^{ij}(T) = ∫ w^i ∘ dw^j` and the
/// Lévy areas `κ^{ij} = (ζ^{ij} − ζ^{ji}) / 2` by midpoint sums.
pub fn levy_functionals(w: &SamplePath, horizon: f64) -> Result<(Matrix, Matrix)> {
    let last = last_node_at_or_before(w, horizon)?;
    let d = w.dim;
    let mut zeta = vec![vec![0.0; d]; d];
    for k in 0..last {
        let a = w.node(k);
        let b = w.node(k + 1);
        for i in 0..d {
            let mid = 0.5 * (a[i] + b[i]);
            for j in 0..d {
                zeta[i][j] += mid * (b[j] - a[j]);
            }
        }
    }
    Ok((zeta.clone(), kappa_from_zeta(&zeta)))
}

fn kappa_from_zeta(zeta: &Matrix) -> Matrix {
    let d = zeta.len();
    let mut kappa = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            kappa[i][j] = 0.5 * (zeta[i][j] - zeta[j][i]);
        }
    }
    kappa
}

/// Running sup norms `max_{i,j} sup_{t≤T} |ζ^{ij}(t)|` and the same for κ.
pub fn levy_sup_norms(w: &SamplePath, horizon: f64) -> Result<(f64, f64)> {
    let last = last_node_at_or_before(w, horizon)?;
    let d = w.dim;
    let mut zeta = vec![0.0; d * d];
    let (mut zsup, mut ksup) = (0.0f64, 0.0f64);
    for k in 0..last {
        let a = w.node(k);
        let b = w.node(k + 1);
        for i in 0..d {
            let mid = 0.5 * (a[i] + b[i]);
            for j in 0..d {
                zeta[i * d + j] += mid * (b[j] - a[j]);
            }
        }
        for i in 0..d {
            for j in 0..d {
                zsup = zsup.max(zeta[i * d + j].abs());
                ksup = ksup.max((0.5 * (zeta[i * d + j] - zeta[j * d + i])).abs());
            }
        }
    }
    Ok((zsup, ksup))
}

/// Rejection-samples a Brownian path on `grid` whose node values stay within
/// `delta` of `h`. Attempts are drawn sequentially from stream
/// `(seed, stream)`; excursions between nodes are not checked.
pub fn tube_sample(
    h: &Control,
    delta: f64,
    grid: &[f64],
    seed: u64,
    stream: u64,
    max_attempts: u64,
) -> Result<(SamplePath, u64)> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "tube radius must be positive"));
    }
    validate_grid(grid)?;
    let d = h.dim();
    let hv: Vec<f64> = grid.iter().flat_map(|&t| h.path().eval(t)).collect();
    let mut rng = stream_rng(seed, stream);
    let mut values = vec![0.0; grid.len() * d];
    let d2 = delta * delta;
    for attempt in 1..=max_attempts {
        if try_tube_draw(&hv, grid, d, d2, &mut values, &mut rng) {
            return Ok((SamplePath::from_parts_unchecked(grid.to_vec(), values, d), attempt));
        }
    }
    Err(Error::TubeTooNarrow {
        delta,
        attempts: max_attempts,
        pilot_acceptance: 0.0,
    })
}

/// One Brownian draw with early rejection at the first node leaving the tube.
pub(crate) fn try_tube_draw(
    hv: &[f64],
    grid: &[f64],
    d: usize,
    d2: f64,
    values: &mut [f64],
    rng: &mut StreamRng,
) -> bool {
    let off0: f64 = hv[..d].iter().map(|v| v * v).sum();
    if off0 >= d2 {
        return false;
    }
    values[..d].iter_mut().for_each(|v| *v = 0.0);
    for i in 1..grid.len() {
        let sd = (grid[i] - grid[i - 1]).sqrt();
        let mut off = 0.0;
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let v = values[(i - 1) * d + k] + sd * z;
            values[i * d + k] = v;
            let e = v - hv[i * d + k];
            off += e * e;
        }
        if off >= d2 {
            return false;
        }
    }
    true
}

/// Acceptance fraction of the tube over `attempts` unconditioned draws.
pub fn tube_acceptance(h: &Control, delta: f64, grid: &[f64], seed: u64, stream: u64, attempts: u64) -> f64 {
    let d = h.dim();
    let hv: Vec<f64> = grid.iter().flat_map(|&t| h.path().eval(t)).collect();
    let mut rng = stream_rng(seed, stream);
    let mut values = vec![0.0; grid.len() * d];
    let hits = (0..attempts)
        .filter(|_| try_tube_draw(&hv, grid, d, delta * delta, &mut values, &mut rng))
        .count();
    hits as f64 / attempts as f64
}

/// `P(sup_{t≤T} |w_t| < δ)` for 1-D Brownian motion by the alternating
/// eigenfunction series.
pub fn small_ball_probability_1d(delta: f64, horizon: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut s = 0.0;
    for k in 0..200 {
        let m = (2 * k + 1) as f64;
        let term = (-m * m * pi * pi * horizon / (8.0 * delta * delta)).exp() / m;
        s += if k % 2 == 0 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    4.0 / pi * s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_starts_at_zero() {
        let w = sample_brownian(1, &[0.0], 99, 0).unwrap();
        assert_eq!(w.node(0), &[0.0]);
    }

    #[test]
    fn brownian_is_reproducible_per_stream() {
        let g = uniform_grid(1.0, 64);
        let a = sample_brownian(2, &g, 5, 17).unwrap();
        let b = sample_brownian(2, &g, 5, 17).unwrap();
        let c = sample_brownian(2, &g, 5, 18).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn increment_variance_matches_mesh() {
        let n = 1 << 10;
        let g = uniform_grid(1.0, n);
        let mesh = 1.0 / n as f64;
        let (mut s2, mut count) = ([0.0; 2], 0usize);
        for p in 0..200 {
            let w = sample_brownian(2, &g, 1, p).unwrap();
            for i in 0..n {
                for k in 0..2 {
                    let dw = w.node(i + 1)[k] - w.node(i)[k];
                    s2[k] += dw * dw / mesh;
                }
            }
            count += n;
        }
        for v in s2 {
            let var = v / count as f64;
            assert!((0.9..1.1).contains(&var), "{var}");
        }
    }

    #[test]
    fn bridge_refinement_keeps_coarse_nodes() {
        let w = sample_brownian(2, &uniform_grid(1.0, 16), 3, 0).unwrap();
        let r = refine_bridge(&w, 3, 1);
        assert_eq!(r.len(), 33);
        assert_eq!(r.restrict(2).unwrap().values(), w.values());
        assert_eq!(r.restrict(2).unwrap().times(), w.times());
    }

    #[test]
    fn bridge_midpoint_law() {
        let w = SamplePath::from_rows(vec![0.0, 1.0], &[vec![0.0], vec![0.8]]).unwrap();
        let n = 100_000;
        let mids: Vec<f64> = (0..n).map(|s| refine_bridge(&w, 21, s).node(1)[0]).collect();
        let mean = mids.iter().sum::<f64>() / n as f64;
        let var = mids.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((mean - 0.4).abs() < 3.0 * se, "{mean}");
        let ratio = var / 0.25;
        assert!((0.9..1.1).contains(&ratio), "{ratio}");
    }

    #[test]
    fn adapted_interpolation_first_cell_is_flat() {
        let w = sample_brownian(1, &uniform_grid(1.0, 64), 8, 0).unwrap();
        let wn = adapted_interpolation(&w, 3, 1.0).unwrap();
        for t in [0.0, 0.03, 0.1, 0.1249] {
            assert_eq!(wn.eval(t), vec![0.0]);
        }
    }

    #[test]
    fn adapted_interpolation_hand_value() {
        let w = SamplePath::from_rows(vec![0.0, 0.5, 1.0], &[vec![0.0], vec![0.6], vec![-2.0]]).unwrap();
        let wn = adapted_interpolation(&w, 1, 1.0).unwrap();
        assert!((wn.eval(0.75)[0] - 0.3).abs() < 1e-15);
        let c = control_from_path(&w, 1, 1.0).unwrap();
        assert_eq!(c.derivative(0), &[0.0]);
        assert!((c.derivative(1)[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn adapted_interpolation_is_one_cell_shift() {
        let w = sample_brownian(1, &dyadic_grid(1.0, 4), 2, 0).unwrap();
        let wn = adapted_interpolation(&w, 4, 1.0).unwrap();
        let delta = 1.0 / 16.0;
        for (i, &t) in wn.times().iter().enumerate() {
            let shifted = w.eval((t - delta).max(0.0));
            assert_eq!(wn.node(i), shifted.as_slice());
        }
    }

    #[test]
    fn adapted_interpolation_requires_dyadic_nodes() {
        let w = sample_brownian(1, &uniform_grid(1.0, 10), 2, 0).unwrap();
        assert!(matches!(adapted_interpolation(&w, 3, 1.0), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn adapted_interpolation_uses_only_the_past() {
        let g = dyadic_grid(1.0, 6);
        let w = sample_brownian(1, &g, 4, 0).unwrap();
        let wn = adapted_interpolation(&w, 3, 1.0).unwrap();
        // perturb w after t = 0.5; w^n on [0, 0.5] must not change
        let mut vals = w.values().to_vec();
        for v in vals.iter_mut().skip(33) {
            *v += 10.0;
        }
        let w2 = SamplePath::new(g, vals, 1, Interpolation::PiecewiseLinear).unwrap();
        let wn2 = adapted_interpolation(&w2, 3, 1.0).unwrap();
        for i in 0..=4 {
            assert_eq!(wn.node(i), wn2.node(i));
        }
    }

    #[test]
    fn control_energy_is_piecewise_constant_quadrature() {
        let w = sample_brownian(2, &dyadic_grid(1.0, 5), 6, 0).unwrap();
        let c = control_from_path(&w, 3, 1.0).unwrap();
        let delta = 1.0 / 8.0;
        let wn = adapted_interpolation(&w, 3, 1.0).unwrap();
        let mut expected = 0.0;
        for i in 0..8 {
            let a = wn.node(i);
            let b = wn.node(i + 1);
            let sq: f64 = (0..2).map(|k| (b[k] - a[k]).powi(2)).sum();
            expected += sq / delta;
        }
        assert!((c.energy().last().unwrap() - expected).abs() < 1e-12);
        assert!(c.energy().windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn holder_of_identity_path() {
        let x = SamplePath::from_fn(uniform_grid(1.0, 256), 1, |t| vec![t]).unwrap();
        let h = holder_seminorm(&x, 1.0, 0.5).unwrap();
        assert!(h.exact);
        assert!((h.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_path_norms() {
        let x = SamplePath::constant(uniform_grid(1.0, 10), &[3.0, 4.0]).unwrap();
        assert_eq!(sup_norm(&x, 1.0).unwrap(), 5.0);
        assert_eq!(holder_seminorm(&x, 1.0, 0.3).unwrap().value, 0.0);
    }

    #[test]
    fn tent_holder_norm() {
        let x = SamplePath::from_rows(vec![0.0, 0.5, 1.0], &[vec![0.0], vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(holder_norm(&x, 1.0, 0.0).unwrap().value, 2.0);
    }

    #[test]
    fn large_grids_fall_back_to_dyadic_lower_bound() {
        let x = sample_brownian(1, &uniform_grid(1.0, 8192), 1, 0).unwrap();
        let h = holder_seminorm(&x, 1.0, 0.2).unwrap();
        assert!(!h.exact);
        let coarse = x.restrict(4).unwrap();
        let hc = holder_seminorm(&coarse, 1.0, 0.2).unwrap();
        assert!(hc.exact);
        assert!(h.value >= hc.value * 0.5);
    }

    #[test]
    fn levy_of_smooth_path() {
        let x = SamplePath::from_fn(uniform_grid(1.0, 4096), 2, |t| vec![t, t * t]).unwrap();
        let (zeta, kappa) = levy_functionals(&x, 1.0).unwrap();
        assert!((zeta[0][1] - 2.0 / 3.0).abs() < 1e-6);
        assert!((zeta[1][0] - 1.0 / 3.0).abs() < 1e-6);
        assert!((kappa[0][1] - 1.0 / 6.0).abs() < 1e-6);
        assert_eq!(kappa[0][1], -kappa[1][0]);
    }

    #[test]
    fn levy_one_dimensional_is_exact() {
        let w = sample_brownian(1, &uniform_grid(1.0, 500), 3, 0).unwrap();
        let (zeta, kappa) = levy_functionals(&w, 1.0).unwrap();
        let wt = w.node(500)[0];
        assert!((zeta[0][0] - wt * wt / 2.0).abs() < 1e-12);
        assert_eq!(kappa[0][0], 0.0);
    }

    #[test]
    fn tube_everything_accepted_first() {
        let h = Control::zero(1, 1.0);
        let (w, attempts) = tube_sample(&h, 1e6, &uniform_grid(1.0, 64), 1, 0, 10).unwrap();
        assert_eq!(attempts, 1);
        assert_eq!(w.len(), 65);
    }

    #[test]
    fn tube_rejects_impossible_radius() {
        let h = Control::from_fn(vec![0.0, 1.0], 1, |t| vec![5.0 * t]).unwrap();
        let err = tube_sample(&h, 1e-3, &uniform_grid(1.0, 64), 1, 0, 50).unwrap_err();
        assert!(matches!(err, Error::TubeTooNarrow { attempts: 50, .. }));
    }

    #[test]
    fn small_ball_series_value() {
        let p = small_ball_probability_1d(0.5, 1.0);
        assert!((p - 9.15e-3).abs() < 1e-4, "{p}");
        // large radius: probability close to 1
        assert!(small_ball_probability_1d(5.0, 1.0) > 0.99);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let w = sample_brownian(2, &uniform_grid(1.0, 7), 1, 0).unwrap();
        let csv = w.to_csv();
        assert!(csv.starts_with("t,x1,x2\n"));
        let back = SamplePath::from_csv(&csv).unwrap();
        assert_eq!(back.values(), w.values());
        assert_eq!(back.times(), w.times());
    }

    #[test]
    fn piecewise_constant_evaluation() {
        let x = SamplePath::from_rows(vec![0.0, 1.0, 2.0], &[vec![0.0], vec![1.0], vec![3.0]])
            .unwrap()
            .with_interpolation(Interpolation::PiecewiseConstantLeft);
        assert_eq!(x.eval(0.5), vec![0.0]);
        assert_eq!(x.eval(1.5), vec![1.0]);
        assert_eq!(x.eval(2.0), vec![3.0]);
    }

    #[test]
    fn sweep_evaluation_matches_pointwise() {
        let w = sample_brownian(2, &uniform_grid(1.0, 37), 3, 0).unwrap();
        let grid: Vec<f64> = (0..=300).map(|i| -0.1 + 1.2 * i as f64 / 300.0).collect();
        for path in [w.clone(), w.with_interpolation(Interpolation::PiecewiseConstantLeft)] {
            let swept = path.values_at(&grid);
            for (g, &t) in grid.iter().enumerate() {
                assert_eq!(&swept[2 * g..2 * g + 2], path.eval(t).as_slice());
            }
        }
    }

    #[test]
    fn uniform_holder_scan_matches_brute_force() {
        for dim in [1, 2] {
            let x = sample_brownian(dim, &uniform_grid(2.0, 300), 8, dim as u64).unwrap();
            let mut brute: f64 = 0.0;
            for i in 0..x.len() {
                for j in i + 1..x.len() {
                    let inc: f64 = x.node(i).iter().zip(x.node(j)).map(|(a, b)| (b - a) * (b - a)).sum();
                    brute = brute.max(inc.sqrt() / (x.times()[j] - x.times()[i]).powf(0.3));
                }
            }
            let got = holder_seminorm(&x, 2.0, 0.3).unwrap();
            assert!(got.exact);
            assert!((got.value - brute).abs() <= 1e-12 * brute);
            assert!(holder_dyadic_lags(&x, 0, x.len() - 1, 0.3) <= got.value * (1.0 + 1e-12));
        }
    }
}
