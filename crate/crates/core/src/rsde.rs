//! Reflected SDE and skeleton integrators.
//!
//! Stochastic integrators (`euler_reflected`, `shifted_driver`) step with the
//! Itô-corrected drift b̃ = b + ½(∇σ)σ. Integrators driven by bounded-variation
//! paths (`skeleton`, `wong_zakai`) use b itself.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::paths::{adapted_interpolation, Control, Interpolation, SamplePath};
use crate::skorohod::{check_start, Reflector, SkorohodSolution, Trajectory};

/// `out[i*d1 + k] = σ_k^i(x)`.
pub type MatrixField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `out[i] = b^i(x)`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `out[(i*d1 + k)*d + j] = ∂_j σ_k^i(x)`.
pub type JacobianField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// σ and its Jacobian in one evaluation, laid out as above.
type FusedField = Arc<dyn Fn(&[f64], &mut [f64], &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegularityBounds {
    pub sigma: f64,
    pub dsigma: f64,
    pub d2sigma: f64,
    pub b: f64,
    pub db: f64,
}

#[derive(Clone)]
pub struct Coefficients {
    pub d: usize,
    pub d1: usize,
    sigma: MatrixField,
    jacobian: Option<JacobianField>,
    fused: Option<FusedField>,
    constant_sigma: bool,
    drift: VectorField,
    pub bounds: Option<RegularityBounds>,
}

impl std::fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coefficients")
            .field("d", &self.d)
            .field("d1", &self.d1)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl Coefficients {
    pub fn new(d: usize, d1: usize, sigma: MatrixField, drift: VectorField) -> Self {
        Coefficients {
            d,
            d1,
            sigma,
            jacobian: None,
            fused: None,
            constant_sigma: false,
            drift,
            bounds: None,
        }
    }

    pub fn with_jacobian(mut self, jacobian: JacobianField) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    /// Drops the analytic Jacobian so b̃ falls back to finite differences.
    pub fn without_jacobian(mut self) -> Self {
        self.jacobian = None;
        self.fused = None;
        self.constant_sigma = false;
        self
    }

    /// Whether `σ` is known not to depend on the state.
    pub fn has_constant_sigma(&self) -> bool {
        self.constant_sigma
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }

    pub fn sigma(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.d1];
        self.sigma_into(x, &mut out);
        out
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.drift_into(x, &mut out);
        out
    }

    /// ∂_j σ_k^i, analytic when available, else central differences with
    /// step `1e-6 (1 + |x|)`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let (d, d1) = (self.d, self.d1);
        let mut out = vec![0.0; d * d1 * d];
        if let Some(j) = &self.jacobian {
            j(x, &mut out);
            return out;
        }
        self.fd_jacobian_into(x, &mut out);
        out
    }

    fn fd_jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let (d, d1) = (self.d, self.d1);
        let h = 1e-6 * (1.0 + crate::vecops::norm(x));
        let mut xp = x.to_vec();
        let mut sp = vec![0.0; d * d1];
        let mut sm = vec![0.0; d * d1];
        for j in 0..d {
            xp[j] = x[j] + h;
            self.sigma_into(&xp, &mut sp);
            xp[j] = x[j] - h;
            self.sigma_into(&xp, &mut sm);
            xp[j] = x[j];
            for ik in 0..d * d1 {
                out[ik * d + j] = (sp[ik] - sm[ik]) / (2.0 * h);
            }
        }
    }

    pub fn btilde(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(self);
        self.btilde_into(x, &mut ws);
        ws.drift
    }

    /// b̃^i = b^i + ½ Σ_j Σ_k (∂_j σ_k^i) σ_k^j, written to `ws.drift` with
    /// σ(x) left in `ws.sig`.
    fn btilde_into(&self, x: &[f64], ws: &mut Workspace) {
        let (d, d1) = (self.d, self.d1);
        self.drift_into(x, &mut ws.drift);
        if self.constant_sigma {
            self.sigma_into(x, &mut ws.sig);
            return;
        }
        match (&self.fused, &self.jacobian) {
            (Some(f), _) => f(x, &mut ws.sig, &mut ws.jac),
            (None, Some(j)) => {
                self.sigma_into(x, &mut ws.sig);
                j(x, &mut ws.jac)
            }
            (None, None) => {
                self.sigma_into(x, &mut ws.sig);
                self.fd_jacobian_into(x, &mut ws.jac)
            }
        }
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..d1 {
                for j in 0..d {
                    acc += ws.jac[(i * d1 + k) * d + j] * ws.sig[j * d1 + k];
                }
            }
            ws.drift[i] += 0.5 * acc;
        }
    }

    /// Constant diffusion matrix (row-major `d x d1`) and constant drift.
    pub fn constant(d: usize, d1: usize, sigma: Vec<f64>, drift: Vec<f64>) -> Result<Self> {
        if sigma.len() != d * d1 || drift.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d * d1,
                got: sigma.len(),
            });
        }
        let s = sigma.clone();
        let b = drift.clone();
        let bound = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let zero_jac: JacobianField = Arc::new(|_, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0));
        let mut c = Coefficients::new(
            d,
            d1,
            Arc::new(move |_, out: &mut [f64]| out.copy_from_slice(&s)),
            Arc::new(move |_, out: &mut [f64]| out.copy_from_slice(&b)),
        )
        .with_jacobian(zero_jac);
        c.constant_sigma = true;
        c.bounds = Some(RegularityBounds {
            sigma: bound,
            b: bnorm,
            ..Default::default()
        });
        Ok(c)
    }

    /// σ ≡ scale·I (d = d1) and b ≡ 0.
    pub fn scaled_identity(d: usize, scale: f64) -> Self {
        let mut s = vec![0.0; d * d];
        for i in 0..d {
            s[i * d + i] = scale;
        }
        Self::constant(d, d, s, vec![0.0; d]).expect("square")
    }

    pub fn from_spec(spec: &CoefficientSpec) -> Result<Self> {
        spec.build()
    }
}

/// Scratch storage reused across integration steps.
pub(crate) struct Workspace {
    sig: Vec<f64>,
    jac: Vec<f64>,
    drift: Vec<f64>,
    inc: Vec<f64>,
    push: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(c: &Coefficients) -> Self {
        Workspace {
            sig: vec![0.0; c.d * c.d1],
            jac: vec![0.0; c.d * c.d1 * c.d],
            drift: vec![0.0; c.d],
            inc: vec![0.0; c.d],
            push: vec![0.0; c.d],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    Const,
    Affine,
    Sin,
}

/// Named coefficient family of a `[coefficients]` section:
/// `σ_k^i(x) = g(x_i) M_ik` with `g = base` (const), `base + slope·x_i`
/// (affine) or `base + slope·sin x_i` (sin), and `b(x) = drift − drift_rate·x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub sigma: SigmaKind,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default = "one")]
    pub d1: usize,
    #[serde(default = "onef")]
    pub base: f64,
    #[serde(default)]
    pub slope: f64,
    /// `d x d1` shape matrix; defaults to the rectangular identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    #[serde(default)]
    pub drift_rate: f64,
}

fn one() -> usize {
    1
}

fn onef() -> f64 {
    1.0
}

impl CoefficientSpec {
    pub fn new(sigma: SigmaKind, d: usize, d1: usize, base: f64, slope: f64) -> Self {
        CoefficientSpec {
            sigma,
            d,
            d1,
            base,
            slope,
            matrix: None,
            drift: None,
            drift_rate: 0.0,
        }
    }

    /// Copy with every default written out.
    pub fn materialized(&self) -> Self {
        let mut s = self.clone();
        s.matrix = Some(self.shape_matrix_rows());
        s.drift = Some(self.drift.clone().unwrap_or_else(|| vec![0.0; self.d]));
        s
    }

    fn shape_matrix_rows(&self) -> Vec<Vec<f64>> {
        self.matrix.clone().unwrap_or_else(|| {
            (0..self.d)
                .map(|i| (0..self.d1).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
                .collect()
        })
    }

    pub fn build(&self) -> Result<Coefficients> {
        let (d, d1) = (self.d, self.d1);
        if d == 0 || d1 == 0 {
            return Err(Error::invalid("coefficients.d", "dimensions must be positive"));
        }
        for (k, v) in [("coefficients.base", self.base), ("coefficients.slope", self.slope), ("coefficients.drift_rate", self.drift_rate)] {
            if !v.is_finite() {
                return Err(Error::invalid(k, "must be finite"));
            }
        }
        let rows = self.shape_matrix_rows();
        if rows.len() != d || rows.iter().any(|r| r.len() != d1) {
            return Err(Error::invalid("coefficients.matrix", format!("expected {d} rows of {d1} entries")));
        }
        let m: Vec<f64> = rows.into_iter().flatten().collect();
        let drift0 = self.drift.clone().unwrap_or_else(|| vec![0.0; d]);
        if drift0.len() != d {
            return Err(Error::invalid("coefficients.drift", format!("expected {d} entries")));
        }
        let (base, slope, rate) = (self.base, self.slope, self.drift_rate);
        let kind = self.sigma;
        let m1 = m.clone();
        let sigma: MatrixField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            for i in 0..d {
                let g = match kind {
                    SigmaKind::Const => base,
                    SigmaKind::Affine => base + slope * x[i],
                    SigmaKind::Sin => base + slope * x[i].sin(),
                };
                for k in 0..d1 {
                    out[i * d1 + k] = g * m1[i * d1 + k];
                }
            }
        });
        let m2 = m.clone();
        let jac: JacobianField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..d {
                let dg = match kind {
                    SigmaKind::Const => 0.0,
                    SigmaKind::Affine => slope,
                    SigmaKind::Sin => slope * x[i].cos(),
                };
                for k in 0..d1 {
                    out[(i * d1 + k) * d + i] = dg * m2[i * d1 + k];
                }
            }
        });
        let m3 = m.clone();
        let fused: FusedField = Arc::new(move |x: &[f64], sig: &mut [f64], jac: &mut [f64]| {
            jac.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..d {
                let (g, dg) = match kind {
                    SigmaKind::Const => (base, 0.0),
                    SigmaKind::Affine => (base + slope * x[i], slope),
                    SigmaKind::Sin => {
                        let (s, c) = x[i].sin_cos();
                        (base + slope * s, slope * c)
                    }
                };
                for k in 0..d1 {
                    sig[i * d1 + k] = g * m3[i * d1 + k];
                    jac[(i * d1 + k) * d + i] = dg * m3[i * d1 + k];
                }
            }
        });
        let b0 = drift0.clone();
        let drift: VectorField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            for i in 0..d {
                out[i] = b0[i] - rate * x[i];
            }
        });
        let mnorm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bounds = match kind {
            SigmaKind::Const => RegularityBounds {
                sigma: base.abs() * mnorm,
                ..Default::default()
            },
            SigmaKind::Sin => RegularityBounds {
                sigma: (base.abs() + slope.abs()) * mnorm,
                dsigma: slope.abs() * mnorm,
                d2sigma: slope.abs() * mnorm,
                ..Default::default()
            },
            SigmaKind::Affine => RegularityBounds {
                sigma: f64::INFINITY,
                dsigma: slope.abs() * mnorm,
                ..Default::default()
            },
        };
        let bounds = RegularityBounds {
            b: if rate == 0.0 {
                drift0.iter().map(|v| v * v).sum::<f64>().sqrt()
            } else {
                f64::INFINITY
            },
            db: rate.abs(),
            ..bounds
        };
        let mut c = Coefficients::new(d, d1, sigma, drift).with_jacobian(jac);
        c.fused = Some(fused);
        c.constant_sigma = kind == SigmaKind::Const || slope == 0.0;
        c.bounds = Some(bounds);
        Ok(c)
    }
}

fn check_dims(domain: &Domain, coeffs: &Coefficients, driver_dim: usize) -> Result<()> {
    if coeffs.d != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: coeffs.d,
        });
    }
    if coeffs.d1 != driver_dim {
        return Err(Error::DimensionMismatch {
            expected: coeffs.d1,
            got: driver_dim,
        });
    }
    Ok(())
}

/// Projected Euler scheme for the Itô form of the reflected SDE:
/// `X_{i+1} = Π(X_i + σ(X_i)Δw_i + b̃(X_i)Δt)`.
pub fn euler_reflected(domain: &Domain, coeffs: &Coefficients, w: &SamplePath, x0: &[f64]) -> Result<SkorohodSolution> {
    check_start(domain, x0)?;
    check_dims(domain, coeffs, w.dim())?;
    let (d, d1) = (coeffs.d, coeffs.d1);
    let mut ws = Workspace::new(coeffs);
    let mut refl = Reflector::new(d);
    let mut traj = Trajectory::start(x0, w.len());
    let mut x = x0.to_vec();
    let times = w.times();
    for step in 1..w.len() {
        let dt = times[step] - times[step - 1];
        coeffs.btilde_into(&x, &mut ws);
        let (a, b) = (w.node(step - 1), w.node(step));
        for i in 0..d {
            let mut acc = ws.drift[i] * dt;
            for k in 0..d1 {
                acc += ws.sig[i * d1 + k] * (b[k] - a[k]);
            }
            ws.inc[i] = acc;
        }
        let tv = refl.step(domain, &mut x, &ws.inc, &mut ws.push)?;
        traj.record(times[step], &x, &refl.k_step, tv, &ws.push);
    }
    Ok(traj.finish())
}

/// Skeleton `Z(h)`: projected explicit Euler for `ż = σ(z)ḣ + b(z)` with
/// `substeps` sub-intervals per breakpoint interval of `h`.
pub fn skeleton(domain: &Domain, coeffs: &Coefficients, h: &Control, substeps: usize, x0: &[f64]) -> Result<SkorohodSolution> {
    check_start(domain, x0)?;
    check_dims(domain, coeffs, h.dim())?;
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    let (d, d1) = (coeffs.d, coeffs.d1);
    let mut ws = Workspace::new(coeffs);
    let mut refl = Reflector::new(d);
    let times = h.path().times();
    let mut traj = Trajectory::start(x0, (times.len() - 1) * substeps + 1);
    let mut x = x0.to_vec();
    for interval in 0..times.len() - 1 {
        let (t0, t1) = (times[interval], times[interval + 1]);
        let dt = (t1 - t0) / substeps as f64;
        let hdot = h.derivative(interval);
        for s in 0..substeps {
            coeffs.sigma_into(&x, &mut ws.sig);
            coeffs.drift_into(&x, &mut ws.drift);
            for i in 0..d {
                let mut acc = ws.drift[i];
                for k in 0..d1 {
                    acc += ws.sig[i * d1 + k] * hdot[k];
                }
                ws.inc[i] = acc * dt;
            }
            let tv = refl.step(domain, &mut x, &ws.inc, &mut ws.push)?;
            let t = if s + 1 == substeps { t1 } else { t0 + (s + 1) as f64 * dt };
            traj.record(t, &x, &refl.k_step, tv, &ws.push);
        }
    }
    Ok(traj.finish())
}

/// Skeleton of `h` integrated on the union of its breakpoints and `grid`.
pub fn skeleton_on_grid(
    domain: &Domain,
    coeffs: &Coefficients,
    h: &Control,
    grid: &[f64],
    substeps: usize,
    x0: &[f64],
) -> Result<SkorohodSolution> {
    let merged = h.merged_grid(grid);
    let refined = Control::from_path(h.path().resample(&merged)?);
    skeleton(domain, coeffs, &refined, substeps, x0)
}

/// Adapted Wong–Zakai scheme `X^n`: the reflected ODE driven by `w^n`,
/// integrated per dyadic cell with `substeps` projected Euler steps.
pub fn wong_zakai(
    domain: &Domain,
    coeffs: &Coefficients,
    w: &SamplePath,
    level: u32,
    substeps: usize,
    x0: &[f64],
) -> Result<SkorohodSolution> {
    let wn = adapted_interpolation(w, level, w.horizon())?;
    skeleton(domain, coeffs, &Control::from_path(wn), substeps, x0)
}

/// `Y^n = X(w − w^n + h)` by projected Euler on the grid of `w`, with
/// increment `σ(Y)(Δw − Δw^n + Δh) + b̃(Y)Δt`.
pub fn shifted_driver(
    domain: &Domain,
    coeffs: &Coefficients,
    w: &SamplePath,
    level: u32,
    h: &Control,
    x0: &[f64],
) -> Result<SkorohodSolution> {
    check_start(domain, x0)?;
    check_dims(domain, coeffs, w.dim())?;
    if h.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: h.dim(),
        });
    }
    let wn = adapted_interpolation(w, level, w.horizon())?;
    let (d, d1) = (coeffs.d, coeffs.d1);
    let times = w.times();
    // effective driver w − w^n + h sampled on the grid of w
    let mut drv = h.path().values_at(times);
    let wnv = wn.values_at(times);
    for ((v, a), b) in drv.iter_mut().zip(w.values()).zip(&wnv) {
        *v += a - b;
    }
    let mut ws = Workspace::new(coeffs);
    let mut refl = Reflector::new(d);
    let mut traj = Trajectory::start(x0, w.len());
    let mut x = x0.to_vec();
    for step in 1..w.len() {
        let dt = times[step] - times[step - 1];
        coeffs.btilde_into(&x, &mut ws);
        for i in 0..d {
            let mut acc = ws.drift[i] * dt;
            for k in 0..d1 {
                acc += ws.sig[i * d1 + k] * (drv[step * d1 + k] - drv[(step - 1) * d1 + k]);
            }
            ws.inc[i] = acc;
        }
        let tv = refl.step(domain, &mut x, &ws.inc, &mut ws.push)?;
        traj.record(times[step], &x, &refl.k_step, tv, &ws.push);
    }
    Ok(traj.finish())
}

/// `sup_t |a_t − b_t|` over the nodes of both paths, each evaluated at the
/// other's nodes by its interpolation rule.
pub fn sup_distance(a: &SamplePath, b: &SamplePath) -> f64 {
    one_sided_sup(a, b).max(one_sided_sup(b, a)).sqrt()
}

/// Squared sup over the nodes of `p` of `|p − q|`, sweeping `q` once.
fn one_sided_sup(p: &SamplePath, q: &SamplePath) -> f64 {
    let d = p.dim();
    let qt = q.times();
    let n = qt.len();
    let linear = q.interpolation() == Interpolation::PiecewiseLinear;
    let mut worst = 0.0f64;
    let mut j = 0;
    for (i, &t) in p.times().iter().enumerate() {
        let row = p.node(i);
        let s: f64 = if t <= qt[0] || t >= qt[n - 1] || n == 1 {
            let other = if t <= qt[0] { q.node(0) } else { q.node(n - 1) };
            row.iter().zip(other).map(|(x, y)| (x - y) * (x - y)).sum()
        } else {
            while qt[j + 1] <= t {
                j += 1;
            }
            let (a, b) = (q.node(j), q.node(j + 1));
            let u = if linear { (t - qt[j]) / (qt[j + 1] - qt[j]) } else { 0.0 };
            (0..d)
                .map(|k| {
                    let v = row[k] - (a[k] + u * (b[k] - a[k]));
                    v * v
                })
                .sum()
        };
        worst = worst.max(s);
    }
    worst
}
