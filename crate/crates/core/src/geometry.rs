//! Domain descriptors: membership, nearest-point projection, inward normal
//! cones, and sampled verification of the boundary regularity conditions.
//!
//! Every shipped domain is an intersection (or, for the notched disc, a
//! difference) of simple pieces. Each piece exposes a signed coordinate `s`
//! that is nonnegative on the closed domain and whose gradient is the unit
//! inward normal of that piece. Membership, the piecewise Lyapunov function φ
//! and the normal cones at corners are all assembled from these pieces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::vecops::{dist, dot, norm, normalized, solve_dense};

/// Classification tolerance on the signed distance for analytic kinds.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Relative tie threshold for nonconvex nearest-point candidates.
pub const AMBIGUITY_TOL: f64 = 1e-9;
/// Margin below which a sampled condition is reported as failing.
pub const CONDITION_TOL: f64 = 1e-9;

/// Half-space facet `{x : normal . x >= offset}` with a unit inward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Facet {
    /// Normalizes `normal` and rescales `offset` to match.
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let n = norm(&normal);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("normal", "facet normal must be nonzero"));
        }
        Ok(Facet {
            normal: normal.iter().map(|v| v / n).collect(),
            offset: offset / n,
        })
    }
}

/// Outer body of a notched domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Outer {
    Box { lo: [f64; 2], hi: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    AxisBox { lo: Vec<f64>, hi: Vec<f64> },
    ConvexPolytope { facets: Vec<Facet> },
    /// Planar body minus an open disc (the notch).
    NotchedDisc {
        outer: Outer,
        notch_center: [f64; 2],
        notch_radius: f64,
    },
}

/// Metadata for the interior-cone condition: radius δ and constant β ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeMetadata {
    pub delta: f64,
    pub beta: f64,
}

/// One ball of the boundary cover used by the uniform-direction condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverBall {
    pub center: Vec<f64>,
    pub direction: Vec<f64>,
    pub lambda: f64,
    pub radius: f64,
}

/// The scalar field φ with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum Lyapunov {
    /// φ(x) = ⟨n₀, x⟩.
    Linear { normal: Vec<f64> },
    /// φ(x) = −|x − c|²/2.
    NegHalfSquare { center: Vec<f64> },
    /// φ(x) = Σ_pieces ψ(s_j(x)) with the C² clamp ψ'(s) = (1 − s/w)²₊.
    ClampedPieces { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub membership: Membership,
    /// Negative inside, positive outside.
    pub signed_distance: f64,
}

/// Nearest point of the closure, unit inward normal (zero inside), distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub dist: f64,
}

/// One piece of the boundary: `s >= 0` on the piece's side, `grad` the unit
/// inward normal of the level set through `x`.
#[derive(Debug, Clone)]
struct Piece {
    s: f64,
    grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub shape: Shape,
    pub r0: f64,
    pub c0: f64,
    pub gamma: f64,
    pub phi: Lyapunov,
    pub cone_b: Option<ConeMetadata>,
    pub cover_d: Option<Vec<CoverBall>>,
}

const FLAT_R0: f64 = 1e6;

/// Unit vector maximizing the smallest inner product with planar unit
/// vectors: the bisector of the shortest arc containing them all.
fn best_planar_direction(normals: &[&Vec<f64>]) -> Option<Vec<f64>> {
    if normals.is_empty() || normals[0].len() != 2 {
        return None;
    }
    let mut angles: Vec<f64> = normals.iter().map(|n| n[1].atan2(n[0])).collect();
    angles.sort_by(f64::total_cmp);
    let tau = 2.0 * std::f64::consts::PI;
    let m = angles.len();
    let (mut gap, mut after) = (angles[0] + tau - angles[m - 1], 0);
    for i in 1..m {
        if angles[i] - angles[i - 1] > gap {
            gap = angles[i] - angles[i - 1];
            after = i;
        }
    }
    let start = angles[after];
    let mid = start + 0.5 * (tau - gap);
    Some(vec![mid.cos(), mid.sin()])
}

impl Domain {
    /// `{x : normal . x > offset}`.
    pub fn half_space(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let f = Facet::new(normal, offset)?;
        Ok(Domain {
            phi: Lyapunov::Linear {
                normal: f.normal.clone(),
            },
            shape: Shape::HalfSpace {
                normal: f.normal,
                offset: f.offset,
            },
            r0: FLAT_R0,
            c0: 1.0 / (2.0 * FLAT_R0),
            gamma: 1.0,
            cone_b: Some(ConeMetadata {
                delta: 1.0,
                beta: 1.0,
            }),
            cover_d: None,
        })
    }

    /// The half-line `(0, ∞)` in one dimension.
    pub fn half_line() -> Self {
        Self::half_space(vec![1.0], 0.0).expect("unit normal")
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", "must be positive"));
        }
        let mut d = Domain {
            phi: Lyapunov::NegHalfSquare {
                center: center.clone(),
            },
            shape: Shape::Ball { center, radius },
            r0: FLAT_R0,
            c0: 1.0 / (2.0 * FLAT_R0),
            gamma: 1.0,
            // normals within δ = r/2 turn by at most 2·asin(1/4) ≈ 0.505 rad
            cone_b: Some(ConeMetadata {
                delta: radius / 2.0,
                beta: 1.2,
            }),
            cover_d: None,
        };
        d.cover_d = d.derive_cover(radius / 4.0);
        Ok(d)
    }

    pub fn unit_disc() -> Self {
        Self::ball(vec![0.0, 0.0], 1.0).expect("valid disc")
    }

    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::invalid("hi", "each upper corner must exceed the lower"));
        }
        let side = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        let mut d = Domain {
            shape: Shape::AxisBox { lo, hi },
            r0: FLAT_R0,
            c0: 1.0 / (2.0 * FLAT_R0),
            gamma: 1.0,
            phi: Lyapunov::ClampedPieces { width: side / 4.0 },
            // corner cones span 90°: the diagonal sees every normal at ≥ 1/√2
            cone_b: Some(ConeMetadata {
                delta: side / 4.0,
                beta: 1.5,
            }),
            cover_d: None,
        };
        d.cover_d = d.derive_cover(side / 8.0);
        Ok(d)
    }

    pub fn unit_square() -> Self {
        Self::axis_box(vec![0.0, 0.0], vec![1.0, 1.0]).expect("valid box")
    }

    /// Intersection of facets `{x : a_j . x >= b_j}`; must be bounded.
    pub fn convex_polytope(facets: Vec<Facet>) -> Result<Self> {
        if facets.is_empty() {
            return Err(Error::invalid("facets", "at least one facet required"));
        }
        let dim = facets[0].normal.len();
        let facets = facets
            .into_iter()
            .map(|f| {
                if f.normal.len() != dim {
                    Err(Error::DimensionMismatch {
                        expected: dim,
                        got: f.normal.len(),
                    })
                } else {
                    Facet::new(f.normal, f.offset)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let shape = Shape::ConvexPolytope { facets };
        let verts = polytope_vertices(&shape);
        if verts.len() < dim + 1 {
            return Err(Error::invalid("facets", "polytope is empty or unbounded"));
        }
        let mut diam: f64 = 0.0;
        for a in &verts {
            for b in &verts {
                diam = diam.max(dist(a, b));
            }
        }
        let mut d = Domain {
            shape,
            r0: FLAT_R0,
            c0: 1.0 / (2.0 * FLAT_R0),
            gamma: 1.0,
            phi: Lyapunov::ClampedPieces { width: diam / 8.0 },
            cone_b: None,
            cover_d: None,
        };
        d.cover_d = d.derive_cover(diam / 16.0);
        Ok(d)
    }

    /// Planar `outer` minus the open disc `B(notch_center, notch_radius)`.
    ///
    /// The exterior-sphere radius is the notch radius; the default (H1)
    /// constant is `1/(2 r0)` and γ is `r0`.
    pub fn notched_disc(outer: Outer, notch_center: [f64; 2], notch_radius: f64) -> Result<Self> {
        if !(notch_radius > 0.0 && notch_radius.is_finite()) {
            return Err(Error::invalid("notch_radius", "must be positive"));
        }
        let scale = match &outer {
            Outer::Box { lo, hi } => {
                if !(hi[0] > lo[0] && hi[1] > lo[1]) {
                    return Err(Error::invalid("hi", "each upper corner must exceed the lower"));
                }
                (hi[0] - lo[0]).min(hi[1] - lo[1])
            }
            Outer::Disc { center, radius } => {
                if !(*radius > notch_radius) {
                    return Err(Error::invalid("radius", "outer disc must exceed the notch"));
                }
                if dist(center, &notch_center) < 1e-12 {
                    return Err(Error::invalid("notch_center", "notch must not be concentric"));
                }
                *radius
            }
        };
        let mut d = Domain {
            shape: Shape::NotchedDisc {
                outer,
                notch_center,
                notch_radius,
            },
            r0: notch_radius,
            c0: 1.0 / (2.0 * notch_radius),
            gamma: notch_radius,
            phi: Lyapunov::ClampedPieces {
                width: notch_radius.min(scale) / 2.0,
            },
            cone_b: Some(ConeMetadata {
                delta: notch_radius / 4.0,
                beta: 1.6,
            }),
            cover_d: None,
        };
        d.cover_d = d.derive_cover(notch_radius.min(scale / 8.0) / 4.0);
        Ok(d)
    }

    /// Unit square minus the open disc of radius 0.2 centered at (0.5, 0).
    pub fn notched_square() -> Self {
        Self::notched_disc(
            Outer::Box {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
            },
            [0.5, 0.0],
            0.2,
        )
        .expect("valid notch")
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            Shape::HalfSpace { .. } => "half_space",
            Shape::Ball { .. } => "ball",
            Shape::AxisBox { .. } => "axis_box",
            Shape::ConvexPolytope { .. } => "convex_polytope",
            Shape::NotchedDisc { .. } => "notched_disc",
        }
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::HalfSpace { normal, .. } => normal.len(),
            Shape::Ball { center, .. } => center.len(),
            Shape::AxisBox { lo, .. } => lo.len(),
            Shape::ConvexPolytope { facets } => facets[0].normal.len(),
            Shape::NotchedDisc { .. } => 2,
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.shape, Shape::NotchedDisc { .. })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn pieces(&self, x: &[f64]) -> Vec<Piece> {
        match &self.shape {
            Shape::HalfSpace { normal, offset } => vec![Piece {
                s: dot(normal, x) - offset,
                grad: normal.clone(),
            }],
            Shape::Ball { center, radius } => vec![ball_piece(x, center, *radius)],
            Shape::AxisBox { lo, hi } => box_pieces(x, lo, hi),
            Shape::ConvexPolytope { facets } => facets
                .iter()
                .map(|f| Piece {
                    s: dot(&f.normal, x) - f.offset,
                    grad: f.normal.clone(),
                })
                .collect(),
            Shape::NotchedDisc {
                outer,
                notch_center,
                notch_radius,
            } => {
                let mut p = match outer {
                    Outer::Box { lo, hi } => box_pieces(x, lo, hi),
                    Outer::Disc { center, radius } => vec![ball_piece(x, center, *radius)],
                };
                let r = dist(x, notch_center);
                let grad = if r > 0.0 {
                    vec![(x[0] - notch_center[0]) / r, (x[1] - notch_center[1]) / r]
                } else {
                    vec![0.0, 1.0]
                };
                p.push(Piece {
                    s: r - notch_radius,
                    grad,
                });
                p
            }
        }
    }

    /// Membership with a signed-distance estimate (negative inside).
    pub fn contains(&self, x: &[f64]) -> Classification {
        let pieces = self.pieces(x);
        let min_s = pieces.iter().map(|p| p.s).fold(f64::INFINITY, f64::min);
        let signed_distance = if min_s >= 0.0 {
            -min_s
        } else {
            self.nearest_candidates(x)
                .iter()
                .map(|(_, d)| *d)
                .fold(f64::INFINITY, f64::min)
        };
        let membership = if signed_distance.abs() <= BOUNDARY_TOL {
            Membership::Boundary
        } else if signed_distance < 0.0 {
            Membership::Interior
        } else {
            Membership::Exterior
        };
        Classification {
            membership,
            signed_distance,
        }
    }

    pub fn in_closure(&self, x: &[f64]) -> bool {
        self.contains(x).membership != Membership::Exterior
    }

    /// Nearest point of the closed domain. Points already in the closure map to
    /// themselves with zero normal and distance.
    pub fn project(&self, y: &[f64]) -> Result<Projection> {
        self.check_dim(y)?;
        let mut point = vec![0.0; y.len()];
        let mut normal = vec![0.0; y.len()];
        let dist = self.project_into(y, &mut point, &mut normal)?;
        Ok(Projection {
            point,
            normal,
            dist,
        })
    }

    /// Allocation-free projection used by the integrators. Writes the nearest
    /// point and the unit inward normal (or zero) and returns the distance.
    pub fn project_into(&self, y: &[f64], point: &mut [f64], normal: &mut [f64]) -> Result<f64> {
        match &self.shape {
            Shape::HalfSpace {
                normal: n0,
                offset,
            } => {
                let s = dot(n0, y) - offset;
                if s >= 0.0 {
                    point.copy_from_slice(y);
                    normal.iter_mut().for_each(|v| *v = 0.0);
                    Ok(0.0)
                } else {
                    for i in 0..y.len() {
                        point[i] = y[i] - s * n0[i];
                        normal[i] = n0[i];
                    }
                    Ok(-s)
                }
            }
            Shape::Ball { center, radius } => {
                let r = dist(y, center);
                if r <= *radius {
                    point.copy_from_slice(y);
                    normal.iter_mut().for_each(|v| *v = 0.0);
                    Ok(0.0)
                } else {
                    for i in 0..y.len() {
                        let u = (y[i] - center[i]) / r;
                        point[i] = center[i] + radius * u;
                        normal[i] = -u;
                    }
                    Ok(r - radius)
                }
            }
            Shape::AxisBox { lo, hi } => {
                for i in 0..y.len() {
                    point[i] = y[i].clamp(lo[i], hi[i]);
                }
                finish_from_point(y, point, normal)
            }
            Shape::ConvexPolytope { facets } => {
                if facets.iter().all(|f| dot(&f.normal, y) >= f.offset) {
                    point.copy_from_slice(y);
                    normal.iter_mut().for_each(|v| *v = 0.0);
                    return Ok(0.0);
                }
                let best = polytope_projection(facets, y);
                point.copy_from_slice(&best);
                finish_from_point(y, point, normal)
            }
            Shape::NotchedDisc { .. } => {
                if self.pieces(y).iter().all(|p| p.s >= 0.0) {
                    point.copy_from_slice(y);
                    normal.iter_mut().for_each(|v| *v = 0.0);
                    return Ok(0.0);
                }
                let mut cands = self.nearest_candidates(y);
                cands.sort_by(|a, b| a.1.total_cmp(&b.1));
                let (best, d1) = cands[0].clone();
                if let Some((other, d2)) = cands
                    .iter()
                    .skip(1)
                    .find(|(p, _)| dist(p, &best) > AMBIGUITY_TOL * d1.max(1e-300))
                {
                    if (d2 - d1).abs() <= AMBIGUITY_TOL * d1 {
                        return Err(Error::AmbiguousProjection {
                            point: y.to_vec(),
                            first: best,
                            second: other.clone(),
                        });
                    }
                }
                point.copy_from_slice(&best);
                finish_from_point(y, point, normal)
            }
        }
    }

    /// Candidate nearest points of the closure for a point outside it.
    fn nearest_candidates(&self, y: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let mut out = Vec::new();
        match &self.shape {
            Shape::NotchedDisc {
                outer,
                notch_center,
                notch_radius,
            } => {
                let c = notch_center;
                let rho = *notch_radius;
                let outside_notch = |p: &[f64]| dist(p, c) >= rho * (1.0 - 1e-12);
                let in_outer = |p: &[f64]| match outer {
                    Outer::Box { lo, hi } => (0..2).all(|i| {
                        p[i] >= lo[i] - 1e-12 * (1.0 + lo[i].abs())
                            && p[i] <= hi[i] + 1e-12 * (1.0 + hi[i].abs())
                    }),
                    Outer::Disc { center, radius } => dist(p, center) <= radius * (1.0 + 1e-12),
                };
                let mut push = |p: Vec<f64>| {
                    let d = dist(&p, y);
                    out.push((p, d));
                };
                // arc of the notch
                let r = dist(y, c);
                if r > 0.0 {
                    let q = vec![c[0] + rho * (y[0] - c[0]) / r, c[1] + rho * (y[1] - c[1]) / r];
                    if in_outer(&q) {
                        push(q);
                    }
                }
                match outer {
                    Outer::Box { lo, hi } => {
                        let corners = [
                            [lo[0], lo[1]],
                            [hi[0], lo[1]],
                            [hi[0], hi[1]],
                            [lo[0], hi[1]],
                        ];
                        for e in 0..4 {
                            let a = corners[e];
                            let b = corners[(e + 1) % 4];
                            for (s0, s1) in segment_minus_disc(a, b, *c, rho) {
                                push(closest_on_segment(y, s0, s1));
                            }
                        }
                    }
                    Outer::Disc { center, radius } => {
                        let r = dist(y, center);
                        if r > 0.0 {
                            let p = vec![
                                center[0] + radius * (y[0] - center[0]) / r,
                                center[1] + radius * (y[1] - center[1]) / r,
                            ];
                            if outside_notch(&p) {
                                push(p);
                            }
                        }
                        for p in circle_intersections(*center, *radius, *c, rho) {
                            push(p.to_vec());
                        }
                        // y inside the outer disc: nothing else can be closer
                    }
                }
            }
            _ => {
                let mut p = vec![0.0; y.len()];
                let mut n = vec![0.0; y.len()];
                if let Ok(d) = self.project_into(y, &mut p, &mut n) {
                    out.push((p, d));
                }
            }
        }
        out
    }

    /// Inward unit normals of the pieces active at a boundary point.
    pub fn normal_cone_generators(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let scale = 1.0 + norm(x);
        self.pieces(x)
            .into_iter()
            .filter(|p| p.s.abs() <= 1e-9 * scale)
            .map(|p| p.grad)
            .collect()
    }

    /// "A" normal at `x` with no direction hint: the normalized average of the
    /// active piece normals, or `None` away from the boundary.
    pub fn normal_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let gens = self.normal_cone_generators(x);
        if gens.is_empty() {
            return None;
        }
        let mut avg = vec![0.0; x.len()];
        for g in &gens {
            for (a, v) in avg.iter_mut().zip(g) {
                *a += v;
            }
        }
        normalized(&avg)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match &self.phi {
            Lyapunov::Linear { normal } => dot(normal, x),
            Lyapunov::NegHalfSquare { center } => {
                let r = dist(x, center);
                -0.5 * r * r
            }
            Lyapunov::ClampedPieces { width } => {
                self.pieces(x).iter().map(|p| clamp_psi(p.s, *width)).sum()
            }
        }
    }

    pub fn phi_grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.phi {
            Lyapunov::Linear { normal } => normal.clone(),
            Lyapunov::NegHalfSquare { center } => {
                x.iter().zip(center).map(|(a, c)| -(a - c)).collect()
            }
            Lyapunov::ClampedPieces { width } => {
                let mut g = vec![0.0; x.len()];
                for p in self.pieces(x) {
                    let w = clamp_psi_prime(p.s, *width);
                    for (gi, pi) in g.iter_mut().zip(&p.grad) {
                        *gi += w * pi;
                    }
                }
                g
            }
        }
    }

    /// Axis-aligned sampling window covering the domain (a finite window for
    /// the half-space).
    pub fn window(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::HalfSpace { normal, offset } => {
                let base: Vec<f64> = normal.iter().map(|n| n * offset).collect();
                (
                    base.iter().map(|b| b - 2.0).collect(),
                    base.iter().map(|b| b + 2.0).collect(),
                )
            }
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - 1.5 * radius).collect(),
                center.iter().map(|c| c + 1.5 * radius).collect(),
            ),
            Shape::AxisBox { lo, hi } => expand(lo, hi, 0.5),
            Shape::ConvexPolytope { .. } => {
                let verts = polytope_vertices(&self.shape);
                let d = self.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for v in &verts {
                    for i in 0..d {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                expand(&lo, &hi, 0.5)
            }
            Shape::NotchedDisc { outer, .. } => match outer {
                Outer::Box { lo, hi } => expand(lo, hi, 0.25),
                Outer::Disc { center, radius } => (
                    center.iter().map(|c| c - 1.25 * radius).collect(),
                    center.iter().map(|c| c + 1.25 * radius).collect(),
                ),
            },
        }
    }

    /// Uniform point of `closure ∩ window` by rejection.
    pub fn sample_closure(&self, rng: &mut StreamRng) -> Vec<f64> {
        let (lo, hi) = self.window();
        loop {
            let y: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| rng.random_range(*a..*b))
                .collect();
            if self.pieces(&y).iter().all(|p| p.s >= 0.0) {
                return y;
            }
        }
    }

    /// Boundary point with an element of its normal cone, obtained by
    /// projecting a uniform exterior point of the window. Corners receive the
    /// spread of cone directions their exterior regions project along.
    pub fn sample_boundary(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.window();
        loop {
            let y: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| rng.random_range(*a..*b))
                .collect();
            if self.pieces(&y).iter().all(|p| p.s >= 0.0) {
                continue;
            }
            if let Ok(p) = self.project(&y) {
                if p.dist > 1e-9 && p.dist <= self.r0 {
                    return (p.point, p.normal);
                }
            }
        }
    }

    /// Greedy boundary cover for the uniform-direction condition, or `None`
    /// when no positive λ can be certified on the samples.
    fn derive_cover(&self, radius: f64) -> Option<Vec<CoverBall>> {
        let mut rng = stream_rng(0x5EED_C0FE, 0);
        let samples: Vec<(Vec<f64>, Vec<f64>)> =
            (0..4000).map(|_| self.sample_boundary(&mut rng)).collect();
        let mut centers: Vec<Vec<f64>> = Vec::new();
        for (x, _) in &samples {
            if centers.iter().all(|c| dist(c, x) >= radius) {
                centers.push(x.clone());
            }
        }
        let mut balls = Vec::with_capacity(centers.len());
        for c in centers {
            let near: Vec<&Vec<f64>> = samples
                .iter()
                .filter(|(x, _)| dist(x, &c) < 2.0 * radius)
                .map(|(_, n)| n)
                .collect();
            let mut mean = vec![0.0; c.len()];
            for n in &near {
                for (m, v) in mean.iter_mut().zip(n.iter()) {
                    *m += v;
                }
            }
            let a = normalized(&mean)?;
            let lambda = near.iter().map(|n| dot(n, &a)).fold(f64::INFINITY, f64::min);
            if !(lambda > 0.0) {
                return None;
            }
            balls.push(CoverBall {
                center: c,
                direction: a,
                lambda: 0.5 * lambda,
                radius,
            });
        }
        Some(balls)
    }

    /// Sampled verification of (A), (B), (C), (D), (H1) and (H2).
    pub fn check_conditions(
        &self,
        n_boundary_samples: usize,
        n_pair_samples: usize,
        seed: u64,
    ) -> Result<ConditionReport> {
        if n_boundary_samples == 0 || n_pair_samples == 0 {
            return Err(Error::invalid("samples", "sample counts must be at least 1"));
        }
        let mut rng = stream_rng(seed, 0);
        let boundary: Vec<(Vec<f64>, Vec<f64>)> = (0..n_boundary_samples)
            .map(|_| self.sample_boundary(&mut rng))
            .collect();
        let mut rng = stream_rng(seed, 1);
        let mut ys: Vec<Vec<f64>> = (0..n_pair_samples)
            .map(|_| self.sample_closure(&mut rng))
            .collect();
        // boundary points are the sharpest test points for the sphere conditions
        let mut rng = stream_rng(seed, 2);
        ys.extend((0..n_pair_samples).map(|_| self.sample_boundary(&mut rng).0));

        let grads: Vec<Vec<f64>> = boundary.iter().map(|(x, _)| self.phi_grad(x)).collect();

        let mut a = f64::INFINITY;
        let mut h1 = f64::INFINITY;
        let mut c = f64::INFINITY;
        let mut h2 = f64::INFINITY;
        for ((x, n), g) in boundary.iter().zip(&grads) {
            let dphi_n = dot(g, n);
            h2 = h2.min(dphi_n);
            for y in &ys {
                let mut yx_n = 0.0;
                let mut r2 = 0.0;
                for i in 0..x.len() {
                    let d = y[i] - x[i];
                    yx_n += d * n[i];
                    r2 += d * d;
                }
                a = a.min(yx_n + r2 / (2.0 * self.r0));
                h1 = h1.min(yx_n + self.c0 * r2);
                c = c.min(yx_n + dphi_n * r2 / self.gamma);
            }
        }

        let b = match &self.cone_b {
            None => ConditionOutcome::Unsupported {
                reason: "no (delta, beta) metadata".into(),
            },
            Some(meta) => {
                let mut margin = f64::INFINITY;
                for (x, _) in &boundary {
                    let mut mean = vec![0.0; x.len()];
                    let near: Vec<&Vec<f64>> = boundary
                        .iter()
                        .filter(|(z, _)| dist(z, x) < meta.delta)
                        .map(|(_, n)| n)
                        .collect();
                    for n in &near {
                        for (m, v) in mean.iter_mut().zip(n.iter()) {
                            *m += v;
                        }
                    }
                    let mut candidates = vec![normalized(&mean), self.normal_at(x)];
                    candidates.push(best_planar_direction(&near));
                    let worst = candidates
                        .into_iter()
                        .flatten()
                        .map(|l| near.iter().map(|n| dot(&l, n)).fold(f64::INFINITY, f64::min))
                        .fold(f64::NEG_INFINITY, f64::max);
                    margin = margin.min(worst - 1.0 / meta.beta);
                }
                ConditionOutcome::checked(margin)
            }
        };

        let d = match &self.cover_d {
            None => ConditionOutcome::Unsupported {
                reason: "no boundary cover metadata".into(),
            },
            Some(cover) => {
                let mut margin = f64::INFINITY;
                for (x, n) in &boundary {
                    let coverage = cover
                        .iter()
                        .map(|ball| ball.radius - dist(x, &ball.center))
                        .fold(f64::NEG_INFINITY, f64::max);
                    margin = margin.min(coverage);
                    for ball in cover {
                        if dist(x, &ball.center) < 2.0 * ball.radius {
                            margin = margin.min(dot(n, &ball.direction) - ball.lambda);
                        }
                    }
                }
                ConditionOutcome::checked(margin)
            }
        };

        Ok(ConditionReport {
            kind: self.kind_name().to_string(),
            boundary_samples: n_boundary_samples,
            pair_samples: n_pair_samples,
            seed,
            a: ConditionOutcome::checked(a),
            b,
            c: ConditionOutcome::checked(c),
            d,
            h1: ConditionOutcome::checked(h1),
            h2: ConditionOutcome::Checked {
                margin: h2,
                pass: h2 > CONDITION_TOL,
                implied_constant: Some(h2 / self.c0),
            },
        })
    }

    /// Single-condition variant of [`Domain::check_conditions`] that fails
    /// with `UnsupportedKind` when the domain lacks the needed metadata.
    pub fn check_condition(
        &self,
        condition: Condition,
        n_boundary_samples: usize,
        n_pair_samples: usize,
        seed: u64,
    ) -> Result<(f64, bool)> {
        let report = self.check_conditions(n_boundary_samples, n_pair_samples, seed)?;
        let outcome = match condition {
            Condition::A => &report.a,
            Condition::B => &report.b,
            Condition::C => &report.c,
            Condition::D => &report.d,
            Condition::H1 => &report.h1,
            Condition::H2 => &report.h2,
        };
        match outcome {
            ConditionOutcome::Checked { margin, pass, .. } => Ok((*margin, *pass)),
            ConditionOutcome::Unsupported { reason } => Err(Error::UnsupportedKind {
                kind: self.kind_name(),
                condition: condition.label(),
                reason: reason.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    A,
    B,
    C,
    D,
    H1,
    H2,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::A => "(A)",
            Condition::B => "(B)",
            Condition::C => "(C)",
            Condition::D => "(D)",
            Condition::H1 => "(H1)",
            Condition::H2 => "(H2)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConditionOutcome {
    Checked {
        margin: f64,
        pass: bool,
        /// For (H2): the largest α with Dφ·ξ ≥ α c₀ on the samples.
        #[serde(skip_serializing_if = "Option::is_none")]
        implied_constant: Option<f64>,
    },
    Unsupported {
        reason: String,
    },
}

impl ConditionOutcome {
    fn checked(margin: f64) -> Self {
        ConditionOutcome::Checked {
            margin,
            pass: margin >= -CONDITION_TOL,
            implied_constant: None,
        }
    }

    pub fn passed(&self) -> Option<bool> {
        match self {
            ConditionOutcome::Checked { pass, .. } => Some(*pass),
            ConditionOutcome::Unsupported { .. } => None,
        }
    }

    pub fn margin(&self) -> Option<f64> {
        match self {
            ConditionOutcome::Checked { margin, .. } => Some(*margin),
            ConditionOutcome::Unsupported { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub kind: String,
    pub boundary_samples: usize,
    pub pair_samples: usize,
    pub seed: u64,
    pub a: ConditionOutcome,
    pub b: ConditionOutcome,
    pub c: ConditionOutcome,
    pub d: ConditionOutcome,
    pub h1: ConditionOutcome,
    pub h2: ConditionOutcome,
}

fn expand(lo: &[f64], hi: &[f64], frac: f64) -> (Vec<f64>, Vec<f64>) {
    let lo2 = lo.iter().zip(hi).map(|(a, b)| a - frac * (b - a)).collect();
    let hi2 = lo.iter().zip(hi).map(|(a, b)| b + frac * (b - a)).collect();
    (lo2, hi2)
}

fn ball_piece(x: &[f64], center: &[f64], radius: f64) -> Piece {
    let r = dist(x, center);
    let grad = if r > 0.0 {
        x.iter().zip(center).map(|(a, c)| -(a - c) / r).collect()
    } else {
        let mut g = vec![0.0; x.len()];
        g[0] = 1.0;
        g
    };
    Piece {
        s: radius - r,
        grad,
    }
}

fn box_pieces(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<Piece> {
    let d = x.len();
    let mut out = Vec::with_capacity(2 * d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        out.push(Piece {
            s: x[i] - lo[i],
            grad: e.clone(),
        });
        e[i] = -1.0;
        out.push(Piece {
            s: hi[i] - x[i],
            grad: e,
        });
    }
    out
}

fn finish_from_point(y: &[f64], point: &[f64], normal: &mut [f64]) -> Result<f64> {
    let d = dist(y, point);
    if d > 0.0 {
        for i in 0..y.len() {
            normal[i] = (point[i] - y[i]) / d;
        }
    } else {
        normal.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(d)
}

/// ψ with ψ'(s) = (1 − s/w)² for s < w and ψ ≡ w/3 beyond: a C² clamp.
fn clamp_psi(s: f64, w: f64) -> f64 {
    if s >= w {
        w / 3.0
    } else {
        let u = 1.0 - s / w;
        w / 3.0 * (1.0 - u * u * u)
    }
}

fn clamp_psi_prime(s: f64, w: f64) -> f64 {
    if s >= w {
        0.0
    } else {
        let u = 1.0 - s / w;
        u * u
    }
}

/// Exact projection onto a polytope by enumerating active facet sets of size
/// at most `d` and keeping the nearest feasible affine projection.
fn polytope_projection(facets: &[Facet], y: &[f64]) -> Vec<f64> {
    let d = y.len();
    let m = facets.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut subset = Vec::with_capacity(d);
    fn recurse(
        start: usize,
        subset: &mut Vec<usize>,
        facets: &[Facet],
        y: &[f64],
        d: usize,
        best: &mut Option<(Vec<f64>, f64)>,
    ) {
        if !subset.is_empty() {
            if let Some(x) = affine_projection(facets, subset, y) {
                let feasible = facets
                    .iter()
                    .all(|f| dot(&f.normal, &x) >= f.offset - 1e-12 * (1.0 + f.offset.abs()));
                if feasible {
                    let dd = dist(&x, y);
                    if best.as_ref().map_or(true, |(_, b)| dd < *b) {
                        *best = Some((x, dd));
                    }
                }
            }
        }
        if subset.len() == d {
            return;
        }
        for j in start..facets.len() {
            subset.push(j);
            recurse(j + 1, subset, facets, y, d, best);
            subset.pop();
        }
    }
    recurse(0, &mut subset, facets, y, d.min(m), &mut best);
    best.map(|(x, _)| x).unwrap_or_else(|| y.to_vec())
}

fn affine_projection(facets: &[Facet], active: &[usize], y: &[f64]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            gram[r * k + c] = dot(&facets[i].normal, &facets[j].normal);
        }
        rhs[r] = facets[i].offset - dot(&facets[i].normal, y);
    }
    let lambda = solve_dense(&mut gram, &mut rhs, k)?;
    let mut x = y.to_vec();
    for (r, &i) in active.iter().enumerate() {
        for (xi, ai) in x.iter_mut().zip(&facets[i].normal) {
            *xi += lambda[r] * ai;
        }
    }
    Some(x)
}

/// Vertices of a polytope shape (empty for other shapes).
pub fn polytope_vertices(shape: &Shape) -> Vec<Vec<f64>> {
    let Shape::ConvexPolytope { facets } = shape else {
        return Vec::new();
    };
    let d = facets[0].normal.len();
    let mut verts: Vec<Vec<f64>> = Vec::new();
    let m = facets.len();
    let mut idx: Vec<usize> = (0..d).collect();
    if m < d {
        return verts;
    }
    loop {
        let mut a = Vec::with_capacity(d * d);
        let mut b = Vec::with_capacity(d);
        for &i in &idx {
            a.extend_from_slice(&facets[i].normal);
            b.push(facets[i].offset);
        }
        if let Some(v) = solve_dense(&mut a, &mut b, d) {
            let feasible = facets
                .iter()
                .all(|f| dot(&f.normal, &v) >= f.offset - 1e-9 * (1.0 + f.offset.abs()));
            if feasible && verts.iter().all(|w| dist(w, &v) > 1e-9) {
                verts.push(v);
            }
        }
        // next combination
        let mut i = d;
        loop {
            if i == 0 {
                return verts;
            }
            i -= 1;
            if idx[i] != i + m - d {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..d {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn closest_on_segment(y: &[f64], a: [f64; 2], b: [f64; 2]) -> Vec<f64> {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((y[0] - a[0]) * ab[0] + (y[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    vec![a[0] + t * ab[0], a[1] + t * ab[1]]
}

/// Sub-segments of `[a, b]` lying outside the open disc `B(c, r)`.
fn segment_minus_disc(a: [f64; 2], b: [f64; 2], c: [f64; 2], r: f64) -> Vec<([f64; 2], [f64; 2])> {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ac = [a[0] - c[0], a[1] - c[1]];
    let qa = ab[0] * ab[0] + ab[1] * ab[1];
    let qb = 2.0 * (ab[0] * ac[0] + ab[1] * ac[1]);
    let qc = ac[0] * ac[0] + ac[1] * ac[1] - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    let at = |t: f64| [a[0] + t * ab[0], a[1] + t * ab[1]];
    if disc <= 0.0 {
        return vec![(a, b)];
    }
    let sq = disc.sqrt();
    let t0 = (-qb - sq) / (2.0 * qa);
    let t1 = (-qb + sq) / (2.0 * qa);
    let mut out = Vec::new();
    if t0 > 0.0 {
        out.push((a, at(t0.min(1.0))));
    }
    if t1 < 1.0 {
        out.push((at(t1.max(0.0)), b));
    }
    out
}

fn circle_intersections(c1: [f64; 2], r1: f64, c2: [f64; 2], r2: f64) -> Vec<[f64; 2]> {
    let dx = c2[0] - c1[0];
    let dy = c2[1] - c1[1];
    let d = (dx * dx + dy * dy).sqrt();
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let mx = c1[0] + a * dx / d;
    let my = c1[1] + a * dy / d;
    vec![
        [mx + h * dy / d, my - h * dx / d],
        [mx - h * dy / d, my + h * dx / d],
    ]
}

// ---------------------------------------------------------------------------
// config-file descriptor

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    HalfSpace,
    Ball,
    AxisBox,
    ConvexPolytope,
    NotchedDisc,
}

/// Shape parameters of a `[domain]` section; which keys are required depends
/// on the kind, and keys foreign to the kind are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub facets: Option<Vec<Facet>>,
    /// `"box"` (uses `lo`/`hi`) or `"disc"` (uses `center`/`radius`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notch_center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notch_radius: Option<f64>,
}

/// Serializable `[domain]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    #[serde(default)]
    pub params: DomainParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone_b: Option<ConeMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover_d: Option<Vec<CoverBall>>,
}

fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::invalid(format!("domain.params.{key}"), "required for this kind"))
}

fn pair(v: Vec<f64>, key: &str) -> Result<[f64; 2]> {
    <[f64; 2]>::try_from(v.as_slice())
        .map_err(|_| Error::invalid(format!("domain.params.{key}"), "expected two coordinates"))
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        let p = &self.params;
        let allowed: &[&str] = match self.kind {
            DomainKind::HalfSpace => &["normal", "offset"],
            DomainKind::Ball => &["center", "radius"],
            DomainKind::AxisBox => &["lo", "hi"],
            DomainKind::ConvexPolytope => &["facets"],
            DomainKind::NotchedDisc => &[
                "outer",
                "lo",
                "hi",
                "center",
                "radius",
                "notch_center",
                "notch_radius",
            ],
        };
        let present = [
            ("normal", p.normal.is_some()),
            ("offset", p.offset.is_some()),
            ("center", p.center.is_some()),
            ("radius", p.radius.is_some()),
            ("lo", p.lo.is_some()),
            ("hi", p.hi.is_some()),
            ("facets", p.facets.is_some()),
            ("outer", p.outer.is_some()),
            ("notch_center", p.notch_center.is_some()),
            ("notch_radius", p.notch_radius.is_some()),
        ];
        for (key, is_set) in present {
            if is_set && !allowed.contains(&key) {
                return Err(Error::invalid(
                    format!("domain.params.{key}"),
                    "not a parameter of this domain kind",
                ));
            }
        }
        let mut d = match self.kind {
            DomainKind::HalfSpace => {
                Domain::half_space(need(&p.normal, "normal")?, p.offset.unwrap_or(0.0))?
            }
            DomainKind::Ball => Domain::ball(need(&p.center, "center")?, need(&p.radius, "radius")?)?,
            DomainKind::AxisBox => Domain::axis_box(need(&p.lo, "lo")?, need(&p.hi, "hi")?)?,
            DomainKind::ConvexPolytope => Domain::convex_polytope(need(&p.facets, "facets")?)?,
            DomainKind::NotchedDisc => {
                let outer = match p.outer.as_deref().unwrap_or("box") {
                    "box" => Outer::Box {
                        lo: pair(need(&p.lo, "lo")?, "lo")?,
                        hi: pair(need(&p.hi, "hi")?, "hi")?,
                    },
                    "disc" => Outer::Disc {
                        center: pair(need(&p.center, "center")?, "center")?,
                        radius: need(&p.radius, "radius")?,
                    },
                    other => {
                        return Err(Error::invalid(
                            "domain.params.outer",
                            format!("expected \"box\" or \"disc\", got {other:?}"),
                        ))
                    }
                };
                Domain::notched_disc(
                    outer,
                    pair(need(&p.notch_center, "notch_center")?, "notch_center")?,
                    need(&p.notch_radius, "notch_radius")?,
                )?
            }
        };
        for (key, v) in [("domain.r0", self.r0), ("domain.c0", self.c0), ("domain.gamma", self.gamma)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(key, "must be a positive finite number"));
                }
            }
        }
        if let Some(r0) = self.r0 {
            if !d.is_convex() && r0 > d.r0 {
                return Err(Error::invalid(
                    "domain.r0",
                    format!("exceeds the exterior-sphere radius {} of this domain", d.r0),
                ));
            }
            d.r0 = r0;
        }
        if let Some(c0) = self.c0 {
            d.c0 = c0;
        }
        if let Some(g) = self.gamma {
            d.gamma = g;
        }
        if let Some(b) = self.cone_b {
            if !(b.delta > 0.0 && b.beta >= 1.0) {
                return Err(Error::invalid("domain.cone_b", "need delta > 0 and beta >= 1"));
            }
            d.cone_b = Some(b);
        }
        if let Some(cover) = &self.cover_d {
            d.cover_d = Some(cover.clone());
        }
        Ok(d)
    }
}

impl Domain {
    /// Descriptor with every default materialized.
    pub fn to_spec(&self) -> DomainSpec {
        let mut params = DomainParams::default();
        let kind = match &self.shape {
            Shape::HalfSpace { normal, offset } => {
                params.normal = Some(normal.clone());
                params.offset = Some(*offset);
                DomainKind::HalfSpace
            }
            Shape::Ball { center, radius } => {
                params.center = Some(center.clone());
                params.radius = Some(*radius);
                DomainKind::Ball
            }
            Shape::AxisBox { lo, hi } => {
                params.lo = Some(lo.clone());
                params.hi = Some(hi.clone());
                DomainKind::AxisBox
            }
            Shape::ConvexPolytope { facets } => {
                params.facets = Some(facets.clone());
                DomainKind::ConvexPolytope
            }
            Shape::NotchedDisc {
                outer,
                notch_center,
                notch_radius,
            } => {
                match outer {
                    Outer::Box { lo, hi } => {
                        params.outer = Some("box".into());
                        params.lo = Some(lo.to_vec());
                        params.hi = Some(hi.to_vec());
                    }
                    Outer::Disc { center, radius } => {
                        params.outer = Some("disc".into());
                        params.center = Some(center.to_vec());
                        params.radius = Some(*radius);
                    }
                }
                params.notch_center = Some(notch_center.to_vec());
                params.notch_radius = Some(*notch_radius);
                DomainKind::NotchedDisc
            }
        };
        DomainSpec {
            kind,
            params,
            r0: Some(self.r0),
            c0: Some(self.c0),
            gamma: Some(self.gamma),
            cone_b: self.cone_b,
            cover_d: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn disc_membership_examples() {
        let d = Domain::unit_disc();
        let c = d.contains(&[0.0, 0.0]);
        assert_eq!(c.membership, Membership::Interior);
        assert!((c.signed_distance + 1.0).abs() < 1e-15);
        let c = d.contains(&[1.0, 0.0]);
        assert_eq!(c.membership, Membership::Boundary);
        assert_eq!(c.signed_distance, 0.0);
    }

    #[test]
    fn half_space_exterior_distance() {
        let d = Domain::half_space(vec![1.0, 0.0], 0.0).unwrap();
        let c = d.contains(&[-0.3, 7.0]);
        assert_eq!(c.membership, Membership::Exterior);
        assert!((c.signed_distance - 0.3).abs() < 1e-12);
    }

    #[test]
    fn radial_projection_onto_disc() {
        let p = Domain::unit_disc().project(&[2.0, 0.0]).unwrap();
        assert!(close(&p.point, &[1.0, 0.0], 1e-15));
        assert!(close(&p.normal, &[-1.0, 0.0], 1e-15));
        assert!((p.dist - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_space_projection() {
        let d = Domain::half_space(vec![1.0, 0.0], 0.0).unwrap();
        let p = d.project(&[-0.4, 2.0]).unwrap();
        assert!(close(&p.point, &[0.0, 2.0], 1e-15));
        assert!(close(&p.normal, &[1.0, 0.0], 1e-15));
        assert!((p.dist - 0.4).abs() < 1e-15);
    }

    #[test]
    fn interior_points_project_to_themselves() {
        let p = Domain::unit_square().project(&[0.25, 0.5]).unwrap();
        assert_eq!(p.point, vec![0.25, 0.5]);
        assert_eq!(p.normal, vec![0.0, 0.0]);
        assert_eq!(p.dist, 0.0);
    }

    #[test]
    fn square_corner_projection_matches_brute_force() {
        let d = Domain::unit_square();
        let y = [-1.0, -1.0];
        // brute force over a fine grid of the closed square's boundary and corners
        let mut best = (vec![0.5, 0.5], f64::INFINITY);
        let steps = 2000;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            for cand in [[t, 0.0], [t, 1.0], [0.0, t], [1.0, t]] {
                let dd = dist(&cand, &y);
                if dd < best.1 {
                    best = (cand.to_vec(), dd);
                }
            }
        }
        let p = d.project(&y).unwrap();
        assert!(close(&p.point, &best.0, 1e-12));
        assert!((p.dist - 2f64.sqrt()).abs() < 1e-12);
        let s = 1.0 / 2f64.sqrt();
        assert!(close(&p.normal, &[s, s], 1e-12));
        // the returned normal is a conic combination of the active facet normals
        let gens = d.normal_cone_generators(&p.point);
        assert_eq!(gens.len(), 2);
    }

    #[test]
    fn polytope_projection_agrees_with_box() {
        let facets = vec![
            Facet::new(vec![1.0, 0.0], 0.0).unwrap(),
            Facet::new(vec![-1.0, 0.0], -1.0).unwrap(),
            Facet::new(vec![0.0, 1.0], 0.0).unwrap(),
            Facet::new(vec![0.0, -1.0], -1.0).unwrap(),
        ];
        let poly = Domain::convex_polytope(facets).unwrap();
        let bx = Domain::unit_square();
        let mut rng = stream_rng(11, 0);
        for _ in 0..500 {
            let y = [rng.random_range(-2.0..3.0), rng.random_range(-2.0..3.0)];
            let a = poly.project(&y).unwrap();
            let b = bx.project(&y).unwrap();
            assert!(close(&a.point, &b.point, 1e-12), "{y:?}");
            assert!((a.dist - b.dist).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_projection_is_nearest_on_boundary() {
        let facets = vec![
            Facet::new(vec![0.0, 1.0], 0.0).unwrap(),
            Facet::new(vec![1.0, 0.0], 0.0).unwrap(),
            Facet::new(vec![-1.0, -1.0], -1.0).unwrap(),
        ];
        let tri = Domain::convex_polytope(facets).unwrap();
        let verts = polytope_vertices(&tri.shape);
        assert_eq!(verts.len(), 3);
        let mut rng = stream_rng(12, 0);
        for _ in 0..200 {
            let y = [rng.random_range(-1.5..2.5), rng.random_range(-1.5..2.5)];
            if tri.in_closure(&y) {
                continue;
            }
            let p = tri.project(&y).unwrap();
            let mut best = f64::INFINITY;
            for k in 0..3 {
                let a = [verts[k][0], verts[k][1]];
                let b = [verts[(k + 1) % 3][0], verts[(k + 1) % 3][1]];
                best = best.min(dist(&closest_on_segment(&y, a, b), &y));
            }
            assert!((p.dist - best).abs() < 1e-12);
        }
    }

    #[test]
    fn notch_projection_lands_on_arc() {
        let d = Domain::notched_square();
        let p = d.project(&[0.5, 0.1]).unwrap();
        assert!(close(&p.point, &[0.5, 0.2], 1e-14));
        assert!(close(&p.normal, &[0.0, 1.0], 1e-14));
        assert!((p.dist - 0.1).abs() < 1e-14);
        // below the edge, left of the notch: onto the edge
        let p = d.project(&[0.1, -0.05]).unwrap();
        assert!(close(&p.point, &[0.1, 0.0], 1e-14));
        // below the notch: the notch arc lies outside the box, nearest allowed
        // boundary point is an arc endpoint on the edge
        let p = d.project(&[0.45, -0.05]).unwrap();
        assert!(close(&p.point, &[0.3, 0.0], 1e-12));
    }

    #[test]
    fn notch_center_is_ambiguous() {
        let d = Domain::notched_square();
        match d.project(&[0.5, -0.0]) {
            Err(Error::AmbiguousProjection { .. }) => {}
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn notched_disc_with_disc_outer() {
        let d = Domain::notched_disc(
            Outer::Disc {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            [1.0, 0.0],
            0.3,
        )
        .unwrap();
        assert_eq!(d.contains(&[0.0, 0.0]).membership, Membership::Interior);
        assert_eq!(d.contains(&[0.9, 0.0]).membership, Membership::Exterior);
        let p = d.project(&[0.9, 0.0]).unwrap();
        assert!(close(&p.point, &[0.7, 0.0], 1e-14));
        let p = d.project(&[0.0, 1.5]).unwrap();
        assert!(close(&p.point, &[0.0, 1.0], 1e-14));
    }

    #[test]
    fn normal_without_hint_averages_active_facets() {
        let n = Domain::unit_square().normal_at(&[1.0, 1.0]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(close(&n, &[-s, -s], 1e-15));
        assert!(Domain::unit_square().normal_at(&[0.5, 0.5]).is_none());
    }

    #[test]
    fn disc_h1_with_generous_constant() {
        let mut d = Domain::unit_disc();
        d.c0 = 0.5;
        let (margin, pass) = d.check_condition(Condition::H1, 400, 400, 3).unwrap();
        assert!(pass);
        assert!(margin >= -CONDITION_TOL);
    }

    #[test]
    fn half_space_admits_huge_exterior_sphere() {
        let d = Domain::half_space(vec![0.0, 1.0], 0.0).unwrap();
        assert_eq!(d.r0, 1e6);
        let report = d.check_conditions(300, 300, 5).unwrap();
        assert_eq!(report.a.passed(), Some(true));
        assert_eq!(report.h1.passed(), Some(true));
        assert_eq!(report.h2.passed(), Some(true));
        assert_eq!(report.d.passed(), None);
        assert!(matches!(
            d.check_condition(Condition::D, 10, 10, 5),
            Err(Error::UnsupportedKind { .. })
        ));
    }

    #[test]
    fn all_conditions_hold_on_shipped_convex_domains() {
        for d in [Domain::unit_disc(), Domain::unit_square()] {
            let r = d.check_conditions(600, 600, 9).unwrap();
            for (name, c) in [("A", &r.a), ("B", &r.b), ("C", &r.c), ("D", &r.d), ("H1", &r.h1), ("H2", &r.h2)] {
                assert_eq!(c.passed(), Some(true), "{} {name}: {c:?}", d.kind_name());
            }
        }
    }

    #[test]
    fn exterior_sphere_violated_when_r0_too_large() {
        let mut d = Domain::notched_square();
        d.r0 = 0.4;
        let r = d.check_conditions(2000, 1000, 1).unwrap();
        assert_eq!(r.a.passed(), Some(false));
    }

    #[test]
    fn lyapunov_gradient_matches_finite_differences() {
        for d in [
            Domain::unit_disc(),
            Domain::unit_square(),
            Domain::notched_square(),
            Domain::half_space(vec![1.0, 1.0], 0.5).unwrap(),
        ] {
            let mut rng = stream_rng(4, 0);
            for _ in 0..50 {
                let x = d.sample_closure(&mut rng);
                let g = d.phi_grad(&x);
                for i in 0..2 {
                    let h = 1e-6;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (d.phi(&xp) - d.phi(&xm)) / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-6, "{} {x:?}", d.kind_name());
                }
            }
        }
    }

    #[test]
    fn spec_round_trip_rebuilds_domain() {
        let d = Domain::notched_square();
        let text = toml::to_string(&d.to_spec()).unwrap();
        let spec: DomainSpec = toml::from_str(&text).unwrap();
        let rebuilt = spec.build().unwrap();
        assert_eq!(rebuilt.shape, d.shape);
        assert_eq!(rebuilt.r0, d.r0);
    }

    #[test]
    fn foreign_params_are_rejected() {
        let spec: DomainSpec = toml::from_str(
            "kind = \"ball\"\nparams = { center = [0.0, 0.0], radius = 1.0, lo = [0.0] }\n",
        )
        .unwrap();
        match spec.build() {
            Err(Error::InvalidParameter { key, .. }) => assert_eq!(key, "domain.params.lo"),
            other => panic!("{other:?}"),
        }
    }
}
