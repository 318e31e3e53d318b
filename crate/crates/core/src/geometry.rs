//! Analytic obstacle geometry.
//!
//! Every obstacle is a finite union of ellipsoids (a sphere is an ellipsoid
//! with equal semiaxes), which keeps nearest points, normals and shape
//! operators exact.
//!
//! Shape-operator convention: `S = -dν` restricted to the tangent plane,
//! with `ν` the outward unit normal of `D`. A convex obstacle therefore has
//! negative-definite `S` (a sphere of radius `R` gives `-(1/R) I`), while the
//! observation sphere `∂B_d(p)` seen from its reflector gets `(1/d) I`. With
//! this choice `(1/d) I - S_q(∂D)` is the tangential Hessian of `|x - p|` on
//! `∂D` at a first reflection point, which is what the Laplace-method
//! integrals see, and `det(λI - S) = λ² - 2λH + K`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::{Mat2, Mat3, Vec3};

/// More near-minimizers than this and a reflector is treated as a continuum.
pub const CONTINUUM_MAX_POINTS: usize = 64;

/// One convex component: `{ x : |diag(1/a) Rᵀ (x - c)| < 1 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: Vec3,
    pub semiaxes: Vec3,
    /// Columns are the principal axes (orthonormal).
    pub frame: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstacleKind {
    Empty,
    Sphere,
    Ellipsoid,
    SphereUnion,
}

/// Perfectly conducting obstacle `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    kind: ObstacleKind,
    components: Vec<Ellipsoid>,
}

/// A point of `∂D` with its first- and second-order geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub q: Vec3,
    pub nu: Vec3,
    pub tangent_frame: [Vec3; 2],
    /// Shape operator in `tangent_frame` (units 1/length).
    pub shape: Mat2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubularParams {
    pub delta0: f64,
}

/// Output of the tubular reflection `x ↦ x^r = 2q(x) - x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionMap {
    pub x_r: Vec3,
    /// Unsigned distance to `∂D`.
    pub d: f64,
    /// Signed distance (positive outside `D`).
    pub signed: f64,
    pub n: Vec3,
    pub pi: Mat3,
    /// Jacobian of the normal field `n(x) = ν_{q(x)}`.
    pub n_prime: Mat3,
    pub q: Vec3,
}

/// Two unit vectors completing `nu` to a right-handed orthonormal frame.
pub fn orthonormal_tangents(nu: &Vec3) -> [Vec3; 2] {
    let axis = if nu.x.abs() <= nu.y.abs() && nu.x.abs() <= nu.z.abs() {
        Vec3::x()
    } else if nu.y.abs() <= nu.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let t1 = (axis - nu * nu.dot(&axis)).normalize();
    let t2 = nu.cross(&t1);
    [t1, t2]
}

/// Gauss curvature `K = det S` and mean curvature `H = tr S / 2`.
pub fn curvature_invariants(shape: &Mat2) -> (f64, f64) {
    (shape.determinant(), 0.5 * shape.trace())
}

/// Shape operator of the sphere `∂B_d(p)` at a first reflection point,
/// taken with respect to `-ν_q`.
pub fn observation_sphere_shape(d: f64) -> Mat2 {
    Matrix2::identity() / d
}

enum Projection {
    Unique { x: Vec3, signed: f64 },
    /// Two mirror-symmetric minimizers at (almost) equal distance.
    Pair { x: [Vec3; 2], signed: f64, gap: f64 },
    Continuum,
}

impl Ellipsoid {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self {
            center,
            semiaxes: Vector3::repeat(radius),
            frame: Matrix3::identity(),
        }
    }

    pub fn is_sphere(&self) -> bool {
        let a = self.semiaxes;
        let m = a.max();
        (a.x - a.y).abs() <= 1e-15 * m && (a.x - a.z).abs() <= 1e-15 * m
    }

    pub fn to_local(&self, x: &Vec3) -> Vec3 {
        self.frame.transpose() * (x - self.center)
    }

    pub fn to_world(&self, y: &Vec3) -> Vec3 {
        self.center + self.frame * y
    }

    /// `|diag(1/a) y|² - 1`, negative inside.
    pub fn implicit(&self, x: &Vec3) -> f64 {
        let y = self.to_local(x);
        y.component_div(&self.semiaxes).norm_squared() - 1.0
    }

    pub fn max_curvature(&self) -> f64 {
        self.semiaxes.max() / self.semiaxes.min().powi(2)
    }

    pub fn min_curvature(&self) -> f64 {
        self.semiaxes.min() / self.semiaxes.max().powi(2)
    }

    /// Outward unit normal at a surface point.
    pub fn normal_at(&self, q: &Vec3) -> Vec3 {
        let y = self.to_local(q);
        let g = y.component_div(&self.semiaxes.component_mul(&self.semiaxes));
        (self.frame * g).normalize()
    }

    pub fn surface_point(&self, q: &Vec3) -> SurfacePoint {
        let y = self.to_local(q);
        let a2 = self.semiaxes.component_mul(&self.semiaxes);
        let g_local = y.component_div(&a2);
        let g = self.frame * g_local;
        let gnorm = g.norm();
        let nu = g / gnorm;
        let tangent_frame = orthonormal_tangents(&nu);
        // Hessian of F/2 with F = |y/a|² - 1, in world coordinates.
        let hess = self.frame
            * Matrix3::from_diagonal(&a2.map(|v| 1.0 / v))
            * self.frame.transpose();
        let mut shape = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                shape[(i, j)] = -tangent_frame[i].dot(&(hess * tangent_frame[j])) / gnorm;
            }
        }
        shape = 0.5 * (shape + shape.transpose());
        SurfacePoint {
            q: *q,
            nu,
            tangent_frame,
            shape,
        }
    }

    /// Surface point from parameter-space unit direction `u` (local frame).
    pub fn point_from_direction(&self, u: &Vec3) -> Vec3 {
        self.to_world(&u.component_mul(&self.semiaxes))
    }

    fn project(&self, x: &Vec3, tol: f64) -> Projection {
        let scale = self.semiaxes.max();
        if self.is_sphere() {
            let r = self.semiaxes.x;
            let v = x - self.center;
            let n = v.norm();
            if n <= tol.max(1e-14) * r {
                return Projection::Continuum;
            }
            return Projection::Unique {
                x: self.center + v * (r / n),
                signed: n - r,
            };
        }
        let y = self.to_local(x);
        let a = self.semiaxes;
        let s = y.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
        let z = y.abs();
        let g = z.component_div(&a).norm_squared() - 1.0;
        if g.abs() <= 1e-15 {
            return Projection::Unique { x: *x, signed: 0.0 };
        }
        let f = |t: f64| -> f64 {
            (0..3)
                .map(|i| (a[i] * z[i] / (a[i] * a[i] + t)).powi(2))
                .sum::<f64>()
                - 1.0
        };
        let df = |t: f64| -> f64 {
            (0..3)
                .map(|i| -2.0 * (a[i] * z[i]).powi(2) / (a[i] * a[i] + t).powi(3))
                .sum::<f64>()
        };
        let from_t = |t: f64| -> Vec3 {
            Vector3::from_fn(|i, _| s[i] * a[i] * a[i] * z[i] / (a[i] * a[i] + t))
        };
        if g > 0.0 {
            let t = monotone_root(f, df, 0.0, a.max() * z.norm() + a.max());
            let q = from_t(t);
            return Projection::Unique {
                x: self.to_world(&q),
                signed: (q - y).norm(),
            };
        }
        // Interior point: the minimizer has t in (-a_min², 0].
        let m = a.imin();
        let am2 = a[m] * a[m];
        let repeated_min = (0..3).any(|i| i != m && (a[i] - a[m]).abs() <= 1e-14 * scale);
        if z[m] > 1e-12 * scale {
            let lo = -am2 + 1e-300_f64.max(am2 * 1e-16);
            let t = monotone_root(f, df, lo, 0.0);
            let q = from_t(t);
            let dist = (q - y).norm();
            // Competing minimizer: the mirror image across the min-axis plane.
            let mut mirrored = q;
            mirrored[m] = -mirrored[m];
            let gap = (mirrored - y).norm() - dist;
            if gap <= tol * scale {
                return if repeated_min {
                    Projection::Continuum
                } else {
                    Projection::Pair {
                        x: [self.to_world(&q), self.to_world(&mirrored)],
                        signed: -dist,
                        gap,
                    }
                };
            }
            return Projection::Unique {
                x: self.to_world(&q),
                signed: -dist,
            };
        }
        // y lies on the plane of the shortest axis.
        let mut q = Vector3::zeros();
        let mut rest = 0.0;
        for i in 0..3 {
            if i == m {
                continue;
            }
            let denom = a[i] * a[i] - am2;
            if denom.abs() <= 1e-14 * scale * scale {
                if z[i] > 1e-12 * scale {
                    // Equal shortest axes with an off-axis point: the plain root applies.
                    let t = monotone_root(f, df, -am2 + am2 * 1e-12, 0.0);
                    let qq = from_t(t);
                    return Projection::Unique {
                        x: self.to_world(&qq),
                        signed: -(qq - y).norm(),
                    };
                }
                return Projection::Continuum;
            }
            q[i] = s[i] * a[i] * a[i] * z[i] / denom;
            rest += (q[i] / a[i]).powi(2);
        }
        if rest < 1.0 {
            let h = a[m] * (1.0 - rest).sqrt();
            if repeated_min {
                return Projection::Continuum;
            }
            let mut q1 = q;
            q1[m] = h;
            let mut q2 = q;
            q2[m] = -h;
            let dist = (q1 - y).norm();
            return Projection::Pair {
                x: [self.to_world(&q1), self.to_world(&q2)],
                signed: -dist,
                gap: 0.0,
            };
        }
        let t = monotone_root(f, df, -am2 + am2 * 1e-12, 0.0);
        let qq = from_t(t);
        Projection::Unique {
            x: self.to_world(&qq),
            signed: -(qq - y).norm(),
        }
    }
}

/// Root of a convex decreasing function on `[lo, hi]` with `f(lo) ≥ 0 ≥ f(hi)`.
fn monotone_root(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let mut hi_val = f(hi);
    while hi_val > 0.0 {
        let w = (hi - lo).abs().max(1.0);
        lo = hi;
        hi += 2.0 * w;
        hi_val = f(hi);
    }
    let mut t = lo;
    for _ in 0..200 {
        let ft = f(t);
        if ft == 0.0 {
            return t;
        }
        if ft > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = df(t);
        let newton = if d != 0.0 { t - ft / d } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if ft.abs() <= 1e-16 {
            break;
        }
    }
    t
}

impl Obstacle {
    pub fn empty() -> Self {
        Self {
            kind: ObstacleKind::Empty,
            components: Vec::new(),
        }
    }

    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(Self {
            kind: ObstacleKind::Sphere,
            components: vec![Ellipsoid::sphere(center, radius)],
        })
    }

    pub fn ellipsoid(center: Vec3, semiaxes: Vec3, frame: Mat3) -> Result<Self> {
        if semiaxes.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(invalid("ellipsoid semiaxes must be positive"));
        }
        let ortho = (frame.transpose() * frame - Matrix3::identity()).norm();
        if ortho > 1e-10 {
            return Err(invalid("ellipsoid frame must be orthonormal"));
        }
        let frame = if frame.determinant() < 0.0 {
            let mut f = frame;
            f.set_column(2, &(-frame.column(2)));
            f
        } else {
            frame
        };
        Ok(Self {
            kind: ObstacleKind::Ellipsoid,
            components: vec![Ellipsoid {
                center,
                semiaxes,
                frame,
            }],
        })
    }

    /// Axis-aligned ellipsoid.
    pub fn ellipsoid_aligned(center: Vec3, semiaxes: Vec3) -> Result<Self> {
        Self::ellipsoid(center, semiaxes, Matrix3::identity())
    }

    /// Union of spheres with pairwise disjoint closures.
    pub fn sphere_union(spheres: &[(Vec3, f64)]) -> Result<Self> {
        for (i, (c, r)) in spheres.iter().enumerate() {
            if !(*r > 0.0) {
                return Err(invalid(format!("sphere {i} has non-positive radius {r}")));
            }
            for (c2, r2) in &spheres[..i] {
                if (c - c2).norm() <= r + r2 {
                    return Err(invalid("sphere-union components must have disjoint closures"));
                }
            }
        }
        Ok(Self {
            kind: ObstacleKind::SphereUnion,
            components: spheres
                .iter()
                .map(|(c, r)| Ellipsoid::sphere(*c, *r))
                .collect(),
        })
    }

    pub fn kind(&self) -> ObstacleKind {
        self.kind
    }

    pub fn components(&self) -> &[Ellipsoid] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Same obstacle after `x ↦ rotation · x + translation`.
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Self {
        Self {
            kind: self.kind,
            components: self
                .components
                .iter()
                .map(|e| Ellipsoid {
                    center: rotation * e.center + translation,
                    semiaxes: e.semiaxes,
                    frame: rotation * e.frame,
                })
                .collect(),
        }
    }

    /// `x ∈ D` (closed set).
    pub fn contains(&self, x: &Vec3) -> bool {
        self.components.iter().any(|e| e.implicit(x) <= 0.0)
    }

    /// Axis-aligned bounding box `(lo, hi)`, or `None` for the empty obstacle.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.components.iter().map(|e| {
            let ext = Vector3::from_fn(|i, _| {
                (0..3)
                    .map(|k| (e.frame[(i, k)] * e.semiaxes[k]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            });
            (e.center - ext, e.center + ext)
        });
        let first = it.next()?;
        Some(it.fold(first, |(lo, hi), (l, h)| (lo.inf(&l), hi.sup(&h))))
    }

    /// Signed distance to `∂D`, positive outside.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        if self.components.is_empty() {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        let mut inside = None;
        for e in &self.components {
            let sd = match e.project(x, 0.0) {
                Projection::Unique { signed, .. } | Projection::Pair { signed, .. } => signed,
                Projection::Continuum => -e.semiaxes.min(),
            };
            if sd < 0.0 {
                inside = Some(sd);
            }
            best = best.min(sd.abs());
        }
        match inside {
            Some(sd) => sd,
            None => best,
        }
    }

    /// Unique nearest point of `∂D` to `x`.
    pub fn nearest_point(&self, x: &Vec3, tol: f64) -> Result<SurfacePoint> {
        if self.components.is_empty() {
            return Err(invalid("empty obstacle has no boundary"));
        }
        let mut cands: Vec<(f64, usize, Vec3)> = Vec::new();
        for (i, e) in self.components.iter().enumerate() {
            match e.project(x, tol) {
                Projection::Unique { x: q, signed } => cands.push((signed.abs(), i, q)),
                Projection::Pair { signed, gap, .. } => {
                    return Err(Error::AmbiguousProjection {
                        distance: signed.abs(),
                        gap,
                    })
                }
                Projection::Continuum => {
                    return Err(Error::AmbiguousProjection {
                        distance: e.semiaxes.min(),
                        gap: 0.0,
                    })
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        if cands.len() > 1 {
            let gap = cands[1].0 - cands[0].0;
            if gap <= tol * cands[0].0.max(1.0) {
                return Err(Error::AmbiguousProjection {
                    distance: cands[0].0,
                    gap,
                });
            }
        }
        let (_, i, q) = cands[0];
        Ok(self.components[i].surface_point(&q))
    }

    /// `Λ_∂D(p)`: all points of `∂D` at distance `≤ d_∂D(p)(1 + tol)` from `p`.
    pub fn first_reflector(&self, p: &Vec3, tol: f64) -> Result<Vec<SurfacePoint>> {
        if self.components.is_empty() {
            return Err(invalid("empty obstacle has no reflector"));
        }
        let mut cands: Vec<(f64, usize, Vec3)> = Vec::new();
        for (i, e) in self.components.iter().enumerate() {
            match e.project(p, tol) {
                Projection::Unique { x, signed } => cands.push((signed.abs(), i, x)),
                Projection::Pair { x, signed, .. } => {
                    for q in x {
                        cands.push((signed.abs(), i, q));
                    }
                }
                Projection::Continuum => {
                    return Err(Error::ContinuumReflector {
                        count: continuum_sample_count(e, p),
                    })
                }
            }
        }
        let d = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let mut out: Vec<SurfacePoint> = Vec::new();
        for (dist, i, q) in cands {
            if dist <= d * (1.0 + tol) {
                let sp = self.components[i].surface_point(&q);
                if out.iter().any(|o| (o.q - sp.q).norm() <= 1e-9 * d.max(1.0)) {
                    continue;
                }
                out.push(sp);
            }
        }
        if out.len() > CONTINUUM_MAX_POINTS {
            return Err(Error::ContinuumReflector { count: out.len() });
        }
        Ok(out)
    }

    /// Shape operator at a boundary point, recomputed from the owning
    /// component (the stored `q.shape` is returned unchanged if `q` is not
    /// on any component to 1e-9).
    pub fn shape_operator(&self, q: &SurfacePoint) -> Mat2 {
        for e in &self.components {
            if e.implicit(&q.q).abs() <= 1e-9 {
                let sp = e.surface_point(&q.q);
                // Express in the caller's tangent frame.
                let mut s = Matrix2::zeros();
                let w = lift_shape(&sp);
                for i in 0..2 {
                    for j in 0..2 {
                        s[(i, j)] = q.tangent_frame[i].dot(&(w * q.tangent_frame[j]));
                    }
                }
                return s;
            }
        }
        q.shape
    }

    /// Collar half-width: half of min(focal radius, half the smallest gap).
    pub fn tubular_params(&self) -> TubularParams {
        let mut reach = f64::INFINITY;
        for (i, e) in self.components.iter().enumerate() {
            reach = reach.min(1.0 / e.max_curvature());
            for e2 in &self.components[..i] {
                // Components are spheres in a union; use the exact gap there and
                // a bounding-sphere gap otherwise.
                let gap = (e.center - e2.center).norm() - e.semiaxes.max() - e2.semiaxes.max();
                reach = reach.min(0.5 * gap);
            }
        }
        TubularParams {
            delta0: 0.5 * reach,
        }
    }

    /// Reflection across `∂D` inside the collar `|d| < 2 δ0`.
    pub fn reflection_map(&self, x: &Vec3) -> Result<ReflectionMap> {
        let limit = 2.0 * self.tubular_params().delta0;
        let signed = self.signed_distance(x);
        if signed.abs() >= limit {
            return Err(Error::OutsideCollar {
                distance: signed.abs(),
                limit,
            });
        }
        self.reflection_map_unchecked(x)
    }

    /// Same as [`Self::reflection_map`] without the collar check (used by
    /// finite-difference stencils straddling `∂D`).
    pub fn reflection_map_unchecked(&self, x: &Vec3) -> Result<ReflectionMap> {
        let sp = self.nearest_point(x, 0.0)?;
        let signed = (x - sp.q).dot(&sp.nu);
        // n' = W (I + s W)^{-1} on the tangent plane, W = dν = -S.
        let mut w2 = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                w2[(i, j)] = -sp.shape[(i, j)];
            }
        }
        let inv = (Matrix2::identity() + w2 * signed)
            .try_inverse()
            .ok_or_else(|| invalid("point lies on a focal surface"))?;
        let m = w2 * inv;
        let mut n_prime = Matrix3::zeros();
        for i in 0..2 {
            for j in 0..2 {
                n_prime += m[(i, j)] * sp.tangent_frame[i] * sp.tangent_frame[j].transpose();
            }
        }
        n_prime = 0.5 * (n_prime + n_prime.transpose());
        Ok(ReflectionMap {
            x_r: 2.0 * sp.q - x,
            d: signed.abs(),
            signed,
            n: sp.nu,
            pi: sp.nu * sp.nu.transpose(),
            n_prime,
            q: sp.q,
        })
    }

    /// Checks unique projection at `samples` random-ish points of the collar.
    pub fn validate_collar(&self, params: &TubularParams, samples: usize) -> bool {
        let mut ok = true;
        for e in &self.components {
            for (u, _) in fibonacci_sphere(samples) {
                let q = e.point_from_direction(&u);
                let nu = e.normal_at(&q);
                for frac in [-0.95, -0.5, 0.5, 0.95] {
                    let x = q + nu * (frac * 2.0 * params.delta0);
                    match self.nearest_point(&x, 1e-12) {
                        Ok(sp) => ok &= (sp.q - q).norm() <= 1e-6 * e.semiaxes.max(),
                        Err(_) => ok = false,
                    }
                }
            }
        }
        ok
    }
}

/// `S` as a 3×3 operator acting on the tangent plane (zero along ν).
fn lift_shape(sp: &SurfacePoint) -> Mat3 {
    let mut w = Matrix3::zeros();
    for i in 0..2 {
        for j in 0..2 {
            w += sp.shape[(i, j)] * sp.tangent_frame[i] * sp.tangent_frame[j].transpose();
        }
    }
    w
}

fn continuum_sample_count(e: &Ellipsoid, p: &Vec3) -> usize {
    let pts = fibonacci_sphere(2048);
    let dists: Vec<f64> = pts
        .iter()
        .map(|(u, _)| (e.point_from_direction(u) - p).norm())
        .collect();
    let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
    dists.iter().filter(|&&d| d <= dmin * (1.0 + 1e-9)).count().max(CONTINUUM_MAX_POINTS + 1)
}

/// Quasi-uniform unit vectors with equal area weights `4π/n`.
pub fn fibonacci_sphere(n: usize) -> Vec<(Vec3, f64)> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            (Vector3::new(r * th.cos(), r * th.sin(), z), 4.0 * PI / n as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_sphere() -> Obstacle {
        Obstacle::sphere(Vec3::zeros(), 1.0).unwrap()
    }

    fn ell211() -> Obstacle {
        Obstacle::ellipsoid_aligned(Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0)).unwrap()
    }

    /// Dense parameter-grid minimization of |y - x| over an ellipsoid.
    fn brute_nearest(e: &Ellipsoid, x: &Vec3) -> (f64, Vec3) {
        let mut best = (f64::INFINITY, Vec3::zeros());
        let n = 600;
        for i in 0..=n {
            let th = PI * i as f64 / n as f64;
            for j in 0..(2 * n) {
                let ph = PI * j as f64 / n as f64;
                let u = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
                let q = e.point_from_direction(&u);
                let d = (q - x).norm();
                if d < best.0 {
                    best = (d, q);
                }
            }
        }
        best
    }

    #[test]
    fn sphere_signed_distance() {
        let s = unit_sphere();
        assert_eq!(s.signed_distance(&Vec3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(s.signed_distance(&Vec3::new(0.5, 0.0, 0.0)), -0.5);
    }

    #[test]
    fn ellipsoid_signed_distance_matches_brute_force() {
        let e = ell211();
        let x = Vec3::new(3.0, 0.0, 0.0);
        let (bd, _) = brute_nearest(&e.components()[0], &x);
        assert_relative_eq!(bd, 1.0, epsilon = 1e-9);
        assert_relative_eq!(e.signed_distance(&x), 1.0, epsilon = 1e-12);
        for x in [
            Vec3::new(1.3, 0.9, -0.4),
            Vec3::new(-2.5, 1.5, 0.2),
            Vec3::new(0.3, 0.2, 0.1),
            Vec3::new(1.5, 0.1, 0.05),
        ] {
            let (bd, _) = brute_nearest(&e.components()[0], &x);
            let sd = e.signed_distance(&x);
            // The sampled minimum can only overshoot the true distance.
            assert!(sd.abs() <= bd + 1e-12 && bd - sd.abs() < 1e-4, "x={x:?} sd={sd} brute={bd}");
            assert_eq!(sd < 0.0, e.contains(&x));
        }
    }

    #[test]
    fn nearest_point_examples() {
        let s = unit_sphere();
        let sp = s.nearest_point(&Vec3::new(2.0, 0.0, 0.0), 1e-10).unwrap();
        assert_relative_eq!(sp.q, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(sp.nu, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert!(matches!(
            s.nearest_point(&Vec3::zeros(), 1e-10),
            Err(Error::AmbiguousProjection { .. })
        ));
        let e = ell211();
        let x = Vec3::new(0.0, 2.0, 0.0);
        let sp = e.nearest_point(&x, 1e-10).unwrap();
        assert_relative_eq!(sp.q, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        let (_, bq) = brute_nearest(&e.components()[0], &x);
        assert!((bq - sp.q).norm() < 1e-2);
        // Centre of the (2,1,1) spheroid: a whole circle of nearest points.
        assert!(e.nearest_point(&Vec3::zeros(), 1e-10).is_err());
    }

    #[test]
    fn nearest_point_reconstructs_x() {
        let e = Obstacle::ellipsoid(
            Vec3::new(0.2, -0.1, 0.3),
            Vec3::new(1.5, 1.0, 0.7),
            nalgebra::Rotation3::from_euler_angles(0.3, -0.4, 1.1).into_inner(),
        )
        .unwrap();
        for (u, _) in fibonacci_sphere(40) {
            for d in [-0.3, 0.05, 0.7, 2.0] {
                let comp = &e.components()[0];
                let q = comp.point_from_direction(&u);
                let x = q + comp.normal_at(&q) * d;
                let sp = e.nearest_point(&x, 1e-12).unwrap();
                let sd = e.signed_distance(&x);
                assert!((sp.q + sp.nu * sd - x).norm() < 1e-9);
                assert!((sd - d).abs() < 1e-9, "d={d} sd={sd}");
            }
        }
    }

    #[test]
    fn first_reflector_examples() {
        let s = unit_sphere();
        let p = Vec3::new(3.0, 0.0, 0.0);
        let r = s.first_reflector(&p, 1e-9).unwrap();
        assert_eq!(r.len(), 1);
        assert_relative_eq!(r[0].q, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-14);

        let two = Obstacle::sphere_union(&[
            (Vec3::new(-3.0, 0.0, 0.0), 1.0),
            (Vec3::new(3.0, 0.0, 0.0), 1.0),
        ])
        .unwrap();
        let r = two.first_reflector(&Vec3::zeros(), 1e-9).unwrap();
        assert_eq!(r.len(), 2);
        let mut xs: Vec<f64> = r.iter().map(|sp| sp.q.x).collect();
        xs.sort_by(f64::total_cmp);
        assert_relative_eq!(xs[0], -2.0, epsilon = 1e-14);
        assert_relative_eq!(xs[1], 2.0, epsilon = 1e-14);
        for sp in &r {
            let w = (Vec3::zeros() - sp.q).normalize();
            assert!((sp.nu.dot(&w) - 1.0).abs() < 1e-10);
        }

        assert!(matches!(
            s.first_reflector(&Vec3::zeros(), 1e-9),
            Err(Error::ContinuumReflector { .. })
        ));
    }

    #[test]
    fn shape_operator_convention() {
        let s = unit_sphere();
        for (u, _) in fibonacci_sphere(10) {
            let sp = s.nearest_point(&(u * 2.0), 1e-12).unwrap();
            assert_relative_eq!(sp.shape, -Matrix2::identity(), epsilon = 1e-14);
            let (k, h) = curvature_invariants(&sp.shape);
            assert_relative_eq!(k, 1.0, epsilon = 1e-14);
            assert_relative_eq!(h, -1.0, epsilon = 1e-14);
            assert!(sp.nu.dot(&sp.tangent_frame[0]).abs() < 1e-15);
        }
        let obs = observation_sphere_shape(2.0);
        assert_eq!(obs, Matrix2::identity() * 0.5);
        // Positivity at a sphere reflector.
        let p = Vec3::new(3.0, 0.0, 0.0);
        let sp = &s.first_reflector(&p, 1e-9).unwrap()[0];
        let det = (observation_sphere_shape(2.0) - sp.shape).determinant();
        assert_relative_eq!(det, (0.5f64 + 1.0).powi(2), epsilon = 1e-14);
    }

    #[test]
    fn flattening_ellipsoid_shape_tends_to_zero() {
        for big in [10.0, 100.0, 1000.0] {
            let e = Obstacle::ellipsoid_aligned(Vec3::zeros(), Vec3::new(1.0, big, big)).unwrap();
            let sp = e.nearest_point(&Vec3::new(2.0, 0.0, 0.0), 1e-12).unwrap();
            assert!(sp.shape.norm() <= 1.5 / (big * big));
        }
    }

    #[test]
    fn ellipsoid_tip_curvatures() {
        let e = ell211();
        let sp = e.nearest_point(&Vec3::new(3.0, 0.0, 0.0), 1e-12).unwrap();
        let (k, h) = curvature_invariants(&sp.shape);
        assert_relative_eq!(k, 4.0, epsilon = 1e-12);
        assert_relative_eq!(h, -2.0, epsilon = 1e-12);
        let sp = e.nearest_point(&Vec3::new(0.0, 3.0, 0.0), 1e-12).unwrap();
        let (k, h) = curvature_invariants(&sp.shape);
        // Principal curvatures at (0,1,0): b/a² = 1/4 and 1/b... = 1.
        assert_relative_eq!(k, 0.25, epsilon = 1e-12);
        assert_relative_eq!(h, -0.625, epsilon = 1e-12);
    }

    #[test]
    fn curvature_invariant_examples() {
        assert_eq!(curvature_invariants(&(Matrix2::identity() * 0.5)), (0.25, 0.5));
        assert_eq!(curvature_invariants(&Matrix2::zeros()), (0.0, 0.0));
        let s = Matrix2::new(2.0, 0.0, 0.0, -3.0);
        assert_eq!(curvature_invariants(&s), (-6.0, -0.5));
    }

    #[test]
    fn reflection_map_examples() {
        let s = unit_sphere();
        let x = Vec3::new(1.2, 0.0, 0.0);
        let r = s.reflection_map(&x).unwrap();
        assert_relative_eq!(r.x_r, Vec3::new(0.8, 0.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(r.d, 0.2, epsilon = 1e-14);
        assert_relative_eq!(r.n, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let eig = r.n_prime.symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-14);
        assert_relative_eq!(ev[1], 1.0 / 1.2, epsilon = 1e-13);
        assert_relative_eq!(ev[2], 1.0 / 1.2, epsilon = 1e-13);
        let on = s.reflection_map(&Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(on.x_r, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        assert_eq!(on.d, 0.0);
        assert!(matches!(
            s.reflection_map(&Vec3::new(3.0, 0.0, 0.0)),
            Err(Error::OutsideCollar { .. })
        ));
    }

    #[test]
    fn n_prime_matches_finite_differences() {
        let e = Obstacle::ellipsoid(
            Vec3::new(0.1, 0.0, -0.2),
            Vec3::new(1.4, 1.0, 0.8),
            nalgebra::Rotation3::from_euler_angles(0.2, 0.5, -0.3).into_inner(),
        )
        .unwrap();
        let comp = &e.components()[0];
        let h = 1e-5;
        for (u, _) in fibonacci_sphere(12) {
            let q = comp.point_from_direction(&u);
            let x = q + comp.normal_at(&q) * 0.07;
            let r = e.reflection_map(&x).unwrap();
            let mut fd = Matrix3::zeros();
            for k in 0..3 {
                let mut dx = Vec3::zeros();
                dx[k] = h;
                let np = e.reflection_map(&(x + dx)).unwrap().n;
                let nm = e.reflection_map(&(x - dx)).unwrap().n;
                fd.set_column(k, &((np - nm) / (2.0 * h)));
            }
            assert!((fd - r.n_prime).norm() < 1e-7, "{}", (fd - r.n_prime).norm());
            assert!((r.n_prime - r.n_prime.transpose()).norm() < 1e-8);
            assert!((r.n_prime * r.n).norm() < 1e-12);
            assert!((e.signed_distance(&r.x_r) + e.signed_distance(&x)).abs() < 1e-8);
        }
    }

    #[test]
    fn collar_is_valid() {
        for obs in [
            unit_sphere(),
            ell211(),
            Obstacle::sphere_union(&[
                (Vec3::new(-3.0, 0.0, 0.0), 1.0),
                (Vec3::new(3.0, 0.0, 0.0), 1.0),
            ])
            .unwrap(),
        ] {
            let t = obs.tubular_params();
            assert!(t.delta0 > 0.0);
            assert!(obs.validate_collar(&t, 64));
        }
    }
}
