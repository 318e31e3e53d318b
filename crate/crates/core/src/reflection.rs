//! Reflection of an interior field across a curved boundary:
//! `V*(x) = -A(x^r) + B(x^r) + 2 d(x) n′(x) A(x^r)`, with
//! `A = (I - π)V`, `B = πV`, `π = ν⊗ν` at the foot point `q(x)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::freefield::ProbeField;
use crate::geometry::{fibonacci_sphere, Obstacle, ReflectionMap, SurfacePoint, TubularParams};
use crate::{Mat3, Vec3};

/// Field that is reflected; only needs to be defined inside `D` near `∂D`.
pub trait BaseField: Sync {
    fn value(&self, y: &Vec3) -> Result<Vec3>;
    fn jacobian(&self, y: &Vec3) -> Result<Mat3>;
}

impl BaseField for ProbeField {
    fn value(&self, y: &Vec3) -> Result<Vec3> {
        ProbeField::value(self, y)
    }

    fn jacobian(&self, y: &Vec3) -> Result<Mat3> {
        ProbeField::jacobian(self, y)
    }
}

/// `V*` built from a base field, an obstacle and its collar.
#[derive(Debug, Clone)]
pub struct ReflectedField<F = ProbeField> {
    pub base: F,
    pub obstacle: Obstacle,
    pub collar: TubularParams,
    pub tau: f64,
    pub mu: f64,
    pub eps: f64,
    /// Include the curvature term `2 d n′ A`.
    pub corrected: bool,
}

impl ReflectedField<ProbeField> {
    pub fn new(field: ProbeField, obstacle: Obstacle) -> Self {
        let (tau, mu, eps) = (field.tau, field.spec.mu, field.spec.eps);
        Self::with_base(field, obstacle, tau, mu, eps)
    }
}

impl<F: BaseField> ReflectedField<F> {
    pub fn with_base(base: F, obstacle: Obstacle, tau: f64, mu: f64, eps: f64) -> Self {
        let collar = obstacle.tubular_params();
        Self {
            base,
            obstacle,
            collar,
            tau,
            mu,
            eps,
            corrected: true,
        }
    }

    /// Drops the curvature term, leaving `-A + B`.
    pub fn uncorrected(mut self) -> Self {
        self.corrected = false;
        self
    }

    /// `V*(x)` for `x` outside `D` in the collar.
    pub fn reflect(&self, x: &Vec3) -> Result<Vec3> {
        let m = self.obstacle.reflection_map(x)?;
        if m.signed < -1e-12 * (1.0 + x.norm()) {
            return Err(crate::error::invalid("reflect needs a point outside D"));
        }
        self.assemble(&m)
    }

    /// Smooth continuation of `V*` across `∂D` using the signed distance.
    pub fn reflect_extended(&self, x: &Vec3) -> Result<Vec3> {
        let m = self.obstacle.reflection_map_unchecked(x)?;
        self.assemble(&m)
    }

    fn assemble(&self, m: &ReflectionMap) -> Result<Vec3> {
        let v = self.base.value(&m.x_r)?;
        let b = m.pi * v;
        let a = v - b;
        let mut out = b - a;
        if self.corrected {
            out += m.n_prime * a * (2.0 * m.signed);
        }
        Ok(out)
    }

    fn fd_limit(&self, h: f64) -> Result<()> {
        let limit = self.collar.delta0 / 4.0;
        if !(h > 0.0) || h > limit {
            return Err(Error::StepTooLarge { step: h, limit });
        }
        Ok(())
    }

    /// Default step `min(δ0/8, 1e-3 · diameter)`.
    pub fn default_step(&self) -> f64 {
        let diameter = self
            .obstacle
            .bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(1.0);
        (self.collar.delta0 / 8.0).min(1e-3 * diameter)
    }
}

/// `sample count` quasi-uniform points per component of `∂D`, skipping
/// points hidden inside other components.
pub fn surface_samples(obstacle: &Obstacle, count: usize) -> Vec<SurfacePoint> {
    let comps = obstacle.components();
    let mut out = Vec::new();
    for (i, e) in comps.iter().enumerate() {
        for (u, _) in fibonacci_sphere(count) {
            let q = e.point_from_direction(&u);
            let hidden = comps
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && o.implicit(&q) < 0.0);
            if !hidden {
                out.push(e.surface_point(&q));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub q: Vec3,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceCheck {
    pub max_deviation: f64,
    /// `max |V|` over the samples.
    pub scale: f64,
    pub samples: Vec<TraceSample>,
}

impl TraceCheck {
    pub fn relative(&self) -> f64 {
        self.max_deviation / self.scale
    }
}

/// `max |V*×ν + V×ν|` on `∂D`.
pub fn check_tangential_trace<F: BaseField>(
    field: &ReflectedField<F>,
    samples: &[SurfacePoint],
) -> Result<TraceCheck> {
    let rows = samples
        .par_iter()
        .map(|sp| {
            let vs = field.reflect_extended(&sp.q)?;
            let v = field.base.value(&sp.q)?;
            Ok((
                TraceSample {
                    q: sp.q,
                    deviation: (vs.cross(&sp.nu) + v.cross(&sp.nu)).norm(),
                },
                v.norm(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceCheck {
        max_deviation: rows.iter().map(|r| r.0.deviation).fold(0.0, f64::max),
        scale: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        samples: rows.into_iter().map(|r| r.0).collect(),
    })
}

/// Jacobian at `q` from a one-sided second-order stencil along `side · ν`
/// and central differences in the tangent directions.
fn boundary_jacobian(
    f: &(dyn Fn(&Vec3) -> Result<Vec3> + Sync),
    sp: &SurfacePoint,
    side: f64,
    h: f64,
) -> Result<Mat3> {
    let nu = sp.nu * side;
    let f0 = f(&sp.q)?;
    let f1 = f(&(sp.q + nu * h))?;
    let f2 = f(&(sp.q + nu * (2.0 * h)))?;
    let dn = (f1 * 4.0 - f0 * 3.0 - f2) / (2.0 * h);
    let mut jac = dn * nu.transpose();
    for t in sp.tangent_frame {
        let dt = (f(&(sp.q + t * h))? - f(&(sp.q - t * h))?) / (2.0 * h);
        jac += dt * t.transpose();
    }
    Ok(jac)
}

fn curl_of(j: &Mat3) -> Vec3 {
    Vec3::new(j[(2, 1)] - j[(1, 2)], j[(0, 2)] - j[(2, 0)], j[(1, 0)] - j[(0, 1)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurlTraceCheck {
    pub h_fd: f64,
    /// `max |ν×(∇×V* - ∇×V)| / max |ν×∇×V|` at `h_fd`.
    pub relative: f64,
    /// Same at `h_fd / 2`.
    pub relative_half: f64,
    /// `log2(relative / relative_half)`.
    pub order: f64,
    pub scale: f64,
    pub samples: Vec<TraceSample>,
}

fn curl_deviation<F: BaseField>(
    field: &ReflectedField<F>,
    samples: &[SurfacePoint],
    h: f64,
) -> Result<(Vec<TraceSample>, f64)> {
    let star = |x: &Vec3| field.reflect_extended(x);
    let base = |x: &Vec3| field.base.value(x);
    let rows = samples
        .par_iter()
        .map(|sp| {
            let cs = curl_of(&boundary_jacobian(&star, sp, 1.0, h)?);
            let cv = curl_of(&boundary_jacobian(&base, sp, -1.0, h)?);
            Ok((
                TraceSample {
                    q: sp.q,
                    deviation: sp.nu.cross(&(cs - cv)).norm(),
                },
                sp.nu.cross(&cv).norm(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((rows.into_iter().map(|r| r.0).collect(), scale))
}

/// Compares `ν×∇×V*` (differenced from outside) with `ν×∇×V` (from inside).
pub fn check_curl_trace<F: BaseField>(
    field: &ReflectedField<F>,
    samples: &[SurfacePoint],
    h_fd: f64,
) -> Result<CurlTraceCheck> {
    field.fd_limit(h_fd)?;
    let (rows, scale) = curl_deviation(field, samples, h_fd)?;
    let (half, _) = curl_deviation(field, samples, h_fd / 2.0)?;
    let max = |r: &[TraceSample]| r.iter().map(|s| s.deviation).fold(0.0, f64::max);
    let relative = max(&rows) / scale;
    let relative_half = max(&half) / scale;
    Ok(CurlTraceCheck {
        h_fd,
        relative,
        relative_half,
        order: (relative / relative_half).log2(),
        scale,
        samples: rows,
    })
}

/// Terms of the residual bound at one exterior point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub x: Vec3,
    pub tau: f64,
    pub d: f64,
    /// `(1/με)∇×∇×V* + τ²V*`.
    pub residual: Vec3,
    /// `|V(x^r)| + |V′(x^r)|`.
    pub first_order: f64,
    /// `d · |∇²V(x^r)|`.
    pub second_order: f64,
}

/// Second derivatives of each component, `[i][j][k] = ∂_j ∂_k g_i`.
fn hessians(f: &dyn Fn(&Vec3) -> Result<Vec3>, x: &Vec3, h: f64) -> Result<[Mat3; 3]> {
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];
    let f0 = f(x)?;
    let mut out = [Mat3::zeros(); 3];
    for j in 0..3 {
        for k in j..3 {
            let d2 = if j == k {
                (f(&(x + e[j] * h))? - f0 * 2.0 + f(&(x - e[j] * h))?) / (h * h)
            } else {
                let (a, b) = (e[j] * h, e[k] * h);
                (f(&(x + a + b))? - f(&(x + a - b))? - f(&(x - a + b))? + f(&(x - a - b))?)
                    / (4.0 * h * h)
            };
            for (i, m) in out.iter_mut().enumerate() {
                m[(j, k)] = d2[i];
                m[(k, j)] = d2[i];
            }
        }
    }
    Ok(out)
}

/// Residual of `V*` in the Maxwell system with the norms of the base-field
/// derivatives at `x^r`.
pub fn residual_structure<F: BaseField>(
    field: &ReflectedField<F>,
    x: &Vec3,
    h_fd: f64,
) -> Result<ResidualReport> {
    field.fd_limit(h_fd)?;
    let m = field.obstacle.reflection_map(x)?;
    if m.signed < -1e-12 * (1.0 + x.norm()) {
        return Err(crate::error::invalid("residual point must lie outside D"));
    }
    let star = |y: &Vec3| field.reflect_extended(y);
    let hs = hessians(&star, x, h_fd)?;
    // ∇×∇×V = ∇(∇·V) - ΔV
    let mut cc = Vec3::zeros();
    for i in 0..3 {
        let grad_div: f64 = (0..3).map(|j| hs[j][(i, j)]).sum();
        cc[i] = grad_div - hs[i].trace();
    }
    let vs = field.reflect_extended(x)?;
    let residual = cc / (field.mu * field.eps) + vs * (field.tau * field.tau);

    let v = field.base.value(&m.x_r)?;
    let jac = field.base.jacobian(&m.x_r)?;
    let mut hess2 = 0.0;
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];
    for ek in &e {
        let dj = (field.base.jacobian(&(m.x_r + ek * h_fd))? - field.base.jacobian(&(m.x_r - ek * h_fd))?)
            / (2.0 * h_fd);
        hess2 += dj.norm_squared();
    }
    Ok(ResidualReport {
        x: *x,
        tau: field.tau,
        d: m.d,
        residual,
        first_order: v.norm() + jac.norm(),
        second_order: m.d * hess2.sqrt(),
    })
}

/// Coefficients of the residual bound at one point, held fixed over `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualFit {
    pub c1: f64,
    pub c2: f64,
    /// `max_τ | |R| - C₁ first_order - C₂ second_order | / |R|`.
    pub max_misfit: f64,
}

/// Relative least squares `|R| ≈ C₁ first_order + C₂ second_order` over
/// reports taken at the same point for several `τ`. On `∂D` only `C₁`.
pub fn fit_residual_coefficients(reports: &[ResidualReport]) -> Result<ResidualFit> {
    if reports.len() < 2 {
        return Err(crate::error::invalid("residual fit needs at least two values of tau"));
    }
    let rows: Vec<(f64, f64, f64)> = reports
        .iter()
        .map(|r| {
            let y = r.residual.norm().max(f64::MIN_POSITIVE);
            (r.first_order / y, r.second_order / y, 1.0)
        })
        .collect();
    let on_boundary = reports.iter().all(|r| r.d == 0.0);
    let (c1, c2) = if on_boundary {
        let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), r| (n + r.0, d + r.0 * r.0));
        (num / den, 0.0)
    } else {
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(a, b, y) in &rows {
            s11 += a * a;
            s12 += a * b;
            s22 += b * b;
            b1 += a * y;
            b2 += b * y;
        }
        let det = s11 * s22 - s12 * s12;
        if !(det.abs() > 1e-12 * s11 * s22) {
            return Err(crate::error::invalid("residual fit is singular"));
        }
        ((b1 * s22 - b2 * s12) / det, (s11 * b2 - s12 * b1) / det)
    };
    let max_misfit = rows
        .iter()
        .map(|&(a, b, y)| (c1 * a + c2 * b - y).abs())
        .fold(0.0, f64::max);
    Ok(ResidualFit { c1, c2, max_misfit })
}

/// Verification CSV with columns `x,y,z,identity,deviation,order`.
pub fn write_report_csv(
    path: &Path,
    tangential: &TraceCheck,
    curl: &CurlTraceCheck,
) -> Result<()> {
    let mut s = String::from("x,y,z,identity,deviation,order\n");
    for t in &tangential.samples {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},tangential,{:.16e},", t.q.x, t.q.y, t.q.z, t.deviation / tangential.scale);
    }
    for t in &curl.samples {
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},curl,{:.16e},{:.6}",
            t.q.x,
            t.q.y,
            t.q.z,
            t.deviation / curl.scale,
            curl.order
        );
    }
    fs::write(path, s)?;
    Ok(())
}
