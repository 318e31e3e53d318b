//! Semi-analytic oracles: Laplace-method surface integrals, the limit of
//! the normalized indicator, the energy `J(τ)` by boundary quadrature,
//! curvature recovery from two limits, and reflector direction probing.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::freefield::ProbeField;
use crate::geometry::{observation_sphere_shape, Ellipsoid, Obstacle, SurfacePoint};
use crate::logscale::SignedLog;
use crate::quadrature::gauss_legendre;
use crate::source::SourceSpec;
use crate::{Mat2, Vec3};

/// Relative tolerance of the reflector search used by the oracles.
pub const REFLECTOR_TOL: f64 = 1e-9;

/// Below this `det(S_B - S_D)` the Laplace method degenerates.
pub const DET_TOL: f64 = 1e-12;

/// Geometry of one first reflection point as seen from `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectorSummary {
    pub q: Vec3,
    pub nu: Vec3,
    /// `det(S_q(∂B_d(p)) - S_q(∂D))`.
    pub det: f64,
    /// `1 - (a·ν_q)²`.
    pub directional: f64,
    /// Gauss curvature `K` of `∂D` at `q`.
    pub gauss: f64,
    /// Mean curvature `H` of `∂D` at `q` (half-trace of `S = -dν`).
    pub mean: f64,
}

/// Reflectors of `p` on `∂D` with the Hessian determinants of the
/// distance function.
pub fn reflector_summaries(obstacle: &Obstacle, p: &Vec3, a: &Vec3) -> Result<(f64, Vec<ReflectorSummary>)> {
    let refl = obstacle.first_reflector(p, REFLECTOR_TOL)?;
    let d = refl
        .iter()
        .map(|q| (q.q - p).norm())
        .fold(f64::INFINITY, f64::min);
    let sb = observation_sphere_shape(d);
    let mut out = Vec::with_capacity(refl.len());
    for q in &refl {
        let sd = obstacle.shape_operator(q);
        let det = (sb - sd).determinant();
        if !(det > DET_TOL) {
            return Err(Error::DegenerateHessian { det });
        }
        let (gauss, mean) = crate::geometry::curvature_invariants(&sd);
        out.push(ReflectorSummary {
            q: q.q,
            nu: q.nu,
            det,
            directional: 1.0 - a.dot(&q.nu).powi(2),
            gauss,
            mean,
        });
    }
    Ok((d, out))
}

/// Limit of `τ² e^{2τ√(με) dist(D,B)} I(τ) / f̃(τ)²`:
/// `(π/2ε²) (η/d)² Σ (1 - (a·ν_q)²) / √det`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// `d_∂D(p)`.
    pub d: f64,
    /// `dist(D, B) = d - η`.
    pub dist: f64,
    pub reflectors: Vec<ReflectorSummary>,
}

pub fn laplace_oracle(obstacle: &Obstacle, spec: &SourceSpec) -> Result<OracleValue> {
    let (d, reflectors) = reflector_summaries(obstacle, &spec.p, &spec.a)?;
    let sum: f64 = reflectors.iter().map(|r| r.directional / r.det.sqrt()).sum();
    let value = PI / (2.0 * spec.eps * spec.eps) * (spec.eta / d).powi(2) * sum;
    Ok(OracleValue {
        value,
        d,
        dist: d - spec.eta,
        reflectors,
    })
}

/// Limit of `τ² e^{2τ√(με) dist} J(τ) / f̃²`, half of [`laplace_oracle`].
pub fn energy_oracle(obstacle: &Obstacle, spec: &SourceSpec) -> Result<f64> {
    laplace_oracle(obstacle, spec).map(|o| 0.5 * o.value)
}

/// Limit of `e^{2τ̃d} J / (K f̃)²`: `(π/d²) Σ (1 - (a·ν_q)²)/√det`.
pub fn kernel_energy_oracle(obstacle: &Obstacle, spec: &SourceSpec) -> Result<f64> {
    let (d, refl) = reflector_summaries(obstacle, &spec.p, &spec.a)?;
    Ok(PI / (d * d) * refl.iter().map(|r| r.directional / r.det.sqrt()).sum::<f64>())
}

/// Weight `w(x)` in `∫_∂D e^{-2τ̃|x-p|}/|x-p|² w dS`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SurfaceWeight {
    Constant,
    /// `(m(x;p)ν_x) a·a = (ω·ν)((ω·a)² - |a|²)`.
    Directional(Vec3),
}

impl SurfaceWeight {
    pub fn eval(&self, x: &Vec3, nu: &Vec3, p: &Vec3) -> f64 {
        match self {
            SurfaceWeight::Constant => 1.0,
            SurfaceWeight::Directional(a) => {
                let w = (x - p).normalize();
                w.dot(nu) * (w.dot(a).powi(2) - a.norm_squared())
            }
        }
    }
}

/// Limit of `τ̃ e^{2τ̃d} ∫_∂D e^{-2τ̃|x-p|}/|x-p|² w dS`:
/// `(π/d²) Σ w(q)/√det`.
pub fn surface_laplace_limit(obstacle: &Obstacle, p: &Vec3, weight: SurfaceWeight) -> Result<f64> {
    let a = match weight {
        SurfaceWeight::Constant => Vec3::z(),
        SurfaceWeight::Directional(a) => a,
    };
    let (d, refl) = reflector_summaries(obstacle, p, &a)?;
    Ok(PI / (d * d)
        * refl
            .iter()
            .map(|r| weight.eval(&r.q, &r.nu, p) / r.det.sqrt())
            .sum::<f64>())
}

/// Surface node with outward normal and area weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNode {
    pub x: Vec3,
    pub nu: Vec3,
    pub w: f64,
}

/// Rule on one ellipsoid in polar coordinates about the parameter-space
/// direction of `pole`: geometric Gauss panels in the polar angle starting
/// at `width`, trapezoid in the azimuth.
pub fn pole_rule(e: &Ellipsoid, pole: &Vec3, width: f64, order: usize, azimuth: usize) -> Vec<SurfaceNode> {
    let u0 = e.to_local(pole).component_div(&e.semiaxes).normalize();
    let [e1, e2] = crate::geometry::orthonormal_tangents(&u0);
    let map = |u: Vec3| e.frame * u.component_mul(&e.semiaxes);
    let mut edges = vec![0.0];
    let mut h = width.min(PI);
    while *edges.last().unwrap() < PI {
        let next = (edges.last().unwrap() + h).min(PI);
        edges.push(next);
        h *= 2.0;
    }
    let gl = gauss_legendre(order);
    let dphi = 2.0 * PI / azimuth as f64;
    let mut out = Vec::with_capacity((edges.len() - 1) * order * azimuth);
    for pan in edges.windows(2) {
        let (a, b) = (pan[0], pan[1]);
        let half = 0.5 * (b - a);
        for &(t, wt) in &gl {
            let th = a + half * (t + 1.0);
            let (st, ct) = th.sin_cos();
            for k in 0..azimuth {
                let ph = (k as f64 + 0.5) * dphi;
                let (sp, cp) = ph.sin_cos();
                let radial = e1 * cp + e2 * sp;
                let u = u0 * ct + radial * st;
                let x = e.center + map(u);
                let x_th = map(-u0 * st + radial * ct);
                let x_ph = map((e2 * cp - e1 * sp) * st);
                let area = x_th.cross(&x_ph).norm();
                out.push(SurfaceNode {
                    x,
                    nu: e.normal_at(&x),
                    w: half * wt * dphi * area,
                });
            }
        }
    }
    out
}

/// Refinement levels tried by [`adaptive_surface_integral`].
pub const MAX_LEVEL: usize = 7;

/// `∫_∂D g dS` for an integrand concentrated near the points of `∂D`
/// nearest to `p`, with peak width of order `1/√κ`. Each component is
/// integrated about its own nearest point; parts of a component inside
/// another one are masked out. Refines until successive levels agree to
/// `tol` relative to `∫|g|`.
pub fn adaptive_surface_integral<F>(obstacle: &Obstacle, p: &Vec3, kappa: f64, tol: f64, g: F) -> Result<f64>
where
    F: Fn(&SurfaceNode) -> f64 + Sync,
{
    if obstacle.is_empty() {
        return Ok(0.0);
    }
    let comps = obstacle.components();
    let poles: Vec<Vec3> = comps
        .iter()
        .map(|e| {
            let single = Obstacle::ellipsoid(e.center, e.semiaxes, e.frame)?;
            Ok(single.nearest_point(p, 1e-12)?.q)
        })
        .collect::<Result<_>>()?;
    let level_value = |level: usize| -> (f64, f64) {
        let order = 6 + 4 * level;
        let azimuth = 8 << level;
        let mut total = (0.0, 0.0);
        for (i, e) in comps.iter().enumerate() {
            let scale = e.semiaxes.max();
            let width = (1.0 / (kappa.max(1.0) * scale).sqrt()).min(0.5);
            let rule = pole_rule(e, &poles[i], width, order, azimuth);
            let (s, sa) = rule
                .par_iter()
                .filter(|n| {
                    !comps
                        .iter()
                        .enumerate()
                        .any(|(j, o)| j != i && o.implicit(&n.x) < 0.0)
                })
                .map(|n| {
                    let v = g(n) * n.w;
                    (v, v.abs())
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            total.0 += s;
            total.1 += sa;
        }
        total
    };
    let mut prev = level_value(0);
    let mut change = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        let cur = level_value(level);
        change = (cur.0 - prev.0).abs() / cur.1.max(f64::MIN_POSITIVE);
        if change <= tol {
            return Ok(cur.0);
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged { change })
}

/// `τ̃ e^{2τ̃d} ∫_∂D e^{-2τ̃|x-p|}/|x-p|² w dS`, whose limit is
/// [`surface_laplace_limit`].
pub fn surface_laplace_integral(
    obstacle: &Obstacle,
    p: &Vec3,
    tau_tilde: f64,
    weight: SurfaceWeight,
    tol: f64,
) -> Result<f64> {
    if !(tau_tilde > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    if obstacle.signed_distance(p) <= 0.0 {
        return Err(invalid("p must lie outside the obstacle"));
    }
    let d = obstacle.signed_distance(p);
    let q = adaptive_surface_integral(obstacle, p, tau_tilde, tol, |n| {
        let r = (n.x - p).norm();
        (-2.0 * tau_tilde * (r - d)).exp() / (r * r) * weight.eval(&n.x, &n.nu, p)
    })?;
    Ok(tau_tilde * q)
}

/// Boundary expression used for `J(τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyForm {
    /// `(1/με) ∫ (ν×V)·∇×V dS`.
    CrossCurl,
    /// `-(1/με) ∫ ν·(∇×V)×V dS`.
    CurlCross,
}

/// `J(τ) = (1/με)∫_D |∇×V|² + τ² ∫_D |V|²` by boundary quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyValue {
    pub tau: f64,
    pub value: SignedLog,
    /// `e^{2τ̃d} J / (K f̃)²`.
    pub kernel_normalized: f64,
    /// `τ² e^{2τ̃ dist} J / f̃²`.
    pub normalized: f64,
}

pub const ENERGY_TOL: f64 = 1e-9;

pub fn j_energy(obstacle: &Obstacle, spec: &SourceSpec, tau: f64) -> Result<EnergyValue> {
    j_energy_form(obstacle, spec, tau, EnergyForm::CurlCross)
}

pub fn j_energy_form(obstacle: &Obstacle, spec: &SourceSpec, tau: f64, form: EnergyForm) -> Result<EnergyValue> {
    let d = obstacle.signed_distance(&spec.p);
    if !(d > spec.eta) {
        return Err(Error::Overlap { clearance: d - spec.eta });
    }
    let field = ProbeField::new(spec, tau)?;
    let k = field.tau_tilde;
    let q = adaptive_surface_integral(obstacle, &spec.p, k, ENERGY_TOL, |n| {
        let red = field.reduced(&n.x).expect("boundary lies outside B");
        let w = (2.0 * (red.ln_v + k * d)).exp();
        let t = match form {
            EnergyForm::CrossCurl => n.nu.cross(&red.ma).dot(&red.curl),
            EnergyForm::CurlCross => -n.nu.dot(&red.curl.cross(&red.ma)),
        };
        w * t
    })?;
    let me = spec.mu * spec.eps;
    let kernel_normalized = q / me;
    let scale = field.scale();
    let value = SignedLog::from_f64(kernel_normalized) * SignedLog::from_ln(2.0 * scale.ln_abs - 2.0 * k * d);
    let dist = d - spec.eta;
    let normalized = value.sign
        * (value.ln_abs + 2.0 * tau.ln() + 2.0 * k * dist - 2.0 * field.ftilde.abs().ln()).exp();
    Ok(EnergyValue {
        tau,
        value,
        kernel_normalized,
        normalized,
    })
}

/// `2 J(τ)` as a semi-analytic stand-in for the indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tau: f64,
    pub indicator: SignedLog,
    /// `τ² e^{2τ̃ dist} 2J / f̃²`.
    pub normalized: f64,
    pub ftilde: f64,
}

/// Checks the hypotheses of the second-order asymptotics: finite
/// nondegenerate reflector, `|a·ν_q| ≠ 1` somewhere, long enough window.
pub fn check_hypotheses(obstacle: &Obstacle, spec: &SourceSpec) -> Result<OracleValue> {
    let oracle = laplace_oracle(obstacle, spec).map_err(|e| match e {
        Error::DegenerateHessian { det } => Error::HypothesisViolated(format!("det(S_B - S_D) = {det}")),
        Error::ContinuumReflector { count } => {
            Error::HypothesisViolated(format!("reflector is a continuum ({count} samples)"))
        }
        other => other,
    })?;
    if oracle.reflectors.iter().all(|r| r.directional <= 1e-12) {
        return Err(Error::HypothesisViolated("a is parallel to every reflector normal".into()));
    }
    let need = 2.0 * spec.slowness() * oracle.dist;
    if !(spec.horizon > need) {
        return Err(Error::HypothesisViolated(format!(
            "horizon {} does not exceed 2√(με) dist = {need}",
            spec.horizon
        )));
    }
    Ok(oracle)
}

pub fn normalized_indicator_prediction(obstacle: &Obstacle, spec: &SourceSpec, tau: f64) -> Result<Prediction> {
    check_hypotheses(obstacle, spec)?;
    let j = j_energy(obstacle, spec, tau)?;
    Ok(Prediction {
        tau,
        indicator: j.value * 2.0,
        normalized: 2.0 * j.normalized,
        ftilde: spec.pulse.laplace(tau),
    })
}

/// Predictions on a `τ` grid as an indicator series.
pub fn prediction_series(obstacle: &Obstacle, spec: &SourceSpec, taus: &[f64]) -> Result<crate::indicator::IndicatorSeries> {
    check_hypotheses(obstacle, spec)?;
    let points = taus
        .par_iter()
        .map(|&tau| {
            let j = j_energy(obstacle, spec, tau)?;
            Ok(crate::indicator::IndicatorPoint {
                tau,
                value: j.value * 2.0,
                ftilde: spec.pulse.laplace(tau),
                we_norm: 0.0,
                v_norm: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    crate::indicator::IndicatorSeries::new(points)
}

/// Outcome of the two-source curvature recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub r: [f64; 2],
    pub x: [f64; 2],
    pub lambda: [f64; 2],
    /// Mean curvature with `S = -dν`; a convex body seen from outside has
    /// `H < 0`.
    pub h: f64,
    /// Gauss curvature.
    pub k: f64,
    /// `H² < K`: not a real shape operator, usually quadrature noise.
    pub negative_discriminant: bool,
}

impl RecoveryResult {
    /// The mean curvature under the opposite sign convention.
    pub fn h_opposite(&self) -> f64 {
        -self.h
    }
}

/// Gauss and mean curvature at a known reflector `q` from the limits `R_j`
/// for balls of radius `η_j` centred `s_j` along the segment from `p` to
/// `q`: `X_j = det(λ_j I - S)` with `λ_j = 1/(d_p - s_j)`, and
/// `det(λI - S) = λ² - 2λH + K`.
pub fn recover_curvatures(
    r: [f64; 2],
    s: [f64; 2],
    d_p: f64,
    eta: [f64; 2],
    a_dot_nu: f64,
    eps: f64,
) -> Result<RecoveryResult> {
    if !(0.0 < s[0] && s[0] < d_p && 0.0 < s[1] && s[1] < d_p) {
        return Err(invalid("offsets must lie in (0, d_p)"));
    }
    let dir = 1.0 - a_dot_nu * a_dot_nu;
    if !(dir > 0.0) {
        return Err(invalid("a must not be parallel to the normal"));
    }
    if r.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("limits must be positive"));
    }
    let lambda = [1.0 / (d_p - s[0]), 1.0 / (d_p - s[1])];
    let mut x = [0.0; 2];
    for j in 0..2 {
        let c = PI / (2.0 * eps * eps) * (eta[j] / (d_p - s[j])).powi(2);
        x[j] = (dir / r[j]).powi(2) * c * c;
    }
    let det = -2.0 * (lambda[0] - lambda[1]);
    if det.abs() <= 1e-14 * lambda[0].abs().max(lambda[1].abs()) {
        return Err(Error::SingularSystem { lambda: lambda[0] });
    }
    let rhs = [x[0] - lambda[0].powi(2), x[1] - lambda[1].powi(2)];
    let h = (rhs[0] - rhs[1]) / det;
    let k = rhs[0] + 2.0 * lambda[0] * h;
    Ok(RecoveryResult {
        r,
        x,
        lambda,
        h,
        k,
        negative_discriminant: h * h < k * (1.0 - 1e-9),
    })
}

/// Exact limits `R_j` for two balls moved toward the reflector `q`; the
/// input of [`recover_curvatures`] when the data are noise free.
pub fn two_source_limits(
    obstacle: &Obstacle,
    spec: &SourceSpec,
    q: &SurfacePoint,
    s: [f64; 2],
    eta: [f64; 2],
) -> Result<[f64; 2]> {
    let toward = (q.q - spec.p).normalize();
    let mut out = [0.0; 2];
    for j in 0..2 {
        let sj = spec.with_ball(spec.p + toward * s[j], eta[j])?;
        out[j] = laplace_oracle(obstacle, &sj)?.value;
    }
    Ok(out)
}

/// `d(p + s d ω) = (1 - s) d` within `tol · d`, with `d = dist_at(p)`.
pub fn probe_direction<F: Fn(&Vec3) -> f64>(dist_at: F, p: &Vec3, omega: &Vec3, s: f64, tol: f64) -> bool {
    probe_residual(&dist_at, p, omega, s) <= tol
}

/// `(d(p + s d ω) - (1 - s) d) / d`, non-negative and zero exactly on
/// reflector directions.
pub fn probe_residual<F: Fn(&Vec3) -> f64>(dist_at: &F, p: &Vec3, omega: &Vec3, s: f64) -> f64 {
    let d = dist_at(p);
    let w = omega.normalize();
    (dist_at(&(p + w * (s * d))) - (1.0 - s) * d) / d
}

/// Vertices of the icosahedron subdivided `level` times:
/// `10·4^level + 2` unit vectors.
pub fn icosahedral_directions(level: usize) -> Vec<Vec3> {
    let (verts, _) = icosphere(level);
    verts
}

fn icosphere(level: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Result of a direction sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSweep {
    pub directions: Vec<Vec3>,
    pub residuals: Vec<f64>,
    /// Grid directions passing the probe at the grid tolerance.
    pub hits: Vec<bool>,
    /// Refined reflector directions, one per local minimum that refines to
    /// a zero residual.
    pub reflectors: Vec<Vec3>,
}

/// Direction sweep: residuals on an icosahedral grid, local minima
/// over grid neighbours, each refined by compass search on the sphere.
pub fn probe_sweep<F: Fn(&Vec3) -> f64 + Sync>(dist_at: F, p: &Vec3, level: usize, s: f64, tol: f64) -> Result<ProbeSweep> {
    if !(0.0 < s && s < 1.0) {
        return Err(invalid("s must lie in (0, 1)"));
    }
    let (dirs, faces) = icosphere(level);
    let residuals: Vec<f64> = dirs.par_iter().map(|w| probe_residual(&dist_at, p, w, s)).collect();
    let mut neighbours = vec![Vec::new(); dirs.len()];
    for f in &faces {
        for i in 0..3 {
            let (a, b) = (f[i], f[(i + 1) % 3]);
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
    }
    // Grid spacing sets the acceptance of a grid point: the residual grows
    // quadratically off the reflector.
    let spacing = (dirs[faces[0][0]] - dirs[faces[0][1]]).norm();
    let grid_tol = spacing * spacing;
    let hits = residuals.iter().map(|&r| r <= grid_tol).collect();
    let mut reflectors: Vec<Vec3> = Vec::new();
    for i in 0..dirs.len() {
        let is_min = neighbours[i].iter().all(|&j| residuals[i] < residuals[j] || (residuals[i] == residuals[j] && i < j));
        if !is_min || residuals[i] > 4.0 * grid_tol {
            continue;
        }
        let (w, r) = refine_direction(&dist_at, p, &dirs[i], s, spacing);
        if r <= tol && !reflectors.iter().any(|o: &Vec3| (o - w).norm() < 1e-4) {
            reflectors.push(w);
        }
    }
    Ok(ProbeSweep {
        directions: dirs,
        residuals,
        hits,
        reflectors,
    })
}

fn refine_direction<F: Fn(&Vec3) -> f64>(dist_at: &F, p: &Vec3, start: &Vec3, s: f64, spacing: f64) -> (Vec3, f64) {
    let mut w = *start;
    let mut best = probe_residual(dist_at, p, &w, s);
    let mut step = spacing;
    while step > 1e-12 {
        let [e1, e2] = crate::geometry::orthonormal_tangents(&w);
        let mut moved = false;
        for dir in [e1, -e1, e2, -e2, (e1 + e2) / 2f64.sqrt(), -(e1 + e2) / 2f64.sqrt(), (e1 - e2) / 2f64.sqrt(), (e2 - e1) / 2f64.sqrt()] {
            let cand = (w + dir * step).normalize();
            let r = probe_residual(dist_at, p, &cand, s);
            if r < best {
                best = r;
                w = cand;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (w, best)
}

/// Unit normal `-ω` convention check: reflector directions seen from `p`.
pub fn true_reflector_directions(obstacle: &Obstacle, p: &Vec3) -> Result<Vec<Vec3>> {
    Ok(obstacle
        .first_reflector(p, REFLECTOR_TOL)?
        .iter()
        .map(|q| (q.q - p).normalize())
        .collect())
}

/// Shape operator of the observation sphere minus that of `∂D` at `q`.
pub fn hessian_difference(obstacle: &Obstacle, q: &SurfacePoint, d: f64) -> Mat2 {
    observation_sphere_shape(d) - obstacle.shape_operator(q)
}
