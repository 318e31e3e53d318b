//! Current pulses `f(t)`, their truncated Laplace transforms `f̃(τ)` and the
//! source specification `J = f(t) χ_B(x) a`.

use nalgebra::{Complex, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Obstacle;
use crate::quadrature::gauss_legendre;
use crate::Vec3;

/// Time profile of the pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PulseShape {
    /// `t sin ωt` on `[0, ε_cut]`, then a polynomial tail reaching zero with
    /// zero slope at `t_off`; zero afterwards.
    ///
    /// With `neutral` the tail also makes `∫ f dt = 0`, so no static charge
    /// is left on `∂B` once the current stops.
    RampedSine {
        omega: f64,
        eps_cut: f64,
        t_off: f64,
        neutral: bool,
    },
    /// `t^power` (power ≥ 1).
    PolynomialRamp { power: f64 },
    /// Linear interpolation of `(t, value)` samples.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

/// Pulse on the observation window `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PulseData", into = "PulseData")]
pub struct Pulse {
    pub shape: PulseShape,
    pub amplitude: f64,
    pub horizon: f64,
    /// Tail coefficients in powers of `t - eps_cut` (ramped sine only).
    tail: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PulseData {
    shape: PulseShape,
    amplitude: f64,
    horizon: f64,
}

impl From<PulseData> for Pulse {
    fn from(d: PulseData) -> Self {
        let tail = match &d.shape {
            PulseShape::RampedSine {
                omega,
                eps_cut,
                t_off,
                neutral,
            } if eps_cut < t_off => ramped_sine_tail(*omega, *eps_cut, *t_off, *neutral),
            _ => Vec::new(),
        };
        Self {
            shape: d.shape,
            amplitude: d.amplitude,
            horizon: d.horizon,
            tail,
        }
    }
}

impl From<Pulse> for PulseData {
    fn from(p: Pulse) -> Self {
        Self {
            shape: p.shape,
            amplitude: p.amplitude,
            horizon: p.horizon,
        }
    }
}

impl Pulse {
    pub fn ramped_sine(omega: f64, eps_cut: f64, t_off: f64, neutral: bool, horizon: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(invalid("pulse omega must be positive"));
        }
        if !(eps_cut > 0.0 && eps_cut < t_off && t_off <= horizon) {
            return Err(invalid(format!(
                "need 0 < eps_cut < t_off <= T, got eps_cut={eps_cut}, t_off={t_off}, T={horizon}"
            )));
        }
        let shape = PulseShape::RampedSine {
            omega,
            eps_cut,
            t_off,
            neutral,
        };
        let tail = ramped_sine_tail(omega, eps_cut, t_off, neutral);
        Ok(Self {
            shape,
            amplitude: 1.0,
            horizon,
            tail,
        })
    }

    /// Pure `t sin ωt` on the whole window (no tail).
    pub fn pure_ramped_sine(omega: f64, horizon: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(invalid("pulse omega must be positive"));
        }
        Ok(Self {
            shape: PulseShape::RampedSine {
                omega,
                eps_cut: horizon,
                t_off: horizon,
                neutral: false,
            },
            amplitude: 1.0,
            horizon,
            tail: Vec::new(),
        })
    }

    pub fn polynomial_ramp(power: f64, horizon: f64) -> Result<Self> {
        if !(power >= 1.0) {
            return Err(invalid("polynomial ramp power must be >= 1"));
        }
        Ok(Self {
            shape: PulseShape::PolynomialRamp { power },
            amplitude: 1.0,
            horizon,
            tail: Vec::new(),
        })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(invalid("tabulated pulse needs >= 2 matching samples"));
        }
        if times[0] != 0.0 || values[0] != 0.0 {
            return Err(invalid("tabulated pulse must start at (0, 0)"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("tabulated times must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tabulated values must be finite"));
        }
        let p = Self {
            shape: PulseShape::Tabulated { times, values },
            amplitude: 1.0,
            horizon,
            tail: Vec::new(),
        };
        if !p.discrete_h1_norm().is_finite() {
            return Err(invalid("tabulated pulse has infinite discrete H1 norm"));
        }
        Ok(p)
    }

    /// Reads a `t,value` CSV (optional header line).
    pub fn from_csv(text: &str, horizon: f64) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(Error::Config(format!("pulse table line {}: expected t,value", ln + 1)));
            };
            match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                (Ok(t), Ok(v)) => {
                    times.push(t);
                    values.push(v);
                }
                _ if times.is_empty() => continue,
                _ => return Err(Error::Config(format!("pulse table line {}: not numeric", ln + 1))),
            }
        }
        Self::tabulated(times, values, horizon)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn zero(horizon: f64) -> Self {
        Self::pure_ramped_sine(1.0, horizon)
            .expect("valid")
            .with_amplitude(0.0)
    }

    /// `f(t)`; errors outside `[0, T]`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::OutOfWindow {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.eval(t))
    }

    /// Unchecked `f(t)`; zero outside `[0, T]`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 || t > self.horizon * (1.0 + 1e-12) || self.amplitude == 0.0 {
            return 0.0;
        }
        self.amplitude * self.shape_value(t)
    }

    fn shape_value(&self, t: f64) -> f64 {
        match &self.shape {
            PulseShape::RampedSine {
                omega,
                eps_cut,
                t_off,
                ..
            } => {
                if t <= *eps_cut {
                    t * (omega * t).sin()
                } else if t < *t_off {
                    let s = t - eps_cut;
                    self.tail.iter().rev().fold(0.0, |acc, c| acc * s + c)
                } else {
                    0.0
                }
            }
            PulseShape::PolynomialRamp { power } => t.powf(*power),
            PulseShape::Tabulated { times, values } => {
                if t >= *times.last().unwrap() {
                    return *values.last().unwrap();
                }
                let k = times.partition_point(|&x| x <= t).saturating_sub(1);
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    /// Breakpoints where `f` is not smooth; quadrature panels align to them.
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        match &self.shape {
            PulseShape::RampedSine { eps_cut, t_off, .. } => {
                b.push(eps_cut.min(self.horizon));
                b.push(t_off.min(self.horizon));
            }
            PulseShape::PolynomialRamp { .. } => {}
            PulseShape::Tabulated { times, .. } => {
                b.extend(times.iter().copied().filter(|&t| t < self.horizon));
            }
        }
        b.push(self.horizon);
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
        b
    }

    /// `f̃(τ) = ∫_0^T e^{-τt} f(t) dt`.
    pub fn laplace(&self, tau: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut start = 0.0;
        if let PulseShape::RampedSine { omega, eps_cut, .. } = &self.shape {
            let e = eps_cut.min(self.horizon);
            total += ramped_sine_head(*omega, e, tau);
            start = e;
        }
        let bps: Vec<f64> = self.breakpoints().into_iter().filter(|&b| b >= start).collect();
        let rule = gauss_legendre(16);
        for w in bps.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 0.0 {
                continue;
            }
            // Panels of width <= 1/τ resolve the exponential; stop once the
            // weight e^{-τ(t-start)} is below 1e-300 relative.
            let cutoff = start + 750.0 / tau.max(1e-300);
            if a >= cutoff {
                break;
            }
            let b = b.min(cutoff);
            let panels = (((b - a) * tau).ceil() as usize).clamp(1, 100_000);
            for (lo, hi) in graded_panels(a, b, panels) {
                let h = hi - lo;
                for &(x, wq) in &rule {
                    let t = lo + 0.5 * h * (x + 1.0);
                    total += 0.5 * h * wq * (-tau * t).exp() * self.shape_value(t);
                }
            }
        }
        self.amplitude * total
    }

    /// `Σ (Δf)²/Δt` over the samples (tabulated), or over a fine grid.
    pub fn discrete_h1_norm(&self) -> f64 {
        match &self.shape {
            PulseShape::Tabulated { times, values } => times
                .windows(2)
                .zip(values.windows(2))
                .map(|(t, v)| (v[1] - v[0]).powi(2) / (t[1] - t[0]))
                .sum::<f64>()
                .sqrt(),
            _ => {
                let n = 4096;
                let dt = self.horizon / n as f64;
                (0..n)
                    .map(|k| {
                        let a = self.eval(k as f64 * dt);
                        let b = self.eval((k + 1) as f64 * dt);
                        (b - a).powi(2) / dt
                    })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// `∫_0^T f dt` (net charge per unit `χ_B a`).
    pub fn integral(&self) -> f64 {
        let bps = self.breakpoints();
        let rule = gauss_legendre(24);
        let mut s = 0.0;
        for w in bps.windows(2) {
            for (lo, hi) in graded_panels(w[0], w[1], 16) {
                let h = hi - lo;
                for &(x, wq) in &rule {
                    s += 0.5 * h * wq * self.eval(lo + 0.5 * h * (x + 1.0));
                }
            }
        }
        s
    }

    /// Large-τ leading term `2τω/(τ²+ω²)²` of the ramped sine.
    pub fn leading_laplace(&self, tau: f64) -> Option<f64> {
        match &self.shape {
            PulseShape::RampedSine { omega, .. } => {
                Some(self.amplitude * 2.0 * tau * omega / (tau * tau + omega * omega).powi(2))
            }
            _ => None,
        }
    }
}

/// Equal panels on `[a, b]` with the first one split geometrically toward
/// `a`, where algebraic endpoint singularities of `f` live.
fn graded_panels(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels + 24);
    let mut hi = a + h;
    for _ in 0..24 {
        let lo = a + 0.25 * (hi - a);
        out.push((lo, hi));
        hi = lo;
    }
    out.push((a, hi));
    for k in 1..panels {
        out.push((a + h * k as f64, a + h * (k + 1) as f64));
    }
    out
}

/// `∫_0^ε e^{-τt} t sin ωt dt = Im[(1 - e^{-zε}(1 + zε)) / z²]`, `z = τ - iω`.
fn ramped_sine_head(omega: f64, eps: f64, tau: f64) -> f64 {
    let z = Complex::new(tau, -omega);
    ((1.0 - (-z * eps).exp() * (1.0 + z * eps)) / (z * z)).im
}

fn ramped_sine_tail(omega: f64, eps: f64, t_off: f64, neutral: bool) -> Vec<f64> {
    let f0 = eps * (omega * eps).sin();
    let f1 = (omega * eps).sin() + omega * eps * (omega * eps).cos();
    let l = t_off - eps;
    if !neutral {
        // Cubic Hermite to (L, 0, 0).
        let c2 = -(3.0 * f0 + 2.0 * f1 * l) / (l * l);
        let c3 = (2.0 * f0 + f1 * l) / (l * l * l);
        return vec![f0, f1, c2, c3];
    }
    // ∫_0^ε t sin ωt dt
    let head = (omega * eps).sin() / (omega * omega) - eps * (omega * eps).cos() / omega;
    // Unknowns c2, c3, c4:
    //   g(L) = 0, g'(L) = 0, ∫_0^L g = -head.
    let m = Matrix3::new(
        l.powi(2),
        l.powi(3),
        l.powi(4),
        2.0 * l,
        3.0 * l.powi(2),
        4.0 * l.powi(3),
        l.powi(3) / 3.0,
        l.powi(4) / 4.0,
        l.powi(5) / 5.0,
    );
    let rhs = Vector3::new(-f0 - f1 * l, -f1, -head - f0 * l - f1 * l * l / 2.0);
    let c = m.lu().solve(&rhs).expect("tail system is regular for L > 0");
    vec![f0, f1, c[0], c[1], c[2]]
}

/// `J = f(t) χ_B(x) a` plus material constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub p: Vec3,
    pub eta: f64,
    pub a: Vec3,
    pub pulse: Pulse,
    pub horizon: f64,
    pub gamma: f64,
    pub eps: f64,
    pub mu: f64,
}

impl SourceSpec {
    pub fn new(p: Vec3, eta: f64, a: Vec3, pulse: Pulse, gamma: f64, eps: f64, mu: f64) -> Result<Self> {
        let horizon = pulse.horizon;
        if !(eta > 0.0) {
            return Err(invalid("ball radius eta must be positive"));
        }
        if !(horizon > 0.0) {
            return Err(invalid("horizon T must be positive"));
        }
        if !(eps > 0.0 && mu > 0.0) {
            return Err(invalid("eps and mu must be positive"));
        }
        let n = a.norm();
        if !((n - 1.0).abs() <= 1e-12) {
            return Err(invalid(format!("direction a must be a unit vector (|a| = {n})")));
        }
        Ok(Self {
            p,
            eta,
            a,
            pulse,
            horizon,
            gamma,
            eps,
            mu,
        })
    }

    /// `√(με)`, the slowness.
    pub fn slowness(&self) -> f64 {
        (self.mu * self.eps).sqrt()
    }

    pub fn speed(&self) -> f64 {
        1.0 / self.slowness()
    }

    /// `τ̃ = τ √(με)`.
    pub fn tau_tilde(&self, tau: f64) -> f64 {
        tau * self.slowness()
    }

    pub fn with_direction(&self, a: Vec3) -> Result<Self> {
        Self::new(self.p, self.eta, a, self.pulse.clone(), self.gamma, self.eps, self.mu)
    }

    pub fn with_ball(&self, p: Vec3, eta: f64) -> Result<Self> {
        Self::new(p, eta, self.a, self.pulse.clone(), self.gamma, self.eps, self.mu)
    }

    pub fn with_pulse(&self, pulse: Pulse) -> Result<Self> {
        Self::new(self.p, self.eta, self.a, pulse, self.gamma, self.eps, self.mu)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectorCheck {
    pub q: Vec3,
    pub a_dot_nu: f64,
    /// `|a·ν_q| ≠ 1`.
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDiagnostics {
    /// `dist(D, B) = d_∂D(p) - η`.
    pub dist: f64,
    pub d_boundary: f64,
    /// `2 √(με) dist(D, B)`.
    pub required_horizon: f64,
    pub window_ok: bool,
    pub reflectors: Vec<ReflectorCheck>,
    /// At least one reflector with `|a·ν_q| ≠ 1`.
    pub directivity_ok: bool,
    /// Observed decay exponent of `|f̃|` at large τ.
    pub observed_gamma: f64,
    pub gamma_consistent: bool,
    pub warnings: Vec<String>,
}

/// Checks `B̄ ∩ D̄ = ∅`, the horizon condition and the directivity condition.
pub fn validate_source(spec: &SourceSpec, obstacle: &Obstacle) -> Result<SourceDiagnostics> {
    let sd = obstacle.signed_distance(&spec.p);
    let dist = sd - spec.eta;
    if !(dist > 0.0) {
        return Err(Error::Overlap { clearance: dist });
    }
    let required_horizon = 2.0 * spec.slowness() * dist;
    let window_ok = spec.horizon > required_horizon;
    let mut warnings = Vec::new();
    if !window_ok {
        warnings.push(format!(
            "T = {} does not exceed 2 sqrt(mu eps) dist = {required_horizon}",
            spec.horizon
        ));
    }
    let reflectors: Vec<ReflectorCheck> = match obstacle.first_reflector(&spec.p, 1e-9) {
        Ok(r) => r
            .iter()
            .map(|sp| {
                let a_dot_nu = spec.a.dot(&sp.nu);
                ReflectorCheck {
                    q: sp.q,
                    a_dot_nu,
                    nondegenerate: (a_dot_nu.abs() - 1.0).abs() > 1e-9,
                }
            })
            .collect(),
        Err(e) => {
            warnings.push(format!("first reflector: {e}"));
            Vec::new()
        }
    };
    let directivity_ok = reflectors.iter().any(|r| r.nondegenerate);
    if !directivity_ok {
        warnings.push("every first reflection point has |a . nu_q| = 1".to_string());
    }
    let observed_gamma = {
        let (t1, t2) = (200.0, 400.0);
        let (f1, f2) = (spec.pulse.laplace(t1).abs(), spec.pulse.laplace(t2).abs());
        if f1 > 0.0 && f2 > 0.0 {
            -(f2.ln() - f1.ln()) / (t2 / t1).ln()
        } else {
            f64::INFINITY
        }
    };
    let gamma_consistent = spec.gamma >= 1.5 && spec.gamma + 0.1 >= observed_gamma;
    if !gamma_consistent {
        warnings.push(format!(
            "gamma = {} inconsistent with observed decay exponent {observed_gamma:.3}",
            spec.gamma
        ));
    }
    Ok(SourceDiagnostics {
        dist,
        d_boundary: sd,
        required_horizon,
        window_ok,
        reflectors,
        directivity_ok,
        observed_gamma,
        gamma_consistent,
        warnings,
    })
}
