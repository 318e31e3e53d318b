//! Closed-form free-space probe field `V` solving
//! `(1/με) ∇×∇×V + τ² V + f = 0` with `f = -(τ/ε) f̃(τ) χ_B a`.
//!
//! Outside `B` the field is `V = K f̃ v M a` with
//! `K = μτ φ(τ̃η)/τ̃³`, `v = e^{-τ̃r}/r`, `M = A I - B ω⊗ω`. Inside `B` the
//! radial potential `U` solving `(Δ - τ̃²) U = -χ_B` is also elementary, so
//! `V = μτ f̃ (U a - ∇²U a / τ̃²)` is exact everywhere.
//!
//! `K` grows like `e^{τ̃η}` and `v` decays like `e^{-τ̃r}`; both are kept as
//! logarithms and only combined at the end.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::logscale::SignedLog;
use crate::source::SourceSpec;
use crate::{Mat3, Vec3};

/// `φ(ξ) = ξ cosh ξ - sinh ξ`.
pub fn phi(xi: f64) -> f64 {
    if xi.abs() < 0.5 {
        phi_series(xi)
    } else if xi.abs() > 20.0 {
        let s = xi.signum();
        let x = xi.abs();
        s * 0.5 * ((x - 1.0) * x.exp() + (x + 1.0) * (-x).exp())
    } else {
        xi * xi.cosh() - xi.sinh()
    }
}

/// `ln φ(ξ)` for `ξ > 0`, finite far beyond the overflow of `φ`.
pub fn ln_phi(xi: f64) -> f64 {
    if xi <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if xi < 20.0 {
        phi(xi).ln()
    } else {
        xi + (0.5 * ((xi - 1.0) + (xi + 1.0) * (-2.0 * xi).exp())).ln()
    }
}

/// `Σ_k 2k ξ^{2k+1}/(2k+1)!`, the Taylor series of `φ`.
fn phi_series(xi: f64) -> f64 {
    let x2 = xi * xi;
    let mut term = xi * x2 / 6.0; // ξ³/3! with k = 1 factor applied below
    let mut sum = 0.0;
    for k in 1..12 {
        sum += 2.0 * k as f64 * term;
        let n = 2 * k + 1;
        term *= x2 / ((n + 1) * (n + 2)) as f64;
    }
    sum
}

/// `(1/4π) ∫_B e^{-τ̃|x-y|}/|x-y| dy = φ(τ̃η)/τ̃³ · e^{-τ̃|x-p|}/|x-p|`.
pub fn mean_value_kernel(x: &Vec3, spec: &SourceSpec, tau: f64) -> Result<f64> {
    let r = (x - spec.p).norm();
    if r <= spec.eta {
        return Err(Error::InsideBall {
            distance: r,
            radius: spec.eta,
        });
    }
    let k = spec.tau_tilde(tau);
    Ok((ln_phi(k * spec.eta) - 3.0 * k.ln() - k * r - r.ln()).exp())
}

/// Exterior field at one point with the common factor `K f̃ v(x)` removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedField {
    pub r: f64,
    pub omega: Vec3,
    /// `ln v(x) = -τ̃ r - ln r`.
    pub ln_v: f64,
    /// `M(x;p) a`.
    pub ma: Vec3,
    /// `∇×V / (K f̃ v)`.
    pub curl: Vec3,
    /// `V′ / (K f̃ v)`, with `V′_ij = ∂V_i/∂x_j`.
    pub jacobian: Mat3,
}

/// `V(·, τ)` for a fixed source and `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeField {
    pub spec: SourceSpec,
    pub tau: f64,
    pub tau_tilde: f64,
    pub ftilde: f64,
    /// `ln K(τ)`.
    pub ln_k: f64,
}

impl ProbeField {
    pub fn new(spec: &SourceSpec, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(crate::error::invalid("tau must be positive"));
        }
        let k = spec.tau_tilde(tau);
        let ln_k = spec.mu.ln() + tau.ln() + ln_phi(k * spec.eta) - 3.0 * k.ln();
        Ok(Self {
            spec: spec.clone(),
            tau,
            tau_tilde: k,
            ftilde: spec.pulse.laplace(tau),
            ln_k,
        })
    }

    /// Same field with `f̃` replaced, e.g. set to 1 for normalized studies.
    pub fn with_ftilde(mut self, ftilde: f64) -> Self {
        self.ftilde = ftilde;
        self
    }

    /// `K(τ) f̃(τ)` in log form.
    pub fn scale(&self) -> SignedLog {
        SignedLog::from_ln(self.ln_k) * self.ftilde
    }

    pub fn k(&self) -> f64 {
        self.ln_k.exp()
    }

    fn check_outside(&self, x: &Vec3) -> Result<f64> {
        let r = (x - self.spec.p).norm();
        if r <= self.spec.eta {
            return Err(Error::InsideBall {
                distance: r,
                radius: self.spec.eta,
            });
        }
        Ok(r)
    }

    /// `A(r)` and `B(r)`.
    pub fn coefficients(&self, r: f64) -> (f64, f64) {
        let k = self.tau_tilde;
        let g = (1.0 / r + 1.0 / (k * r * r)) / k;
        (1.0 + g, 1.0 + 3.0 * g)
    }

    pub fn reduced(&self, x: &Vec3) -> Result<ReducedField> {
        let r = self.check_outside(x)?;
        let k = self.tau_tilde;
        let a = self.spec.a;
        let w = (x - self.spec.p) / r;
        let wa = w.dot(&a);
        let (ca, cb) = self.coefficients(r);
        let ma = a * ca - w * (cb * wa);
        let curl = -k * (1.0 + 1.0 / (k * r)) * w.cross(&a);

        let c = (1.0 / (r * r) + 2.0 / (k * r * r * r)) / k;
        let b_over_r = cb / r;
        let ww = w * w.transpose();
        let d_ma = (ww * (3.0 * wa) - a * w.transpose()) * c
            - (Mat3::identity() * wa - ww * (2.0 * wa) + w * a.transpose()) * b_over_r;
        let jacobian = d_ma - ma * w.transpose() * (k + 1.0 / r);
        Ok(ReducedField {
            r,
            omega: w,
            ln_v: -k * r - r.ln(),
            ma,
            curl,
            jacobian,
        })
    }

    fn factor(&self, ln_v: f64) -> f64 {
        self.ftilde * (self.ln_k + ln_v).exp()
    }

    /// `V(x)` for `|x - p| > η`.
    pub fn value(&self, x: &Vec3) -> Result<Vec3> {
        let red = self.reduced(x)?;
        Ok(red.ma * self.factor(red.ln_v))
    }

    /// `∇×V(x)` for `|x - p| > η`.
    pub fn curl(&self, x: &Vec3) -> Result<Vec3> {
        let red = self.reduced(x)?;
        Ok(red.curl * self.factor(red.ln_v))
    }

    /// `V′(x)` for `|x - p| > η`.
    pub fn jacobian(&self, x: &Vec3) -> Result<Mat3> {
        let red = self.reduced(x)?;
        Ok(red.jacobian * self.factor(red.ln_v))
    }

    /// Radial potential `U`, `U′/r` and `U″` for `r < η`.
    fn interior_potential(&self, r: f64) -> (f64, f64, f64) {
        let k = self.tau_tilde;
        let eta = self.spec.eta;
        // U = 1/κ² - c e^{-κη} g(r), g = sinh(κr)/r, c = (1 + κη)/κ³.
        // The factor e^{-κη} is folded into g so large κη stays finite.
        let c = (1.0 + k * eta) / (k * k * k);
        let kr = k * r;
        let (g, gp_r) = if r == 0.0 {
            let damp = (-k * eta).exp();
            (damp * k, damp * k * k * k / 3.0)
        } else if kr < 20.0 {
            let damp = (-k * eta).exp();
            (damp * kr.sinh() / r, damp * phi(kr) / (r * r * r))
        } else {
            let sh = 0.5 * ((k * (r - eta)).exp() - (-k * (r + eta)).exp());
            let ch = 0.5 * ((k * (r - eta)).exp() + (-k * (r + eta)).exp());
            (sh / r, (kr * ch - sh) / (r * r * r))
        };
        // g″ = κ² g - 2 g′/r
        (1.0 / (k * k) - c * g, -c * gp_r, -c * (k * k * g - 2.0 * gp_r))
    }

    /// `V(x)` anywhere: closed form outside `B`, exact interior form inside.
    pub fn value_any(&self, x: &Vec3) -> Vec3 {
        let r = (x - self.spec.p).norm();
        if r > self.spec.eta {
            return self.value(x).expect("outside");
        }
        let k = self.tau_tilde;
        let a = self.spec.a;
        let (u, upr, upp) = self.interior_potential(r);
        // ∇²U a = U″ ω(ω·a) + (U′/r)(a - ω(ω·a))
        let hess_a = if r == 0.0 {
            a * upr
        } else {
            let w = (x - self.spec.p) / r;
            let wa = w.dot(&a);
            w * (upp * wa) + (a - w * wa) * upr
        };
        (a * u - hess_a / (k * k)) * (self.spec.mu * self.tau * self.ftilde)
    }

    /// `∇×V(x)` anywhere.
    pub fn curl_any(&self, x: &Vec3) -> Vec3 {
        let r = (x - self.spec.p).norm();
        if r > self.spec.eta {
            return self.curl(x).expect("outside");
        }
        if r == 0.0 {
            return Vec3::zeros();
        }
        let (_, upr, _) = self.interior_potential(r);
        // ∇×(U a) = ∇U × a = U′ ω × a
        (x - self.spec.p).cross(&self.spec.a) * (upr * self.spec.mu * self.tau * self.ftilde)
    }

    /// The right-hand side `f(x, τ)`.
    pub fn forcing(&self, x: &Vec3) -> Vec3 {
        if (x - self.spec.p).norm() < self.spec.eta {
            -self.spec.a * (self.tau / self.spec.eps * self.ftilde)
        } else {
            Vec3::zeros()
        }
    }

    /// Volume `|B|`.
    pub fn ball_volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.spec.eta.powi(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_on;
    use crate::source::Pulse;
    use approx::assert_relative_eq;

    fn spec(a: Vec3) -> SourceSpec {
        let pulse = Pulse::ramped_sine(1.0, 2.0, 3.5, true, 4.0).unwrap();
        SourceSpec::new(Vec3::new(3.0, 0.0, 0.0), 0.25, a, pulse, 3.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(0.0), 0.0);
        assert_relative_eq!(phi(1.0), (-1.0f64).exp(), max_relative = 1e-14);
        for xi in [0.1, 0.49, 0.51, 5.0, 19.9, 20.1] {
            let direct = xi * f64::cosh(xi) - f64::sinh(xi);
            assert_relative_eq!(phi(xi), direct, max_relative = 1e-9);
        }
        assert_relative_eq!(phi(1e-3), 1e-9 / 3.0, max_relative = 1e-6);
        let xi = 600.0;
        assert!((ln_phi(xi) - (xi.ln() + xi - 2f64.ln())).abs() < 2e-3);
        assert!(ln_phi(2000.0).is_finite());
    }

    #[test]
    fn mean_value_kernel_substitution() {
        let mut s = spec(Vec3::z());
        s.p = Vec3::zeros();
        let x = Vec3::new(2.0, 0.0, 0.0);
        let got = mean_value_kernel(&x, &s, 4.0).unwrap();
        assert_relative_eq!(got, phi(1.0) / 64.0 * (-8.0f64).exp() / 2.0, max_relative = 1e-13);
        assert!(matches!(
            mean_value_kernel(&Vec3::new(0.1, 0.0, 0.0), &s, 4.0),
            Err(Error::InsideBall { .. })
        ));
        // Small τ̃: |B|/(4π r)
        let got = mean_value_kernel(&x, &s, 1e-4).unwrap();
        assert_relative_eq!(got, 0.25f64.powi(3) / 3.0 / 2.0, max_relative = 1e-3);
    }

    #[test]
    fn parallel_and_perpendicular_directions() {
        let s = spec(Vec3::z());
        let pf = ProbeField::new(&s, 5.0).unwrap();
        let x = Vec3::new(1.0, 0.0, 0.0);
        let v = pf.value(&x).unwrap();
        let r = 2.0;
        let (ca, cb) = pf.coefficients(r);
        let vv = (-pf.tau_tilde * r).exp() / r;
        assert_relative_eq!(v, Vec3::z() * (pf.k() * pf.ftilde * vv * ca), max_relative = 1e-13);
        let x = Vec3::new(3.0, 0.0, -2.0);
        let v = pf.value(&x).unwrap();
        assert_relative_eq!(v, Vec3::z() * (pf.k() * pf.ftilde * vv * (ca - cb)), max_relative = 1e-13);
        assert_eq!(pf.curl(&x).unwrap(), Vec3::zeros());
    }

    fn fd_jacobian(f: impl Fn(&Vec3) -> Vec3, x: &Vec3, h: f64) -> Mat3 {
        let mut j = Mat3::zeros();
        for c in 0..3 {
            let mut e = Vec3::zeros();
            e[c] = h;
            let d = (f(&(x + e)) - f(&(x - e))) / (2.0 * h);
            j.set_column(c, &d);
        }
        j
    }

    fn curl_of(j: &Mat3) -> Vec3 {
        Vec3::new(j[(2, 1)] - j[(1, 2)], j[(0, 2)] - j[(2, 0)], j[(1, 0)] - j[(0, 1)])
    }

    #[test]
    fn curl_and_jacobian_match_finite_differences() {
        let a = Vec3::new(0.3, -0.5, 0.8).normalize();
        let s = spec(a);
        for tau in [2.0, 7.0] {
            let pf = ProbeField::new(&s, tau).unwrap();
            for x in [
                Vec3::new(1.0, 0.4, -0.2),
                Vec3::new(3.2, 0.5, 0.7),
                Vec3::new(2.5, -0.9, 0.1),
            ] {
                let jac = pf.jacobian(&x).unwrap();
                let fd = fd_jacobian(|y| pf.value(y).unwrap(), &x, 1e-4);
                assert!((jac - fd).norm() <= 1e-5 * jac.norm(), "tau={tau} x={x:?}");
                let curl = pf.curl(&x).unwrap();
                assert!((curl - curl_of(&fd)).norm() <= 1e-6 * curl.norm());
                assert!(curl.dot(&s.a).abs() <= 1e-14 * curl.norm());
                assert!(curl.dot(&(x - s.p)).abs() <= 1e-14 * curl.norm() * 3.0);
            }
        }
    }

    /// Brute-force `V0` by ball quadrature of the Yukawa kernel.
    fn yukawa_ball(x: &Vec3, p: &Vec3, eta: f64, k: f64) -> f64 {
        // Spherical coordinates about x: exact angular integral of the
        // kernel over the chord, radial Gauss–Legendre in |y - x|.
        let dist = (x - p).norm();
        let mut s = 0.0;
        for (rho, w) in gauss_legendre_on(60, (dist - eta).max(0.0), dist + eta) {
            // Fraction of the sphere |y - x| = rho inside B.
            let cos_max = ((rho * rho + dist * dist - eta * eta) / (2.0 * rho * dist)).clamp(-1.0, 1.0);
            let area = 2.0 * PI * rho * rho * (1.0 - cos_max);
            s += w * area * (-k * rho).exp() / rho;
        }
        s / (4.0 * PI)
    }

    #[test]
    fn closed_form_matches_ball_quadrature() {
        let a = Vec3::new(0.6, 0.0, 0.8);
        let s = spec(a);
        let pf = ProbeField::new(&s, 3.0).unwrap();
        let k = pf.tau_tilde;
        let pre = s.mu * pf.tau * pf.ftilde;
        for x in [Vec3::new(1.5, 0.3, 0.2), Vec3::new(3.0, 0.0, 0.6)] {
            // V = pre (U a - ∇(∇·(U a))/κ²) with U from quadrature, FD for ∇∇.
            let u = |y: &Vec3| yukawa_ball(y, &s.p, s.eta, k);
            let hess_at = |h: f64| {
                let mut m = Mat3::zeros();
                for i in 0..3 {
                    for j in 0..3 {
                        let mut ei = Vec3::zeros();
                        ei[i] = h;
                        let mut ej = Vec3::zeros();
                        ej[j] = h;
                        m[(i, j)] = (u(&(x + ei + ej)) - u(&(x + ei - ej)) - u(&(x - ei + ej))
                            + u(&(x - ei - ej)))
                            / (4.0 * h * h);
                    }
                }
                m
            };
            // One Richardson step removes the O(h²) stencil error.
            let hess = (hess_at(2e-3) * 4.0 - hess_at(4e-3)) / 3.0;
            let brute = (a * u(&x) - hess * a / (k * k)) * pre;
            let v = pf.value(&x).unwrap();
            assert!((v - brute).norm() <= 1e-5 * v.norm(), "{v:?} vs {brute:?}");
        }
    }

    #[test]
    fn interior_form_is_continuous_and_solves_the_equation() {
        let a = Vec3::new(0.0, 0.6, 0.8);
        let s = spec(a);
        for tau in [1.0, 8.0, 60.0] {
            let pf = ProbeField::new(&s, tau).unwrap();
            let dir = Vec3::new(0.3, -0.2, 0.9).normalize();
            let inside = pf.value_any(&(s.p + dir * (s.eta * (1.0 - 1e-9))));
            let outside = pf.value(&(s.p + dir * (s.eta * (1.0 + 1e-9)))).unwrap();
            // Tangential part continuous; normal part jumps by μτf̃/τ̃² (ω·a).
            let jump = dir * (s.mu * pf.tau * pf.ftilde / pf.tau_tilde.powi(2) * dir.dot(&a));
            assert!((inside - outside - jump).norm() <= 1e-6 * outside.norm(), "tau={tau}");
            let ci = pf.curl_any(&(s.p + dir * (s.eta * (1.0 - 1e-9))));
            let co = pf.curl(&(s.p + dir * (s.eta * (1.0 + 1e-9)))).unwrap();
            assert!((ci - co).norm() <= 1e-6 * co.norm());
        }
        // Centre and a tiny radius agree.
        let pf = ProbeField::new(&s, 4.0).unwrap();
        let c = pf.value_any(&s.p);
        let n = pf.value_any(&(s.p + Vec3::new(1e-7, 0.0, 0.0)));
        assert!((c - n).norm() <= 1e-9 * c.norm());
        // Volume-averaged residual inside B: (1/με)∇×∇×V + τ²V + f at an interior point.
        let x = s.p + Vec3::new(0.05, -0.07, 0.03);
        let h = 1e-3;
        let curl_curl = curl_of(&fd_jacobian(|y| pf.curl_any(y), &x, h));
        let res = curl_curl / (s.mu * s.eps) + pf.value_any(&x) * pf.tau.powi(2) + pf.forcing(&x);
        assert!(res.norm() <= 1e-6 * pf.forcing(&x).norm(), "residual {res:?}");
    }

    #[test]
    fn log_domain_scale_survives_large_tau() {
        let s = spec(Vec3::z());
        let pf = ProbeField::new(&s, 3000.0).unwrap();
        let red = pf.reduced(&Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(pf.scale().ln_abs.is_finite());
        assert!(red.ln_v < -5000.0);
        let ln_abs = pf.scale().ln_abs + red.ln_v;
        assert!(ln_abs.is_finite());
    }
}
