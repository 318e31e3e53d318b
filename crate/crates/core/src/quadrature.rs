//! Gauss–Legendre rules: 1D panels and the product rule on a ball.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::Vec3;

/// Nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("n >= 1");
    let mut v: Vec<(f64, f64)> = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Composite rule: `panels` equal panels of `n` points each on `[a, b]`.
pub fn composite_gauss(n: usize, panels: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let base = gauss_legendre(n);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(n * panels);
    for k in 0..panels {
        let lo = a + h * k as f64;
        for &(x, w) in &base {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// Product Gauss rule on the ball `B_radius(center)` in spherical
/// coordinates: Gauss–Legendre in `r` (with the `r²` Jacobian) and in
/// `cos θ`, equispaced trapezoid in `φ`. All nodes are strictly interior.
#[derive(Debug, Clone, PartialEq)]
pub struct BallRule {
    pub center: Vec3,
    pub radius: f64,
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub shape: [usize; 3],
}

impl BallRule {
    pub const DEFAULT_SHAPE: [usize; 3] = [6, 8, 8];

    pub fn new(center: Vec3, radius: f64, n_r: usize, n_theta: usize, n_phi: usize) -> Self {
        let radial = gauss_legendre_on(n_r, 0.0, radius);
        let polar = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_r * n_theta * n_phi);
        let mut weights = Vec::with_capacity(nodes.capacity());
        let dphi = 2.0 * PI / n_phi as f64;
        for &(r, wr) in &radial {
            for &(ct, wt) in &polar {
                let st = (1.0 - ct * ct).sqrt();
                for k in 0..n_phi {
                    // Half-step offset keeps nodes off the φ = 0 half-plane.
                    let ph = dphi * (k as f64 + 0.5);
                    nodes.push(center + Vec3::new(r * st * ph.cos(), r * st * ph.sin(), r * ct));
                    weights.push(wr * r * r * wt * dphi);
                }
            }
        }
        Self {
            center,
            radius,
            nodes,
            weights,
            shape: [n_r, n_theta, n_phi],
        }
    }

    pub fn with_default_shape(center: Vec3, radius: f64) -> Self {
        let [a, b, c] = Self::DEFAULT_SHAPE;
        Self::new(center, radius, a, b, c)
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Vec3) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}
