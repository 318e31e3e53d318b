//! Time-domain enclosure method for inverse obstacle scattering of
//! electromagnetic waves.
//!
//! A current pulse `J = f(t) χ_B(x) a` on a small ball `B` illuminates a
//! perfectly conducting obstacle `D`; the electric field observed on `B`
//! over `[0, T]` is Laplace-transformed and paired with the closed-form
//! free-space probe `V` to build the indicator
//! `I(τ) = ∫_B f · (W_e - V) dx`. Its exponential rate gives `dist(D, B)`,
//! its normalized limit gives curvature information at the first reflection
//! points.
//!
//! Modules:
//! - [`geometry`]: analytic obstacles, nearest points, shape operators.
//! - [`source`]: pulses and their Laplace transforms.
//! - [`freefield`]: the closed-form probe field `V` and its derivatives.
//! - [`fdtd`]: Yee-grid Maxwell solver producing the observation record.
//! - [`indicator`]: the indicator function and distance extraction.
//! - [`analysis`]: Laplace-method oracles, curvature recovery, probing.
//! - [`reflection`]: the curved-surface reflection operator `V*`.
//! - [`experiment`]: config-driven batch pipeline used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod fdtd;
pub mod freefield;
pub mod geometry;
pub mod indicator;
pub mod logscale;
pub mod quadrature;
pub mod reflection;
pub mod source;

pub use error::{Error, Result};
pub use logscale::SignedLog;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
