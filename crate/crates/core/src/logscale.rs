//! Signed log-magnitude scalars.
//!
//! Indicator values and energy integrals span hundreds of orders of
//! magnitude across a τ sweep (the e^{-2τ̃ d} envelope). They are carried as
//! `(sign, ln|x|)` so that products and ratios never under- or overflow.

use std::cmp::Ordering;
use std::ops::{Div, Mul, Neg};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    /// -1, 0 or +1.
    pub sign: f64,
    /// ln|x|; `-inf` when `sign == 0`.
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0.0,
        ln_abs: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLog = SignedLog {
        sign: 1.0,
        ln_abs: 0.0,
    };

    pub fn new(sign: f64, ln_abs: f64) -> Self {
        if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self {
                sign: sign.signum(),
                ln_abs,
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: x.signum(),
                ln_abs: x.abs().ln(),
            }
        }
    }

    /// `e^{ln_x}` with positive sign.
    pub fn from_ln(ln_x: f64) -> Self {
        Self::new(1.0, ln_x)
    }

    pub fn to_f64(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0.0
    }

    pub fn is_positive(self) -> bool {
        self.sign > 0.0
    }

    pub fn abs(self) -> Self {
        if self.is_zero() {
            self
        } else {
            Self {
                sign: 1.0,
                ln_abs: self.ln_abs,
            }
        }
    }

    pub fn powi(self, n: i32) -> Self {
        if self.is_zero() {
            return if n == 0 { Self::ONE } else { Self::ZERO };
        }
        let sign = if n % 2 == 0 { 1.0 } else { self.sign };
        Self::new(sign, self.ln_abs * n as f64)
    }

    pub fn scale_ln(self, ln_factor: f64) -> Self {
        if self.is_zero() {
            self
        } else {
            Self {
                sign: self.sign,
                ln_abs: self.ln_abs + ln_factor,
            }
        }
    }

    /// Sum of two signed log values, computed relative to the larger one.
    pub fn add(self, other: Self) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (big, small) = if self.ln_abs >= other.ln_abs {
            (self, other)
        } else {
            (other, self)
        };
        let ratio = (small.ln_abs - big.ln_abs).exp() * small.sign * big.sign;
        let m = 1.0 + ratio;
        if m == 0.0 {
            return Self::ZERO;
        }
        Self::new(big.sign * m.signum(), big.ln_abs + m.abs().ln())
    }

    /// Sum of many values, all scaled by the largest magnitude first.
    pub fn sum<I: IntoIterator<Item = SignedLog>>(items: I) -> Self {
        let items: Vec<SignedLog> = items.into_iter().filter(|v| !v.is_zero()).collect();
        let Some(max_ln) = items
            .iter()
            .map(|v| v.ln_abs)
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
        else {
            return Self::ZERO;
        };
        let acc: f64 = items
            .iter()
            .map(|v| v.sign * (v.ln_abs - max_ln).exp())
            .sum();
        Self::from_f64(acc).scale_ln(max_ln)
    }
}

impl Mul for SignedLog {
    type Output = SignedLog;
    fn mul(self, rhs: SignedLog) -> SignedLog {
        Self::new(self.sign * rhs.sign, self.ln_abs + rhs.ln_abs)
    }
}

impl Mul<f64> for SignedLog {
    type Output = SignedLog;
    fn mul(self, rhs: f64) -> SignedLog {
        self * SignedLog::from_f64(rhs)
    }
}

impl Div for SignedLog {
    type Output = SignedLog;
    fn div(self, rhs: SignedLog) -> SignedLog {
        if rhs.is_zero() {
            return Self::new(self.sign, f64::INFINITY);
        }
        Self::new(self.sign * rhs.sign, self.ln_abs - rhs.ln_abs)
    }
}

impl Neg for SignedLog {
    type Output = SignedLog;
    fn neg(self) -> SignedLog {
        Self {
            sign: -self.sign,
            ln_abs: self.ln_abs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn round_trip_and_arithmetic() {
        let a = SignedLog::from_f64(-3.0);
        let b = SignedLog::from_f64(2.0);
        assert_relative_eq!((a * b).to_f64(), -6.0, epsilon = 1e-14);
        assert_relative_eq!((a / b).to_f64(), -1.5, epsilon = 1e-14);
        assert_relative_eq!(a.add(b).to_f64(), -1.0, epsilon = 1e-14);
        assert!(a.add(-a).is_zero());
        assert_relative_eq!(a.powi(2).to_f64(), 9.0, epsilon = 1e-13);
    }

    #[test]
    fn tiny_magnitudes_survive() {
        let x = SignedLog::from_ln(-2000.0);
        let y = SignedLog::from_ln(-2000.0 + 2f64.ln());
        let s = x.add(y);
        assert_relative_eq!(s.ln_abs, -2000.0 + 3f64.ln(), epsilon = 1e-12);
        let t = SignedLog::sum([x, y, -x]);
        assert_relative_eq!(t.ln_abs, y.ln_abs, epsilon = 1e-12);
    }
}
