//! Second-order forward-mode duals in one spatial variable.
//!
//! A [`Jet2`] carries `(f, f', f'')` of some quantity with respect to `x`.
//! Arithmetic follows the truncated Taylor rules, so composing jets yields
//! exact first and second derivatives.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    /// The independent variable itself.
    pub const fn variable(x: f64) -> Self {
        Self { v: x, d1: 1.0, d2: 0.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(c * self.v, c * self.d1, c * self.d2)
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let s = 1.0 - t * t;
        Self::new(t, s * self.d1, s * self.d2 - 2.0 * t * s * self.d1 * self.d1)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        Self::new(s, c * self.d1, c * self.d2 - s * self.d1 * self.d1)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        Self::new(c, -s * self.d1, -s * self.d2 - c * self.d1 * self.d1)
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d1, -self.d2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd2(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-4;
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (d1, d2)
    }

    #[test]
    fn composite_matches_finite_differences() {
        let f = |x: Jet2| (x * x).sin().tanh() * x.cos() - x.scale(3.0);
        let fs = |x: f64| (x * x).sin().tanh() * x.cos() - 3.0 * x;
        for &x in &[-0.7, 0.1, 0.4, 1.3] {
            let j = f(Jet2::variable(x));
            let (d1, d2) = fd2(fs, x);
            assert!((j.v - fs(x)).abs() < 1e-14);
            assert!((j.d1 - d1).abs() < 1e-7, "{} vs {}", j.d1, d1);
            assert!((j.d2 - d2).abs() < 1e-5, "{} vs {}", j.d2, d2);
        }
    }

    #[test]
    fn polynomial_is_exact() {
        // x(1-x): derivative 1-2x, second derivative -2
        let x = Jet2::variable(0.3);
        let p = x * (Jet2::constant(1.0) - x);
        assert!((p.v - 0.21).abs() < 1e-15);
        assert!((p.d1 - 0.4).abs() < 1e-15);
        assert_eq!(p.d2, -2.0);
    }
}
