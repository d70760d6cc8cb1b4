//! Fine-scale coefficients and sources.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `-(K u')' = f` on `(0, 1)` with `u(0) = u(1) = 0`, where
/// `K(x) = 1 / (1.2 + sin(2πx/ε))`, `q(x) = -3(2x - 1)` and `f = q + K'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineProblem1D {
    pub epsilon: f64,
}

impl FineProblem1D {
    pub fn new(epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "scale must be positive");
        Self { epsilon }
    }

    pub fn coeff(&self, x: f64) -> f64 {
        coeff_1d(self.epsilon, x)
    }

    pub fn coeff_dx(&self, x: f64) -> f64 {
        let k = 2.0 * PI / self.epsilon;
        let denom = 1.2 + (k * x).sin();
        -k * (k * x).cos() / (denom * denom)
    }

    pub fn source(&self, x: f64) -> f64 {
        source_1d(x)
    }

    pub fn rhs(&self, x: f64) -> f64 {
        rhs_1d(self.epsilon, x)
    }
}

pub fn coeff_1d(epsilon: f64, x: f64) -> f64 {
    1.0 / (1.2 + (2.0 * PI * x / epsilon).sin())
}

/// Coarse-scale source `q(x) = -3(2x - 1)`.
pub fn source_1d(x: f64) -> f64 {
    -3.0 * (2.0 * x - 1.0)
}

/// `f = q + ∂_x K`.
pub fn rhs_1d(epsilon: f64, x: f64) -> f64 {
    source_1d(x) + FineProblem1D::new(epsilon).coeff_dx(x)
}

/// Closed-form 2D coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coefficient2D {
    /// Isotropic, `3 + sin(2πx₁/ε) + sin(2πx₂/ε)`, ε = 1/32.
    K1,
    /// Axis-aligned anisotropy, `3 + sin(2πx₁/ε₁) + 1.5 cos(2πx₂/ε₂)`,
    /// ε₁ = 1/16, ε₂ = 1/32.
    K2,
    /// Sheared, `1 / (2 + 1.8 sin(2π(2x₁ - x₂)/ε))`, ε = 1/16.
    K3,
    /// Spatially constant value.
    Constant(f64),
}

impl Coefficient2D {
    pub const ALL: [Coefficient2D; 3] = [Self::K1, Self::K2, Self::K3];

    /// Smallest oscillation length.
    pub fn epsilon(self) -> f64 {
        match self {
            Self::K1 | Self::K2 => 1.0 / 32.0,
            Self::K3 => 1.0 / 16.0,
            Self::Constant(_) => 1.0,
        }
    }

    pub fn eval(self, x: [f64; 2]) -> f64 {
        coeff_2d(self, x)
    }

    /// Lower and upper bounds `α ≤ K ≤ β` over the unit square.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Self::K1 => (1.0, 5.0),
            Self::K2 => (0.5, 5.5),
            Self::K3 => (1.0 / 3.8, 5.0),
            Self::Constant(c) => (c, c),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::K1 => "K1",
            Self::K2 => "K2",
            Self::K3 => "K3",
            Self::Constant(_) => "constant",
        }
    }
}

impl std::str::FromStr for Coefficient2D {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "K1" => Ok(Self::K1),
            "K2" => Ok(Self::K2),
            "K3" => Ok(Self::K3),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite() && *c > 0.0)
                .map(Self::Constant)
                .ok_or_else(|| format!("unknown coefficient {s:?}")),
        }
    }
}

pub fn coeff_2d(which: Coefficient2D, [x1, x2]: [f64; 2]) -> f64 {
    match which {
        Coefficient2D::K1 => {
            let e = 1.0 / 32.0;
            3.0 + (2.0 * PI * x1 / e).sin() + (2.0 * PI * x2 / e).sin()
        }
        Coefficient2D::K2 => {
            let (e1, e2) = (1.0 / 16.0, 1.0 / 32.0);
            3.0 + (2.0 * PI * x1 / e1).sin() + 1.5 * (2.0 * PI * x2 / e2).cos()
        }
        Coefficient2D::K3 => {
            let e = 1.0 / 16.0;
            1.0 / (2.0 + 1.8 * (2.0 * PI * (2.0 * x1 - x2) / e).sin())
        }
        Coefficient2D::Constant(c) => c,
    }
}

/// Source for the 2D problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source2D {
    #[default]
    Zero,
    /// `exp(-|x - (0.5, 0.5)|²)`
    Gaussian,
}

impl Source2D {
    pub fn eval(self, [x1, x2]: [f64; 2]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Gaussian => (-((x1 - 0.5).powi(2) + (x2 - 0.5).powi(2))).exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineProblem2D {
    pub coefficient: Coefficient2D,
    pub source: Source2D,
}

impl FineProblem2D {
    pub fn new(coefficient: Coefficient2D) -> Self {
        Self {
            coefficient,
            source: Source2D::Zero,
        }
    }

    pub fn coeff(&self, x: [f64; 2]) -> f64 {
        self.coefficient.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn coeff_1d_special_points() {
        let eps = 1.0 / 16.0;
        assert!((coeff_1d(eps, 0.0) - 1.0 / 1.2).abs() < 1e-15);
        assert!((coeff_1d(eps, eps / 4.0) - 1.0 / 2.2).abs() < 1e-14);
    }

    #[test]
    fn coeff_1d_integral_matches_closed_form() {
        // ∫ 1/(a + sin) over whole periods = 1/sqrt(a² - 1)
        let eps = 1.0 / 16.0;
        let n = 200_000;
        let h = 1.0 / n as f64;
        let s: f64 = (0..n).map(|i| coeff_1d(eps, (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((s - 1.0 / 0.44f64.sqrt()).abs() < 1e-9, "{s}");
        assert!((1.0 / 0.44f64.sqrt() - 1.50756).abs() < 1e-5);
    }

    #[test]
    fn rhs_pieces() {
        let eps = 1.0 / 16.0;
        let p = FineProblem1D::new(eps);
        assert_eq!(source_1d(0.5), 0.0);
        let expected = -2.0 * PI / (eps * 1.44);
        assert!((p.coeff_dx(0.0) - expected).abs() < 1e-12 * expected.abs());
        let h = 1e-6;
        let fd = (coeff_1d(eps, 0.25 + h) - coeff_1d(eps, 0.25 - h)) / (2.0 * h);
        assert!((rhs_1d(eps, 0.25) - (fd + 1.5)).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn analytic_derivative_matches_fd_at_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let eps = [1.0 / 16.0, 1.0 / 48.0, 1.0 / 64.0][rng.gen_range(0..3)];
            let x: f64 = rng.gen_range(0.0..1.0);
            let p = FineProblem1D::new(eps);
            let h = 1e-7 * eps;
            let fd = (p.coeff(x + h) - p.coeff(x - h)) / (2.0 * h);
            let an = p.coeff_dx(x);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "x={x} {fd} {an}");
        }
    }

    #[test]
    fn coeff_1d_periodic_and_bounded() {
        let eps = 1.0 / 48.0;
        for i in 0..500 {
            let x = i as f64 / 500.0 * (1.0 - eps);
            assert!((coeff_1d(eps, x) - coeff_1d(eps, x + eps)).abs() < 1e-12);
            let k = coeff_1d(eps, x);
            assert!((1.0 / 2.2 - 1e-15..=1.0 / 0.2 + 1e-12).contains(&k));
        }
    }

    #[test]
    fn coeff_2d_special_points() {
        assert!((coeff_2d(Coefficient2D::K1, [0.0, 0.0]) - 3.0).abs() < 1e-15);
        assert!((coeff_2d(Coefficient2D::K3, [0.0, 0.0]) - 0.5).abs() < 1e-15);
        let k2 = coeff_2d(Coefficient2D::K2, [1.0 / 64.0, 0.0]);
        assert!((k2 - 5.5).abs() < 1e-14);
    }

    #[test]
    fn coeff_2d_within_bounds() {
        for c in Coefficient2D::ALL {
            let (lo, hi) = c.bounds();
            for i in 0..=64 {
                for j in 0..=64 {
                    let k = c.eval([i as f64 / 64.0, j as f64 / 64.0]);
                    assert!(k >= lo - 1e-12 && k <= hi + 1e-12);
                }
            }
        }
    }
}
