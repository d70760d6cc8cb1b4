//! Piecewise-linear finite elements on a uniform partition of `[0, 1]` with
//! homogeneous Dirichlet ends.
//!
//! Unknowns are the `N` interior nodes `x_i = i h`, `h = 1/(N+1)`.

use serde::Serialize;

use crate::problem::{source_1d, FineProblem1D};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FemError {
    #[error("zero or vanishing pivot at row {row}")]
    SingularPivot { row: usize },
    #[error("upscaled coefficient {0} is not positive; coarse operator lost coercivity")]
    CoercivityLoss(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference vector has zero norm")]
    ZeroReference,
    #[error("mesh must have at least one interior node")]
    EmptyMesh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Mesh1D {
    pub interior: usize,
}

impl Mesh1D {
    pub fn new(interior: usize) -> Result<Self, FemError> {
        if interior == 0 {
            return Err(FemError::EmptyMesh);
        }
        Ok(Self { interior })
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.interior + 1) as f64
    }

    pub fn elements(&self) -> usize {
        self.interior + 1
    }

    /// Interior node coordinates `x_1 .. x_N`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.interior).map(|i| self.coordinate(i)).collect()
    }

    /// All `N + 2` coordinates including the two boundary nodes.
    pub fn all_nodes(&self) -> Vec<f64> {
        (0..=self.interior + 1).map(|i| self.coordinate(i)).collect()
    }

    fn coordinate(&self, i: usize) -> f64 {
        i as f64 / (self.interior + 1) as f64
    }
}

/// Tridiagonal matrix; `sub[i]` couples rows `i+1` and `i`, `sup[i]` rows `i`
/// and `i+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiag {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiag {
    pub fn symmetric(main: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, main.len());
        Self {
            sub: off.clone(),
            main,
            sup: off,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::symmetric(vec![1.0; n], vec![0.0; n.saturating_sub(1)])
    }

    pub fn dim(&self) -> usize {
        self.main.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let sc = |v: &Vec<f64>| v.iter().map(|a| a * c).collect();
        Self {
            sub: sc(&self.sub),
            main: sc(&self.main),
            sup: sc(&self.sup),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut s = self.main[i] * x[i];
                if i > 0 {
                    s += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.sup[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.matvec(y)).map(|(a, b)| a * b).sum()
    }
}

/// P1 stiffness and mass matrices on the interior unknowns.
pub fn assemble(mesh: &Mesh1D) -> (Tridiag, Tridiag) {
    let n = mesh.interior;
    let h = mesh.h();
    let stiffness = Tridiag::symmetric(vec![2.0 / h; n], vec![-1.0 / h; n - 1]);
    let mass = Tridiag::symmetric(vec![2.0 * h / 3.0; n], vec![h / 6.0; n - 1]);
    (stiffness, mass)
}

const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// `(∫ q φ_j)_j` with two-point Gauss quadrature per element.
pub fn load_vector(q: impl Fn(f64) -> f64, mesh: &Mesh1D) -> Vec<f64> {
    let n = mesh.interior;
    let h = mesh.h();
    let mut load = vec![0.0; n];
    for e in 0..mesh.elements() {
        let left = e as f64 * h;
        for g in GAUSS2 {
            let t = 0.5 * (1.0 + g);
            let qv = q(left + t * h) * 0.5 * h;
            // element e joins node e (left) and node e+1 (right); unknown j is node j+1
            if e >= 1 {
                load[e - 1] += qv * (1.0 - t);
            }
            if e < n {
                load[e] += qv * t;
            }
        }
    }
    load
}

/// Thomas algorithm. Intended for the diagonally dominant SPD systems used
/// here; no pivoting.
pub fn solve_tridiag(a: &Tridiag, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(FemError::LengthMismatch(rhs.len(), n));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = a.main.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tiny = 1e-14 * scale;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = a.main[0];
    if pivot.abs() <= tiny {
        return Err(FemError::SingularPivot { row: 0 });
    }
    if n > 1 {
        c[0] = a.sup[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = a.main[i] - a.sub[i - 1] * c[i - 1];
        if pivot.abs() <= tiny || !pivot.is_finite() {
            return Err(FemError::SingularPivot { row: i });
        }
        if i + 1 < n {
            c[i] = a.sup[i] / pivot;
        }
        d[i] = (rhs[i] - a.sub[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Coarse Galerkin system `K̃ B_h y = F_h` and its adjoint.
#[derive(Clone, Debug)]
pub struct CoarseSystem {
    pub mesh: Mesh1D,
    pub stiffness: Tridiag,
    pub mass: Tridiag,
    pub load: Vec<f64>,
    pub state: Vec<f64>,
    pub adjoint: Vec<f64>,
}

impl CoarseSystem {
    /// Coarse system with the source `q(x) = -3(2x - 1)`.
    pub fn new(mesh: Mesh1D) -> Self {
        Self::with_source(mesh, source_1d)
    }

    pub fn with_source(mesh: Mesh1D, q: impl Fn(f64) -> f64) -> Self {
        let (stiffness, mass) = assemble(&mesh);
        let load = load_vector(q, &mesh);
        Self {
            mesh,
            stiffness,
            mass,
            load,
            state: vec![0.0; mesh.interior],
            adjoint: vec![0.0; mesh.interior],
        }
    }

    /// Solves `K̃ B_h y = F_h`, stores and returns `y`.
    pub fn solve_state(&mut self, k_tilde: f64) -> Result<&[f64], FemError> {
        self.state = self.solve_scaled(k_tilde, &self.load)?;
        Ok(&self.state)
    }

    /// Solves `K̃ B_h p = rhs`. The coarse operator is self-adjoint, so the
    /// same matrix serves both systems.
    pub fn solve_adjoint(&mut self, k_tilde: f64, rhs: &[f64]) -> Result<&[f64], FemError> {
        self.adjoint = self.solve_scaled(k_tilde, rhs)?;
        Ok(&self.adjoint)
    }

    pub fn solve_scaled(&self, k_tilde: f64, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        if !(k_tilde > 0.0) {
            return Err(FemError::CoercivityLoss(k_tilde));
        }
        solve_tridiag(&self.stiffness.scaled(k_tilde), rhs)
    }
}

/// How the fine solver samples `K^ε` on each element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientRule {
    /// Mean of the two nodal values (trapezoid rule).
    #[default]
    Trapezoid,
    /// Value at the element midpoint.
    Midpoint,
}

impl CoefficientRule {
    fn element_value(self, k: impl Fn(f64) -> f64, left: f64, right: f64) -> f64 {
        match self {
            Self::Trapezoid => 0.5 * (k(left) + k(right)),
            Self::Midpoint => k(0.5 * (left + right)),
        }
    }
}

/// Fine-mesh FEM solution of the 1D oscillatory problem.
#[derive(Clone, Debug)]
pub struct FineReference {
    pub mesh: Mesh1D,
    /// Nodal values including both boundary nodes.
    pub values: Vec<f64>,
    /// Piecewise-constant coefficient used on each element.
    pub element_coeff: Vec<f64>,
    pub rule: CoefficientRule,
    /// Elements per oscillation period, `ε / h`.
    pub elements_per_period: f64,
}

impl FineReference {
    pub fn nodes(&self) -> Vec<f64> {
        self.mesh.all_nodes()
    }

    /// Elementwise constant derivative `u_h'`.
    pub fn element_slopes(&self) -> Vec<f64> {
        let h = self.mesh.h();
        self.values.windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    /// Evaluates the piecewise-linear interpolant at `x ∈ [0, 1]`.
    pub fn interpolate(&self, x: f64) -> f64 {
        let h = self.mesh.h();
        let last = self.mesh.elements() - 1;
        let e = ((x / h).floor() as usize).min(last);
        let t = (x - e as f64 * h) / h;
        self.values[e] * (1.0 - t) + self.values[e + 1] * t
    }

    /// True when an oscillation period spans fewer than 8 elements.
    pub fn under_resolved(&self) -> bool {
        self.elements_per_period < 8.0
    }
}

/// Default number of interior reference nodes (1001 grid points in total).
pub const REFERENCE_INTERIOR_NODES: usize = 999;

/// Solves `-(K u')' = q + K'` with `u(0) = u(1) = 0`.
///
/// `K` is constant per element according to `rule`. The `K'` part of the
/// load is integrated by parts against that same element coefficient,
/// `⟨K', φ_j⟩ = -⟨K, φ_j'⟩`, which makes the scheme exactly the FEM for
/// `w = u + x` with `w(0) = 0`, `w(1) = 1`.
pub fn fine_reference(
    problem: &FineProblem1D,
    interior: usize,
    rule: CoefficientRule,
) -> Result<FineReference, FemError> {
    fine_reference_with_source(problem, interior, rule, source_1d)
}

pub fn fine_reference_with_source(
    problem: &FineProblem1D,
    interior: usize,
    rule: CoefficientRule,
    q: impl Fn(f64) -> f64,
) -> Result<FineReference, FemError> {
    let mesh = Mesh1D::new(interior)?;
    let h = mesh.h();
    let element_coeff: Vec<f64> = (0..mesh.elements())
        .map(|e| rule.element_value(|x| problem.coeff(x), e as f64 * h, (e + 1) as f64 * h))
        .collect();
    let mut rhs = load_vector(q, &mesh);
    for (j, r) in rhs.iter_mut().enumerate() {
        // φ_j' = +1/h on element j, -1/h on element j+1
        *r += element_coeff[j + 1] - element_coeff[j];
    }
    let values = solve_variable_coefficient(&mesh, &element_coeff, &rhs)?;
    Ok(FineReference {
        mesh,
        values,
        element_coeff,
        rule,
        elements_per_period: problem.epsilon / h,
    })
}

/// Solves `-(K u')' = F` with elementwise constant `K` and load vector `F`
/// on the interior nodes. Returns nodal values including the zero ends.
pub fn solve_variable_coefficient(
    mesh: &Mesh1D,
    element_coeff: &[f64],
    load: &[f64],
) -> Result<Vec<f64>, FemError> {
    let n = mesh.interior;
    if element_coeff.len() != mesh.elements() {
        return Err(FemError::LengthMismatch(element_coeff.len(), mesh.elements()));
    }
    let h = mesh.h();
    let main = (0..n)
        .map(|i| (element_coeff[i] + element_coeff[i + 1]) / h)
        .collect();
    let off = (1..n).map(|i| -element_coeff[i] / h).collect();
    let interior = solve_tridiag(&Tridiag::symmetric(main, off), load)?;
    let mut values = Vec::with_capacity(n + 2);
    values.push(0.0);
    values.extend(interior);
    values.push(0.0);
    Ok(values)
}

/// `‖pred - ref‖₂ / ‖ref‖₂` over matching nodes.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64, FemError> {
    if pred.len() != reference.len() {
        return Err(FemError::LengthMismatch(pred.len(), reference.len()));
    }
    let num: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(FemError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn p1_matrix_entries() {
        let mesh = Mesh1D::new(9).unwrap();
        let h = mesh.h();
        let (b, m) = assemble(&mesh);
        assert!(b.main.iter().all(|&d| (d - 2.0 / h).abs() < 1e-12));
        assert!(b.sub.iter().all(|&d| (d + 1.0 / h).abs() < 1e-12));
        assert!(m.main.iter().all(|&d| (d - 2.0 * h / 3.0).abs() < 1e-15));
        assert!(m.sup.iter().all(|&d| (d - h / 6.0).abs() < 1e-15));
        let ones = vec![1.0; 9];
        let rows = b.matvec(&ones);
        assert!(rows[1..8].iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn load_vector_simple_sources() {
        let mesh = Mesh1D::new(20).unwrap();
        assert!(load_vector(|_| 0.0, &mesh).iter().all(|&v| v == 0.0));
        let h = mesh.h();
        assert!(load_vector(|_| 1.0, &mesh)
            .iter()
            .all(|&v| (v - h).abs() < 1e-15));
        let f = load_vector(source_1d, &mesh);
        for i in 0..20 {
            assert!((f[i] + f[19 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_identity_and_singular() {
        let rhs = vec![1.0, -2.0, 3.5];
        assert_eq!(solve_tridiag(&Tridiag::identity(3), &rhs).unwrap(), rhs);
        let a = Tridiag::symmetric(vec![1.0, 1.0], vec![1.0]);
        assert_eq!(
            solve_tridiag(&a, &[1.0, 1.0]),
            Err(FemError::SingularPivot { row: 1 })
        );
        assert!(matches!(
            solve_tridiag(&a, &[1.0]),
            Err(FemError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn thomas_matches_dense_elimination() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 5, 40] {
            let off: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let main: Vec<f64> = (0..n).map(|_| 2.5 + rng.gen_range(0.0..1.0)).collect();
            let a = Tridiag::symmetric(main, off);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                dense[i][i] = a.main[i];
                if i + 1 < n {
                    dense[i][i + 1] = a.sup[i];
                    dense[i + 1][i] = a.sub[i];
                }
            }
            let x = solve_tridiag(&a, &rhs).unwrap();
            let oracle = dense_solve(dense, rhs.clone());
            let err = relative_l2(&x, &oracle).unwrap();
            assert!(err < 1e-10, "n={n} err={err}");
            let res = a.matvec(&x);
            let rmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(res.iter().zip(&rhs).all(|(r, b)| (r - b).abs() <= 1e-12 * rmax));
        }
    }

    #[test]
    fn poisson_parabola() {
        // -y'' = 2, y = x(1-x)
        let mesh = Mesh1D::new(199).unwrap();
        let mut sys = CoarseSystem::with_source(mesh, |_| 2.0);
        let y = sys.solve_state(1.0).unwrap().to_vec();
        for (x, yi) in mesh.nodes().into_iter().zip(y) {
            assert!((yi - x * (1.0 - x)).abs() <= 1e-3);
        }
    }

    #[test]
    fn state_scaling_and_symmetry() {
        let mesh = Mesh1D::new(50).unwrap();
        let mut sys = CoarseSystem::new(mesh);
        let y1 = sys.solve_state(1.0).unwrap().to_vec();
        let y2 = sys.solve_state(2.0).unwrap().to_vec();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a / 2.0 - b).abs() < 1e-14);
        }
        let y = sys.solve_state(0.834).unwrap().to_vec();
        for i in 0..50 {
            assert!((y[i] + y[49 - i]).abs() < 1e-10);
        }
        for k in [0.1, 0.5, 3.0, 10.0] {
            let y = sys.solve_state(k).unwrap().to_vec();
            let yk: Vec<f64> = y1.iter().map(|v| v / k).collect();
            assert!(relative_l2(&y, &yk).unwrap() < 1e-13);
            let res = sys.stiffness.scaled(k).matvec(&y);
            let fmax = sys.load.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(res
                .iter()
                .zip(&sys.load)
                .all(|(r, f)| (r - f).abs() <= 1e-12 * fmax));
        }
        assert!(sys.solve_adjoint(1.0, &vec![0.0; 50]).unwrap().iter().all(|&p| p == 0.0));
        assert_eq!(sys.solve_state(0.0), Err(FemError::CoercivityLoss(0.0)));
        assert!(sys.solve_state(-1.0).is_err());
    }

    #[test]
    fn manufactured_solution_second_order() {
        // K = 1, u = sin(πx), f = π² sin(πx)
        let pi = std::f64::consts::PI;
        let err = |n: usize| {
            let mesh = Mesh1D::new(n).unwrap();
            let mut sys = CoarseSystem::with_source(mesh, |x| pi * pi * (pi * x).sin());
            let y = sys.solve_state(1.0).unwrap().to_vec();
            let h = mesh.h();
            let e2: f64 = mesh
                .nodes()
                .iter()
                .zip(&y)
                .map(|(x, v)| (v - (pi * x).sin()).powi(2))
                .sum::<f64>()
                * h;
            e2.sqrt()
        };
        let mut prev = err(9);
        for n in [19, 39, 79] {
            let e = err(n);
            assert!(prev / e >= 3.8, "ratio {}", prev / e);
            prev = e;
        }
    }

    #[test]
    fn variable_solver_constant_coefficient() {
        let mesh = Mesh1D::new(REFERENCE_INTERIOR_NODES).unwrap();
        let load = load_vector(|_| 2.0, &mesh);
        let u = solve_variable_coefficient(&mesh, &vec![1.0; mesh.elements()], &load).unwrap();
        let h = mesh.h();
        for (x, v) in mesh.all_nodes().into_iter().zip(u) {
            assert!((v - x * (1.0 - x)).abs() <= h * h);
        }
    }

    #[test]
    fn fine_reference_boundary_and_grid() {
        let p = FineProblem1D::new(1.0 / 16.0);
        let r = fine_reference(&p, REFERENCE_INTERIOR_NODES, CoefficientRule::Trapezoid).unwrap();
        assert_eq!(r.values.len(), 1001);
        assert_eq!(r.values[0], 0.0);
        assert_eq!(r.values[1000], 0.0);
        assert!(!r.under_resolved());
        assert!((r.interpolate(0.5) - r.values[500]).abs() < 1e-15);
    }

    #[test]
    fn relative_l2_basics() {
        let r = vec![1.0, -2.0, 0.5];
        assert_eq!(relative_l2(&r, &r).unwrap(), 0.0);
        assert!((relative_l2(&[0.0; 3], &r).unwrap() - 1.0).abs() < 1e-15);
        let p: Vec<f64> = r.iter().map(|v| 1.1 * v).collect();
        assert!((relative_l2(&p, &r).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(relative_l2(&r, &[0.0; 3]), Err(FemError::ZeroReference));
    }
}
