//! Bilinear finite elements on a uniform `N_c × N_c` grid of the unit square
//! for `-∇·(K ∇w) = q` with the linear temperature-drop data `w = x_i` on the
//! boundary.

use std::io::Write;

use serde::Serialize;

use crate::problem::FineProblem2D;

#[derive(Debug, thiserror::Error)]
pub enum Fem2dError {
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("block [{0}, {1}] x [{2}, {3}] is not aligned with grid cells")]
    MisalignedBlock(f64, f64, f64, f64),
    #[error("grid needs at least two cells per side")]
    TooCoarse,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Uniform grid; nodes are numbered `i + j (N_c + 1)` with `i` along `x₁`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Grid2D {
    pub cells: usize,
}

impl Grid2D {
    pub fn new(cells: usize) -> Result<Self, Fem2dError> {
        if cells < 2 {
            return Err(Fem2dError::TooCoarse);
        }
        Ok(Self { cells })
    }

    /// `h = ε / 16`, rounded so that the grid has an integer cell count.
    pub fn resolving(epsilon: f64) -> Result<Self, Fem2dError> {
        Self::new((16.0 / epsilon).ceil() as usize)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_side() * self.nodes_per_side()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i + j * self.nodes_per_side()
    }

    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.h(), j as f64 * self.h()]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.cells || j == self.cells
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, Default)]
pub struct SparseSPD {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseSPD {
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[r] = s;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Largest `|a_rc - a_cr|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                worst = worst.max((self.vals[k] - self.get(c, r)).abs());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl CgOptions {
    /// Relative residual 1e-10, at most `50 N_c` iterations.
    pub fn for_grid(grid: &Grid2D) -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50 * grid.cells,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradient. `x` holds the initial guess.
pub fn cg(
    a: &SparseSPD,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgStats, Fem2dError> {
    let n = a.n;
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut ap = vec![0.0; n];
    a.matvec_into(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    for it in 0..opts.max_iterations {
        if res <= opts.tolerance {
            return Ok(CgStats {
                iterations: it,
                residual: res,
            });
        }
        a.matvec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if !res.is_finite() {
            break;
        }
    }
    if res <= opts.tolerance {
        return Ok(CgStats {
            iterations: opts.max_iterations,
            residual: res,
        });
    }
    Err(Fem2dError::CgNotConverged {
        iterations: opts.max_iterations,
        residual: res,
    })
}

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Reference-square gradients of the four bilinear shape functions at
/// `(ξ, η)`, local order (0,0), (1,0), (1,1), (0,1).
fn shape_grads(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Assembled system on the interior nodes after eliminating Dirichlet data.
#[derive(Clone, Debug)]
pub struct DirichletSystem {
    pub matrix: SparseSPD,
    /// Unknown index per grid node, `None` on the boundary.
    pub unknown: Vec<Option<usize>>,
    /// Load `∫ q φ_i` on unknowns (without boundary lifting).
    pub load: Vec<f64>,
    /// Coupling columns to boundary nodes: `(row, boundary node, value)`.
    pub boundary_coupling: Vec<(usize, usize, f64)>,
}

/// Assembles the stiffness matrix with 2×2 Gauss quadrature and pointwise
/// evaluation of `K` at the quadrature points.
pub fn assemble(problem: &FineProblem2D, grid: &Grid2D) -> DirichletSystem {
    let np = grid.nodes_per_side();
    let h = grid.h();
    let mut unknown = vec![None; grid.num_nodes()];
    let mut count = 0;
    for j in 0..np {
        for i in 0..np {
            if !grid.is_boundary(i, j) {
                unknown[grid.node(i, j)] = Some(count);
                count += 1;
            }
        }
    }

    // 9-point stencil per unknown row, slot (di+1) + 3(dj+1)
    let mut stencil = vec![[0.0f64; 9]; count];
    let mut load = vec![0.0; count];
    for ej in 0..grid.cells {
        for ei in 0..grid.cells {
            let mut ke = [[0.0f64; 4]; 4];
            let mut fe = [0.0f64; 4];
            for gy in GAUSS {
                for gx in GAUSS {
                    let x = [(ei as f64 + gx) * h, (ej as f64 + gy) * h];
                    let k = problem.coeff(x);
                    let q = problem.source.eval(x);
                    let g = shape_grads(gx, gy);
                    let nv = shape_values(gx, gy);
                    // ∇N = g / h, weight h²/4
                    for a in 0..4 {
                        for b in 0..4 {
                            ke[a][b] += 0.25 * k * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                        }
                        fe[a] += 0.25 * h * h * q * nv[a];
                    }
                }
            }
            for (a, &(ai, aj)) in CORNERS.iter().enumerate() {
                let Some(row) = unknown[grid.node(ei + ai, ej + aj)] else {
                    continue;
                };
                load[row] += fe[a];
                for (b, &(bi, bj)) in CORNERS.iter().enumerate() {
                    let di = bi as isize - ai as isize;
                    let dj = bj as isize - aj as isize;
                    stencil[row][((di + 1) + 3 * (dj + 1)) as usize] += ke[a][b];
                }
            }
        }
    }

    let mut row_ptr = Vec::with_capacity(count + 1);
    let mut cols = Vec::with_capacity(9 * count);
    let mut vals = Vec::with_capacity(9 * count);
    let mut boundary_coupling = Vec::new();
    row_ptr.push(0);
    for j in 1..grid.cells {
        for i in 1..grid.cells {
            let row = unknown[grid.node(i, j)].unwrap();
            // slots ordered by (dj, di) give increasing column indices
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let v = stencil[row][((di + 1) + 3 * (dj + 1)) as usize];
                    let node = grid.node((i as isize + di) as usize, (j as isize + dj) as usize);
                    match unknown[node] {
                        Some(c) => {
                            cols.push(c);
                            vals.push(v);
                        }
                        None => boundary_coupling.push((row, node, v)),
                    }
                }
            }
            row_ptr.push(cols.len());
        }
    }
    DirichletSystem {
        matrix: SparseSPD {
            n: count,
            row_ptr,
            cols,
            vals,
        },
        unknown,
        load,
        boundary_coupling,
    }
}

/// Which linear drop drives the boundary: `w = x₁` or `w = x₂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    X1,
    X2,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Self::X1 => 0,
            Self::X2 => 1,
        }
    }
}

/// Nodal FEM solution on a grid.
#[derive(Clone, Debug)]
pub struct NodalField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub stats: CgStats,
}

impl NodalField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node(i, j)]
    }

    /// CSV dump with header `x,y,value`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<(), Fem2dError> {
        writeln!(out, "x,y,value")?;
        let np = self.grid.nodes_per_side();
        for j in 0..np {
            for i in 0..np {
                let [x, y] = self.grid.coord(i, j);
                writeln!(out, "{x:.16e},{y:.16e},{:.16e}", self.at(i, j))?;
            }
        }
        Ok(())
    }
}

/// Solves the fine problem with `w = x_i` on the boundary, starting CG from
/// the linear function `x_i`.
pub fn solve_fine_2d(
    problem: &FineProblem2D,
    direction: Direction,
    grid: &Grid2D,
) -> Result<NodalField, Fem2dError> {
    let system = assemble(problem, grid);
    solve_with_system(&system, direction, grid, CgOptions::for_grid(grid))
}

pub fn solve_with_system(
    system: &DirichletSystem,
    direction: Direction,
    grid: &Grid2D,
    opts: CgOptions,
) -> Result<NodalField, Fem2dError> {
    let np = grid.nodes_per_side();
    let mut values = vec![0.0; grid.num_nodes()];
    for j in 0..np {
        for i in 0..np {
            values[grid.node(i, j)] = grid.coord(i, j)[direction.index()];
        }
    }
    let mut rhs = system.load.clone();
    for &(row, node, a) in &system.boundary_coupling {
        rhs[row] -= a * values[node];
    }
    let mut x = vec![0.0; system.matrix.n];
    for (node, u) in system.unknown.iter().enumerate() {
        if let Some(u) = u {
            x[*u] = values[node];
        }
    }
    let stats = cg(&system.matrix, &rhs, &mut x, opts)?;
    for (node, u) in system.unknown.iter().enumerate() {
        if let Some(u) = u {
            values[node] = x[*u];
        }
    }
    Ok(NodalField {
        grid: *grid,
        values,
        stats,
    })
}

/// Axis-aligned block given by cell index ranges `[i0, i1) × [j0, j1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Block {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Block {
    pub fn full(grid: &Grid2D) -> Self {
        Self {
            i0: 0,
            i1: grid.cells,
            j0: 0,
            j1: grid.cells,
        }
    }

    /// Block from physical bounds, which must fall on cell boundaries.
    pub fn from_bounds(grid: &Grid2D, x: [f64; 2], y: [f64; 2]) -> Result<Self, Fem2dError> {
        let n = grid.cells as f64;
        let snap = |v: f64| {
            let s = (v * n).round();
            ((v * n - s).abs() < 1e-9 && (0.0..=n).contains(&s)).then_some(s as usize)
        };
        match (snap(x[0]), snap(x[1]), snap(y[0]), snap(y[1])) {
            (Some(i0), Some(i1), Some(j0), Some(j1)) if i0 < i1 && j0 < j1 => {
                Ok(Self { i0, i1, j0, j1 })
            }
            _ => Err(Fem2dError::MisalignedBlock(x[0], x[1], y[0], y[1])),
        }
    }

    /// Regular `n × n` partition of the grid. Cells per side must divide.
    pub fn partition(grid: &Grid2D, n: usize) -> Result<Vec<Self>, Fem2dError> {
        let mut blocks = Vec::with_capacity(n * n);
        for bj in 0..n {
            for bi in 0..n {
                let b = |k: usize| k as f64 / n as f64;
                blocks.push(Self::from_bounds(grid, [b(bi), b(bi + 1)], [b(bj), b(bj + 1)])?);
            }
        }
        Ok(blocks)
    }
}

/// Block averages `(⟨K∇w⟩, ⟨∇w⟩)` with 2×2 Gauss points per element.
pub fn average_flux_and_gradient(
    field: &NodalField,
    problem: &FineProblem2D,
    block: &Block,
) -> ([f64; 2], [f64; 2]) {
    let grid = &field.grid;
    let h = grid.h();
    let mut flux = [0.0; 2];
    let mut grad = [0.0; 2];
    for ej in block.j0..block.j1 {
        for ei in block.i0..block.i1 {
            let w: [f64; 4] = CORNERS.map(|(a, b)| field.at(ei + a, ej + b));
            for gy in GAUSS {
                for gx in GAUSS {
                    let x = [(ei as f64 + gx) * h, (ej as f64 + gy) * h];
                    let k = problem.coeff(x);
                    let g = shape_grads(gx, gy);
                    let mut gw = [0.0; 2];
                    for a in 0..4 {
                        gw[0] += w[a] * g[a][0] / h;
                        gw[1] += w[a] * g[a][1] / h;
                    }
                    for d in 0..2 {
                        grad[d] += 0.25 * gw[d];
                        flux[d] += 0.25 * k * gw[d];
                    }
                }
            }
        }
    }
    let cells = ((block.i1 - block.i0) * (block.j1 - block.j0)) as f64;
    (flux.map(|f| f / cells), grad.map(|g| g / cells))
}

/// `⟨∇w, K ∇w⟩` and `‖∇w‖²` over the domain.
pub fn energy(field: &NodalField, problem: &FineProblem2D) -> (f64, f64) {
    let grid = &field.grid;
    let h = grid.h();
    let (mut e, mut g2) = (0.0, 0.0);
    for ej in 0..grid.cells {
        for ei in 0..grid.cells {
            let w: [f64; 4] = CORNERS.map(|(a, b)| field.at(ei + a, ej + b));
            for gy in GAUSS {
                for gx in GAUSS {
                    let x = [(ei as f64 + gx) * h, (ej as f64 + gy) * h];
                    let g = shape_grads(gx, gy);
                    let mut gw = [0.0; 2];
                    for a in 0..4 {
                        gw[0] += w[a] * g[a][0] / h;
                        gw[1] += w[a] * g[a][1] / h;
                    }
                    let n2 = gw[0] * gw[0] + gw[1] * gw[1];
                    e += 0.25 * h * h * problem.coeff(x) * n2;
                    g2 += 0.25 * h * h * n2;
                }
            }
        }
    }
    (e, g2)
}
