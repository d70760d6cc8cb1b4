//! Upscaled conductivities: the 1D scalar `K̃ = ∫ K (u' + 1)`, its parameter
//! sensitivity, and 2D tensors from averaged fluxes and gradients.

use rayon::prelude::*;
use serde::Serialize;

use crate::fem1d::FineReference;
use crate::fem2d::{average_flux_and_gradient, Block, NodalField};
use crate::net::{Cotangent, EvalTriple, NetParams};
use crate::problem::{FineProblem1D, FineProblem2D};

/// Default coercivity threshold.
pub const KAPPA_MIN: f64 = 1e-6;
/// Largest accepted condition number of the averaged-gradient matrix.
pub const CONDITION_CAP: f64 = 1e8;

/// Midpoint collocation points `x_i = (i - 1/2) / M`.
pub fn collocation_points(m: usize) -> Vec<f64> {
    (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect()
}

/// `(1/M) Σ K(x_i) (v_x(x_i) + 1)` from precomputed network outputs.
pub fn upscale_1d_from_outputs(problem: &FineProblem1D, xs: &[f64], outputs: &[EvalTriple]) -> f64 {
    let m = xs.len() as f64;
    xs.iter()
        .zip(outputs)
        .map(|(&x, o)| problem.coeff(x) * (o.u_x + 1.0))
        .sum::<f64>()
        / m
}

pub fn upscale_1d_from_net(params: &NetParams, problem: &FineProblem1D, collocation: &[f64]) -> f64 {
    let fwd = params.forward(collocation);
    upscale_1d_from_outputs(problem, collocation, fwd.outputs())
}

/// Per-element average `Σ_e h K_e (u_e' + 1)` using the coefficient the fine
/// solver actually used on each element.
pub fn upscale_1d_from_fem(reference: &FineReference) -> f64 {
    let h = reference.mesh.h();
    reference
        .element_slopes()
        .iter()
        .zip(&reference.element_coeff)
        .map(|(s, k)| h * k * (s + 1.0))
        .sum()
}

/// Dx seeds whose pullback gives `k̃_M[θ]`: `K(x_i) / M` at each point.
pub fn ktilde_seeds(problem: &FineProblem1D, xs: &[f64]) -> Vec<Cotangent> {
    let m = xs.len() as f64;
    xs.iter()
        .map(|&x| Cotangent {
            dx: problem.coeff(x) / m,
            ..Default::default()
        })
        .collect()
}

/// `∂K̃/∂θ_k = (1/M) Σ K(x_i) ∂_θk v_x(x_i)`.
pub fn ktilde_param_grad(params: &NetParams, problem: &FineProblem1D, collocation: &[f64]) -> Vec<f64> {
    let fwd = params.forward(collocation);
    fwd.pullback(params, &ktilde_seeds(problem, collocation))
}

/// Scalar or 2×2 upscaled conductivity with its coercivity status.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum UpscaledValue {
    Scalar(f64),
    Tensor([[f64; 2]; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UpscaledConductivity {
    pub value: UpscaledValue,
    pub block: Option<Block>,
    pub coercive: bool,
}

impl UpscaledConductivity {
    pub fn scalar(k: f64, kappa_min: f64) -> Self {
        Self {
            value: UpscaledValue::Scalar(k),
            block: None,
            coercive: k > kappa_min,
        }
    }

    pub fn tensor(t: [[f64; 2]; 2], block: Option<Block>, kappa_min: f64) -> Self {
        Self {
            value: UpscaledValue::Tensor(t),
            block,
            coercive: min_sym_eigenvalue(&t) > kappa_min,
        }
    }
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_sym_eigenvalue(t: &[[f64; 2]; 2]) -> f64 {
    let a = t[0][0];
    let d = t[1][1];
    let b = 0.5 * (t[0][1] + t[1][0]);
    let mean = 0.5 * (a + d);
    mean - (0.25 * (a - d) * (a - d) + b * b).sqrt()
}

fn condition_number(m: &[[f64; 2]; 2]) -> f64 {
    // 2-norm condition from the singular values of a 2×2 matrix
    let [[a, b], [c, d]] = *m;
    let s = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    let smax = (0.5 * (s + disc)).sqrt();
    let smin2 = 0.5 * (s - disc);
    if det == 0.0 || smin2 <= 0.0 {
        return f64::INFINITY;
    }
    smax / smin2.sqrt()
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum UpscaleError {
    #[error("averaged-gradient matrix is ill conditioned (κ = {0:e})")]
    IllConditioned(f64),
}

/// Solves `K̃ G = F` where column `i` of `G` and `F` hold the averaged
/// gradient and flux of the `i`-th cell problem.
pub fn solve_block_tensor(
    flux: [[f64; 2]; 2],
    grad: [[f64; 2]; 2],
) -> Result<[[f64; 2]; 2], UpscaleError> {
    // matrices here are row-major with columns = cell problems
    let cond = condition_number(&grad);
    if !(cond < CONDITION_CAP) {
        return Err(UpscaleError::IllConditioned(cond));
    }
    let [[a, b], [c, d]] = grad;
    let det = a * d - b * c;
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let mut t = [[0.0; 2]; 2];
    for r in 0..2 {
        for s in 0..2 {
            t[r][s] = flux[r][0] * inv[0][s] + flux[r][1] * inv[1][s];
        }
    }
    Ok(t)
}

/// Per-block outcome of [`upscale_2d`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockResult {
    Ok(UpscaledConductivity),
    Flagged { block: Block, condition: f64 },
}

/// Block tensors from the two linear-drop solutions. Blocks run in parallel.
pub fn upscale_2d(
    fields: [&NodalField; 2],
    problem: &FineProblem2D,
    blocks: &[Block],
    kappa_min: f64,
) -> Vec<BlockResult> {
    blocks
        .par_iter()
        .map(|block| {
            let mut flux = [[0.0; 2]; 2];
            let mut grad = [[0.0; 2]; 2];
            for (col, field) in fields.iter().enumerate() {
                let (f, g) = average_flux_and_gradient(field, problem, block);
                for r in 0..2 {
                    flux[r][col] = f[r];
                    grad[r][col] = g[r];
                }
            }
            match solve_block_tensor(flux, grad) {
                Ok(t) => BlockResult::Ok(UpscaledConductivity::tensor(t, Some(*block), kappa_min)),
                Err(UpscaleError::IllConditioned(c)) => BlockResult::Flagged {
                    block: *block,
                    condition: c,
                },
            }
        })
        .collect()
}

/// Full-domain tensor `K̃ e_i = ⟨K ∇w_i⟩`; the averaged gradients equal the
/// unit vectors under linear-drop data.
pub fn upscale_2d_full(fields: [&NodalField; 2], problem: &FineProblem2D, kappa_min: f64) -> UpscaledConductivity {
    let block = Block::full(&fields[0].grid);
    let mut t = [[0.0; 2]; 2];
    for (col, field) in fields.iter().enumerate() {
        let (f, _) = average_flux_and_gradient(field, problem, &block);
        t[0][col] = f[0];
        t[1][col] = f[1];
    }
    UpscaledConductivity::tensor(t, Some(block), kappa_min)
}

/// JSON record for one block tensor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorRecord {
    pub block_id: usize,
    pub k11: f64,
    pub k12: f64,
    pub k21: f64,
    pub k22: f64,
}

impl TensorRecord {
    pub fn new(block_id: usize, t: &[[f64; 2]; 2]) -> Self {
        Self {
            block_id,
            k11: t[0][0],
            k12: t[0][1],
            k21: t[1][0],
            k22: t[1][1],
        }
    }
}
