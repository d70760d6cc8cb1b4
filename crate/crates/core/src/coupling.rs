//! Discrete compression (moving average on the coarse nodes) and the
//! coupling term `Σ_i w_i (Q̄v(x_i) - y_i)²` tying the network to the coarse
//! finite element state.

use crate::fem1d::Mesh1D;
use crate::net::{Cotangent, NetParams};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CouplingError {
    #[error("averaging width δ must be positive, got {0}")]
    BadDelta(f64),
    #[error("expected {expected} nodal values, got {got}")]
    Length { expected: usize, got: usize },
}

/// Moving-average window on the interior coarse nodes.
///
/// Nodes inside the strip `[0, δ/2) ∪ (1 - δ/2, 1]` pass through unchanged.
/// Other nodes average over `|j - i| ≤ ω`, clipped to the available interior
/// nodes near the ends with the count renormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressionSpec {
    pub delta: f64,
    pub window: usize,
    pub nodes: Vec<f64>,
}

impl CompressionSpec {
    /// `ω = ⌊N_h δ⌋`.
    pub fn new(mesh: &Mesh1D, delta: f64) -> Result<Self, CouplingError> {
        let window = (mesh.interior as f64 * delta).floor() as usize;
        Self::with_window(mesh, delta, window)
    }

    pub fn with_window(mesh: &Mesh1D, delta: f64, window: usize) -> Result<Self, CouplingError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CouplingError::BadDelta(delta));
        }
        Ok(Self {
            delta,
            window,
            nodes: mesh.nodes(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn in_strip(&self, i: usize) -> bool {
        let x = self.nodes[i];
        x < 0.5 * self.delta || x > 1.0 - 0.5 * self.delta
    }

    /// Index range averaged for node `i`; `i..=i` inside the strip.
    pub fn window_of(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        if self.in_strip(i) {
            return i..=i;
        }
        let lo = i.saturating_sub(self.window);
        let hi = (i + self.window).min(self.len() - 1);
        lo..=hi
    }

    fn check(&self, values: &[f64]) -> Result<(), CouplingError> {
        if values.len() != self.len() {
            return Err(CouplingError::Length {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(())
    }
}

/// `Q̄_δ` applied to nodal values.
pub fn compress(values: &[f64], spec: &CompressionSpec) -> Result<Vec<f64>, CouplingError> {
    spec.check(values)?;
    Ok((0..spec.len())
        .map(|i| {
            let w = spec.window_of(i);
            let count = w.clone().count() as f64;
            values[w].iter().sum::<f64>() / count
        })
        .collect())
}

/// Transpose of [`compress`] as a linear map.
pub fn compress_transpose(values: &[f64], spec: &CompressionSpec) -> Result<Vec<f64>, CouplingError> {
    spec.check(values)?;
    let mut out = vec![0.0; spec.len()];
    for (i, &vi) in values.iter().enumerate() {
        let w = spec.window_of(i);
        let share = vi / w.clone().count() as f64;
        for j in w {
            out[j] += share;
        }
    }
    Ok(out)
}

/// Uniform lumped weights `w_i = h` on the interior nodes.
pub fn lumped_weights(mesh: &Mesh1D) -> Vec<f64> {
    vec![mesh.h(); mesh.interior]
}

/// `Σ_i w_i (Q̄v_i - y_i)²` from network values at the coarse nodes.
pub fn coupling_loss_from_values(
    node_values: &[f64],
    state: &[f64],
    spec: &CompressionSpec,
    weights: &[f64],
) -> Result<f64, CouplingError> {
    spec.check(state)?;
    let qv = compress(node_values, spec)?;
    Ok(qv
        .iter()
        .zip(state)
        .zip(weights)
        .map(|((q, y), w)| w * (q - y) * (q - y))
        .sum())
}

pub fn coupling_loss(
    params: &NetParams,
    state: &[f64],
    spec: &CompressionSpec,
    weights: &[f64],
) -> Result<f64, CouplingError> {
    let v = node_values(params, spec);
    coupling_loss_from_values(&v, state, spec, weights)
}

/// Right-hand side of the discrete adjoint system, `2τ₂(P_h - M_h y)` with
/// both terms lumped on the node weights: `2τ₂ w_i (Q̄v_i - y_i)`. This is
/// exactly `-∂/∂y` of `τ₂ · coupling_loss`.
pub fn adjoint_rhs_from_values(
    node_values: &[f64],
    state: &[f64],
    spec: &CompressionSpec,
    tau2: f64,
    weights: &[f64],
) -> Result<Vec<f64>, CouplingError> {
    spec.check(state)?;
    if tau2 == 0.0 {
        return Ok(vec![0.0; spec.len()]);
    }
    let qv = compress(node_values, spec)?;
    Ok(qv
        .iter()
        .zip(state)
        .zip(weights)
        .map(|((q, y), w)| 2.0 * tau2 * w * (q - y))
        .collect())
}

pub fn adjoint_rhs(
    params: &NetParams,
    state: &[f64],
    spec: &CompressionSpec,
    tau2: f64,
    weights: &[f64],
) -> Result<Vec<f64>, CouplingError> {
    let v = node_values(params, spec);
    adjoint_rhs_from_values(&v, state, spec, tau2, weights)
}

/// Per-node weights on `∇_θ v(x_j)` whose sum is the gradient of the
/// coupling loss at fixed `y`: `Q̄ᵀ (2 w ⊙ (Q̄v - y))`.
pub fn coupling_node_seeds(
    node_values: &[f64],
    state: &[f64],
    spec: &CompressionSpec,
    weights: &[f64],
) -> Result<Vec<f64>, CouplingError> {
    spec.check(state)?;
    let qv = compress(node_values, spec)?;
    let r: Vec<f64> = qv
        .iter()
        .zip(state)
        .zip(weights)
        .map(|((q, y), w)| 2.0 * w * (q - y))
        .collect();
    compress_transpose(&r, spec)
}

/// `∇_θ` of [`coupling_loss`] with `y` held fixed.
pub fn coupling_param_grad(
    params: &NetParams,
    state: &[f64],
    spec: &CompressionSpec,
    weights: &[f64],
) -> Result<Vec<f64>, CouplingError> {
    let fwd = params.forward(&spec.nodes);
    let v: Vec<f64> = fwd.outputs().iter().map(|o| o.u).collect();
    let seeds: Vec<Cotangent> = coupling_node_seeds(&v, state, spec, weights)?
        .into_iter()
        .map(|a| Cotangent {
            value: a,
            ..Default::default()
        })
        .collect();
    Ok(fwd.pullback(params, &seeds))
}

fn node_values(params: &NetParams, spec: &CompressionSpec) -> Vec<f64> {
    params.forward(&spec.nodes).outputs().iter().map(|o| o.u).collect()
}
