//! Multi-scale Fourier feature network with exact homogeneous Dirichlet
//! boundary conditions on `[0, 1]`.
//!
//! The raw network `ū(x) = W_L [z_L^(1), ..., z_L^(K)] + b_L` sees the input
//! through `K` fixed Fourier embeddings `[cos(2π B^(k) x), sin(2π B^(k) x)]`,
//! and every branch shares the same tanh hidden layers. The returned function
//! is `v(x) = x (1 - x) ū(x)`, so `v(0) = v(1) = 0` for every parameter set.
//!
//! Two evaluation paths exist:
//!
//! * [`NetParams::eval_with_derivs`] pushes [`Jet2`] duals through the network
//!   one point at a time. It is the simple reference path.
//! * [`NetParams::forward`] evaluates a whole batch of points with the
//!   `(v, v_x, v_xx)` jets stacked into matrices, and [`Forward::pullback`]
//!   runs reverse mode over that jet computation. Any weighted combination of
//!   `∇_θ v`, `∇_θ v_x` and `∇_θ v_xx` over the batch costs one pullback.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::jet::Jet2;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },
}

/// Network shape. An empty `feature_scales` gives a plain tanh MLP fed
/// directly with `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub feature_scales: Vec<f64>,
}

impl Architecture {
    /// `depth` hidden layers of `width` units behind Fourier features with
    /// the given standard deviations.
    pub fn fourier(depth: usize, width: usize, feature_scales: Vec<f64>) -> Self {
        Self {
            input_dim: 1,
            hidden_widths: vec![width; depth],
            feature_scales,
        }
    }

    pub fn vanilla(depth: usize, width: usize) -> Self {
        Self {
            input_dim: 1,
            hidden_widths: vec![width; depth],
            feature_scales: Vec::new(),
        }
    }

    pub fn num_features(&self) -> usize {
        self.feature_scales.len()
    }

    /// Rows `m` of each Fourier matrix; zero for a plain MLP.
    pub fn feature_rows(&self) -> usize {
        if self.feature_scales.is_empty() {
            0
        } else {
            self.hidden_widths[0] / 2
        }
    }

    /// Number of parallel branches feeding the output layer.
    pub fn branches(&self) -> usize {
        self.num_features().max(1)
    }

    fn input_width(&self) -> usize {
        if self.feature_scales.is_empty() {
            1
        } else {
            2 * self.feature_rows()
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidArchitecture(m.to_string()));
        if self.input_dim != 1 {
            return bad("only one spatial input is supported");
        }
        if self.hidden_widths.is_empty() {
            return bad("at least one hidden layer is required");
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return bad("hidden widths must be positive");
        }
        if !self.feature_scales.is_empty() && self.hidden_widths[0] % 2 != 0 {
            return bad("first hidden width must be even (2m Fourier outputs)");
        }
        if self
            .feature_scales
            .iter()
            .any(|&s| !(s.is_finite() && s > 0.0))
        {
            return bad("feature scales must be positive");
        }
        Ok(())
    }

    /// Trainable parameter count `n`.
    pub fn num_params(&self) -> usize {
        let mut fan_in = self.input_width();
        let mut n = 0;
        for &w in &self.hidden_widths {
            n += w * fan_in + w;
            fan_in = w;
        }
        n + self.branches() * fan_in + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Network weights. `features` holds the fixed `B^(k)` columns and is not
/// part of the flattened trainable vector.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    arch: Architecture,
    pub hidden: Vec<Layer>,
    pub output_weight: Array1<f64>,
    pub output_bias: f64,
    features: Vec<Array1<f64>>,
}

/// Value and first two spatial derivatives at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EvalTriple {
    pub u: f64,
    pub u_x: f64,
    pub u_xx: f64,
}

/// Selects which spatial quantity [`NetParams::grad_params`] differentiates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Value,
    Dx,
    Dxx,
}

/// Reverse-mode seed for one batch point: weights on `∇_θ v`, `∇_θ v_x`,
/// `∇_θ v_xx`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cotangent {
    pub value: f64,
    pub dx: f64,
    pub dxx: f64,
}

impl NetParams {
    /// Glorot-uniform weights, zero biases, Gaussian Fourier matrices with
    /// standard deviation `ϱ_k`. Deterministic in `seed`.
    pub fn init_glorot(arch: &Architecture, seed: u64) -> Result<Self, NetError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hidden = Vec::with_capacity(arch.hidden_widths.len());
        let mut fan_in = arch.input_width();
        for &w in &arch.hidden_widths {
            hidden.push(Layer {
                weight: glorot(&mut rng, w, fan_in),
                bias: Array1::zeros(w),
            });
            fan_in = w;
        }
        let out_in = arch.branches() * fan_in;
        let output_weight = glorot(&mut rng, 1, out_in).into_shape_with_order(out_in).unwrap();
        let m = arch.feature_rows();
        let features = arch
            .feature_scales
            .iter()
            .map(|&scale| {
                let normal = Normal::new(0.0, scale).unwrap();
                Array1::from_shape_fn(m, |_| normal.sample(&mut rng))
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            hidden,
            output_weight,
            output_bias: 0.0,
            features,
        })
    }

    /// Rebuilds a network from a flat parameter vector and fixed features.
    pub fn from_flat(
        arch: &Architecture,
        features: Vec<Array1<f64>>,
        theta: &[f64],
    ) -> Result<Self, NetError> {
        arch.validate()?;
        if features.len() != arch.num_features()
            || features.iter().any(|b| b.len() != arch.feature_rows())
        {
            return Err(NetError::InvalidArchitecture(
                "Fourier matrices do not match the architecture".into(),
            ));
        }
        let mut fan_in = arch.input_width();
        let mut hidden = Vec::new();
        for &w in &arch.hidden_widths {
            hidden.push(Layer {
                weight: Array2::zeros((w, fan_in)),
                bias: Array1::zeros(w),
            });
            fan_in = w;
        }
        let mut net = Self {
            arch: arch.clone(),
            hidden,
            output_weight: Array1::zeros(arch.branches() * fan_in),
            output_bias: 0.0,
            features,
        };
        net.set_flat(theta)?;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn features(&self) -> &[Array1<f64>] {
        &self.features
    }

    pub fn num_params(&self) -> usize {
        self.arch.num_params()
    }

    /// θ in the order: per hidden layer (row-major weight, bias), then output
    /// weight and output bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.num_params());
        for layer in &self.hidden {
            theta.extend(layer.weight.iter());
            theta.extend(layer.bias.iter());
        }
        theta.extend(self.output_weight.iter());
        theta.push(self.output_bias);
        theta
    }

    pub fn set_flat(&mut self, theta: &[f64]) -> Result<(), NetError> {
        let expected = self.num_params();
        if theta.len() != expected {
            return Err(NetError::ParamLength {
                expected,
                got: theta.len(),
            });
        }
        let mut it = theta.iter().copied();
        for layer in &mut self.hidden {
            layer.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.output_weight
            .iter_mut()
            .for_each(|w| *w = it.next().unwrap());
        self.output_bias = it.next().unwrap();
        Ok(())
    }

    /// Index of the output bias `b_L` inside θ.
    pub fn output_bias_index(&self) -> usize {
        self.num_params() - 1
    }

    /// Point evaluation by second-order duals.
    pub fn eval_with_derivs(&self, x: f64) -> EvalTriple {
        let xj = Jet2::variable(x);
        let inputs: Vec<Vec<Jet2>> = if self.features.is_empty() {
            vec![vec![xj]]
        } else {
            self.features
                .iter()
                .map(|b| {
                    let args: Vec<Jet2> = b.iter().map(|&bi| xj.scale(2.0 * PI * bi)).collect();
                    args.iter()
                        .map(|a| a.cos())
                        .chain(args.iter().map(|a| a.sin()))
                        .collect()
                })
                .collect()
        };
        let mut raw = Jet2::constant(self.output_bias);
        for (k, mut z) in inputs.into_iter().enumerate() {
            for layer in &self.hidden {
                z = layer
                    .weight
                    .outer_iter()
                    .zip(layer.bias.iter())
                    .map(|(row, &b)| {
                        row.iter()
                            .zip(&z)
                            .fold(Jet2::constant(b), |acc, (&w, &zj)| acc + zj.scale(w))
                            .tanh()
                    })
                    .collect();
            }
            let width = z.len();
            let wl = self.output_weight.slice(s![k * width..(k + 1) * width]);
            raw = wl.iter().zip(&z).fold(raw, |acc, (&w, &zj)| acc + zj.scale(w));
        }
        let v = xj * (Jet2::constant(1.0) - xj) * raw;
        EvalTriple {
            u: v.v,
            u_x: v.d1,
            u_xx: v.d2,
        }
    }

    /// `∇_θ` of `v`, `v_x` or `v_xx` at `x`.
    pub fn grad_params(&self, x: f64, which: Quantity) -> Vec<f64> {
        let fwd = self.forward(&[x]);
        let seed = match which {
            Quantity::Value => Cotangent { value: 1.0, ..Default::default() },
            Quantity::Dx => Cotangent { dx: 1.0, ..Default::default() },
            Quantity::Dxx => Cotangent { dxx: 1.0, ..Default::default() },
        };
        fwd.pullback(self, &[seed])
    }

    /// Batched jet evaluation. Values for the returned triples agree with
    /// [`Self::eval_with_derivs`] up to rounding.
    pub fn forward(&self, xs: &[f64]) -> Forward {
        let p = xs.len();
        let branches = self.arch.branches();
        let input = self.input_jets(xs);
        let mut acts = Vec::with_capacity(self.hidden.len());
        let mut pre_acts = Vec::with_capacity(self.hidden.len());
        let mut z_prev = &input;
        for layer in &self.hidden {
            let mut pre = z_prev.dot(&layer.weight.t());
            for k in 0..branches {
                let mut rows = pre.slice_mut(s![3 * k * p..(3 * k + 1) * p, ..]);
                rows += &layer.bias;
            }
            let mut z = Array2::zeros(pre.raw_dim());
            for k in 0..branches {
                let b = 3 * k * p;
                for i in 0..p {
                    let s0 = pre.row(b + i);
                    let s1 = pre.row(b + p + i);
                    let s2 = pre.row(b + 2 * p + i);
                    for j in 0..s0.len() {
                        let t = s0[j].tanh();
                        let d = 1.0 - t * t;
                        z[[b + i, j]] = t;
                        z[[b + p + i, j]] = d * s1[j];
                        z[[b + 2 * p + i, j]] = d * s2[j] - 2.0 * t * d * s1[j] * s1[j];
                    }
                }
            }
            pre_acts.push(pre);
            acts.push(z);
            z_prev = acts.last().unwrap();
        }

        let last = acts.last().unwrap();
        let width = last.ncols();
        let mut raw = Array2::<f64>::zeros((3, p));
        for k in 0..branches {
            let wl = self.output_weight.slice(s![k * width..(k + 1) * width]);
            for c in 0..3 {
                let block = last.slice(s![(3 * k + c) * p..(3 * k + c + 1) * p, ..]);
                let contrib = block.dot(&wl);
                let mut row = raw.row_mut(c);
                row += &contrib;
            }
        }
        let outputs = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let (g, g1, g2) = bc_factor(x);
                let (r0, r1, r2) = (raw[[0, i]] + self.output_bias, raw[[1, i]], raw[[2, i]]);
                EvalTriple {
                    u: g * r0,
                    u_x: g1 * r0 + g * r1,
                    u_xx: g2 * r0 + 2.0 * g1 * r1 + g * r2,
                }
            })
            .collect();
        Forward {
            xs: xs.to_vec(),
            input,
            pre_acts,
            acts,
            outputs,
        }
    }

    /// Stacked input jets, rows ordered `(branch, component, point)`.
    fn input_jets(&self, xs: &[f64]) -> Array2<f64> {
        let p = xs.len();
        if self.features.is_empty() {
            let mut a = Array2::zeros((3 * p, 1));
            for (i, &x) in xs.iter().enumerate() {
                a[[i, 0]] = x;
                a[[p + i, 0]] = 1.0;
            }
            return a;
        }
        let m = self.arch.feature_rows();
        let mut a = Array2::zeros((3 * p * self.features.len(), 2 * m));
        for (k, b) in self.features.iter().enumerate() {
            let base = 3 * k * p;
            for (i, &x) in xs.iter().enumerate() {
                for (j, &bj) in b.iter().enumerate() {
                    let w = 2.0 * PI * bj;
                    let (sn, cs) = (w * x).sin_cos();
                    a[[base + i, j]] = cs;
                    a[[base + i, m + j]] = sn;
                    a[[base + p + i, j]] = -w * sn;
                    a[[base + p + i, m + j]] = w * cs;
                    a[[base + 2 * p + i, j]] = -w * w * cs;
                    a[[base + 2 * p + i, m + j]] = -w * w * sn;
                }
            }
        }
        a
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng))
}

/// `x (1 - x)` and its first two derivatives.
fn bc_factor(x: f64) -> (f64, f64, f64) {
    (x * (1.0 - x), 1.0 - 2.0 * x, -2.0)
}

/// Cached batch forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    xs: Vec<f64>,
    input: Array2<f64>,
    pre_acts: Vec<Array2<f64>>,
    acts: Vec<Array2<f64>>,
    outputs: Vec<EvalTriple>,
}

impl Forward {
    pub fn points(&self) -> &[f64] {
        &self.xs
    }

    pub fn outputs(&self) -> &[EvalTriple] {
        &self.outputs
    }

    /// Returns `Σ_i a_i ∇_θ v(x_i) + b_i ∇_θ v_x(x_i) + c_i ∇_θ v_xx(x_i)`
    /// for seeds `(a_i, b_i, c_i)`. `params` must be the network that produced
    /// this pass.
    pub fn pullback(&self, params: &NetParams, seeds: &[Cotangent]) -> Vec<f64> {
        assert_eq!(seeds.len(), self.xs.len(), "one seed per batch point");
        let p = self.xs.len();
        let branches = params.arch.branches();
        let last = self.acts.last().unwrap();
        let width = last.ncols();

        // raw-output cotangents through the x(1-x) factor
        let mut raw_bar = Array2::<f64>::zeros((3, p));
        for (i, (&x, sd)) in self.xs.iter().zip(seeds).enumerate() {
            let (g, g1, g2) = bc_factor(x);
            raw_bar[[0, i]] = sd.value * g + sd.dx * g1 + sd.dxx * g2;
            raw_bar[[1, i]] = sd.dx * g + 2.0 * sd.dxx * g1;
            raw_bar[[2, i]] = sd.dxx * g;
        }

        let mut out_w_grad = Array1::<f64>::zeros(params.output_weight.len());
        let mut z_bar = Array2::<f64>::zeros(last.raw_dim());
        for k in 0..branches {
            let wl = params.output_weight.slice(s![k * width..(k + 1) * width]);
            let mut gk = out_w_grad.slice_mut(s![k * width..(k + 1) * width]);
            for c in 0..3 {
                let rows = (3 * k + c) * p..(3 * k + c + 1) * p;
                let block = last.slice(s![rows.clone(), ..]);
                let rb = raw_bar.row(c);
                gk += &block.t().dot(&rb);
                let mut zb = z_bar.slice_mut(s![rows, ..]);
                for (i, mut row) in zb.outer_iter_mut().enumerate() {
                    row.scaled_add(rb[i], &wl);
                }
            }
        }
        let out_b_grad: f64 = raw_bar.row(0).sum();

        let mut layer_grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.acts.len());
        for l in (0..self.acts.len()).rev() {
            let pre = &self.pre_acts[l];
            let z = &self.acts[l];
            let mut s_bar = Array2::<f64>::zeros(pre.raw_dim());
            for k in 0..branches {
                let b = 3 * k * p;
                for i in 0..p {
                    for j in 0..pre.ncols() {
                        let t = z[[b + i, j]];
                        let d = 1.0 - t * t;
                        let s1 = pre[[b + p + i, j]];
                        let s2 = pre[[b + 2 * p + i, j]];
                        let zb0 = z_bar[[b + i, j]];
                        let zb1 = z_bar[[b + p + i, j]];
                        let zb2 = z_bar[[b + 2 * p + i, j]];
                        let d_bar = zb1 * s1 + zb2 * (s2 - 2.0 * t * s1 * s1);
                        let t_bar = zb0 - 2.0 * d * s1 * s1 * zb2 - 2.0 * t * d_bar;
                        s_bar[[b + i, j]] = t_bar * d;
                        s_bar[[b + p + i, j]] = zb1 * d - 4.0 * t * d * s1 * zb2;
                        s_bar[[b + 2 * p + i, j]] = zb2 * d;
                    }
                }
            }
            let z_prev = if l == 0 { &self.input } else { &self.acts[l - 1] };
            let w_grad = s_bar.t().dot(z_prev);
            let mut b_grad = Array1::<f64>::zeros(pre.ncols());
            for k in 0..branches {
                b_grad += &s_bar
                    .slice(s![3 * k * p..(3 * k + 1) * p, ..])
                    .sum_axis(Axis(0));
            }
            if l > 0 {
                z_bar = s_bar.dot(&params.hidden[l].weight);
            }
            layer_grads.push((w_grad, b_grad));
        }
        layer_grads.reverse();

        let mut grad = Vec::with_capacity(params.num_params());
        for (w, b) in &layer_grads {
            grad.extend(w.iter());
            grad.extend(b.iter());
        }
        grad.extend(out_w_grad.iter());
        grad.push(out_b_grad);
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetParams {
        NetParams::init_glorot(&Architecture::fourier(2, 8, vec![1.0, 4.0]), 11).unwrap()
    }

    #[test]
    fn parameter_count_matches_layout() {
        let arch = Architecture::fourier(2, 100, vec![1.0, 16.0]);
        // 100*100+100 twice, then 200 output weights and the bias
        assert_eq!(arch.num_params(), 2 * 10_100 + 201);
        let net = NetParams::init_glorot(&arch, 0).unwrap();
        assert_eq!(net.to_flat().len(), arch.num_params());
        assert_eq!(Architecture::vanilla(2, 100).num_params(), 200 + 10_100 + 101);
    }

    #[test]
    fn rejects_odd_first_width() {
        let arch = Architecture::fourier(1, 7, vec![1.0]);
        assert!(NetParams::init_glorot(&arch, 0).is_err());
        assert!(Architecture::fourier(1, 8, vec![0.0]).validate().is_err());
        assert!(Architecture::fourier(0, 8, vec![1.0]).validate().is_err());
    }

    #[test]
    fn glorot_is_deterministic_with_zero_biases() {
        let arch = Architecture::fourier(2, 16, vec![1.0, 16.0]);
        let a = NetParams::init_glorot(&arch, 5).unwrap();
        let b = NetParams::init_glorot(&arch, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.hidden.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(a.output_bias, 0.0);
        let c = NetParams::init_glorot(&arch, 6).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());
        let limit = (6.0f64 / 32.0).sqrt();
        assert!(a.hidden[1].weight.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn fourier_matrix_variance() {
        let arch = Architecture::fourier(1, 100, vec![1.0, 16.0]);
        let net = NetParams::init_glorot(&arch, 2024).unwrap();
        let b = &net.features()[1];
        assert_eq!(b.len(), 50);
        let mean = b.mean().unwrap();
        let var = b.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
        assert!((var - 256.0).abs() < 0.2 * 256.0, "sample variance {var}");
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut net = tiny();
        let zeros = vec![0.0; net.num_params()];
        net.set_flat(&zeros).unwrap();
        for &x in &[0.0, 0.2, 0.77, 1.0] {
            assert_eq!(net.eval_with_derivs(x), EvalTriple::default());
        }
    }

    #[test]
    fn output_bias_gradients_through_boundary_factor() {
        let mut net = tiny();
        net.set_flat(&vec![0.0; net.num_params()]).unwrap();
        let bl = net.output_bias_index();
        let g = net.grad_params(0.5, Quantity::Dx);
        assert!(g[bl].abs() < 1e-15);
        let g = net.grad_params(0.5, Quantity::Value);
        assert!((g[bl] - 0.25).abs() < 1e-15);
        for &x in &[0.1, 0.5, 0.9] {
            let g = net.grad_params(x, Quantity::Dxx);
            assert_eq!(g[bl], -2.0);
        }
    }

    #[test]
    fn boundary_values_vanish() {
        let net = tiny();
        assert_eq!(net.eval_with_derivs(0.0).u, 0.0);
        assert_eq!(net.eval_with_derivs(1.0).u, 0.0);
        let fwd = net.forward(&[0.0, 1.0]);
        assert_eq!(fwd.outputs()[0].u, 0.0);
        assert_eq!(fwd.outputs()[1].u, 0.0);
    }

    #[test]
    fn batched_forward_agrees_with_dual_path() {
        for arch in [
            Architecture::fourier(2, 8, vec![1.0, 4.0]),
            Architecture::vanilla(3, 5),
        ] {
            let net = NetParams::init_glorot(&arch, 3).unwrap();
            let xs: Vec<f64> = (0..13).map(|i| i as f64 / 12.0).collect();
            let fwd = net.forward(&xs);
            for (&x, out) in xs.iter().zip(fwd.outputs()) {
                let r = net.eval_with_derivs(x);
                assert!((r.u - out.u).abs() < 1e-12);
                assert!((r.u_x - out.u_x).abs() < 1e-11);
                assert!((r.u_xx - out.u_xx).abs() < 1e-9 * (1.0 + r.u_xx.abs()));
            }
        }
    }

    #[test]
    fn pullback_is_linear_in_seeds() {
        let net = tiny();
        let xs = [0.1, 0.6];
        let fwd = net.forward(&xs);
        let s1 = [
            Cotangent { value: 1.0, dx: 0.5, dxx: -0.2 },
            Cotangent { value: 0.0, dx: 0.0, dxx: 0.0 },
        ];
        let s2 = [
            Cotangent::default(),
            Cotangent { value: -0.3, dx: 2.0, dxx: 0.1 },
        ];
        let both = [s1[0], s2[1]];
        let g1 = fwd.pullback(&net, &s1);
        let g2 = fwd.pullback(&net, &s2);
        let g = fwd.pullback(&net, &both);
        for i in 0..g.len() {
            assert!((g[i] - g1[i] - g2[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_length_mismatch_is_an_error() {
        let mut net = tiny();
        assert!(matches!(
            net.set_flat(&[0.0; 3]),
            Err(NetError::ParamLength { got: 3, .. })
        ));
    }
}
