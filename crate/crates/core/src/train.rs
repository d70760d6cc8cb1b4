//! Training loop: residual loss, adjoint-based total gradient, Adam with a
//! staircase learning-rate decay.
//!
//! The objective is `J(θ) = R(θ) + τ₂ C(v_θ, y(θ))` where `R` is the mean
//! squared PDE residual at the collocation points, `C` the coupling term and
//! `y(θ)` the coarse state for the upscaled coefficient `K̃[v_θ]`. Because the
//! coarse matrix is `K̃ B_h`, the state derivative enters the gradient as
//! `(yᵀ B_h p) ∇_θ K̃` with `p` the adjoint state.

use serde::{Deserialize, Serialize};

use crate::coupling::{self, CompressionSpec, CouplingError};
use crate::fem1d::{self, CoarseSystem, CoefficientRule, FemError, FineReference, Mesh1D};
use crate::net::{Architecture, Cotangent, EvalTriple, NetError, NetParams};
use crate::problem::FineProblem1D;
use crate::upscale::{self, KAPPA_MIN};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error("non-finite loss at iteration {iteration} (residual {residual}, coupling {coupling})")]
    NonFinite {
        iteration: usize,
        residual: f64,
        coupling: f64,
    },
}

impl TrainError {
    /// True for errors caused by the configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Net(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Residual loss plus the coarse-scale constraint.
    #[default]
    #[serde(rename = "hybrid")]
    Hybrid,
    /// Residual loss only.
    #[serde(rename = "pinn")]
    Pinn,
    /// Plain tanh network with the hybrid loss and a two-phase `τ₂` schedule.
    #[serde(rename = "v-pinn", alias = "v-pinn-schedule")]
    VPinn,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hybrid" => Ok(Self::Hybrid),
            "pinn" => Ok(Self::Pinn),
            "v-pinn" | "v-pinn-schedule" => Ok(Self::VPinn),
            _ => Err(format!("unknown training mode {s:?}")),
        }
    }
}

/// A stretch of iterations run with a fixed `τ₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tau2Phase {
    pub iterations: usize,
    pub tau2: f64,
}

/// Flat training configuration. Missing keys take the defaults of
/// [`TrainConfig::preset`] for the given `epsilon` and `mode`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epsilon: f64,
    pub depth: usize,
    pub width: usize,
    /// Fourier feature scales; empty for a plain tanh network.
    pub feature_scales: Vec<f64>,
    pub collocation: usize,
    pub coarse_nodes: usize,
    /// Boundary penalty weight. Inert in 1D since the boundary data is exact.
    pub tau1: f64,
    pub tau2: f64,
    /// Overrides `tau2` when non-empty.
    pub tau2_schedule: Vec<Tau2Phase>,
    pub iterations: usize,
    /// Stop once the total loss drops to this value.
    pub tolerance: f64,
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub kappa_min: f64,
    /// Compression width δ; defaults to ε.
    pub delta: f64,
    /// Averaging window override; `⌊N_h δ⌋` when absent.
    pub window: Option<usize>,
    /// Relative-error logging interval (0 disables).
    pub log_every: usize,
}

/// Network sizes, collocation counts, constraint weights and coarse meshes
/// for the three oscillation scales studied.
const TABLE: [(f64, usize, usize, f64, usize, usize, usize); 3] = [
    // 1/ε, width, M, τ₂, N_h, hybrid its, pinn its
    (16.0, 100, 280, 10.0, 50, 30_000, 30_000),
    (48.0, 100, 840, 1000.0, 50, 57_000, 79_000),
    (64.0, 150, 1000, 1200.0, 70, 102_000, 120_000),
];

impl TrainConfig {
    /// Defaults for `epsilon`; scales outside the table get width 100,
    /// `M = ⌈17.5/ε⌉`, `N_h = 50`, `τ₂ = 10` and 30000 iterations.
    pub fn preset(epsilon: f64, mode: Mode) -> Self {
        let row = TABLE
            .iter()
            .find(|r| (r.0 * epsilon - 1.0).abs() < 1e-9)
            .copied()
            .unwrap_or((1.0 / epsilon, 100, (17.5 / epsilon).ceil() as usize, 10.0, 50, 30_000, 30_000));
        let (_, width, m, tau2, nh, hybrid_its, pinn_its) = row;
        let mut cfg = Self {
            mode,
            epsilon,
            depth: 2,
            width,
            feature_scales: vec![1.0, 1.0 / epsilon],
            collocation: m,
            coarse_nodes: nh,
            tau1: 0.0,
            tau2,
            tau2_schedule: Vec::new(),
            iterations: hybrid_its,
            tolerance: 0.0,
            lr0: 5e-4,
            lr_decay: 0.75,
            decay_every: 1000,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            kappa_min: KAPPA_MIN,
            delta: epsilon,
            window: None,
            log_every: 500,
        };
        match mode {
            Mode::Hybrid => {}
            Mode::Pinn => {
                cfg.iterations = pinn_its;
                cfg.tau2 = 0.0;
            }
            Mode::VPinn => {
                cfg.width = 100;
                cfg.feature_scales.clear();
                cfg.tau2_schedule = vec![
                    Tau2Phase {
                        iterations: 14_500,
                        tau2: 5e5,
                    },
                    Tau2Phase {
                        iterations: 500,
                        tau2: 5e2,
                    },
                ];
                cfg.tau2 = 5e5;
                cfg.iterations = 15_000;
            }
        }
        cfg
    }

    /// Merges a flat JSON object over the preset selected by its `epsilon`
    /// and `mode` keys (or the supplied fallbacks).
    pub fn from_json(text: &str, epsilon: f64, mode: Mode) -> Result<Self, TrainError> {
        let bad = |e: serde_json::Error| TrainError::Config(e.to_string());
        let overrides: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
        let obj = overrides
            .as_object()
            .ok_or_else(|| TrainError::Config("config must be a JSON object".into()))?;
        let eps = match obj.get("epsilon") {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| TrainError::Config("epsilon must be a number".into()))?,
            None => epsilon,
        };
        let mode = match obj.get("mode") {
            Some(v) => serde_json::from_value(v.clone()).map_err(bad)?,
            None => mode,
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(TrainError::Config(format!("epsilon must be positive, got {eps}")));
        }
        let mut base = serde_json::to_value(Self::preset(eps, mode)).map_err(bad)?;
        let map = base.as_object_mut().unwrap();
        for (k, v) in obj {
            if !map.contains_key(k) {
                return Err(TrainError::Config(format!("unknown config key {k:?}")));
            }
            map.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(base).map_err(bad)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::fourier(self.depth, self.width, self.feature_scales.clone())
    }

    /// Checks ranges; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.collocation == 0 || self.coarse_nodes == 0 {
            return fail("collocation and coarse_nodes must be at least 1".into());
        }
        for (name, v) in [
            ("lr0", self.lr0),
            ("lr_decay", self.lr_decay),
            ("adam_eps", self.adam_eps),
            ("delta", self.delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.decay_every == 0 {
            return fail("decay_every must be positive".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        let taus = std::iter::once(self.tau2)
            .chain(self.tau2_schedule.iter().map(|p| p.tau2))
            .chain(std::iter::once(self.tau1));
        for t in taus {
            if !(t >= 0.0 && t.is_finite()) {
                return fail(format!("penalty weights must be nonnegative, got {t}"));
            }
        }
        if !(self.kappa_min >= 0.0) || !(self.tolerance >= 0.0) {
            return fail("kappa_min and tolerance must be nonnegative".into());
        }
        self.architecture().validate()?;
        let mut warnings = Vec::new();
        if (self.collocation as f64) * self.epsilon < 10.0 {
            warnings.push(format!(
                "only {:.1} collocation points per oscillation period",
                self.collocation as f64 * self.epsilon
            ));
        }
        Ok(warnings)
    }

    /// Constraint weight in force at iteration `it`.
    pub fn tau2_at(&self, it: usize) -> f64 {
        if self.mode == Mode::Pinn {
            return 0.0;
        }
        let mut end = 0;
        for phase in &self.tau2_schedule {
            end += phase.iterations;
            if it < end {
                return phase.tau2;
            }
        }
        self.tau2_schedule.last().map_or(self.tau2, |p| p.tau2)
    }

    pub fn lr_at(&self, it: usize) -> f64 {
        lr_schedule(it, self.lr0, self.lr_decay, self.decay_every)
    }
}

/// Staircase decay `lr₀ · decay^⌊it / every⌋`.
pub fn lr_schedule(it: usize, lr0: f64, decay: f64, every: usize) -> f64 {
    lr0 * decay.powi((it / every) as i32)
}

/// Bias-corrected Adam on a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((th, g), (m, v)) in theta
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *th -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// `(1/M) Σ (K_x v_x + K v_xx + f)²` from network outputs.
pub fn residual_loss_from_outputs(problem: &FineProblem1D, xs: &[f64], outputs: &[EvalTriple]) -> f64 {
    xs.iter()
        .zip(outputs)
        .map(|(&x, o)| {
            let r = residual_at(problem, x, o);
            r * r
        })
        .sum::<f64>()
        / xs.len() as f64
}

pub fn residual_loss(params: &NetParams, problem: &FineProblem1D, xs: &[f64]) -> f64 {
    residual_loss_from_outputs(problem, xs, params.forward(xs).outputs())
}

fn residual_at(problem: &FineProblem1D, x: f64, o: &EvalTriple) -> f64 {
    problem.coeff_dx(x) * o.u_x + problem.coeff(x) * o.u_xx + problem.rhs(x)
}

/// Everything evaluated at one parameter vector.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub residual_loss: f64,
    /// Unweighted coupling term `C`.
    pub coupling_loss: f64,
    pub tau2: f64,
    pub k_tilde: f64,
    /// Coarse state for `k_tilde`, or the previous one on coercivity loss.
    pub state: Vec<f64>,
    /// True when `K̃ ≤ κ_min` and only the residual gradient was used.
    pub fallback: bool,
    pub gradient: Option<Vec<f64>>,
}

impl Evaluation {
    pub fn total_loss(&self) -> f64 {
        self.residual_loss + self.tau2 * self.coupling_loss
    }
}

/// Fixed discretization data for one problem instance.
#[derive(Clone, Debug)]
pub struct Objective {
    pub problem: FineProblem1D,
    pub collocation: Vec<f64>,
    pub compression: CompressionSpec,
    pub weights: Vec<f64>,
    pub coarse: CoarseSystem,
    pub kappa_min: f64,
    points: Vec<f64>,
}

impl Objective {
    pub fn new(config: &TrainConfig) -> Result<Self, TrainError> {
        let mesh = Mesh1D::new(config.coarse_nodes)?;
        let compression = match config.window {
            Some(w) => CompressionSpec::with_window(&mesh, config.delta, w)?,
            None => CompressionSpec::new(&mesh, config.delta)?,
        };
        let collocation = upscale::collocation_points(config.collocation);
        let mut points = collocation.clone();
        points.extend_from_slice(&compression.nodes);
        Ok(Self {
            problem: FineProblem1D::new(config.epsilon),
            weights: coupling::lumped_weights(&mesh),
            coarse: CoarseSystem::new(mesh),
            collocation,
            compression,
            kappa_min: config.kappa_min,
            points,
        })
    }

    /// Replaces the collocation points.
    pub fn set_collocation(&mut self, xs: Vec<f64>) {
        self.points = xs.iter().chain(&self.compression.nodes).copied().collect();
        self.collocation = xs;
    }

    /// Evaluates losses and, if asked, the total gradient. One batched
    /// forward pass over collocation points and coarse nodes, one state
    /// solve and one adjoint solve.
    pub fn evaluate(
        &self,
        params: &NetParams,
        tau2: f64,
        previous_state: Option<&[f64]>,
        with_gradient: bool,
    ) -> Result<Evaluation, TrainError> {
        let m = self.collocation.len();
        let fwd = params.forward(&self.points);
        let (col_out, node_out) = fwd.outputs().split_at(m);
        let prob = &self.problem;

        let residuals: Vec<f64> = self
            .collocation
            .iter()
            .zip(col_out)
            .map(|(&x, o)| residual_at(prob, x, o))
            .collect();
        let residual_loss = residuals.iter().map(|r| r * r).sum::<f64>() / m as f64;
        let k_tilde = upscale::upscale_1d_from_outputs(prob, &self.collocation, col_out);
        let node_values: Vec<f64> = node_out.iter().map(|o| o.u).collect();

        let fallback = !(k_tilde > self.kappa_min);
        let state = if fallback {
            previous_state
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; self.compression.len()])
        } else {
            self.coarse.solve_scaled(k_tilde, &self.coarse.load)?
        };
        let coupling_loss =
            coupling::coupling_loss_from_values(&node_values, &state, &self.compression, &self.weights)?;

        let gradient = if with_gradient {
            let mut seeds = vec![Cotangent::default(); self.points.len()];
            let inv_m = 1.0 / m as f64;
            for ((s, &x), r) in seeds.iter_mut().zip(&self.collocation).zip(&residuals) {
                s.dx = 2.0 * r * prob.coeff_dx(x) * inv_m;
                s.dxx = 2.0 * r * prob.coeff(x) * inv_m;
            }
            if tau2 > 0.0 && !fallback {
                let rhs = coupling::adjoint_rhs_from_values(
                    &node_values,
                    &state,
                    &self.compression,
                    tau2,
                    &self.weights,
                )?;
                let adjoint = self.coarse.solve_scaled(k_tilde, &rhs)?;
                let contraction = self.coarse.stiffness.bilinear(&state, &adjoint);
                for (s, &x) in seeds.iter_mut().zip(&self.collocation) {
                    s.dx += contraction * prob.coeff(x) * inv_m;
                }
                let direct =
                    coupling::coupling_node_seeds(&node_values, &state, &self.compression, &self.weights)?;
                for (s, d) in seeds[m..].iter_mut().zip(direct) {
                    s.value = tau2 * d;
                }
            }
            Some(fwd.pullback(params, &seeds))
        } else {
            None
        };

        Ok(Evaluation {
            residual_loss,
            coupling_loss,
            tau2,
            k_tilde,
            state,
            fallback,
            gradient,
        })
    }

    /// `J(θ)` with the state re-solved for `θ`.
    pub fn reduced_loss(&self, params: &NetParams, tau2: f64) -> Result<f64, TrainError> {
        Ok(self.evaluate(params, tau2, None, false)?.total_loss())
    }
}

/// One history row. `rel_l2` is only filled on logging iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub lr: f64,
    pub tau2: f64,
    pub residual_loss: f64,
    pub coupling_loss: f64,
    pub rel_l2: Option<f64>,
    pub k_tilde: f64,
    pub fallback: bool,
}

pub const HISTORY_HEADER: &str = "it,lr,tau2,residual_loss,coupling_loss,rel_l2,k_tilde,fallback";

impl HistoryRow {
    pub fn to_csv(&self) -> String {
        let rel = self.rel_l2.map(|r| format!("{r:.16e}")).unwrap_or_default();
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{}",
            self.iteration,
            self.lr,
            self.tau2,
            self.residual_loss,
            self.coupling_loss,
            rel,
            self.k_tilde,
            u8::from(self.fallback)
        )
    }

    pub fn total_loss(&self) -> f64 {
        self.residual_loss + self.tau2 * self.coupling_loss
    }
}

/// Optimizer state, coarse state and history.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: NetParams,
    pub theta: Vec<f64>,
    pub adam: Adam,
    pub iteration: usize,
    pub state: Vec<f64>,
    pub history: Vec<HistoryRow>,
}

/// Final figures of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub stopped_on_tolerance: bool,
    pub final_residual_loss: f64,
    pub final_coupling_loss: f64,
    pub final_k_tilde: f64,
    /// Relative L² error of the final iterate on the reference nodes.
    pub final_rel_l2: f64,
    pub fallback_iterations: usize,
    pub warnings: Vec<String>,
}

/// Drives the optimization one iteration at a time.
pub struct Trainer {
    pub config: TrainConfig,
    pub objective: Objective,
    pub reference: FineReference,
    pub train: TrainState,
    warnings: Vec<String>,
    current: Evaluation,
    stopped: bool,
}

impl Trainer {
    /// Initializes the network and performs the initial state solve.
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        let warnings = config.validate()?;
        let objective = Objective::new(&config)?;
        let reference = fem1d::fine_reference(
            &objective.problem,
            fem1d::REFERENCE_INTERIOR_NODES,
            CoefficientRule::Trapezoid,
        )?;
        let params = NetParams::init_glorot(&config.architecture(), config.seed)?;
        let theta = params.to_flat();
        let adam = Adam::new(theta.len(), config.beta1, config.beta2, config.adam_eps);
        let current = objective.evaluate(&params, config.tau2_at(0), None, true)?;
        let train = TrainState {
            params,
            theta,
            adam,
            iteration: 0,
            state: current.state.clone(),
            history: Vec::new(),
        };
        Ok(Self {
            config,
            objective,
            reference,
            train,
            warnings,
            current,
            stopped: false,
        })
    }

    pub fn current(&self) -> &Evaluation {
        &self.current
    }

    pub fn finished(&self) -> bool {
        self.stopped || self.train.iteration >= self.config.iterations
    }

    /// Relative L² error against the fine reference on its nodes.
    pub fn relative_error(&self) -> f64 {
        let nodes = self.reference.nodes();
        let pred: Vec<f64> = self
            .train
            .params
            .forward(&nodes)
            .outputs()
            .iter()
            .map(|o| o.u)
            .collect();
        fem1d::relative_l2(&pred, &self.reference.values).unwrap_or(f64::NAN)
    }

    /// Network values at the reference nodes.
    pub fn sample_solution(&self) -> Vec<(f64, f64, f64)> {
        let nodes = self.reference.nodes();
        let fwd = self.train.params.forward(&nodes);
        nodes
            .iter()
            .zip(fwd.outputs())
            .zip(&self.reference.values)
            .map(|((&x, o), &r)| (x, o.u, r))
            .collect()
    }

    /// Logs the current iterate, applies one Adam step and re-evaluates
    /// (forward pass and state solve) at the new parameters.
    pub fn step(&mut self) -> Result<(), TrainError> {
        let it = self.train.iteration;
        let cur = &self.current;
        if !cur.total_loss().is_finite() {
            return Err(TrainError::NonFinite {
                iteration: it,
                residual: cur.residual_loss,
                coupling: cur.coupling_loss,
            });
        }
        let lr = self.config.lr_at(it);
        let log = self.config.log_every > 0 && it % self.config.log_every == 0;
        let row = HistoryRow {
            iteration: it,
            lr,
            tau2: cur.tau2,
            residual_loss: cur.residual_loss,
            coupling_loss: cur.coupling_loss,
            rel_l2: log.then(|| self.relative_error()),
            k_tilde: cur.k_tilde,
            fallback: cur.fallback,
        };
        self.train.history.push(row);
        if row.total_loss() <= self.config.tolerance {
            self.stopped = true;
            return Ok(());
        }

        let grad = self.current.gradient.take().expect("gradient evaluated");
        self.train.adam.step(&mut self.train.theta, &grad, lr);
        self.train.params.set_flat(&self.train.theta)?;
        self.train.iteration += 1;
        let tau2 = self.config.tau2_at(self.train.iteration);
        self.current = self
            .objective
            .evaluate(&self.train.params, tau2, Some(&self.train.state), true)?;
        self.train.state.clone_from(&self.current.state);
        Ok(())
    }

    /// Runs until the iteration budget or the tolerance is reached.
    pub fn run(&mut self) -> Result<TrainReport, TrainError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(self.report())
    }

    pub fn report(&self) -> TrainReport {
        TrainReport {
            iterations: self.train.iteration,
            stopped_on_tolerance: self.stopped,
            final_residual_loss: self.current.residual_loss,
            final_coupling_loss: self.current.coupling_loss,
            final_k_tilde: self.current.k_tilde,
            final_rel_l2: self.relative_error(),
            fallback_iterations: self.train.history.iter().filter(|r| r.fallback).count(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Runs `config` to completion.
pub fn run(config: TrainConfig) -> Result<(TrainState, TrainReport), TrainError> {
    let mut trainer = Trainer::new(config)?;
    let report = trainer.run()?;
    Ok((trainer.train, report))
}

/// Settings of the small instance used to validate the assembled gradient
/// against finite differences of the reduced loss.
pub fn gradcheck_config() -> TrainConfig {
    let mut cfg = TrainConfig::preset(0.25, Mode::Hybrid);
    cfg.depth = 1;
    cfg.width = 8;
    cfg.feature_scales = vec![1.0, 4.0];
    cfg.coarse_nodes = 10;
    cfg.collocation = 32;
    cfg.tau2 = 10.0;
    cfg
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub draws: usize,
    pub parameters: usize,
    pub max_rel_err: f64,
    pub worst_draw: usize,
    pub worst_component: usize,
}

/// Compares the assembled gradient with central differences of the reduced
/// loss at `draws` random parameter vectors. Each component's error is
/// relative to `max(|g_k|, |fd_k|, 1e-6 ‖g‖_∞)`.
pub fn gradcheck(config: &TrainConfig, draws: usize, seed: u64) -> Result<GradcheckReport, TrainError> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    let objective = Objective::new(config)?;
    let arch = config.architecture();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.1).unwrap();
    let tau2 = config.tau2;
    let mut report = GradcheckReport {
        draws,
        parameters: arch.num_params(),
        max_rel_err: 0.0,
        worst_draw: 0,
        worst_component: 0,
    };
    for draw in 0..draws {
        // redraw until the upscaled coefficient is safely coercive
        let mut attempt = 0u64;
        let (params, theta, eval) = loop {
            let mut params = NetParams::init_glorot(&arch, seed.wrapping_add(1000 * attempt + draw as u64))?;
            let theta: Vec<f64> = params
                .to_flat()
                .iter()
                .map(|t| t + jitter.sample(&mut rng))
                .collect();
            params.set_flat(&theta)?;
            let eval = objective.evaluate(&params, tau2, None, true)?;
            if eval.k_tilde > 0.1 {
                break (params, theta, eval);
            }
            attempt += 1;
            if attempt == 100 {
                return Err(TrainError::Config(format!(
                    "draw {draw}: no coercive parameter sample found"
                )));
            }
        };
        let grad = eval.gradient.unwrap();
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut probe = params.clone();
        let mut t = theta.clone();
        for k in 0..theta.len() {
            let h = 1e-6 * theta[k].abs().max(1.0);
            t[k] = theta[k] + h;
            probe.set_flat(&t)?;
            let jp = objective.reduced_loss(&probe, tau2)?;
            t[k] = theta[k] - h;
            probe.set_flat(&t)?;
            let jm = objective.reduced_loss(&probe, tau2)?;
            t[k] = theta[k];
            let fd = (jp - jm) / (2.0 * h);
            let denom = grad[k].abs().max(fd.abs()).max(1e-6 * scale);
            let err = (grad[k] - fd).abs() / denom;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_draw = draw;
                report.worst_component = k;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_staircase() {
        assert_eq!(lr_schedule(0, 5e-4, 0.75, 1000), 5e-4);
        assert_eq!(lr_schedule(999, 5e-4, 0.75, 1000), 5e-4);
        assert!((lr_schedule(1000, 5e-4, 0.75, 1000) - 3.75e-4).abs() < 1e-18);
        assert!((lr_schedule(2500, 5e-4, 0.75, 1000) - 5e-4 * 0.5625).abs() < 1e-18);
    }

    #[test]
    fn adam_zero_gradient_keeps_theta() {
        let mut a = Adam::new(3, 0.9, 0.999, 1e-8);
        a.m = vec![1.0, -1.0, 0.5];
        a.v = vec![1.0, 1.0, 1.0];
        let mut th = vec![1.0, 2.0, 3.0];
        a.step(&mut th, &[0.0; 3], 0.0);
        assert_eq!(th, vec![1.0, 2.0, 3.0]);
        assert!((a.m[0] - 0.9).abs() < 1e-15 && (a.v[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_has_size_lr() {
        let mut a = Adam::new(3, 0.9, 0.999, 1e-8);
        let mut th = vec![0.0; 3];
        a.step(&mut th, &[3.0, -0.2, 1e3], 1e-3);
        for (t, s) in th.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((t - s * 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn tau2_schedule_phases() {
        let cfg = TrainConfig::preset(1.0 / 16.0, Mode::VPinn);
        assert_eq!(cfg.tau2_at(0), 5e5);
        assert_eq!(cfg.tau2_at(14_499), 5e5);
        assert_eq!(cfg.tau2_at(14_500), 5e2);
        assert_eq!(cfg.tau2_at(20_000), 5e2);
        assert!(cfg.feature_scales.is_empty());
        assert_eq!(TrainConfig::preset(1.0 / 16.0, Mode::Pinn).tau2_at(5), 0.0);
    }

    #[test]
    fn presets_follow_table() {
        let c = TrainConfig::preset(1.0 / 64.0, Mode::Hybrid);
        assert_eq!((c.width, c.collocation, c.coarse_nodes), (150, 1000, 70));
        assert_eq!(c.tau2, 1200.0);
        assert_eq!(c.feature_scales, vec![1.0, 64.0]);
        let c = TrainConfig::preset(1.0 / 48.0, Mode::Pinn);
        assert_eq!((c.collocation, c.iterations), (840, 79_000));
    }

    #[test]
    fn config_json_overrides() {
        let c = TrainConfig::from_json(r#"{"epsilon": 0.0625, "iterations": 10, "seed": 4}"#, 0.5, Mode::Pinn)
            .unwrap();
        assert_eq!((c.iterations, c.seed, c.collocation), (10, 4, 280));
        assert_eq!(c.mode, Mode::Pinn);
        assert!(TrainConfig::from_json(r#"{"bogus": 1}"#, 0.0625, Mode::Hybrid).is_err());
        assert!(TrainConfig::from_json(r#"{"lr0": -1}"#, 0.0625, Mode::Hybrid).is_err());
        assert!(TrainConfig::from_json("[1]", 0.0625, Mode::Hybrid).is_err());
    }

    fn zero_params(cfg: &TrainConfig) -> NetParams {
        let mut p = NetParams::init_glorot(&cfg.architecture(), 0).unwrap();
        p.set_flat(&vec![0.0; p.num_params()]).unwrap();
        p
    }

    #[test]
    fn zero_net_residual_is_mean_square_rhs() {
        let cfg = gradcheck_config();
        let obj = Objective::new(&cfg).unwrap();
        let p = zero_params(&cfg);
        let expected: f64 =
            obj.collocation.iter().map(|&x| obj.problem.rhs(x).powi(2)).sum::<f64>() / 32.0;
        let r = residual_loss(&p, &obj.problem, &obj.collocation);
        assert!((r - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn zero_tau2_gives_residual_gradient() {
        let cfg = gradcheck_config();
        let obj = Objective::new(&cfg).unwrap();
        let p = NetParams::init_glorot(&cfg.architecture(), 5).unwrap();
        let g0 = obj.evaluate(&p, 0.0, None, true).unwrap().gradient.unwrap();
        // residual-only pullback
        let fwd = p.forward(&obj.collocation);
        let seeds: Vec<Cotangent> = obj
            .collocation
            .iter()
            .zip(fwd.outputs())
            .map(|(&x, o)| {
                let r = residual_at(&obj.problem, x, o);
                Cotangent {
                    value: 0.0,
                    dx: 2.0 * r * obj.problem.coeff_dx(x) / 32.0,
                    dxx: 2.0 * r * obj.problem.coeff(x) / 32.0,
                }
            })
            .collect();
        let g1 = fwd.pullback(&p, &seeds);
        for (a, b) in g0.iter().zip(&g1) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn gradient_matches_reduced_fd() {
        let rep = gradcheck(&gradcheck_config(), 3, 11).unwrap();
        assert!(rep.max_rel_err < 1e-4, "{rep:?}");
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let mut cfg = gradcheck_config();
        cfg.iterations = 0;
        let (state, report) = run(cfg.clone()).unwrap();
        assert_eq!(state.iteration, 0);
        assert!(state.history.is_empty());
        assert_eq!(state.theta, NetParams::init_glorot(&cfg.architecture(), cfg.seed).unwrap().to_flat());
        assert!(state.state.iter().any(|&y| y != 0.0));
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn identical_seeds_identical_histories() {
        let mut cfg = gradcheck_config();
        cfg.iterations = 30;
        cfg.log_every = 10;
        let (a, _) = run(cfg.clone()).unwrap();
        let (b, _) = run(cfg).unwrap();
        assert_eq!(a.theta, b.theta);
        let ca: Vec<String> = a.history.iter().map(HistoryRow::to_csv).collect();
        let cb: Vec<String> = b.history.iter().map(HistoryRow::to_csv).collect();
        assert_eq!(ca, cb);
    }

    #[test]
    fn coercivity_fallback_keeps_state() {
        let mut cfg = gradcheck_config();
        cfg.kappa_min = 1e6;
        let obj = Objective::new(&cfg).unwrap();
        let p = NetParams::init_glorot(&cfg.architecture(), 1).unwrap();
        let prev = vec![0.5; 10];
        let e = obj.evaluate(&p, 10.0, Some(&prev), true).unwrap();
        assert!(e.fallback);
        assert_eq!(e.state, prev);
        let r = obj.evaluate(&p, 0.0, Some(&prev), true).unwrap();
        assert_eq!(e.gradient, r.gradient);
    }
}
