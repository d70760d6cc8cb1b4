//! Command-line experiment runner.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::fem1d::{self, CoefficientRule, FemError};
use crate::fem2d::{self, Block, Direction, Fem2dError, Grid2D};
use crate::problem::{Coefficient2D, FineProblem1D, FineProblem2D};
use crate::train::{self, Mode, TrainConfig, TrainError, Trainer, HISTORY_HEADER};
use crate::upscale::{self, BlockResult, TensorRecord, UpscaledValue, KAPPA_MIN};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Gradient-check acceptance threshold.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CliMode {
    Hybrid,
    Pinn,
    VPinn,
    FemRef,
    Upscale1d,
    Upscale2d,
    Gradcheck,
}

#[derive(Debug, Parser)]
#[command(name = "ms-hybrid", version, about = "Hybrid PINN / FEM multiscale solver")]
pub struct Args {
    #[arg(long, value_enum)]
    pub mode: CliMode,
    /// JSON file with flat training-config keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Oscillation scale, as a decimal or a fraction like `1/16`.
    #[arg(long, value_parser = parse_ratio)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// 2D coefficient (K1, K2, K3 or a positive constant); all three when absent.
    #[arg(long)]
    pub coefficient: Vec<Coefficient2D>,
    /// Blocks per side for 2D block upscaling.
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    /// Cells per side of the 2D grid; `16/ε` when absent.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Also write the 2D cell-problem solutions as CSV.
    #[arg(long)]
    pub dump_fields: bool,
    /// Random parameter draws for the gradient check.
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Io(_) => EXIT_IO,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Numerical(e.to_string())
        }
    }
}

impl From<FemError> for CliError {
    fn from(e: FemError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<Fem2dError> for CliError {
    fn from(e: Fem2dError) -> Self {
        match e {
            Fem2dError::Io(io) => Self::Io(io),
            Fem2dError::MisalignedBlock(..) | Fem2dError::TooCoarse => Self::Config(e.to_string()),
            Fem2dError::CgNotConverged { .. } => Self::Numerical(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.into())
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub mode: CliMode,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("{e}");
        return e.exit_code();
    }
    match run(&args) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string_pretty(&manifest).unwrap_or_default());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MS_HYBRID_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("MS_HYBRID_THREADS must be a positive integer, got {v:?}")))?;
    // a second initialization in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(args: &Args) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    fs::create_dir_all(&args.out)?;
    let (config, outputs) = match args.mode {
        CliMode::Hybrid => run_training(args, Mode::Hybrid)?,
        CliMode::Pinn => run_training(args, Mode::Pinn)?,
        CliMode::VPinn => run_training(args, Mode::VPinn)?,
        CliMode::FemRef => run_fem_ref(args)?,
        CliMode::Upscale1d => run_upscale1d(args)?,
        CliMode::Upscale2d => run_upscale2d(args)?,
        CliMode::Gradcheck => run_gradcheck(args)?,
    };
    let mut outputs = outputs;
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        mode: args.mode,
        config,
        seed: args.seed,
        version: env!("CARGO_PKG_VERSION"),
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn epsilon_or_default(args: &Args) -> f64 {
    args.epsilon.unwrap_or(1.0 / 16.0)
}

/// Builds the training config from the preset, an optional JSON file and
/// flag overrides (flags win).
pub fn training_config(args: &Args, mode: Mode) -> Result<TrainConfig, CliError> {
    let eps = epsilon_or_default(args);
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let text = match args.epsilon {
                // the flag replaces any epsilon in the file before presets are chosen
                Some(_) => {
                    let mut v: Value =
                        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
                    if let Some(obj) = v.as_object_mut() {
                        obj.remove("epsilon");
                    }
                    v.to_string()
                }
                None => text,
            };
            let cfg = TrainConfig::from_json(&text, eps, mode)?;
            if cfg.mode != mode {
                return Err(CliError::Config(format!(
                    "config mode {:?} disagrees with --mode",
                    cfg.mode
                )));
            }
            cfg
        }
        None => TrainConfig::preset(eps, mode),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_training(args: &Args, mode: Mode) -> Result<(Value, Vec<String>), CliError> {
    let cfg = training_config(args, mode)?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let history_path = args.out.join("history.csv");
    let mut history = BufWriter::new(File::create(&history_path)?);
    writeln!(history, "{HISTORY_HEADER}")?;
    let mut written = 0;
    let result = loop {
        if trainer.finished() {
            break Ok(());
        }
        if let Err(e) = trainer.step() {
            break Err(e);
        }
        for row in &trainer.train.history[written..] {
            writeln!(history, "{}", row.to_csv())?;
        }
        written = trainer.train.history.len();
    };
    history.flush()?;
    result?;
    let report = trainer.report();

    let mut sol = BufWriter::new(File::create(args.out.join("solution.csv"))?);
    writeln!(sol, "x,u_pred,u_ref")?;
    for (x, p, r) in trainer.sample_solution() {
        writeln!(sol, "{x:.16e},{p:.16e},{r:.16e}")?;
    }
    sol.flush()?;
    write_json(&args.out.join("summary.json"), &report)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok((
        serde_json::to_value(&cfg)?,
        vec!["history.csv".into(), "solution.csv".into(), "summary.json".into()],
    ))
}

fn run_fem_ref(args: &Args) -> Result<(Value, Vec<String>), CliError> {
    let eps = epsilon_or_default(args);
    let problem = FineProblem1D::new(eps);
    let reference = fem1d::fine_reference(&problem, fem1d::REFERENCE_INTERIOR_NODES, CoefficientRule::Trapezoid)?;
    let mut f = BufWriter::new(File::create(args.out.join("fem_ref.csv"))?);
    writeln!(f, "x,u")?;
    for (x, u) in reference.nodes().iter().zip(&reference.values) {
        writeln!(f, "{x:.16e},{u:.16e}")?;
    }
    f.flush()?;
    let summary = json!({
        "epsilon": eps,
        "nodes": reference.values.len(),
        "elements_per_period": reference.elements_per_period,
        "under_resolved": reference.under_resolved(),
        "k_tilde": upscale::upscale_1d_from_fem(&reference),
    });
    write_json(&args.out.join("summary.json"), &summary)?;
    Ok((
        json!({"epsilon": eps, "interior_nodes": fem1d::REFERENCE_INTERIOR_NODES, "rule": reference.rule}),
        vec!["fem_ref.csv".into(), "summary.json".into()],
    ))
}

fn run_upscale1d(args: &Args) -> Result<(Value, Vec<String>), CliError> {
    let eps = epsilon_or_default(args);
    let problem = FineProblem1D::new(eps);
    let n = fem1d::REFERENCE_INTERIOR_NODES;
    let reference = fem1d::fine_reference(&problem, n, CoefficientRule::Trapezoid)?;
    let no_source = fem1d::fine_reference_with_source(&problem, n, CoefficientRule::Trapezoid, |_| 0.0)?;
    let k = upscale::upscale_1d_from_fem(&reference);
    let conductivity = upscale::UpscaledConductivity::scalar(k, KAPPA_MIN);
    let summary = json!({
        "epsilon": eps,
        "k_tilde": k,
        "k_tilde_without_source": upscale::upscale_1d_from_fem(&no_source),
        "coercive": conductivity.coercive,
        "under_resolved": reference.under_resolved(),
    });
    write_json(&args.out.join("summary.json"), &summary)?;
    Ok((
        json!({"epsilon": eps, "interior_nodes": n, "rule": reference.rule}),
        vec!["summary.json".into()],
    ))
}

#[derive(Debug, Serialize)]
struct CoefficientTensors {
    coefficient: Coefficient2D,
    cells: usize,
    cg_iterations: [usize; 2],
    full: TensorRecord,
    full_coercive: bool,
    blocks: Vec<TensorRecord>,
    flagged_blocks: Vec<usize>,
}

fn run_upscale2d(args: &Args) -> Result<(Value, Vec<String>), CliError> {
    if args.blocks == 0 {
        return Err(CliError::Config("--blocks must be positive".into()));
    }
    let coefficients = if args.coefficient.is_empty() {
        Coefficient2D::ALL.to_vec()
    } else {
        args.coefficient.clone()
    };
    let mut outputs = vec!["tensors.json".to_string()];
    let mut all = Vec::new();
    for c in coefficients {
        let problem = FineProblem2D::new(c);
        let grid = match args.cells {
            Some(n) => Grid2D::new(n)?,
            None => Grid2D::resolving(c.epsilon())?,
        };
        let system = fem2d::assemble(&problem, &grid);
        let opts = fem2d::CgOptions::for_grid(&grid);
        let (w1, w2) = rayon::join(
            || fem2d::solve_with_system(&system, Direction::X1, &grid, opts),
            || fem2d::solve_with_system(&system, Direction::X2, &grid, opts),
        );
        let (w1, w2) = (w1?, w2?);
        if args.dump_fields {
            for (w, d) in [(&w1, 1), (&w2, 2)] {
                let name = format!("field_{}_w{d}.csv", c.name());
                w.write_csv(BufWriter::new(File::create(args.out.join(&name))?))?;
                outputs.push(name);
            }
        }
        let full = upscale::upscale_2d_full([&w1, &w2], &problem, KAPPA_MIN);
        let UpscaledValue::Tensor(full_t) = full.value else {
            unreachable!("2D upscaling yields a tensor")
        };
        let blocks = Block::partition(&grid, args.blocks)?;
        let mut records = Vec::new();
        let mut flagged = Vec::new();
        for (id, r) in upscale::upscale_2d([&w1, &w2], &problem, &blocks, KAPPA_MIN)
            .into_iter()
            .enumerate()
        {
            match r {
                BlockResult::Ok(u) => {
                    if let UpscaledValue::Tensor(t) = u.value {
                        records.push(TensorRecord::new(id, &t));
                    }
                }
                BlockResult::Flagged { .. } => flagged.push(id),
            }
        }
        all.push(CoefficientTensors {
            coefficient: c,
            cells: grid.cells,
            cg_iterations: [w1.stats.iterations, w2.stats.iterations],
            full: TensorRecord::new(0, &full_t),
            full_coercive: full.coercive,
            blocks: records,
            flagged_blocks: flagged,
        });
    }
    write_json(&args.out.join("tensors.json"), &all)?;
    Ok((
        json!({"blocks": args.blocks, "cells": args.cells, "coefficients": all.iter().map(|c| c.coefficient).collect::<Vec<_>>()}),
        outputs,
    ))
}

fn run_gradcheck(args: &Args) -> Result<(Value, Vec<String>), CliError> {
    let cfg = train::gradcheck_config();
    let seed = args.seed.unwrap_or(0);
    let report = train::gradcheck(&cfg, args.draws, seed)?;
    let passed = report.max_rel_err < GRADCHECK_TOLERANCE;
    write_json(
        &args.out.join("summary.json"),
        &json!({"report": report, "tolerance": GRADCHECK_TOLERANCE, "passed": passed}),
    )?;
    if !passed {
        return Err(CliError::Numerical(format!(
            "gradient check failed: max relative error {:e}",
            report.max_rel_err
        )));
    }
    Ok((serde_json::to_value(&cfg)?, vec!["summary.json".into()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("1/16").unwrap(), 0.0625);
        assert_eq!(parse_ratio("0.25").unwrap(), 0.25);
        assert!(parse_ratio("-1").is_err());
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("x").is_err());
    }

    #[test]
    fn unknown_mode_is_usage_error() {
        assert_eq!(main_with_args(["ms-hybrid", "--mode", "nope"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["ms-hybrid"]), EXIT_CONFIG);
    }

    #[test]
    fn flags_override_config() {
        let args = Args::try_parse_from([
            "ms-hybrid", "--mode", "pinn", "--epsilon", "1/48", "--seed", "7", "--iterations", "12",
        ])
        .unwrap();
        let cfg = training_config(&args, Mode::Pinn).unwrap();
        assert_eq!((cfg.seed, cfg.iterations, cfg.collocation), (7, 12, 840));
    }
}
