//! Hybrid physics-informed network / finite element solver for an
//! oscillatory-coefficient heat equation, with FEM-based upscaling.

pub mod cli;
pub mod coupling;
pub mod fem1d;
pub mod fem2d;
pub mod jet;
pub mod net;
pub mod problem;
pub mod train;
pub mod upscale;

pub use coupling::CompressionSpec;
pub use fem1d::{CoarseSystem, FineReference, Mesh1D};
pub use net::{Architecture, NetParams};
pub use problem::{Coefficient2D, FineProblem1D, FineProblem2D};
pub use train::{Mode, TrainConfig};
