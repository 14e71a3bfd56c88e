pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod prior;
pub mod solver;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{GaussianKernel, ScalarField, Shape, VectorField2};
pub use mask::BinaryMask;
pub use solver::{run, SegmentationResult, Solver, SolverParams, SolverState};
