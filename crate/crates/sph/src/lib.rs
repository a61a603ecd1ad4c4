//! 1-D SPH demonstrator: a 272-byte particle record, a uniform cell grid with
//! local and active sets, and the five step kernels in an AoS baseline and a
//! temporary SoA-view form, with per-phase timing.
//!
//! The arithmetic is generic over `num_traits::Float`; the drivers and the
//! benchmark run on [`Real`].

pub mod bench;
pub mod kernels;
pub mod particle;
pub mod physics;
pub mod spline;
pub mod system;
pub mod views;

use thiserror::Error;

pub use bench::{run_bench, BenchConfig, BenchRecord};
pub use kernels::{Guard, Kernel, Order, Path, PhaseTimes, Variant};
pub use particle::{Particle, PARTICLE_SIZE};
pub use system::{CellGrid, Layout, Setup, System};
pub use views::{ViewSpec, Views};

/// Scalar of the concrete benchmark.
pub type Real = f64;

#[derive(Debug, Error)]
pub enum SphError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("particle {0} has zero density; run the density step first")]
    ZeroDensity(usize),
    #[error(transparent)]
    Layout(#[from] soaview_layout::LayoutError),
    #[error("{kernel} {variant}: particle {index} field {field} differs from the baseline ({got} vs {want})")]
    Mismatch {
        kernel: String,
        variant: String,
        index: usize,
        field: String,
        got: f64,
        want: f64,
    },
}
