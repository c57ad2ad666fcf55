//! Coded-aperture snapshot spectral imaging: a matrix-free forward model,
//! classical and untrained-network priors, and the plug-and-play ADMM
//! solver that combines them.

pub mod cube;
pub mod error;
pub mod forward_model;
pub mod metrics;
pub mod priors;
pub mod scene;
pub mod serde_float;
pub mod solver;
pub mod untrained_prior;

pub use cube::{Mask, Measurement, Plane, SpectralCube, WavelengthGrid};
pub use error::{CoreError, Result};
pub use forward_model::{SensingOperator, ShiftSpec};
pub use metrics::{MetricReport, Region};
pub use priors::{DenoiserKind, DenoiserSpec};
pub use solver::{run, RunFailure, RunReport, SolverConfig, SolverMode};
pub use untrained_prior::{EarlyStopSchedule, GeneratorConfig};
