//! Kernel discrepancies, Bayesian quadrature and Gaussian-process amplitude
//! calibration.
//!
//! Every estimator takes its randomness from an [`RngStream`], so results are
//! reproducible from a single 64-bit seed.

pub mod error;
pub mod gp;
pub mod bq;
pub mod cbq;
pub mod calibration;
pub mod kernels;
pub mod kqd;
mod linalg;
pub mod mmd;
pub mod points;
pub mod rng;
pub mod two_sample;

pub use error::{Error, Result};
pub use cbq::{ConditionalTask, CbqOptions, CbqPosterior};
pub use gp::{Dataset, GpPosterior, JitterPolicy};
pub use bq::{KernelEmbedding, Measure};
pub use kernels::{GramMatrix, KernelFamily, KernelSpec, MaternOrder};
pub use mmd::{EmpiricalMeasure, Estimator};
pub use points::Points;
pub use rng::RngStream;
pub use two_sample::{TestConfig, TestResult};
