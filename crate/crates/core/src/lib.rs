//! Sparse coding and morphological component analysis (MCA) toolkit.
//!
//! The crate bundles the classic iterative solvers for ℓ1-regularized least
//! squares — ISTA, FISTA, and SALSA (an ADMM instance) — with their learned
//! unrolled counterparts LISTA and LSALSA, plus encoder training, dictionary
//! learning, data pipelines, a benchmark harness, and executable diagnostics
//! of the optimality identities the unrolled network satisfies.
//!
//! Modules mirror the pipeline: [`types`] and [`prox`]/[`metrics`]/
//! [`splitting`] hold the shared primitives, [`solvers`] the iterative
//! baselines, [`unrolled`] the fixed-depth encoders, [`training`] supervised
//! encoder training and grid search, [`dictlearn`] dictionary learning,
//! [`data`] ingestion and synthesis, [`eval`] benchmarks and classifier
//! probes, and [`diagnostics`] the theory checks.

pub mod data;
pub mod diagnostics;
pub mod dictlearn;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod lsam;
pub mod metrics;
pub mod prox;
pub mod solvers;
pub mod splitting;
pub mod training;
pub mod types;
pub mod unrolled;

pub use error::{Error, Result};
pub use types::{ComponentCode, ConcatDictionary, Dictionary, Signal, SolverConfig};

/// Toolkit version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
