//! Crate-wide error type.

use thiserror::Error;

/// Unified error type for the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A dictionary column has (numerically) zero norm and cannot be normalized.
    #[error("dictionary column {index} has norm {norm:.3e}, below the 1e-12 floor")]
    ZeroColumn { index: usize, norm: f64 },

    /// The matrix handed to the SPD factorization is not positive definite.
    #[error("SPD factorization failed at pivot {pivot}: {detail}")]
    FactorizationFailure { pivot: usize, detail: String },

    /// A per-component parameter list does not match the code partition.
    #[error("partition mismatch: expected {expected} blocks, got {got}")]
    PartitionMismatch { expected: usize, got: usize },

    /// Incompatible vector/matrix dimensions.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Mismatched array shapes (matrix-level analogue of `DimensionMismatch`).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An iterative solver produced a non-finite iterate (diverged).
    #[error("solver produced a non-finite iterate at iteration {iter}")]
    NonFiniteIterate { iter: usize },

    /// An unrolled forward pass produced a non-finite activation.
    #[error("non-finite activation at layer {layer}")]
    NonFiniteActivation { layer: usize },

    /// Method name not recognized by the dispatcher.
    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    /// The dispatcher was given a model that does not fit the requested method.
    #[error("no usable model for {method} at T={t}: {detail}")]
    MissingModel {
        method: &'static str,
        t: usize,
        detail: String,
    },

    /// Backward pass called without a forward tape.
    #[error("backward pass requires a tape-enabled forward pass")]
    MissingTape,

    /// Training loss became non-finite.
    #[error("training loss diverged at epoch {epoch} (non-finite); reduce the learning rate")]
    DivergedLoss { epoch: usize },

    /// The learned splitting operator is numerically singular.
    #[error("splitting operator is numerically singular (condition estimate {cond:.3e})")]
    SingularS { cond: f64 },

    /// Requested patch size exceeds the image.
    #[error("patch {patch_h}x{patch_w} does not fit image {img_h}x{img_w}")]
    PatchTooLarge {
        patch_h: usize,
        patch_w: usize,
        img_h: usize,
        img_w: usize,
    },

    /// A dataset required to be nonempty was empty.
    #[error("empty source: {0}")]
    EmptySource(&'static str),

    /// Malformed container file (LSAM/IDX/PGM/manifest).
    #[error("format error: {0}")]
    FormatError(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Invalid argument that is not a plain dimension problem.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
