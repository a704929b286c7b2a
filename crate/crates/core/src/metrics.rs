//! Cost and quality metrics: the lasso/MCA objective, RMSE between codes,
//! and the sparsity fraction.

use crate::error::{Error, Result};
use crate::types::{ComponentCode, ConcatDictionary, Signal};

/// Default tolerance below which an entry counts as zero for [`sparsity`].
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

/// The objective `½‖y − A x‖² + Σ α_i ‖x_i‖₁`.
///
/// With `D = 1` this is the single-dictionary lasso cost.
pub fn lasso_cost(
    code: &ComponentCode,
    signal: &Signal,
    dict: &ConcatDictionary,
    alphas: &[f64],
) -> Result<f64> {
    if signal.dim() != dict.signal_dim() {
        return Err(Error::DimensionMismatch {
            context: "lasso cost signal",
            expected: dict.signal_dim(),
            got: signal.dim(),
        });
    }
    if code.len() != dict.atom_count() {
        return Err(Error::DimensionMismatch {
            context: "lasso cost code",
            expected: dict.atom_count(),
            got: code.len(),
        });
    }
    if code.partition() != dict.partition().as_slice() || alphas.len() != code.component_count() {
        return Err(Error::PartitionMismatch {
            expected: dict.component_count(),
            got: alphas.len(),
        });
    }
    let a = dict.concatenated();
    lasso_cost_raw(code.values(), &signal.data, &a, code.partition(), alphas)
}

/// Same objective on raw arrays; used inside solver loops where the
/// concatenated matrix is already materialized.
pub(crate) fn lasso_cost_raw(
    x: &ndarray::Array1<f64>,
    y: &ndarray::Array1<f64>,
    a: &ndarray::Array2<f64>,
    partition: &[usize],
    alphas: &[f64],
) -> Result<f64> {
    let residual = y - &a.dot(x);
    let mut cost = 0.5 * residual.dot(&residual);
    let mut off = 0;
    for (len, alpha) in partition.iter().zip(alphas) {
        let l1: f64 = x
            .slice(ndarray::s![off..off + len])
            .iter()
            .map(|v| v.abs())
            .sum();
        cost += alpha * l1;
        off += len;
    }
    Ok(cost)
}

/// Root-mean-square difference over code entries.
pub fn rmse(a: &ComponentCode, b: &ComponentCode) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(rmse_raw(a.values(), b.values()))
}

pub(crate) fn rmse_raw(a: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>) -> f64 {
    let diff = a - b;
    (diff.dot(&diff) / a.len() as f64).sqrt()
}

/// Fraction of entries with `|value| <= zero_tol`.
pub fn sparsity(code: &ComponentCode, zero_tol: f64) -> f64 {
    sparsity_raw(code.values(), zero_tol)
}

pub(crate) fn sparsity_raw(values: &ndarray::Array1<f64>, zero_tol: f64) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let zeros = values.iter().filter(|v| v.abs() <= zero_tol).count();
    zeros as f64 / values.len() as f64
}
