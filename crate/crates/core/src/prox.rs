//! Proximal operators: elementwise soft thresholding and its blockwise
//! weighted-ℓ1 form.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::types::ComponentCode;

/// Scalar soft threshold: `z - τ` for `z > τ`, `0` for `|z| <= τ`, `z + τ`
/// for `z < -τ`.
#[inline]
pub fn soft_threshold_scalar(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// Elementwise soft threshold of a vector. `tau` must be nonnegative.
pub fn soft_threshold(z: &Array1<f64>, tau: f64) -> Result<Array1<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "soft threshold requires tau >= 0, got {tau}"
        )));
    }
    Ok(z.mapv(|v| soft_threshold_scalar(v, tau)))
}

/// Soft threshold with a per-entry threshold vector (LISTA's learned θ).
pub fn soft_threshold_per_unit(z: &Array1<f64>, theta: &Array1<f64>) -> Result<Array1<f64>> {
    if z.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            context: "per-unit soft threshold",
            expected: z.len(),
            got: theta.len(),
        });
    }
    if theta.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidArgument(
            "threshold vector must be nonnegative".into(),
        ));
    }
    Ok(Array1::from_shape_fn(z.len(), |i| {
        soft_threshold_scalar(z[i], theta[i])
    }))
}

/// Apply `soft(·; α_i/μ)` to block `i` of a flat vector in place, given the
/// block partition. Used inside the solver loops.
pub(crate) fn prox_weighted_l1_into(
    z: &mut Array1<f64>,
    partition: &[usize],
    alphas: &[f64],
    mu: f64,
) {
    let mut off = 0;
    for (len, alpha) in partition.iter().zip(alphas) {
        let tau = alpha / mu;
        for v in z.slice_mut(ndarray::s![off..off + len]).iter_mut() {
            *v = soft_threshold_scalar(*v, tau);
        }
        off += len;
    }
}

/// Blockwise proximal operator of `Σ α_i ‖x_i‖₁ / μ`: block `i` of the output
/// is `soft(z_i; α_i/μ)`, the exact minimizer of
/// `Σ α_i‖x_i‖₁/μ + ½‖z − x‖²`.
pub fn prox_weighted_l1(z: &ComponentCode, alphas: &[f64], mu: f64) -> Result<ComponentCode> {
    if alphas.len() != z.component_count() {
        return Err(Error::PartitionMismatch {
            expected: z.component_count(),
            got: alphas.len(),
        });
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument("mu must be positive".into()));
    }
    if alphas.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::InvalidArgument(
            "alphas must be nonnegative".into(),
        ));
    }
    let mut values = z.values().clone();
    prox_weighted_l1_into(&mut values, z.partition(), alphas, mu);
    ComponentCode::new(values, z.partition().to_vec())
}
