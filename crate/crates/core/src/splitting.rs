//! Construction of the splitting operator `S = (μI + AᵀA)⁻¹` used by the
//! SALSA x-update and as the initialization of LSALSA's learned matrix.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::types::ConcatDictionary;

/// Build `S = (μI + AᵀA)⁻¹` through a Cholesky factorization of `μI + AᵀA`.
///
/// The dense inverse is materialized (rather than kept factored) because the
/// unrolled encoder treats `S` as a free dense parameter afterwards. The
/// result is explicitly symmetrized.
pub fn build_splitting_operator(dict: &ConcatDictionary, mu: f64) -> Result<Array2<f64>> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "splitting operator requires mu > 0, got {mu}"
        )));
    }
    let a = dict.concatenated();
    build_splitting_operator_from_matrix(&a, mu)
}

/// Same construction from an already-materialized `M x N` matrix.
pub fn build_splitting_operator_from_matrix(a: &Array2<f64>, mu: f64) -> Result<Array2<f64>> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "splitting operator requires mu > 0, got {mu}"
        )));
    }
    let gram = regularized_gram(a, mu);
    let factor = Cholesky::factor(&gram)?;
    let mut s = factor.inverse();
    // enforce exact symmetry; the factorization only reads the lower triangle
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
    Ok(s)
}

/// `μI + AᵀA`, the regularized Hessian of the data-fidelity term.
pub fn regularized_gram(a: &Array2<f64>, mu: f64) -> Array2<f64> {
    let mut gram = a.t().dot(a);
    for i in 0..gram.nrows() {
        gram[(i, i)] += mu;
    }
    gram
}
