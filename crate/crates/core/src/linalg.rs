//! Dense linear-algebra kernels: Cholesky and LU factorizations, triangular
//! solves, a 1-norm condition estimator, power iteration, and a Jacobi
//! eigenvalue sweep for symmetric matrices.
//!
//! Everything here is plain `f64` on `ndarray` containers; problem sizes in
//! this toolkit are a few hundred at most, so cubic dense algorithms are fine.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factor `a = L Lᵀ`, reading only the lower triangle of `a`.
    ///
    /// Fails with `FactorizationFailure` when a pivot is not strictly
    /// positive, which is how non-SPD (or non-finite) input shows up.
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let n = square_dim(a)?;
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::FactorizationFailure {
                    pivot: j,
                    detail: format!("pivot value {diag:e}"),
                });
            }
            let root = diag.sqrt();
            l[(j, j)] = root;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / root;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve `A x = b` via the two triangular solves.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length");
        let mut x = b.clone();
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Dense inverse, built by solving against the identity columnwise.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.dim();
        let mut inv = Array2::<f64>::zeros((n, n));
        let mut e = Array1::<f64>::zeros(n);
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            inv.column_mut(j).assign(&col);
        }
        inv
    }
}

/// LU factorization with partial pivoting, for general square matrices.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Array2<f64>,
    piv: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let n = square_dim(a)?;
        let mut lu = a.clone();
        let mut piv = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::FactorizationFailure {
                    pivot: k,
                    detail: format!("LU pivot magnitude {best:e}"),
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap((k, j), (p, j));
                }
            }
            piv.push(p);
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let m = lu[(i, k)] / pivot;
                lu[(i, k)] = m;
                for j in (k + 1)..n {
                    lu[(i, j)] -= m * lu[(k, j)];
                }
            }
        }
        Ok(Self { lu, piv })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Solve `A x = b`.
    ///
    /// The factorization stores fully row-swapped `L` and `U` (`P A = L U`),
    /// so the solve applies every recorded swap to `b` first, then runs the
    /// two clean triangular substitutions.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length");
        let mut x = b.clone();
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        // L y = Pb (unit lower)
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s;
        }
        // U x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solve `Aᵀ x = b` against the same factorization:
    /// `Aᵀ = Uᵀ Lᵀ P`, so `x = P⁻¹ L⁻ᵀ U⁻ᵀ b`.
    pub fn solve_transpose(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length");
        let mut x = b.clone();
        // Uᵀ y = b (forward)
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[(k, i)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        // Lᵀ z = y (backward, unit diagonal)
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[(k, i)] * x[k];
            }
            x[i] = s;
        }
        // x = P⁻¹ z: undo the recorded swaps in reverse order
        for k in (0..n).rev() {
            x.swap(k, self.piv[k]);
        }
        x
    }

    /// Dense inverse via columnwise solves.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.dim();
        let mut inv = Array2::<f64>::zeros((n, n));
        let mut e = Array1::<f64>::zeros(n);
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            inv.column_mut(j).assign(&col);
        }
        inv
    }

    /// Hager-style estimate of `‖A⁻¹‖₁` using repeated solves.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.dim();
        let mut v = Array1::<f64>::from_elem(n, 1.0 / n as f64);
        let mut est = 0.0_f64;
        for _ in 0..5 {
            let x = self.solve(&v);
            let x_norm1: f64 = x.iter().map(|a| a.abs()).sum();
            let xi = x.mapv(|a| if a >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&xi);
            let (j, z_max) = z
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(bj, bv), (i, &a)| {
                    if a.abs() > bv {
                        (i, a.abs())
                    } else {
                        (bj, bv)
                    }
                });
            est = est.max(x_norm1);
            if z_max <= z.dot(&v) {
                break;
            }
            v.fill(0.0);
            v[j] = 1.0;
        }
        est
    }
}

/// 1-norm (max column sum) of a matrix.
pub fn norm1(a: &Array2<f64>) -> f64 {
    let mut best = 0.0_f64;
    for col in a.columns() {
        let s: f64 = col.iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Frobenius norm.
pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest eigenvalue of `AᵀA` by power iteration on `v ← Aᵀ(A v)`.
///
/// Runs `max_iters` iterations or stops once the Rayleigh quotient changes by
/// less than `tol` relatively.
pub fn spectral_norm_sq(a: &Array2<f64>, max_iters: usize, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // deterministic start with a mild tilt so it is not orthogonal to the
    // leading eigenvector for structured inputs like permutations
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 1e-3 * i as f64);
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0_f64;
    for _ in 0..max_iters {
        let av = a.dot(&v);
        let next = av.dot(a); // Aᵀ(Av) as a row-vector product
        let nn = next.dot(&next).sqrt();
        if nn == 0.0 {
            return 0.0;
        }
        let new_lambda = av.dot(&av);
        v = next.mapv(|x| x / nn);
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1e-300) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// All eigenvalues of a symmetric matrix by the cyclic Jacobi method.
///
/// Input is symmetrized defensively; returns eigenvalues in ascending order.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let n = square_dim(a)?;
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let scale = frobenius(&m).max(1.0);
    for _sweep in 0..60 {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(eig)
}

fn square_dim(a: &Array2<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}
