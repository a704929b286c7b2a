//! Domain types shared across the toolkit: dictionaries, partitioned codes,
//! signals, and solver configuration.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Default tolerance for treating a dictionary column as unit-norm.
pub const DEFAULT_COLUMN_NORM_TOL: f64 = 1e-8;

/// A synthesis dictionary: an `M x N` matrix whose columns are atoms.
///
/// Un-normalized dictionaries are representable; [`Dictionary::is_normalized`]
/// reports whether every column is within `column_norm_tolerance` of unit
/// Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
    column_norm_tolerance: f64,
}

impl Dictionary {
    /// Wrap an `M x N` atom matrix. Requires `M >= 1`, `N >= 1` and finite entries.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "dictionary must be at least 1x1, got {}x{}",
                atoms.nrows(),
                atoms.ncols()
            )));
        }
        if !atoms.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dictionary entries must be finite".into(),
            ));
        }
        Ok(Self {
            atoms,
            column_norm_tolerance: DEFAULT_COLUMN_NORM_TOL,
        })
    }

    /// Signal dimension `M` (rows).
    pub fn signal_dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Atom count `N` (columns).
    pub fn atom_count(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn column_norm_tolerance(&self) -> f64 {
        self.column_norm_tolerance
    }

    /// True when every column norm is within `column_norm_tolerance` of 1.
    pub fn is_normalized(&self) -> bool {
        self.atoms
            .axis_iter(Axis(1))
            .all(|col| (col.dot(&col).sqrt() - 1.0).abs() <= self.column_norm_tolerance)
    }
}

/// Rescale every column of `dict` to unit Euclidean norm.
///
/// Column order is preserved; a column with norm below `1e-12` is rejected
/// with [`Error::ZeroColumn`].
pub fn normalize_columns(dict: &Dictionary) -> Result<Dictionary> {
    let mut atoms = dict.atoms.clone();
    for (index, mut col) in atoms.axis_iter_mut(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm < 1e-12 {
            return Err(Error::ZeroColumn { index, norm });
        }
        col.mapv_inplace(|v| v / norm);
    }
    Dictionary::new(atoms)
}

/// An ordered concatenation `A = [A_1, ..., A_D]` of dictionaries sharing the
/// signal dimension, with the cumulative column offsets of each part.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatDictionary {
    parts: Vec<Dictionary>,
    offsets: Vec<usize>,
}

impl ConcatDictionary {
    pub fn new(parts: Vec<Dictionary>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptySource("concat dictionary parts"));
        }
        let m = parts[0].signal_dim();
        if parts.iter().any(|p| p.signal_dim() != m) {
            return Err(Error::ShapeMismatch(
                "all dictionary parts must share the signal dimension".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(parts.len());
        let mut acc = 0;
        for p in &parts {
            offsets.push(acc);
            acc += p.atom_count();
        }
        Ok(Self { parts, offsets })
    }

    pub fn from_single(dict: Dictionary) -> Self {
        Self {
            offsets: vec![0],
            parts: vec![dict],
        }
    }

    /// Number of components `D`.
    pub fn component_count(&self) -> usize {
        self.parts.len()
    }

    pub fn signal_dim(&self) -> usize {
        self.parts[0].signal_dim()
    }

    /// Total atom count `N = Σ N_i`.
    pub fn atom_count(&self) -> usize {
        self.parts.iter().map(|p| p.atom_count()).sum()
    }

    pub fn parts(&self) -> &[Dictionary] {
        &self.parts
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Block lengths `[N_1, ..., N_D]`.
    pub fn partition(&self) -> Vec<usize> {
        self.parts.iter().map(|p| p.atom_count()).collect()
    }

    /// Materialize the concatenated `M x N` matrix.
    pub fn concatenated(&self) -> Array2<f64> {
        let m = self.signal_dim();
        let n = self.atom_count();
        let mut a = Array2::<f64>::zeros((m, n));
        for (part, &off) in self.parts.iter().zip(&self.offsets) {
            a.slice_mut(ndarray::s![.., off..off + part.atom_count()])
                .assign(part.atoms());
        }
        a
    }
}

/// A coefficient vector partitioned into `D` component blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCode {
    values: Array1<f64>,
    partition: Vec<usize>,
}

impl ComponentCode {
    pub fn new(values: Array1<f64>, partition: Vec<usize>) -> Result<Self> {
        let total: usize = partition.iter().sum();
        if total != values.len() || partition.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "partition sums to {total}, code has {} entries",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("code entries must be finite".into()));
        }
        Ok(Self { values, partition })
    }

    /// Single-block code covering the whole vector.
    pub fn single(values: Array1<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    pub fn component_count(&self) -> usize {
        self.partition.len()
    }

    /// Offset of block `i` in the flat vector.
    pub fn offset(&self, block: usize) -> usize {
        self.partition[..block].iter().sum()
    }

    /// View of block `i`.
    pub fn block(&self, i: usize) -> ArrayView1<'_, f64> {
        let off = self.offset(i);
        self.values.slice(ndarray::s![off..off + self.partition[i]])
    }
}

/// A length-`M` signal, optionally labeled and optionally carrying the exact
/// additive components it was mixed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub data: Array1<f64>,
    pub label: Option<usize>,
    pub component_truth: Option<Vec<Array1<f64>>>,
}

impl Signal {
    pub fn new(data: Array1<f64>) -> Result<Self> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "signal entries must be finite".into(),
            ));
        }
        Ok(Self {
            data,
            label: None,
            component_truth: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    /// Attach component ground truth; the components must sum to the signal
    /// within 1e-9 elementwise (mixtures are exact sums).
    pub fn with_component_truth(mut self, components: Vec<Array1<f64>>) -> Result<Self> {
        let mut sum = Array1::<f64>::zeros(self.data.len());
        for c in &components {
            if c.len() != self.data.len() {
                return Err(Error::DimensionMismatch {
                    context: "component truth",
                    expected: self.data.len(),
                    got: c.len(),
                });
            }
            sum += c;
        }
        if sum
            .iter()
            .zip(self.data.iter())
            .any(|(s, d)| (s - d).abs() > 1e-9)
        {
            return Err(Error::InvalidArgument(
                "component truth does not sum to the signal".into(),
            ));
        }
        self.component_truth = Some(components);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }
}

/// Configuration shared by the iterative solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Per-component sparsity weights `α_i` (one per dictionary part).
    pub alphas: Vec<f64>,
    /// ADMM penalty `μ` (SALSA / LSALSA).
    pub mu: f64,
    /// Iteration budget `T`.
    pub max_iters: usize,
    /// Relative-change stopping tolerance on `x`; `0` forces exactly
    /// `max_iters` iterations.
    pub stop_tol: f64,
    /// Gradient-step constant `L` for ISTA/FISTA; estimated by power
    /// iteration when absent.
    pub lipschitz: Option<f64>,
    /// Apply the blockwise output soft-threshold to truncated SALSA so its
    /// output stage matches the unrolled network's.
    pub emit_thresholded: bool,
}

impl SolverConfig {
    pub fn new(alphas: Vec<f64>, mu: f64, max_iters: usize) -> Self {
        Self {
            alphas,
            mu,
            max_iters,
            stop_tol: 1e-6,
            lipschitz: None,
            emit_thresholded: true,
        }
    }

    pub fn with_stop_tol(mut self, stop_tol: f64) -> Self {
        self.stop_tol = stop_tol;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_emit_thresholded(mut self, on: bool) -> Self {
        self.emit_thresholded = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidArgument(
                "alphas must be nonempty and nonnegative".into(),
            ));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidArgument("mu must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidArgument("stop_tol must be >= 0".into()));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0) {
                return Err(Error::InvalidArgument("lipschitz must be positive".into()));
            }
        }
        Ok(())
    }
}
