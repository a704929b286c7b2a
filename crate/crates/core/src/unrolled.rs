//! Fixed-depth unrolled encoders: the LISTA and LSALSA forward passes,
//! parameter containers, exact-correspondence initialization from a
//! dictionary, and parameter persistence.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsam;
use crate::prox::{prox_weighted_l1_into, soft_threshold_scalar};
use crate::splitting::build_splitting_operator;
use crate::types::{ComponentCode, ConcatDictionary, Signal};

/// LSALSA parameters: the two learnable matrices plus fixed hyperparameters.
///
/// `s` is a single matrix shared by every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LsalsaParams {
    /// Encoding filter, `N x M`; `Aᵀ` at initialization.
    pub w_e: Array2<f64>,
    /// Splitting operator, `N x N`; `(μI + AᵀA)⁻¹` at initialization.
    pub s: Array2<f64>,
    /// Per-component sparsity weights (fixed, not learned).
    pub alphas: Vec<f64>,
    /// ADMM penalty (fixed, not learned).
    pub mu: f64,
    /// Network depth `T`.
    pub depth: usize,
    /// Code block lengths.
    pub partition: Vec<usize>,
}

impl LsalsaParams {
    pub fn validate(&self) -> Result<()> {
        let n: usize = self.partition.iter().sum();
        if self.w_e.nrows() != n || self.s.nrows() != n || self.s.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "LSALSA params: W_e is {}x{}, S is {}x{}, partition sums to {n}",
                self.w_e.nrows(),
                self.w_e.ncols(),
                self.s.nrows(),
                self.s.ncols()
            )));
        }
        if self.alphas.len() != self.partition.len() {
            return Err(Error::PartitionMismatch {
                expected: self.partition.len(),
                got: self.alphas.len(),
            });
        }
        if self.depth == 0 {
            return Err(Error::InvalidArgument("depth must be >= 1".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidArgument("mu must be positive".into()));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0))
            || !self.w_e.iter().all(|v| v.is_finite())
            || !self.s.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "LSALSA params must be finite with nonnegative alphas".into(),
            ));
        }
        Ok(())
    }

    pub fn signal_dim(&self) -> usize {
        self.w_e.ncols()
    }

    pub fn code_len(&self) -> usize {
        self.w_e.nrows()
    }
}

/// LISTA parameters: filter, mutual-inhibition matrix, and per-unit
/// thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ListaParams {
    /// Encoding filter, `N x M`; `(1/L)Aᵀ` at initialization.
    pub w_e: Array2<f64>,
    /// Recurrence matrix, `N x N`; `I − (1/L)AᵀA` at initialization.
    pub s_tilde: Array2<f64>,
    /// Per-unit nonnegative thresholds; `α/L` blockwise at initialization.
    pub theta: Array1<f64>,
    /// Network depth `T`.
    pub depth: usize,
}

impl ListaParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.w_e.nrows();
        if self.s_tilde.nrows() != n || self.s_tilde.ncols() != n || self.theta.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "LISTA params: W_e is {}x{}, S̃ is {}x{}, θ has {}",
                self.w_e.nrows(),
                self.w_e.ncols(),
                self.s_tilde.nrows(),
                self.s_tilde.ncols(),
                self.theta.len()
            )));
        }
        if self.depth == 0 {
            return Err(Error::InvalidArgument("depth must be >= 1".into()));
        }
        if self.theta.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidArgument(
                "theta must be nonnegative elementwise".into(),
            ));
        }
        if !self.w_e.iter().all(|v| v.is_finite()) || !self.s_tilde.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("LISTA params must be finite".into()));
        }
        Ok(())
    }

    pub fn signal_dim(&self) -> usize {
        self.w_e.ncols()
    }

    pub fn code_len(&self) -> usize {
        self.w_e.nrows()
    }
}

/// Initialize LSALSA in exact correspondence with SALSA:
/// `W_e = Aᵀ`, `S = (μI + AᵀA)⁻¹`.
pub fn lsalsa_init(
    dict: &ConcatDictionary,
    alphas: &[f64],
    mu: f64,
    depth: usize,
) -> Result<LsalsaParams> {
    let params = LsalsaParams {
        w_e: dict.concatenated().t().to_owned(),
        s: build_splitting_operator(dict, mu)?,
        alphas: alphas.to_vec(),
        mu,
        depth,
        partition: dict.partition(),
    };
    params.validate()?;
    Ok(params)
}

/// Initialize LISTA from the ISTA recursion:
/// `W_e = (1/L)Aᵀ`, `S̃ = I − (1/L)AᵀA`, `θ = α/L` blockwise.
///
/// `lipschitz` defaults to the power-iteration estimate when absent.
pub fn lista_init(
    dict: &ConcatDictionary,
    alphas: &[f64],
    lipschitz: Option<f64>,
    depth: usize,
) -> Result<ListaParams> {
    if alphas.len() != dict.component_count() {
        return Err(Error::PartitionMismatch {
            expected: dict.component_count(),
            got: alphas.len(),
        });
    }
    let a = dict.concatenated();
    let l = lipschitz.unwrap_or_else(|| crate::solvers::estimate_lipschitz(&a));
    if !(l > 0.0) {
        return Err(Error::InvalidArgument("lipschitz must be positive".into()));
    }
    let n = a.ncols();
    let w_e = a.t().mapv(|v| v / l);
    let mut s_tilde = a.t().dot(&a).mapv(|v| -v / l);
    for i in 0..n {
        s_tilde[(i, i)] += 1.0;
    }
    let mut theta = Array1::<f64>::zeros(n);
    let mut off = 0;
    for (len, alpha) in dict.partition().iter().zip(alphas) {
        for t in theta.slice_mut(ndarray::s![off..off + len]).iter_mut() {
            *t = alpha / l;
        }
        off += len;
    }
    let params = ListaParams {
        w_e,
        s_tilde,
        theta,
        depth,
    };
    params.validate()?;
    Ok(params)
}

/// Layer activations retained by a tape-enabled LSALSA forward pass.
///
/// Indexing: `x[t]` and `d[t]` hold the state after layer `t` (`x[0]`, `d[0]`
/// are the initial state); `u[t - 1]` holds the layer-`t` nonlinearity output.
#[derive(Debug, Clone)]
pub struct LsalsaTape {
    /// `W_e · y`, reused by every layer.
    pub w: Array1<f64>,
    pub x: Vec<Array1<f64>>,
    pub u: Vec<Array1<f64>>,
    pub d: Vec<Array1<f64>>,
}

/// LSALSA forward pass (Algorithm 4; Algorithm 3 is the `D = 1` case).
///
/// `x(0) = W_e·y`, `d(0) = 0`; for `t = 1..T`:
/// `u(t) = soft(x(t−1) + d(t−1); α/μ)` blockwise,
/// `x(t) = S(W_e·y + μ(u(t) − d(t−1)))`,
/// `d(t) = d(t−1) − u(t) + x(t)`;
/// output is the blockwise soft threshold of `x(T)` with `α_i/μ`.
pub fn lsalsa_forward(
    params: &LsalsaParams,
    signal: &Signal,
    want_tape: bool,
) -> Result<(ComponentCode, Option<LsalsaTape>)> {
    params.validate()?;
    if signal.dim() != params.signal_dim() {
        return Err(Error::DimensionMismatch {
            context: "lsalsa forward",
            expected: params.signal_dim(),
            got: signal.dim(),
        });
    }
    let w = params.w_e.dot(&signal.data);
    let mut x = w.clone();
    let mut d = Array1::<f64>::zeros(x.len());
    let mut tape = want_tape.then(|| LsalsaTape {
        w: w.clone(),
        x: vec![x.clone()],
        u: Vec::with_capacity(params.depth),
        d: vec![d.clone()],
    });
    for layer in 1..=params.depth {
        let mut u = &x + &d;
        prox_weighted_l1_into(&mut u, &params.partition, &params.alphas, params.mu);
        let rhs = &w + &(&u - &d).mapv(|v| params.mu * v);
        x = params.s.dot(&rhs);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer });
        }
        d = &d - &u + &x;
        if let Some(t) = tape.as_mut() {
            t.u.push(u);
            t.x.push(x.clone());
            t.d.push(d.clone());
        }
    }
    let mut out = x;
    prox_weighted_l1_into(&mut out, &params.partition, &params.alphas, params.mu);
    Ok((
        ComponentCode::new(out, params.partition.clone())?,
        tape,
    ))
}

/// Unit activations retained by a tape-enabled LISTA forward pass;
/// `u[t]` is the output of layer `t`, with `u[0] = 0`.
#[derive(Debug, Clone)]
pub struct ListaTape {
    pub u: Vec<Array1<f64>>,
}

/// LISTA forward pass: `u(0) = 0`; `u(t) = soft(W_e·y + S̃·u(t−1); θ)`;
/// output `u(T)`.
pub fn lista_forward(
    params: &ListaParams,
    signal: &Signal,
    want_tape: bool,
) -> Result<(ComponentCode, Option<ListaTape>)> {
    params.validate()?;
    if signal.dim() != params.signal_dim() {
        return Err(Error::DimensionMismatch {
            context: "lista forward",
            expected: params.signal_dim(),
            got: signal.dim(),
        });
    }
    let w = params.w_e.dot(&signal.data);
    let mut u = Array1::<f64>::zeros(params.code_len());
    let mut tape = want_tape.then(|| ListaTape { u: vec![u.clone()] });
    for layer in 1..=params.depth {
        let c = &w + &params.s_tilde.dot(&u);
        u = Array1::from_shape_fn(c.len(), |i| soft_threshold_scalar(c[i], params.theta[i]));
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer });
        }
        if let Some(t) = tape.as_mut() {
            t.u.push(u.clone());
        }
    }
    Ok((ComponentCode::single(u)?, tape))
}

/// Either parameter container, as loaded from disk.
#[derive(Debug, Clone)]
pub enum EncoderParams {
    Lsalsa(LsalsaParams),
    Lista(ListaParams),
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamManifest {
    kind: String,
    m: usize,
    n: usize,
    d: usize,
    partition: Vec<usize>,
    alphas: Vec<f64>,
    mu: Option<f64>,
    depth: usize,
    matrices: std::collections::BTreeMap<String, String>,
}

const MANIFEST_FILE: &str = "params.json";

/// Persist encoder parameters into `dir` as LSAM matrices plus a JSON
/// manifest. `load_params(save_params(p)) == p` bitwise.
pub fn save_params<P: AsRef<Path>>(dir: P, params: &EncoderParams) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let manifest = match params {
        EncoderParams::Lsalsa(p) => {
            p.validate()?;
            lsam::save_matrix(dir.join("w_e.lsam"), &p.w_e)?;
            lsam::save_matrix(dir.join("s.lsam"), &p.s)?;
            ParamManifest {
                kind: "lsalsa".into(),
                m: p.signal_dim(),
                n: p.code_len(),
                d: p.partition.len(),
                partition: p.partition.clone(),
                alphas: p.alphas.clone(),
                mu: Some(p.mu),
                depth: p.depth,
                matrices: [
                    ("w_e".to_string(), "w_e.lsam".to_string()),
                    ("s".to_string(), "s.lsam".to_string()),
                ]
                .into_iter()
                .collect(),
            }
        }
        EncoderParams::Lista(p) => {
            p.validate()?;
            lsam::save_matrix(dir.join("w_e.lsam"), &p.w_e)?;
            lsam::save_matrix(dir.join("s_tilde.lsam"), &p.s_tilde)?;
            lsam::save_vector(dir.join("theta.lsam"), &p.theta)?;
            ParamManifest {
                kind: "lista".into(),
                m: p.signal_dim(),
                n: p.code_len(),
                d: 1,
                partition: vec![p.code_len()],
                alphas: Vec::new(),
                mu: None,
                depth: p.depth,
                matrices: [
                    ("w_e".to_string(), "w_e.lsam".to_string()),
                    ("s_tilde".to_string(), "s_tilde.lsam".to_string()),
                    ("theta".to_string(), "theta.lsam".to_string()),
                ]
                .into_iter()
                .collect(),
            }
        }
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::FormatError(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

/// Load parameters saved by [`save_params`].
pub fn load_params<P: AsRef<Path>>(dir: P) -> Result<EncoderParams> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: ParamManifest =
        serde_json::from_str(&text).map_err(|e| Error::FormatError(format!("manifest: {e}")))?;
    let matrix = |key: &str| -> Result<Array2<f64>> {
        let file = manifest
            .matrices
            .get(key)
            .ok_or_else(|| Error::FormatError(format!("manifest is missing matrix {key:?}")))?;
        lsam::load_matrix(dir.join(file))
    };
    let check_shape = |name: &str, got: (usize, usize), want: (usize, usize)| -> Result<()> {
        if got != want {
            return Err(Error::ShapeMismatch(format!(
                "{name} is {}x{}, manifest says {}x{}",
                got.0, got.1, want.0, want.1
            )));
        }
        Ok(())
    };
    match manifest.kind.as_str() {
        "lsalsa" => {
            let w_e = matrix("w_e")?;
            let s = matrix("s")?;
            check_shape("w_e", w_e.dim(), (manifest.n, manifest.m))?;
            check_shape("s", s.dim(), (manifest.n, manifest.n))?;
            let params = LsalsaParams {
                w_e,
                s,
                alphas: manifest.alphas,
                mu: manifest
                    .mu
                    .ok_or_else(|| Error::FormatError("lsalsa manifest needs mu".into()))?,
                depth: manifest.depth,
                partition: manifest.partition,
            };
            params.validate()?;
            Ok(EncoderParams::Lsalsa(params))
        }
        "lista" => {
            let w_e = matrix("w_e")?;
            let s_tilde = matrix("s_tilde")?;
            let theta = lsam::load_vector(
                dir.join(manifest.matrices.get("theta").ok_or_else(|| {
                    Error::FormatError("manifest is missing matrix \"theta\"".into())
                })?),
            )?;
            check_shape("w_e", w_e.dim(), (manifest.n, manifest.m))?;
            check_shape("s_tilde", s_tilde.dim(), (manifest.n, manifest.n))?;
            if theta.len() != manifest.n {
                return Err(Error::ShapeMismatch(format!(
                    "theta has {} entries, manifest says {}",
                    theta.len(),
                    manifest.n
                )));
            }
            let params = ListaParams {
                w_e,
                s_tilde,
                theta,
                depth: manifest.depth,
            };
            params.validate()?;
            Ok(EncoderParams::Lista(params))
        }
        other => Err(Error::FormatError(format!(
            "unknown encoder kind {other:?}"
        ))),
    }
}
