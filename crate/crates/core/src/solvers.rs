//! Iterative reference solvers for the sparse-coding objective: ISTA, FISTA,
//! and SALSA (single- and multi-dictionary), with per-iteration
//! instrumentation and truncation at `T` iterations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::metrics::{lasso_cost_raw, rmse_raw, sparsity_raw, DEFAULT_ZERO_TOL};
use crate::prox::prox_weighted_l1_into;
use crate::splitting::build_splitting_operator;
use crate::types::{ComponentCode, ConcatDictionary, Signal, SolverConfig};
use crate::unrolled::{lista_forward, lsalsa_forward, ListaParams, LsalsaParams};

/// Encoding methods understood by the dispatcher and the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ista,
    Fista,
    Salsa,
    Lista,
    Lsalsa,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ista => "ista",
            Method::Fista => "fista",
            Method::Salsa => "salsa",
            Method::Lista => "lista",
            Method::Lsalsa => "lsalsa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ista" => Ok(Method::Ista),
            "fista" => Ok(Method::Fista),
            "salsa" => Ok(Method::Salsa),
            "lista" => Ok(Method::Lista),
            "lsalsa" => Ok(Method::Lsalsa),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// One per-iteration measurement.
///
/// `cost` is the objective value of the solver's raw iterate; `rmse` and
/// `sparsity` describe the code the solver would emit when truncated at this
/// iteration (for SALSA with `emit_thresholded` that is the blockwise
/// soft-thresholded iterate, so curves are comparable with the unrolled
/// encoders' output stage).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub cost: f64,
    pub rmse: Option<f64>,
    pub sparsity: f64,
    pub elapsed_s: f64,
}

/// Full instrumented run of an iterative solver.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub code: ComponentCode,
    pub iterations_run: usize,
    pub converged: bool,
}

impl SolverTrace {
    /// Objective value of the final raw iterate.
    pub fn final_cost(&self) -> f64 {
        self.records.last().map(|r| r.cost).unwrap_or(f64::NAN)
    }

    /// Serialize as CSV with columns `iter,cost,rmse,sparsity,elapsed_s`.
    pub fn to_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# schema=trace-v1")?;
        writeln!(w, "iter,cost,rmse,sparsity,elapsed_s")?;
        for r in &self.records {
            let rmse = r.rmse.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iter, r.cost, rmse, r.sparsity, r.elapsed_s
            )?;
        }
        Ok(())
    }
}

/// Power-iteration estimate of the largest eigenvalue of `AᵀA`, inflated by
/// 1% so it is safe to use as a Lipschitz constant.
pub fn estimate_lipschitz(a: &Array2<f64>) -> f64 {
    crate::linalg::spectral_norm_sq(a, 50, 1e-6) * 1.01
}

fn effective_lipschitz(a: &Array2<f64>, config: &SolverConfig) -> f64 {
    config.lipschitz.unwrap_or_else(|| estimate_lipschitz(a))
}

fn check_problem(signal: &Signal, dict: &ConcatDictionary, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if signal.dim() != dict.signal_dim() {
        return Err(Error::DimensionMismatch {
            context: "solver signal",
            expected: dict.signal_dim(),
            got: signal.dim(),
        });
    }
    if config.alphas.len() != dict.component_count() {
        return Err(Error::PartitionMismatch {
            expected: dict.component_count(),
            got: config.alphas.len(),
        });
    }
    Ok(())
}

fn ensure_finite(x: &Array1<f64>, iter: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIterate { iter })
    }
}

fn rel_change(delta_norm: f64, x_norm: f64) -> f64 {
    delta_norm / x_norm.max(1e-12)
}

struct Instrument<'a> {
    a: &'a Array2<f64>,
    y: &'a Array1<f64>,
    partition: &'a [usize],
    alphas: &'a [f64],
    reference: Option<&'a ComponentCode>,
    start: Instant,
    records: Vec<TraceRecord>,
}

impl<'a> Instrument<'a> {
    fn new(
        a: &'a Array2<f64>,
        y: &'a Array1<f64>,
        partition: &'a [usize],
        alphas: &'a [f64],
        reference: Option<&'a ComponentCode>,
    ) -> Self {
        Self {
            a,
            y,
            partition,
            alphas,
            reference,
            start: Instant::now(),
            records: Vec::new(),
        }
    }

    /// Record iteration `iter`; `emitted` is the code the solver would output
    /// when truncated here, `raw` its internal iterate.
    fn record(&mut self, iter: usize, raw: &Array1<f64>, emitted: &Array1<f64>) -> Result<()> {
        let cost = lasso_cost_raw(raw, self.y, self.a, self.partition, self.alphas)?;
        let rmse = self.reference.map(|r| rmse_raw(emitted, r.values()));
        self.records.push(TraceRecord {
            iter,
            cost,
            rmse,
            sparsity: sparsity_raw(emitted, DEFAULT_ZERO_TOL),
            elapsed_s: self.start.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// ISTA: `x ← soft(x − (1/L)Aᵀ(Ax − y); α/L)` from `x₀ = 0`.
///
/// `reference`, when given, fills the per-iteration RMSE column of the trace.
pub fn ista(
    signal: &Signal,
    dict: &ConcatDictionary,
    config: &SolverConfig,
    reference: Option<&ComponentCode>,
) -> Result<SolverTrace> {
    check_problem(signal, dict, config)?;
    let a = dict.concatenated();
    let partition = dict.partition();
    let l = effective_lipschitz(&a, config);
    let mut inst = Instrument::new(&a, &signal.data, &partition, &config.alphas, reference);

    let mut x = Array1::<f64>::zeros(a.ncols());
    let mut iterations_run = 0;
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let next = ista_step(&x, &a, &signal.data, &partition, &config.alphas, l);
        ensure_finite(&next, iter)?;
        let delta = (&next - &x).dot(&(&next - &x)).sqrt();
        x = next;
        iterations_run = iter;
        inst.record(iter, &x, &x)?;
        if config.stop_tol > 0.0 && rel_change(delta, x.dot(&x).sqrt()) < config.stop_tol {
            converged = true;
            break;
        }
    }
    Ok(SolverTrace {
        records: inst.records,
        code: ComponentCode::new(x, partition)?,
        iterations_run,
        converged,
    })
}

fn ista_step(
    x: &Array1<f64>,
    a: &Array2<f64>,
    y: &Array1<f64>,
    partition: &[usize],
    alphas: &[f64],
    l: f64,
) -> Array1<f64> {
    let residual = a.dot(x) - y;
    let grad = residual.dot(a); // Aᵀ r as a row-vector product
    let mut next = x - &grad.mapv(|g| g / l);
    prox_weighted_l1_into(&mut next, partition, alphas, l);
    next
}

/// FISTA: the ISTA step applied at an extrapolated point, with the
/// Beck–Teboulle momentum schedule (no restarts).
pub fn fista(
    signal: &Signal,
    dict: &ConcatDictionary,
    config: &SolverConfig,
    reference: Option<&ComponentCode>,
) -> Result<SolverTrace> {
    check_problem(signal, dict, config)?;
    let a = dict.concatenated();
    let partition = dict.partition();
    let l = effective_lipschitz(&a, config);
    let mut inst = Instrument::new(&a, &signal.data, &partition, &config.alphas, reference);

    let mut x = Array1::<f64>::zeros(a.ncols());
    let mut z = x.clone();
    let mut t = 1.0_f64;
    let mut iterations_run = 0;
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let next = ista_step(&z, &a, &signal.data, &partition, &config.alphas, l);
        ensure_finite(&next, iter)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let delta = (&next - &x).dot(&(&next - &x)).sqrt();
        z = &next + &(&next - &x).mapv(|d| beta * d);
        x = next;
        t = t_next;
        iterations_run = iter;
        inst.record(iter, &x, &x)?;
        if config.stop_tol > 0.0 && rel_change(delta, x.dot(&x).sqrt()) < config.stop_tol {
            converged = true;
            break;
        }
    }
    Ok(SolverTrace {
        records: inst.records,
        code: ComponentCode::new(x, partition)?,
        iterations_run,
        converged,
    })
}

/// SALSA: ADMM with variable splitting `x = u`.
///
/// Implements exactly: init `x = Aᵀy`, `d = 0`; loop
/// `u ← soft(x + d; α/μ)` blockwise, solve `x` through the splitting
/// operator `S = (μI + AᵀA)⁻¹`, then `d ← d − u + x`. When
/// `config.emit_thresholded` is set (the default) the emitted code gets the
/// same blockwise output soft-threshold as the unrolled network, so
/// truncated SALSA is comparable with LSALSA output.
///
/// A precomputed `splitting` operator may be shared across many encodes; it
/// must equal `(μI + AᵀA)⁻¹` for this dictionary and `μ`.
pub fn salsa(
    signal: &Signal,
    dict: &ConcatDictionary,
    config: &SolverConfig,
    splitting: Option<&Array2<f64>>,
    reference: Option<&ComponentCode>,
) -> Result<SolverTrace> {
    check_problem(signal, dict, config)?;
    let a = dict.concatenated();
    let partition = dict.partition();
    let owned;
    let s = match splitting {
        Some(s) => {
            if s.nrows() != a.ncols() || s.ncols() != a.ncols() {
                return Err(Error::ShapeMismatch(format!(
                    "splitting operator is {}x{}, dictionary has {} atoms",
                    s.nrows(),
                    s.ncols(),
                    a.ncols()
                )));
            }
            s
        }
        None => {
            owned = build_splitting_operator(dict, config.mu)?;
            &owned
        }
    };
    let mut inst = Instrument::new(&a, &signal.data, &partition, &config.alphas, reference);

    let aty = signal.data.dot(&a); // Aᵀy
    let mut x = aty.clone();
    let mut d = Array1::<f64>::zeros(x.len());
    let mut emitted = Array1::<f64>::zeros(x.len());
    let mut iterations_run = 0;
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let mut u = &x + &d;
        prox_weighted_l1_into(&mut u, &partition, &config.alphas, config.mu);
        let rhs = &aty + &(&u - &d).mapv(|v| config.mu * v);
        let next = s.dot(&rhs);
        ensure_finite(&next, iter)?;
        d = &d - &u + &next;
        let delta = (&next - &x).dot(&(&next - &x)).sqrt();
        x = next;
        iterations_run = iter;
        emitted.assign(&x);
        if config.emit_thresholded {
            prox_weighted_l1_into(&mut emitted, &partition, &config.alphas, config.mu);
        }
        inst.record(iter, &x, &emitted)?;
        if config.stop_tol > 0.0 && rel_change(delta, x.dot(&x).sqrt()) < config.stop_tol {
            converged = true;
            break;
        }
    }
    Ok(SolverTrace {
        records: inst.records,
        code: ComponentCode::new(emitted, partition)?,
        iterations_run,
        converged,
    })
}

/// ISTA loop without instrumentation; same arithmetic as [`ista`].
pub(crate) fn ista_lean(
    y: &Array1<f64>,
    a: &Array2<f64>,
    partition: &[usize],
    alphas: &[f64],
    l: f64,
    max_iters: usize,
    stop_tol: f64,
) -> Result<Array1<f64>> {
    let mut x = Array1::<f64>::zeros(a.ncols());
    for iter in 1..=max_iters {
        let next = ista_step(&x, a, y, partition, alphas, l);
        ensure_finite(&next, iter)?;
        let delta = (&next - &x).dot(&(&next - &x)).sqrt();
        x = next;
        if stop_tol > 0.0 && rel_change(delta, x.dot(&x).sqrt()) < stop_tol {
            break;
        }
    }
    Ok(x)
}

/// FISTA loop without instrumentation; same arithmetic as [`fista`].
pub(crate) fn fista_lean(
    y: &Array1<f64>,
    a: &Array2<f64>,
    partition: &[usize],
    alphas: &[f64],
    l: f64,
    max_iters: usize,
    stop_tol: f64,
) -> Result<Array1<f64>> {
    let mut x = Array1::<f64>::zeros(a.ncols());
    let mut z = x.clone();
    let mut t = 1.0_f64;
    for iter in 1..=max_iters {
        let next = ista_step(&z, a, y, partition, alphas, l);
        ensure_finite(&next, iter)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let delta = (&next - &x).dot(&(&next - &x)).sqrt();
        z = &next + &(&next - &x).mapv(|d| beta * d);
        x = next;
        t = t_next;
        if stop_tol > 0.0 && rel_change(delta, x.dot(&x).sqrt()) < stop_tol {
            break;
        }
    }
    Ok(x)
}

/// SALSA loop without instrumentation; same arithmetic as [`salsa`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn salsa_lean(
    y: &Array1<f64>,
    a: &Array2<f64>,
    s: &Array2<f64>,
    partition: &[usize],
    alphas: &[f64],
    mu: f64,
    max_iters: usize,
    stop_tol: f64,
    emit_thresholded: bool,
) -> Result<Array1<f64>> {
    let aty = y.dot(a);
    let mut x = aty.clone();
    let mut d = Array1::<f64>::zeros(x.len());
    for iter in 1..=max_iters {
        let mut u = &x + &d;
        prox_weighted_l1_into(&mut u, partition, alphas, mu);
        let rhs = &aty + &(&u - &d).mapv(|v| mu * v);
        let next = s.dot(&rhs);
        ensure_finite(&next, iter)?;
        d = &d - &u + &next;
        let delta = (&next - &x).dot(&(&next - &x)).sqrt();
        x = next;
        if stop_tol > 0.0 && rel_change(delta, x.dot(&x).sqrt()) < stop_tol {
            break;
        }
    }
    if emit_thresholded {
        prox_weighted_l1_into(&mut x, partition, alphas, mu);
    }
    Ok(x)
}

/// Model parameters backing one dispatched encode.
#[derive(Debug, Clone)]
pub enum EncodeModel<'a> {
    /// ISTA/FISTA/SALSA configuration; `splitting` is an optional shared
    /// precomputed operator for SALSA.
    Iterative {
        config: &'a SolverConfig,
        splitting: Option<&'a Array2<f64>>,
    },
    Lista(&'a ListaParams),
    Lsalsa(&'a LsalsaParams),
}

/// Uniform benchmark surface: run `method` on `signal` and return its code
/// estimate at the method's configured depth/iteration budget.
///
/// ISTA/FISTA/LISTA receive the concatenated dictionary for MCA problems.
pub fn dispatch_encode(
    method: Method,
    signal: &Signal,
    dict: &ConcatDictionary,
    model: &EncodeModel,
) -> Result<ComponentCode> {
    match (method, model) {
        (Method::Ista, EncodeModel::Iterative { config, .. })
        | (Method::Fista, EncodeModel::Iterative { config, .. }) => {
            check_problem(signal, dict, config)?;
            let a = dict.concatenated();
            let partition = dict.partition();
            let l = effective_lipschitz(&a, config);
            let run = if method == Method::Ista {
                ista_lean
            } else {
                fista_lean
            };
            let x = run(
                &signal.data,
                &a,
                &partition,
                &config.alphas,
                l,
                config.max_iters,
                config.stop_tol,
            )?;
            ComponentCode::new(x, partition)
        }
        (Method::Salsa, EncodeModel::Iterative { config, splitting }) => {
            check_problem(signal, dict, config)?;
            let a = dict.concatenated();
            let partition = dict.partition();
            let owned;
            let s = match splitting {
                Some(s) => *s,
                None => {
                    owned = build_splitting_operator(dict, config.mu)?;
                    &owned
                }
            };
            let x = salsa_lean(
                &signal.data,
                &a,
                s,
                &partition,
                &config.alphas,
                config.mu,
                config.max_iters,
                config.stop_tol,
                config.emit_thresholded,
            )?;
            ComponentCode::new(x, partition)
        }
        (Method::Lista, EncodeModel::Lista(params)) => {
            let (code, _) = lista_forward(params, signal, false)?;
            ComponentCode::new(code.into_values(), dict.partition())
        }
        (Method::Lsalsa, EncodeModel::Lsalsa(params)) => {
            let (code, _) = lsalsa_forward(params, signal, false)?;
            Ok(code)
        }
        (m, _) => Err(Error::MissingModel {
            method: m.name(),
            t: 0,
            detail: "model kind does not match the requested method".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Dictionary;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye_dict(n: usize) -> ConcatDictionary {
        ConcatDictionary::from_single(Dictionary::new(Array2::eye(n)).unwrap())
    }

    fn random_dict(m: usize, n: usize, seed: u64) -> ConcatDictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
        let d = crate::types::normalize_columns(&Dictionary::new(a).unwrap()).unwrap();
        ConcatDictionary::from_single(d)
    }

    fn random_signal(m: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new(Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn ista_one_step_orthonormal_is_exact() {
        // y=[1,0], A=I, α=0.5, L=1 → x=[0.5,0] after 1 iteration
        let dict = eye_dict(2);
        let signal = Signal::new(array![1.0, 0.0]).unwrap();
        let config = SolverConfig::new(vec![0.5], 1.0, 1)
            .with_stop_tol(0.0)
            .with_lipschitz(1.0);
        let trace = ista(&signal, &dict, &config, None).unwrap();
        assert_eq!(trace.code.values(), &array![0.5, 0.0]);
        assert_eq!(trace.iterations_run, 1);
    }

    #[test]
    fn fista_first_iteration_equals_ista() {
        let dict = random_dict(6, 9, 1);
        let signal = random_signal(6, 2);
        let config = SolverConfig::new(vec![0.2], 1.0, 1).with_stop_tol(0.0);
        let a = ista(&signal, &dict, &config, None).unwrap();
        let b = fista(&signal, &dict, &config, None).unwrap();
        assert_eq!(a.code.values(), b.code.values());
    }

    #[test]
    fn fista_with_zero_alpha_recovers_identity_fit() {
        let dict = eye_dict(3);
        let signal = Signal::new(array![0.3, -0.7, 1.1]).unwrap();
        let config = SolverConfig::new(vec![0.0], 1.0, 200).with_stop_tol(1e-14);
        let trace = fista(&signal, &dict, &config, None).unwrap();
        for (a, b) in trace.code.values().iter().zip(signal.data.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        assert!(trace.final_cost() < 1e-20);
    }

    #[test]
    fn fista_beats_ista_at_200_iterations() {
        let dict = random_dict(12, 24, 3);
        let signal = random_signal(12, 4);
        let config = SolverConfig::new(vec![0.05], 1.0, 200).with_stop_tol(0.0);
        let ista_cost = ista(&signal, &dict, &config, None).unwrap().final_cost();
        let fista_cost = fista(&signal, &dict, &config, None).unwrap().final_cost();
        assert!(fista_cost <= ista_cost + 1e-8);
    }

    #[test]
    fn ista_matches_fista_after_long_runs() {
        let dict = random_dict(20, 40, 5);
        let signal = random_signal(20, 6);
        let config = SolverConfig::new(vec![0.25], 1.0, 2000).with_stop_tol(0.0);
        let ista_cost = ista(&signal, &dict, &config, None).unwrap().final_cost();
        let fista_cost = fista(&signal, &dict, &config, None).unwrap().final_cost();
        assert!(
            (ista_cost - fista_cost).abs() / fista_cost.abs() < 1e-6,
            "ista {ista_cost} vs fista {fista_cost}"
        );
    }

    #[test]
    fn salsa_hand_trace_first_iteration() {
        // y=[1,0], A=I₂, α=0.5, μ=1 → u=[0.5,0], x=[0.75,0], d=[0.25,0]
        let dict = eye_dict(2);
        let signal = Signal::new(array![1.0, 0.0]).unwrap();
        let config = SolverConfig::new(vec![0.5], 1.0, 1)
            .with_stop_tol(0.0)
            .with_emit_thresholded(false);
        let trace = salsa(&signal, &dict, &config, None, None).unwrap();
        assert_abs_diff_eq!(trace.code.values()[0], 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(trace.code.values()[1], 0.0, epsilon = 1e-14);
        // with the output stage on, the emitted code is soft([0.75,0]; 0.5)
        let thresholded = salsa(
            &signal,
            &dict,
            &SolverConfig::new(vec![0.5], 1.0, 1).with_stop_tol(0.0),
            None,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(thresholded.code.values()[0], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn salsa_with_zero_alpha_converges_to_least_squares() {
        let dict = eye_dict(3);
        let signal = Signal::new(array![0.5, -1.5, 2.0]).unwrap();
        let config = SolverConfig::new(vec![0.0], 1.0, 500).with_stop_tol(1e-12);
        let trace = salsa(&signal, &dict, &config, None, None).unwrap();
        for (a, b) in trace.code.values().iter().zip(signal.data.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn salsa_matches_fista_cost_at_convergence() {
        let dict = random_dict(20, 35, 7);
        let signal = random_signal(20, 8);
        let fista_config = SolverConfig::new(vec![0.1], 10.0, 20000).with_stop_tol(1e-10);
        let salsa_config = fista_config.clone();
        let f = fista(&signal, &dict, &fista_config, None).unwrap();
        let s = salsa(&signal, &dict, &salsa_config, None, None).unwrap();
        assert!(
            (f.final_cost() - s.final_cost()).abs() / f.final_cost().abs() < 1e-6,
            "fista {} vs salsa {}",
            f.final_cost(),
            s.final_cost()
        );
        assert!(s.converged);
    }

    #[test]
    fn salsa_dual_variable_telescopes() {
        // d_t should equal the accumulated Σ (x_k − u_k); re-run the recursion
        // independently and compare.
        let dict = random_dict(8, 12, 9);
        let signal = random_signal(8, 10);
        let config = SolverConfig::new(vec![0.3], 2.0, 30).with_stop_tol(0.0);
        let a = dict.concatenated();
        let s = build_splitting_operator(&dict, config.mu).unwrap();
        let aty = signal.data.dot(&a);
        let partition = dict.partition();

        let mut x = aty.clone();
        let mut d = Array1::<f64>::zeros(x.len());
        let mut acc = Array1::<f64>::zeros(x.len());
        for _ in 0..config.max_iters {
            let mut u = &x + &d;
            prox_weighted_l1_into(&mut u, &partition, &config.alphas, config.mu);
            let rhs = &aty + &(&u - &d).mapv(|v| config.mu * v);
            x = s.dot(&rhs);
            d = &d - &u + &x;
            acc = &acc + &(&x - &u);
            let gap = (&acc - &d).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            assert!(gap <= 1e-10, "telescoping gap {gap}");
        }
    }

    #[test]
    fn single_part_concat_matches_single_dictionary_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = Array2::from_shape_fn((10, 14), |_| rng.gen_range(-1.0..1.0));
        let d = crate::types::normalize_columns(&Dictionary::new(a).unwrap()).unwrap();
        let single = ConcatDictionary::from_single(d.clone());
        let concat = ConcatDictionary::new(vec![d]).unwrap();
        let signal = random_signal(10, 22);
        let config = SolverConfig::new(vec![0.2], 5.0, 25).with_stop_tol(0.0);
        let t1 = salsa(&signal, &single, &config, None, None).unwrap();
        let t2 = salsa(&signal, &concat, &config, None, None).unwrap();
        for (a, b) in t1.code.values().iter().zip(t2.code.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_traces_are_prefixes() {
        let dict = random_dict(10, 16, 30);
        let signal = random_signal(10, 31);
        for m in [Method::Ista, Method::Fista, Method::Salsa] {
            let short = SolverConfig::new(vec![0.15], 4.0, 5).with_stop_tol(0.0);
            let long = SolverConfig::new(vec![0.15], 4.0, 10).with_stop_tol(0.0);
            let run = |cfg: &SolverConfig| -> SolverTrace {
                match m {
                    Method::Ista => ista(&signal, &dict, cfg, None).unwrap(),
                    Method::Fista => fista(&signal, &dict, cfg, None).unwrap(),
                    Method::Salsa => salsa(&signal, &dict, cfg, None, None).unwrap(),
                    _ => unreachable!(),
                }
            };
            let a = run(&short);
            let b = run(&long);
            assert_eq!(a.records.len(), 5);
            assert_eq!(b.records.len(), 10);
            for (ra, rb) in a.records.iter().zip(b.records.iter()) {
                assert_eq!(ra.iter, rb.iter);
                assert_eq!(ra.cost.to_bits(), rb.cost.to_bits());
                assert_eq!(ra.sparsity.to_bits(), rb.sparsity.to_bits());
            }
        }
    }

    #[test]
    fn dispatch_salsa_equals_direct_call() {
        let dict = random_dict(9, 13, 40);
        let signal = random_signal(9, 41);
        let config = SolverConfig::new(vec![0.25], 3.0, 7).with_stop_tol(0.0);
        let direct = salsa(&signal, &dict, &config, None, None).unwrap().code;
        let model = EncodeModel::Iterative {
            config: &config,
            splitting: None,
        };
        let dispatched = dispatch_encode(Method::Salsa, &signal, &dict, &model).unwrap();
        assert_eq!(direct.values(), dispatched.values());
    }

    #[test]
    fn dispatch_ista_one_step_orthonormal() {
        let dict = eye_dict(4);
        let signal = Signal::new(array![2.0, -0.2, 0.0, 0.8]).unwrap();
        let config = SolverConfig::new(vec![0.5], 1.0, 1)
            .with_stop_tol(0.0)
            .with_lipschitz(1.0);
        let model = EncodeModel::Iterative {
            config: &config,
            splitting: None,
        };
        let code = dispatch_encode(Method::Ista, &signal, &dict, &model).unwrap();
        let want = array![1.5, 0.0, 0.0, 0.3];
        for (a, b) in code.values().iter().zip(want.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn dispatch_rejects_mismatched_model() {
        let dict = eye_dict(2);
        let signal = Signal::new(array![1.0, 0.0]).unwrap();
        let config = SolverConfig::new(vec![0.5], 1.0, 1);
        let model = EncodeModel::Iterative {
            config: &config,
            splitting: None,
        };
        assert!(matches!(
            dispatch_encode(Method::Lsalsa, &signal, &dict, &model),
            Err(Error::MissingModel { .. })
        ));
    }

    #[test]
    fn lean_paths_match_instrumented_solvers_bitwise() {
        let dict = random_dict(11, 17, 60);
        let signal = random_signal(11, 61);
        let config = SolverConfig::new(vec![0.2], 3.0, 12).with_stop_tol(0.0);
        let model = EncodeModel::Iterative {
            config: &config,
            splitting: None,
        };
        for m in [Method::Ista, Method::Fista, Method::Salsa] {
            let traced = match m {
                Method::Ista => ista(&signal, &dict, &config, None).unwrap().code,
                Method::Fista => fista(&signal, &dict, &config, None).unwrap().code,
                Method::Salsa => salsa(&signal, &dict, &config, None, None).unwrap().code,
                _ => unreachable!(),
            };
            let lean = dispatch_encode(m, &signal, &dict, &model).unwrap();
            for (a, b) in traced.values().iter().zip(lean.values().iter()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{m} lean/traced mismatch");
            }
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::from_str("SALSA").unwrap(), Method::Salsa);
        assert_eq!(Method::from_str("lsalsa").unwrap(), Method::Lsalsa);
        assert!(matches!(
            Method::from_str("newton"),
            Err(Error::UnknownMethod(_))
        ));
    }

    #[test]
    fn wallclock_is_nondecreasing() {
        let dict = random_dict(8, 10, 50);
        let signal = random_signal(8, 51);
        let config = SolverConfig::new(vec![0.1], 2.0, 20).with_stop_tol(0.0);
        let trace = salsa(&signal, &dict, &config, None, None).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].elapsed_s >= w[0].elapsed_s);
        }
    }
}
