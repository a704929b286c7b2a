//! Executable checks of the optimality structure behind the unrolled
//! encoder: the primal-optimality residual of the x-update, the learned
//! data-fidelity term, the descent-modifier matrix `P`, and the closed-form
//! layer recursion oracle.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, norm1, symmetric_eigenvalues, Lu};
use crate::splitting::regularized_gram;
use crate::types::{ConcatDictionary, Signal};
use crate::unrolled::{lsalsa_forward, lsalsa_init, LsalsaParams, LsalsaTape};

/// Condition-estimate ceiling beyond which a learned `S` is rejected as
/// numerically singular.
pub const MAX_S_CONDITION: f64 = 1e12;

/// Factored access to `S⁻¹`: linear solves against an LU factorization of
/// `S` rather than an explicit inverse, with a 1-norm condition estimate.
#[derive(Debug)]
pub struct SplittingInverse {
    lu: Lu,
    cond: f64,
}

impl SplittingInverse {
    pub fn new(s: &Array2<f64>) -> Result<Self> {
        let lu = Lu::factor(s).map_err(|_| Error::SingularS { cond: f64::INFINITY })?;
        let cond = norm1(s) * lu.inverse_norm1_estimate();
        if !cond.is_finite() || cond > MAX_S_CONDITION {
            return Err(Error::SingularS { cond });
        }
        Ok(Self { lu, cond })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.cond
    }

    /// `S⁻¹ v` by solving `S z = v`.
    pub fn apply(&self, v: &Array1<f64>) -> Array1<f64> {
        self.lu.solve(v)
    }

    /// Materialize `S⁻¹` (columnwise solves against the identity).
    pub fn dense(&self) -> Array2<f64> {
        self.lu.inverse()
    }
}

/// A probe for the learned Augmented Lagrangian of one `(params, signal)`
/// pair, with `S` factored once.
pub struct LagrangianProbe<'a> {
    pub params: &'a LsalsaParams,
    pub signal: &'a Signal,
    sinv: SplittingInverse,
    w: Array1<f64>,
}

impl<'a> LagrangianProbe<'a> {
    pub fn new(params: &'a LsalsaParams, signal: &'a Signal) -> Result<Self> {
        params.validate()?;
        let sinv = SplittingInverse::new(&params.s)?;
        let w = params.w_e.dot(&signal.data);
        Ok(Self {
            params,
            signal,
            sinv,
            w,
        })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.sinv.condition_estimate()
    }

    /// The learned data-fidelity term
    /// `f̂₁(x; S) = ½xᵀ[S⁻¹ − μI]x − (W_e y)ᵀx + ½yᵀy`.
    ///
    /// At the SALSA initialization this equals `½‖y − Ax‖²`.
    pub fn learned_f1(&self, x: &Array1<f64>) -> Result<f64> {
        if x.len() != self.params.code_len() {
            return Err(Error::DimensionMismatch {
                context: "learned f1",
                expected: self.params.code_len(),
                got: x.len(),
            });
        }
        let sinv_x = self.sinv.apply(x);
        let quad = 0.5 * (x.dot(&sinv_x) - self.params.mu * x.dot(x));
        Ok(quad - self.w.dot(x) + 0.5 * self.signal.data.dot(&self.signal.data))
    }

    /// Primal-optimality residual of layer `t` (1-based):
    /// `‖S⁻¹x(t) − W_e y − μ(u(t) − d(t−1))‖∞`, relative to the magnitude of
    /// the right-hand side.
    ///
    /// The x-update solves exactly this equation, so the residual is bounded
    /// by factorization round-off for any parameters, learned or not.
    pub fn primal_optimality_residual(&self, tape: &LsalsaTape, t: usize) -> Result<f64> {
        if t == 0 || t > tape.u.len() || tape.x.len() <= t || tape.d.len() < t {
            return Err(Error::MissingTape);
        }
        let rhs = &self.w + &(&tape.u[t - 1] - &tape.d[t - 1]).mapv(|v| self.params.mu * v);
        let lhs = self.sinv.apply(&tape.x[t]);
        let num = (&lhs - &rhs).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        let scale = rhs.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-12);
        Ok(num / scale)
    }

    /// Largest relative residual across every layer of a fresh tape-enabled
    /// forward pass.
    pub fn max_residual_over_layers(&self) -> Result<f64> {
        let (_, tape) = lsalsa_forward(self.params, self.signal, true)?;
        let tape = tape.expect("tape requested");
        let mut worst = 0.0_f64;
        for t in 1..=self.params.depth {
            worst = worst.max(self.primal_optimality_residual(&tape, t)?);
        }
        Ok(worst)
    }
}

/// Spectral summary of the descent modifier.
#[derive(Debug, Clone, Serialize)]
pub struct DescentDiagnostics {
    pub frobenius: f64,
    pub sym_eig_min: f64,
    pub sym_eig_max: f64,
}

/// The descent-modifier matrix `P = S⁻¹ − (μI + AᵀA)`, i.e. the learned
/// correction to the Hessian of the original problem. Zero at the SALSA
/// initialization. Also reports `‖P‖_F` and the extreme eigenvalues of P's
/// symmetric part.
pub fn descent_modifier(
    params: &LsalsaParams,
    dict: &ConcatDictionary,
    mu: f64,
) -> Result<(Array2<f64>, DescentDiagnostics)> {
    let sinv = SplittingInverse::new(&params.s)?;
    let hessian = regularized_gram(&dict.concatenated(), mu);
    if hessian.nrows() != params.code_len() {
        return Err(Error::ShapeMismatch(format!(
            "dictionary has {} atoms, S is {}x{}",
            hessian.nrows(),
            params.s.nrows(),
            params.s.ncols()
        )));
    }
    let p = sinv.dense() - &hessian;
    let eig = symmetric_eigenvalues(&p)?;
    let diag = DescentDiagnostics {
        frobenius: frobenius(&p),
        sym_eig_min: *eig.first().expect("nonempty spectrum"),
        sym_eig_max: *eig.last().expect("nonempty spectrum"),
    };
    Ok((p, diag))
}

/// Closed-form layer recursion oracle.
///
/// For initialization parameters the nonlinearity input of layer `s` can be
/// written from the earlier outputs alone (`M = I − μS`):
/// `x(s−1) + d(s−1) = (2I + (I−2μS) Σ_{n=0}^{s−3} Mⁿ)·S·W_e·y
///  − (I−2μS) Σ_{n=0}^{s−2} Mⁿ·u(s−1−n)`, with `u(0) = 0` and `s = 1`
/// degenerating to `W_e·y`. Evaluates that expression from the stored tape
/// and returns the worst-case relative deviation of
/// `soft(·)` against the forward pass's `u(s)`, over `s = 1..=depth`.
///
/// Restricted to `depth <= 6`: the matrix-power terms amplify round-off for
/// deep networks, and the derivation assumes the SALSA structure.
pub fn recursion_oracle(params: &LsalsaParams, signal: &Signal, depth: usize) -> Result<f64> {
    if depth == 0 || depth > 6 {
        return Err(Error::InvalidArgument(format!(
            "recursion oracle supports 1 <= depth <= 6, got {depth}"
        )));
    }
    let mut truncated = params.clone();
    truncated.depth = depth;
    let (_, tape) = lsalsa_forward(&truncated, signal, true)?;
    let tape = tape.expect("tape requested");
    let n = params.code_len();
    let mu = params.mu;
    // M = I − μS and the bracket factor I − 2μS
    let mut m = params.s.mapv(|v| -mu * v);
    let mut one_minus_2mu_s = params.s.mapv(|v| -2.0 * mu * v);
    for i in 0..n {
        m[(i, i)] += 1.0;
        one_minus_2mu_s[(i, i)] += 1.0;
    }
    let s_w = params.s.dot(&tape.w);
    let tau = {
        let mut tau = Array1::<f64>::zeros(n);
        let mut off = 0;
        for (len, alpha) in params.partition.iter().zip(&params.alphas) {
            for t in tau.slice_mut(ndarray::s![off..off + len]).iter_mut() {
                *t = alpha / mu;
            }
            off += len;
        }
        tau
    };
    let scale = tape
        .u
        .iter()
        .flat_map(|u| u.iter())
        .map(|v| v.abs())
        .fold(1.0f64, f64::max);
    let mut worst = 0.0_f64;
    for s in 1..=depth {
        let arg = if s == 1 {
            tape.w.clone()
        } else {
            // geometric part: (2I + (I−2μS) Σ_{n=0}^{s−3} Mⁿ) S W_e y
            let mut geo_sum = Array1::<f64>::zeros(n);
            let mut power_vec = s_w.clone();
            for _ in 0..(s - 2) {
                geo_sum += &power_vec;
                power_vec = m.dot(&power_vec);
            }
            let mut arg = s_w.mapv(|v| 2.0 * v) + one_minus_2mu_s.dot(&geo_sum);
            // output history: −(I−2μS) Σ_{n=0}^{s−2} Mⁿ u(s−1−n)
            let mut hist = Array1::<f64>::zeros(n);
            for k in 0..=(s - 2) {
                let idx = s - 1 - k; // layer index of u, down to u(1)
                if idx == 0 {
                    break;
                }
                let mut term = tape.u[idx - 1].clone();
                for _ in 0..k {
                    term = m.dot(&term);
                }
                hist += &term;
            }
            arg -= &one_minus_2mu_s.dot(&hist);
            arg
        };
        let predicted = Array1::from_shape_fn(n, |i| {
            crate::prox::soft_threshold_scalar(arg[i], tau[i])
        });
        let dev = (&predicted - &tape.u[s - 1])
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(dev / scale);
    }
    Ok(worst)
}

/// JSON report emitted by the `diag` command.
#[derive(Debug, Clone, Serialize)]
pub struct DiagReport {
    pub theorem1_residual_max: f64,
    pub f1hat_init_dev: f64,
    #[serde(rename = "P_frobenius")]
    pub p_frobenius: f64,
    #[serde(rename = "P_sym_eig_min")]
    pub p_sym_eig_min: f64,
    #[serde(rename = "P_sym_eig_max")]
    pub p_sym_eig_max: f64,
    pub recursion_dev: f64,
    pub s_condition_estimate: f64,
}

/// Run every diagnostic against a dictionary and (optionally) trained
/// parameters.
///
/// The Theorem-1 residual and the `P` statistics use `trained` when given
/// (the identity is parameter-independent); the learned-f1 identity and the
/// recursion oracle are checked at the exact SALSA initialization, which is
/// where they are exact.
pub fn run_diagnostics(
    dict: &ConcatDictionary,
    alphas: &[f64],
    mu: f64,
    depth: usize,
    trained: Option<&LsalsaParams>,
    signals: &[Signal],
    seed: u64,
) -> Result<DiagReport> {
    if signals.is_empty() {
        return Err(Error::EmptySource("diagnostic signals"));
    }
    let init = lsalsa_init(dict, alphas, mu, depth)?;
    let params = trained.unwrap_or(&init);
    let a = dict.concatenated();

    let mut residual_max = 0.0_f64;
    let mut cond = 0.0_f64;
    for signal in signals {
        let probe = LagrangianProbe::new(params, signal)?;
        residual_max = residual_max.max(probe.max_residual_over_layers()?);
        cond = cond.max(probe.condition_estimate());
    }

    // learned-f1 identity at initialization against ½‖y − Ax‖²
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f1_dev = 0.0_f64;
    for signal in signals {
        let probe = LagrangianProbe::new(&init, signal)?;
        for _ in 0..4 {
            let x = Array1::from_shape_fn(init.code_len(), |_| rng.gen_range(-1.0..1.0));
            let f1 = probe.learned_f1(&x)?;
            let resid = &signal.data - &a.dot(&x);
            let reference = 0.5 * resid.dot(&resid);
            f1_dev = f1_dev.max((f1 - reference).abs() / reference.abs().max(1e-12));
        }
    }

    let (_, p_diag) = descent_modifier(params, dict, mu)?;
    let recursion_dev = recursion_oracle(&init, &signals[0], depth.min(6))?;
    Ok(DiagReport {
        theorem1_residual_max: residual_max,
        f1hat_init_dev: f1_dev,
        p_frobenius: p_diag.frobenius,
        p_sym_eig_min: p_diag.sym_eig_min,
        p_sym_eig_max: p_diag.sym_eig_max,
        recursion_dev,
        s_condition_estimate: cond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictlearn::random_dictionary;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn random_concat(m: usize, parts: &[usize], seed: u64) -> ConcatDictionary {
        let dicts = parts
            .iter()
            .enumerate()
            .map(|(i, &n)| random_dictionary(m, n, seed + i as u64).unwrap())
            .collect();
        ConcatDictionary::new(dicts).unwrap()
    }

    fn random_signal(m: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new(Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn learned_f1_at_init_is_the_data_fidelity() {
        let dict = random_concat(8, &[6, 6], 1);
        let params = lsalsa_init(&dict, &[0.2, 0.4], 3.0, 2).unwrap();
        let signal = random_signal(8, 2);
        let probe = LagrangianProbe::new(&params, &signal).unwrap();
        let a = dict.concatenated();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = Array1::from_shape_fn(12, |_| rng.gen_range(-1.0..1.0));
            let f1 = probe.learned_f1(&x).unwrap();
            let resid = &signal.data - &a.dot(&x);
            let want = 0.5 * resid.dot(&resid);
            assert!(
                (f1 - want).abs() / want.abs() <= 1e-9,
                "f1 {f1} vs ½‖y−Ax‖² {want}"
            );
        }
    }

    #[test]
    fn learned_f1_at_zero_is_half_signal_energy() {
        let dict = random_concat(6, &[7], 4);
        let params = lsalsa_init(&dict, &[0.1], 2.0, 2).unwrap();
        let signal = random_signal(6, 5);
        let probe = LagrangianProbe::new(&params, &signal).unwrap();
        let f1 = probe.learned_f1(&Array1::zeros(7)).unwrap();
        assert_abs_diff_eq!(
            f1,
            0.5 * signal.data.dot(&signal.data),
            epsilon = 1e-12
        );
        let zero = Signal::new(Array1::zeros(6)).unwrap();
        let probe0 = LagrangianProbe::new(&params, &zero).unwrap();
        assert_abs_diff_eq!(probe0.learned_f1(&Array1::zeros(7)).unwrap(), 0.0);
    }

    #[test]
    fn residual_vanishes_on_every_layer() {
        let dict = random_concat(10, &[8, 6], 6);
        let params = lsalsa_init(&dict, &[0.15, 0.3], 5.0, 5).unwrap();
        let signal = random_signal(10, 7);
        let probe = LagrangianProbe::new(&params, &signal).unwrap();
        assert!(probe.max_residual_over_layers().unwrap() <= 1e-8);
    }

    #[test]
    fn residual_holds_for_perturbed_parameters() {
        let dict = random_concat(9, &[12], 8);
        let mut params = lsalsa_init(&dict, &[0.2], 2.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        params.s.mapv_inplace(|v| v + 0.01 * rng.gen_range(-1.0..1.0));
        params.w_e.mapv_inplace(|v| v + 0.05 * rng.gen_range(-1.0..1.0));
        let signal = random_signal(9, 10);
        let probe = LagrangianProbe::new(&params, &signal).unwrap();
        assert!(probe.max_residual_over_layers().unwrap() <= 1e-8);
    }

    #[test]
    fn residual_detects_a_perturbed_iterate() {
        let dict = random_concat(8, &[10], 11);
        let params = lsalsa_init(&dict, &[0.2], 2.0, 3).unwrap();
        let signal = random_signal(8, 12);
        let probe = LagrangianProbe::new(&params, &signal).unwrap();
        let (_, tape) = lsalsa_forward(&params, &signal, true).unwrap();
        let mut tape = tape.unwrap();
        tape.x[2][0] += 1e-3;
        let resid = probe.primal_optimality_residual(&tape, 2).unwrap();
        assert!(resid > 1e-6, "perturbation went unnoticed: {resid}");
    }

    #[test]
    fn descent_modifier_is_zero_at_init() {
        let dict = random_concat(10, &[7, 7], 13);
        let params = lsalsa_init(&dict, &[0.2, 0.2], 4.0, 3).unwrap();
        let (_, diag) = descent_modifier(&params, &dict, 4.0).unwrap();
        assert!(diag.frobenius <= 1e-8, "‖P‖_F = {}", diag.frobenius);
    }

    #[test]
    fn halved_splitting_doubles_the_hessian() {
        // S = (μI + AᵀA)⁻¹ / 2 makes S⁻¹ twice the Hessian, so P equals it
        let dict = random_concat(8, &[9], 14);
        let mu = 2.0;
        let mut params = lsalsa_init(&dict, &[0.1], mu, 2).unwrap();
        params.s.mapv_inplace(|v| v / 2.0);
        let (p, _) = descent_modifier(&params, &dict, mu).unwrap();
        let hessian = regularized_gram(&dict.concatenated(), mu);
        for i in 0..9 {
            for j in 0..9 {
                assert_abs_diff_eq!(p[(i, j)], hessian[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn splitting_round_trips_through_p() {
        // S recomputed as (P + μI + AᵀA)⁻¹ must match the original
        let dict = random_concat(8, &[9], 15);
        let mu = 3.0;
        let mut params = lsalsa_init(&dict, &[0.1], mu, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        params.s.mapv_inplace(|v| v + 1e-3 * rng.gen_range(-1.0..1.0));
        let (p, _) = descent_modifier(&params, &dict, mu).unwrap();
        let sinv_again = &p + &regularized_gram(&dict.concatenated(), mu);
        let s_again = Lu::factor(&sinv_again).unwrap().inverse();
        for (a, b) in s_again.iter().zip(params.s.iter()) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn singular_s_is_rejected_with_condition_estimate() {
        let dict = random_concat(6, &[6], 17);
        let mut params = lsalsa_init(&dict, &[0.1], 1.0, 2).unwrap();
        params.s.fill(0.0);
        let signal = random_signal(6, 18);
        match LagrangianProbe::new(&params, &signal) {
            Err(Error::SingularS { .. }) => {}
            Err(other) => panic!("expected SingularS, got {other:?}"),
            Ok(_) => panic!("expected SingularS, got a probe"),
        }
    }

    #[test]
    fn recursion_oracle_base_case_is_exact() {
        let dict = random_concat(7, &[8], 19);
        let params = lsalsa_init(&dict, &[0.3], 2.0, 1).unwrap();
        let signal = random_signal(7, 20);
        let dev = recursion_oracle(&params, &signal, 1).unwrap();
        assert!(dev <= 1e-12, "base case deviation {dev}");
    }

    #[test]
    fn recursion_oracle_matches_forward_pass() {
        for (parts, depth, seed) in [(vec![10usize], 4usize, 21u64), (vec![6, 7], 6, 22)] {
            let dict = random_concat(8, &parts, seed);
            let alphas: Vec<f64> = parts.iter().map(|_| 0.25).collect();
            let params = lsalsa_init(&dict, &alphas, 2.5, depth).unwrap();
            let signal = random_signal(8, seed + 50);
            let dev = recursion_oracle(&params, &signal, depth).unwrap();
            assert!(dev <= 1e-8, "depth {depth}: deviation {dev}");
        }
    }

    #[test]
    fn recursion_oracle_half_mu_s_cancellation() {
        // μS = I/2 makes I − 2μS vanish, collapsing the closed form
        let dict = random_concat(6, &[6], 23);
        let mu = 2.0;
        let mut params = lsalsa_init(&dict, &[0.2], mu, 4).unwrap();
        params.s = Array2::eye(6).mapv(|v: f64| v / (2.0 * mu));
        let signal = random_signal(6, 24);
        let dev = recursion_oracle(&params, &signal, 4).unwrap();
        assert!(dev <= 1e-10, "cancellation case deviation {dev}");
    }

    #[test]
    fn recursion_oracle_rejects_deep_requests() {
        let dict = random_concat(5, &[5], 25);
        let params = lsalsa_init(&dict, &[0.1], 1.0, 8).unwrap();
        let signal = random_signal(5, 26);
        assert!(recursion_oracle(&params, &signal, 7).is_err());
        assert!(recursion_oracle(&params, &signal, 0).is_err());
    }

    #[test]
    fn diag_report_fields_are_sane_at_init() {
        let dict = random_concat(8, &[6, 6], 27);
        let signals: Vec<Signal> = (0..3).map(|i| random_signal(8, 30 + i)).collect();
        let report = run_diagnostics(&dict, &[0.2, 0.3], 2.0, 4, None, &signals, 7).unwrap();
        assert!(report.theorem1_residual_max <= 1e-8);
        assert!(report.f1hat_init_dev <= 1e-9);
        assert!(report.p_frobenius <= 1e-8);
        assert!(report.recursion_dev <= 1e-8);
        assert!(report.s_condition_estimate >= 1.0);
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "theorem1_residual_max",
            "f1hat_init_dev",
            "P_frobenius",
            "P_sym_eig_min",
            "P_sym_eig_max",
            "recursion_dev",
        ] {
            assert!(json.get(key).is_some(), "missing report key {key}");
        }
    }

    #[test]
    fn trivial_t1_instance_has_zero_residual() {
        // the solvers' hand-trace instance: y=[1,0], A=I₂, α=0.5, μ=1
        let dict = ConcatDictionary::from_single(
            crate::types::Dictionary::new(Array2::eye(2)).unwrap(),
        );
        let params = lsalsa_init(&dict, &[0.5], 1.0, 1).unwrap();
        let signal = Signal::new(array![1.0, 0.0]).unwrap();
        let probe = LagrangianProbe::new(&params, &signal).unwrap();
        let resid = probe.max_residual_over_layers().unwrap();
        assert!(resid <= 1e-14, "residual {resid}");
    }
}
