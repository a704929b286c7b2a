//! Supervised encoder training: the code-prediction loss, closed-form
//! backpropagation through the unrolled LSALSA/LISTA graphs, vanilla SGD
//! with learning-rate decay, and hyperparameter grid search.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::rmse_raw;
use crate::solvers::{dispatch_encode, EncodeModel, Method};
use crate::types::{ComponentCode, ConcatDictionary, Signal, SolverConfig};
use crate::unrolled::{
    lista_forward, lista_init, lsalsa_forward, lsalsa_init, ListaParams, ListaTape, LsalsaParams,
    LsalsaTape,
};

/// SGD settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplicative factor applied to the learning rate after each epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early stop once the relative change in epoch loss falls below this.
    pub rel_cost_tol: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, max_epochs: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            lr_decay: 1.0,
            batch_size,
            max_epochs,
            rel_cost_tol: 1e-6,
            seed,
        }
    }

    pub fn with_lr_decay(mut self, decay: f64) -> Self {
        self.lr_decay = decay;
        self
    }

    pub fn with_rel_cost_tol(mut self, tol: f64) -> Self {
        self.rel_cost_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidArgument("lr_decay must be in (0, 1]".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.rel_cost_tol >= 0.0) {
            return Err(Error::InvalidArgument("rel_cost_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// One epoch of the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_rmse: Option<f64>,
}

/// Write a loss history as CSV (`epoch,lr,train_loss,val_rmse`).
pub fn write_loss_history<W: std::io::Write>(history: &[EpochRecord], w: &mut W) -> Result<()> {
    writeln!(w, "# schema=losshist-v1")?;
    writeln!(w, "epoch,lr,train_loss,val_rmse")?;
    for r in history {
        let val = r.val_rmse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", r.epoch, r.lr, r.train_loss, val)?;
    }
    Ok(())
}

fn check_dataset(signals: &[Signal], targets: &[ComponentCode]) -> Result<()> {
    if signals.is_empty() {
        return Err(Error::EmptySource("training dataset"));
    }
    if signals.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} signals but {} target codes",
            signals.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Anything that maps a signal to a flat code vector.
pub trait Encoder {
    fn encode_values(&self, signal: &Signal) -> Result<Array1<f64>>;
}

impl Encoder for LsalsaParams {
    fn encode_values(&self, signal: &Signal) -> Result<Array1<f64>> {
        Ok(lsalsa_forward(self, signal, false)?.0.into_values())
    }
}

impl Encoder for ListaParams {
    fn encode_values(&self, signal: &Signal) -> Result<Array1<f64>> {
        Ok(lista_forward(self, signal, false)?.0.into_values())
    }
}

/// The training objective `(1/2P) Σ_p ‖x*_p − f_e(y_p)‖²` evaluated by
/// running the encoder forward on every sample of the batch.
pub fn prediction_loss<E: Encoder>(
    encoder: &E,
    signals: &[Signal],
    targets: &[ComponentCode],
) -> Result<f64> {
    check_dataset(signals, targets)?;
    let mut total = 0.0;
    for (signal, target) in signals.iter().zip(targets) {
        let out = encoder.encode_values(signal)?;
        if out.len() != target.len() {
            return Err(Error::ShapeMismatch(format!(
                "encoder output has {} entries, target {}",
                out.len(),
                target.len()
            )));
        }
        let diff = &out - target.values();
        total += 0.5 * diff.dot(&diff);
    }
    Ok(total / signals.len() as f64)
}

/// Mean per-sample RMSE of an encoder against target codes.
pub fn mean_code_rmse<E: Encoder>(
    encoder: &E,
    signals: &[Signal],
    targets: &[ComponentCode],
) -> Result<f64> {
    check_dataset(signals, targets)?;
    let mut total = 0.0;
    for (signal, target) in signals.iter().zip(targets) {
        let out = encoder.encode_values(signal)?;
        total += rmse_raw(&out, target.values());
    }
    Ok(total / signals.len() as f64)
}

/// Gradients of the per-sample prediction loss w.r.t. LSALSA's learnables.
#[derive(Debug, Clone)]
pub struct LsalsaGrads {
    pub w_e: Array2<f64>,
    pub s: Array2<f64>,
}

/// Gradients of the per-sample prediction loss w.r.t. LISTA's learnables.
#[derive(Debug, Clone)]
pub struct ListaGrads {
    pub w_e: Array2<f64>,
    pub s_tilde: Array2<f64>,
    pub theta: Array1<f64>,
}

/// Per-unit threshold vector `τ_j = α_block(j)/μ`.
fn threshold_vector(partition: &[usize], alphas: &[f64], mu: f64) -> Array1<f64> {
    let n: usize = partition.iter().sum();
    let mut tau = Array1::<f64>::zeros(n);
    let mut off = 0;
    for (len, alpha) in partition.iter().zip(alphas) {
        for t in tau.slice_mut(ndarray::s![off..off + len]).iter_mut() {
            *t = alpha / mu;
        }
        off += len;
    }
    tau
}

/// Rank-1 accumulate `m += g ⊗ v`.
fn add_outer(m: &mut Array2<f64>, g: &Array1<f64>, v: &Array1<f64>) {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let gi = g[i];
        if gi != 0.0 {
            row.scaled_add(gi, v);
        }
    }
}

/// Exact reverse-mode gradients of the single-sample prediction loss
/// `½‖x* − f_e(y)‖²` through the LSALSA graph.
///
/// The soft-threshold local derivative is 1 where `|input| > τ` and 0
/// otherwise (the kink maps to 0). Contributions from every layer's use of
/// `W_e·y` and `S` are accumulated, including the output threshold stage.
/// Returns the sample loss alongside the gradients.
pub fn lsalsa_backward(
    params: &LsalsaParams,
    tape: Option<&LsalsaTape>,
    signal: &Signal,
    target: &ComponentCode,
) -> Result<(f64, LsalsaGrads)> {
    let tape = tape.ok_or(Error::MissingTape)?;
    let layers = params.depth;
    if tape.x.len() != layers + 1 || tape.u.len() != layers || tape.d.len() != layers + 1 {
        return Err(Error::MissingTape);
    }
    if target.len() != params.code_len() {
        return Err(Error::ShapeMismatch(format!(
            "target has {} entries, encoder emits {}",
            target.len(),
            params.code_len()
        )));
    }
    let n = params.code_len();
    let tau = threshold_vector(&params.partition, &params.alphas, params.mu);
    let x_last = &tape.x[layers];
    let out = Array1::from_shape_fn(n, |i| crate::prox::soft_threshold_scalar(x_last[i], tau[i]));
    let err = &out - target.values();
    let loss = 0.5 * err.dot(&err);

    let mut d_we = Array2::<f64>::zeros(params.w_e.dim());
    let mut d_s = Array2::<f64>::zeros(params.s.dim());
    let mut g_w = Array1::<f64>::zeros(n);

    // output stage: grad w.r.t. x(T) through the final threshold mask
    let mut g_x =
        Array1::from_shape_fn(n, |i| if x_last[i].abs() > tau[i] { err[i] } else { 0.0 });
    let mut g_d = Array1::<f64>::zeros(n);

    for t in (1..=layers).rev() {
        let u_t = &tape.u[t - 1];
        let d_prev = &tape.d[t - 1];
        let x_prev = &tape.x[t - 1];
        // total gradient reaching x(t): downstream use plus d(t) = … + x(t)
        let gx_tot = &g_x + &g_d;
        // x(t) = S·b_t with b_t = w + μ(u(t) − d(t−1))
        let b_t = &tape.w + &(u_t - d_prev).mapv(|v| params.mu * v);
        add_outer(&mut d_s, &gx_tot, &b_t);
        let g_b = params.s.t().dot(&gx_tot);
        g_w += &g_b;
        // u(t) feeds b_t (×μ) and d(t) = d(t−1) − u(t) + x(t)
        let g_u = &g_b.mapv(|v| params.mu * v) - &g_d;
        // layer nonlinearity mask at a_t = x(t−1) + d(t−1)
        let g_a = Array1::from_shape_fn(n, |i| {
            if (x_prev[i] + d_prev[i]).abs() > tau[i] {
                g_u[i]
            } else {
                0.0
            }
        });
        // d(t−1) feeds d(t) (+1), a_t (+1), and b_t (−μ)
        g_d = &g_d + &g_a - &g_b.mapv(|v| params.mu * v);
        g_x = g_a;
    }
    // x(0) = W_e·y feeds a_1; every layer's b_t also consumed w = W_e·y
    g_w += &g_x;
    add_outer(&mut d_we, &g_w, &signal.data);
    Ok((loss, LsalsaGrads { w_e: d_we, s: d_s }))
}

/// Reverse-mode gradients of the single-sample prediction loss through the
/// LISTA recursion `u(t) = soft(W_e·y + S̃·u(t−1); θ)`.
///
/// The derivative w.r.t. `θ_j` is `−sign(u_j)` where the unit is active and
/// 0 where inactive.
pub fn lista_backward(
    params: &ListaParams,
    tape: Option<&ListaTape>,
    signal: &Signal,
    target: &ComponentCode,
) -> Result<(f64, ListaGrads)> {
    let tape = tape.ok_or(Error::MissingTape)?;
    if tape.u.len() != params.depth + 1 {
        return Err(Error::MissingTape);
    }
    if target.len() != params.code_len() {
        return Err(Error::ShapeMismatch(format!(
            "target has {} entries, encoder emits {}",
            target.len(),
            params.code_len()
        )));
    }
    let n = params.code_len();
    let u_last = &tape.u[params.depth];
    let err = u_last - target.values();
    let loss = 0.5 * err.dot(&err);

    let mut d_we = Array2::<f64>::zeros(params.w_e.dim());
    let mut d_st = Array2::<f64>::zeros(params.s_tilde.dim());
    let mut d_theta = Array1::<f64>::zeros(n);
    let mut g_u = err;
    for t in (1..=params.depth).rev() {
        let u_t = &tape.u[t];
        let u_prev = &tape.u[t - 1];
        // active units are exactly the nonzero outputs
        let g_c = Array1::from_shape_fn(n, |i| if u_t[i] != 0.0 { g_u[i] } else { 0.0 });
        for i in 0..n {
            if u_t[i] != 0.0 {
                d_theta[i] -= u_t[i].signum() * g_u[i];
            }
        }
        add_outer(&mut d_we, &g_c, &signal.data);
        add_outer(&mut d_st, &g_c, u_prev);
        g_u = params.s_tilde.t().dot(&g_c);
    }
    Ok((
        loss,
        ListaGrads {
            w_e: d_we,
            s_tilde: d_st,
            theta: d_theta,
        },
    ))
}

/// Smallest distance between any nonlinearity input and its threshold across
/// a forward pass; finite-difference probes need this margin to be
/// comfortably larger than the step.
pub fn lsalsa_kink_margin(params: &LsalsaParams, signal: &Signal) -> Result<f64> {
    let (_, tape) = lsalsa_forward(params, signal, true)?;
    let tape = tape.expect("tape requested");
    let tau = threshold_vector(&params.partition, &params.alphas, params.mu);
    let mut margin = f64::INFINITY;
    for t in 1..=params.depth {
        let a = &tape.x[t - 1] + &tape.d[t - 1];
        for i in 0..a.len() {
            margin = margin.min((a[i].abs() - tau[i]).abs());
        }
    }
    let x_last = &tape.x[params.depth];
    for i in 0..x_last.len() {
        margin = margin.min((x_last[i].abs() - tau[i]).abs());
    }
    Ok(margin)
}

/// LISTA analogue of [`lsalsa_kink_margin`].
pub fn lista_kink_margin(params: &ListaParams, signal: &Signal) -> Result<f64> {
    let (_, tape) = lista_forward(params, signal, true)?;
    let tape = tape.expect("tape requested");
    let w = params.w_e.dot(&signal.data);
    let mut margin = f64::INFINITY;
    for t in 1..=params.depth {
        let c = &w + &params.s_tilde.dot(&tape.u[t - 1]);
        for i in 0..c.len() {
            margin = margin.min((c[i].abs() - params.theta[i]).abs());
        }
    }
    Ok(margin)
}

trait Trainable: Encoder + Clone {
    type Grads;

    fn sample_grads(&self, signal: &Signal, target: &ComponentCode) -> Result<(f64, Self::Grads)>;
    fn zero_grads(&self) -> Self::Grads;
    fn accumulate(acc: &mut Self::Grads, g: &Self::Grads);
    fn apply_step(&mut self, g: &Self::Grads, scale: f64);
}

impl Trainable for LsalsaParams {
    type Grads = LsalsaGrads;

    fn sample_grads(&self, signal: &Signal, target: &ComponentCode) -> Result<(f64, LsalsaGrads)> {
        let (_, tape) = lsalsa_forward(self, signal, true)?;
        lsalsa_backward(self, tape.as_ref(), signal, target)
    }

    fn zero_grads(&self) -> LsalsaGrads {
        LsalsaGrads {
            w_e: Array2::zeros(self.w_e.dim()),
            s: Array2::zeros(self.s.dim()),
        }
    }

    fn accumulate(acc: &mut LsalsaGrads, g: &LsalsaGrads) {
        acc.w_e += &g.w_e;
        acc.s += &g.s;
    }

    fn apply_step(&mut self, g: &LsalsaGrads, scale: f64) {
        self.w_e.scaled_add(scale, &g.w_e);
        self.s.scaled_add(scale, &g.s);
    }
}

/// LISTA plus its `learn_theta` training mode.
#[derive(Debug, Clone)]
struct ListaTrainable {
    params: ListaParams,
    learn_theta: bool,
}

impl Encoder for ListaTrainable {
    fn encode_values(&self, signal: &Signal) -> Result<Array1<f64>> {
        self.params.encode_values(signal)
    }
}

impl Trainable for ListaTrainable {
    type Grads = ListaGrads;

    fn sample_grads(&self, signal: &Signal, target: &ComponentCode) -> Result<(f64, ListaGrads)> {
        let (_, tape) = lista_forward(&self.params, signal, true)?;
        lista_backward(&self.params, tape.as_ref(), signal, target)
    }

    fn zero_grads(&self) -> ListaGrads {
        ListaGrads {
            w_e: Array2::zeros(self.params.w_e.dim()),
            s_tilde: Array2::zeros(self.params.s_tilde.dim()),
            theta: Array1::zeros(self.params.theta.len()),
        }
    }

    fn accumulate(acc: &mut ListaGrads, g: &ListaGrads) {
        acc.w_e += &g.w_e;
        acc.s_tilde += &g.s_tilde;
        acc.theta += &g.theta;
    }

    fn apply_step(&mut self, g: &ListaGrads, scale: f64) {
        self.params.w_e.scaled_add(scale, &g.w_e);
        self.params.s_tilde.scaled_add(scale, &g.s_tilde);
        if self.learn_theta {
            self.params.theta.scaled_add(scale, &g.theta);
            // thresholds stay nonnegative: project back after the step
            self.params.theta.mapv_inplace(|t| t.max(0.0));
        }
    }
}

/// Mini-batch SGD over the prediction loss.
///
/// Batches are consecutive chunks of a seeded shuffle; the batch gradient is
/// the mean of per-sample gradients reduced in sample order, so runs with
/// the same seed are bitwise reproducible. The learning rate decays by
/// `lr_decay` after every epoch; training stops at `max_epochs` or when the
/// relative change in epoch loss drops below `rel_cost_tol`.
fn train_generic<Tr: Trainable>(
    mut model: Tr,
    signals: &[Signal],
    targets: &[ComponentCode],
    config: &TrainConfig,
    val: Option<(&[Signal], &[ComponentCode])>,
) -> Result<(Tr, Vec<EpochRecord>)> {
    config.validate()?;
    check_dataset(signals, targets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..signals.len()).collect();
    let mut lr = config.learning_rate;
    let mut history: Vec<EpochRecord> = Vec::new();
    let mut prev_loss: Option<f64> = None;
    let mut sample_losses = vec![0.0_f64; signals.len()];
    for epoch in 1..=config.max_epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(config.batch_size) {
            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (loss, g) =
                    model
                        .sample_grads(&signals[i], &targets[i])
                        .map_err(|e| match e {
                            Error::NonFiniteActivation { .. } => Error::DivergedLoss { epoch },
                            other => other,
                        })?;
                batch_loss += loss;
                sample_losses[i] = loss;
                Tr::accumulate(&mut grads, &g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            model.apply_step(&grads, -lr / chunk.len() as f64);
        }
        // reduce in sample order so the epoch loss does not depend on the
        // shuffle when the parameters are frozen
        let epoch_loss = sample_losses.iter().sum::<f64>() / signals.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        let val_rmse = match val {
            Some((vs, vt)) => Some(mean_code_rmse(&model, vs, vt)?),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss: epoch_loss,
            val_rmse,
        });
        if let Some(prev) = prev_loss {
            if (epoch_loss - prev).abs() / prev.abs().max(1e-300) < config.rel_cost_tol {
                break;
            }
        }
        prev_loss = Some(epoch_loss);
        lr *= config.lr_decay;
    }
    Ok((model, history))
}

/// Train LSALSA with vanilla SGD. See [`train_generic`] notes on the loop.
pub fn train_lsalsa(
    params: LsalsaParams,
    signals: &[Signal],
    targets: &[ComponentCode],
    config: &TrainConfig,
    val: Option<(&[Signal], &[ComponentCode])>,
) -> Result<(LsalsaParams, Vec<EpochRecord>)> {
    train_generic(params, signals, targets, config, val)
}

/// Train LISTA with vanilla SGD. `learn_theta` selects whether the per-unit
/// thresholds are updated (on, the default mode) or held at initialization.
pub fn train_lista(
    params: ListaParams,
    signals: &[Signal],
    targets: &[ComponentCode],
    config: &TrainConfig,
    val: Option<(&[Signal], &[ComponentCode])>,
    learn_theta: bool,
) -> Result<(ListaParams, Vec<EpochRecord>)> {
    let model = ListaTrainable {
        params,
        learn_theta,
    };
    let (model, history) = train_generic(model, signals, targets, config, val)?;
    Ok((model.params, history))
}

/// Candidate lists for the exhaustive hyperparameter search.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Candidate per-component weight vectors (each of length `D`).
    pub alphas: Vec<Vec<f64>>,
    pub mus: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub lr_decays: Vec<f64>,
    /// Epoch budget for each trained cell during the search.
    pub search_epochs: usize,
}

impl GridSpec {
    pub fn validate(&self, method: Method) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::EmptySource("grid alphas"));
        }
        if matches!(method, Method::Salsa | Method::Lsalsa) && self.mus.is_empty() {
            return Err(Error::EmptySource("grid mus"));
        }
        if matches!(method, Method::Lista | Method::Lsalsa) {
            if self.batch_sizes.is_empty()
                || self.learning_rates.is_empty()
                || self.lr_decays.is_empty()
            {
                return Err(Error::EmptySource("grid training parameters"));
            }
            if self.search_epochs == 0 {
                return Err(Error::InvalidArgument("search_epochs must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// One hyperparameter combination. Fields that do not apply to the method
/// (e.g. `mu` for FISTA) stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub alphas: Vec<f64>,
    pub mu: Option<f64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lr_decay: Option<f64>,
}

/// Outcome of a single cell: validation RMSE, or the error that killed it.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub cell: GridCell,
    pub outcome: std::result::Result<f64, String>,
}

/// Grid-search result: the winning cell (when any succeeded) plus the full
/// leaderboard.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: Option<(GridCell, f64)>,
    pub leaderboard: Vec<GridRow>,
}

fn enumerate_cells(method: Method, grid: &GridSpec) -> Vec<GridCell> {
    let mus: Vec<Option<f64>> = match method {
        Method::Salsa | Method::Lsalsa => grid.mus.iter().map(|m| Some(*m)).collect(),
        _ => vec![None],
    };
    let learned = matches!(method, Method::Lista | Method::Lsalsa);
    let batches: Vec<Option<usize>> = if learned {
        grid.batch_sizes.iter().map(|b| Some(*b)).collect()
    } else {
        vec![None]
    };
    let lrs: Vec<Option<f64>> = if learned {
        grid.learning_rates.iter().map(|l| Some(*l)).collect()
    } else {
        vec![None]
    };
    let decays: Vec<Option<f64>> = if learned {
        grid.lr_decays.iter().map(|d| Some(*d)).collect()
    } else {
        vec![None]
    };
    let mut cells = Vec::new();
    for alphas in &grid.alphas {
        for mu in &mus {
            for batch in &batches {
                for lr in &lrs {
                    for decay in &decays {
                        cells.push(GridCell {
                            index: cells.len(),
                            alphas: alphas.clone(),
                            mu: *mu,
                            batch_size: *batch,
                            learning_rate: *lr,
                            lr_decay: *decay,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn evaluate_iterative_cell(
    method: Method,
    t: usize,
    dict: &ConcatDictionary,
    cell: &GridCell,
    val_signals: &[Signal],
    val_targets: &[ComponentCode],
) -> Result<f64> {
    let config = SolverConfig::new(cell.alphas.clone(), cell.mu.unwrap_or(1.0), t)
        .with_stop_tol(0.0);
    let model = EncodeModel::Iterative {
        config: &config,
        splitting: None,
    };
    let mut total = 0.0;
    for (signal, target) in val_signals.iter().zip(val_targets) {
        let code = dispatch_encode(method, signal, dict, &model)?;
        total += rmse_raw(code.values(), target.values());
    }
    Ok(total / val_signals.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_learned_cell(
    method: Method,
    t: usize,
    dict: &ConcatDictionary,
    cell: &GridCell,
    train_signals: &[Signal],
    train_targets: &[ComponentCode],
    val_signals: &[Signal],
    val_targets: &[ComponentCode],
    search_epochs: usize,
    seed: u64,
) -> Result<f64> {
    let config = TrainConfig {
        learning_rate: cell
            .learning_rate
            .ok_or_else(|| Error::InvalidArgument("learned cell needs a learning rate".into()))?,
        lr_decay: cell.lr_decay.unwrap_or(1.0),
        batch_size: cell.batch_size.unwrap_or(train_signals.len().max(1)),
        max_epochs: search_epochs,
        rel_cost_tol: 1e-6,
        seed,
    };
    match method {
        Method::Lsalsa => {
            let mu = cell
                .mu
                .ok_or_else(|| Error::InvalidArgument("LSALSA cell needs mu".into()))?;
            let init = lsalsa_init(dict, &cell.alphas, mu, t)?;
            let (trained, _) = train_lsalsa(init, train_signals, train_targets, &config, None)?;
            mean_code_rmse(&trained, val_signals, val_targets)
        }
        Method::Lista => {
            let init = lista_init(dict, &cell.alphas, None, t)?;
            let (trained, _) =
                train_lista(init, train_signals, train_targets, &config, None, true)?;
            mean_code_rmse(&trained, val_signals, val_targets)
        }
        _ => Err(Error::InvalidArgument(
            "only LISTA/LSALSA cells are trained".into(),
        )),
    }
}

/// Exhaustive hyperparameter search for one method at a fixed iteration
/// budget `T`.
///
/// Encoders are trained for `grid.search_epochs` epochs with a per-cell
/// seed of `seed ^ cell_index`; non-learned methods are evaluated directly.
/// Cells run in parallel and are ranked by validation RMSE with ties broken
/// by smaller alphas, then smaller learning rate. Per-cell failures are
/// recorded in the leaderboard instead of aborting the search.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    method: Method,
    t: usize,
    dict: &ConcatDictionary,
    train_signals: &[Signal],
    train_targets: &[ComponentCode],
    val_signals: &[Signal],
    val_targets: &[ComponentCode],
    grid: &GridSpec,
    seed: u64,
) -> Result<GridOutcome> {
    grid.validate(method)?;
    check_dataset(val_signals, val_targets)?;
    if matches!(method, Method::Lista | Method::Lsalsa) {
        check_dataset(train_signals, train_targets)?;
    }
    let cells = enumerate_cells(method, grid);
    let leaderboard: Vec<GridRow> = cells
        .par_iter()
        .map(|cell| {
            let cell_seed = seed ^ cell.index as u64;
            let outcome = match method {
                Method::Ista | Method::Fista | Method::Salsa => {
                    evaluate_iterative_cell(method, t, dict, cell, val_signals, val_targets)
                }
                Method::Lista | Method::Lsalsa => evaluate_learned_cell(
                    method,
                    t,
                    dict,
                    cell,
                    train_signals,
                    train_targets,
                    val_signals,
                    val_targets,
                    grid.search_epochs,
                    cell_seed,
                ),
            };
            let outcome = outcome.map_err(|e| e.to_string()).and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("non-finite validation rmse {v}"))
                }
            });
            GridRow {
                cell: cell.clone(),
                outcome,
            }
        })
        .collect();

    let best = leaderboard
        .iter()
        .filter_map(|row| row.outcome.as_ref().ok().map(|v| (row.cell.clone(), *v)))
        .min_by(|(ca, va), (cb, vb)| {
            va.partial_cmp(vb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    ca.alphas
                        .iter()
                        .zip(&cb.alphas)
                        .map(|(a, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
                        .find(|o| *o != std::cmp::Ordering::Equal)
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .then_with(|| {
                    ca.learning_rate
                        .unwrap_or(0.0)
                        .partial_cmp(&cb.learning_rate.unwrap_or(0.0))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
    Ok(GridOutcome { best, leaderboard })
}

/// Leaderboard CSV: one row per grid cell with all hyperparameters and the
/// outcome.
pub fn write_leaderboard<W: std::io::Write>(
    method: Method,
    t: usize,
    rows: &[GridRow],
    w: &mut W,
) -> Result<()> {
    writeln!(w, "# schema=leaderboard-v1")?;
    writeln!(
        w,
        "cell,method,t,alphas,mu,batch_size,learning_rate,lr_decay,val_rmse,status"
    )?;
    for row in rows {
        let c = &row.cell;
        let alphas = c
            .alphas
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let (val, status) = match &row.outcome {
            Ok(v) => (v.to_string(), "ok".to_string()),
            Err(e) => (String::new(), format!("error: {}", e.replace(',', ";"))),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            c.index,
            method,
            t,
            alphas,
            opt_f(c.mu),
            c.batch_size.map(|b| b.to_string()).unwrap_or_default(),
            opt_f(c.learning_rate),
            opt_f(c.lr_decay),
            val,
            status
        )?;
    }
    Ok(())
}
