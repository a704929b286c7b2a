//! Per-component dictionary learning: alternate FISTA sparse coding with SGD
//! on the dictionary under a unit-column-norm constraint.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::lasso_cost_raw;
use crate::solvers::fista;
use crate::training::TrainConfig;
use crate::types::{
    normalize_columns, ComponentCode, ConcatDictionary, Dictionary, Signal, SolverConfig,
};

/// Gradient of `(1/P) Σ_p E_A(x_p; y_p)` with respect to the dictionary,
/// holding the codes fixed: `−(1/P) Σ_p (y_p − A x_p) x_pᵀ`.
pub fn dict_gradient(
    dict: &Dictionary,
    batch: &[(Signal, ComponentCode)],
) -> Result<Array2<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptySource("dictionary gradient batch"));
    }
    let a = dict.atoms();
    let mut grad = Array2::<f64>::zeros(a.dim());
    for (signal, code) in batch {
        if signal.dim() != a.nrows() || code.len() != a.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "sample is {}-dim with {} coefficients against a {}x{} dictionary",
                signal.dim(),
                code.len(),
                a.nrows(),
                a.ncols()
            )));
        }
        let residual = &signal.data - &a.dot(code.values());
        // grad -= residual ⊗ code
        for (i, mut row) in grad.rows_mut().into_iter().enumerate() {
            row.scaled_add(-residual[i], code.values());
        }
    }
    Ok(grad.mapv(|v| v / batch.len() as f64))
}

/// Mean coding cost of a dictionary over a signal set at fixed `alpha`, with
/// codes re-solved by FISTA. Used for the per-epoch log and for evaluation.
pub fn mean_coding_cost(
    dict: &Dictionary,
    signals: &[Signal],
    alpha: f64,
    fista_iters: usize,
) -> Result<f64> {
    if signals.is_empty() {
        return Err(Error::EmptySource("signal set"));
    }
    let concat = ConcatDictionary::from_single(dict.clone());
    let a = dict.atoms();
    let l = crate::solvers::estimate_lipschitz(a);
    let config = SolverConfig::new(vec![alpha], 1.0, fista_iters)
        .with_stop_tol(0.0)
        .with_lipschitz(l);
    let costs: Vec<f64> = signals
        .par_iter()
        .map(|signal| -> Result<f64> {
            let trace = fista(signal, &concat, &config, None)?;
            lasso_cost_raw(trace.code.values(), &signal.data, a, &[a.ncols()], &[alpha])
        })
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

/// Dictionary learning by alternating FISTA coding and SGD on the atoms.
///
/// Per batch: codes are re-solved from scratch with FISTA (`fista_iters`
/// iterations, no warm start), then the dictionary takes one gradient step
/// and its columns are renormalized. `config.learning_rate` and
/// `config.lr_decay` drive the step size; `config.seed` fixes the batch
/// order. Returns the learned dictionary and the per-epoch mean cost.
pub fn learn_dictionary(
    signals: &[Signal],
    init: &Dictionary,
    alpha: f64,
    config: &TrainConfig,
    fista_iters: usize,
) -> Result<(Dictionary, Vec<f64>)> {
    config.validate()?;
    if signals.is_empty() {
        return Err(Error::EmptySource("dictionary training signals"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument("alpha must be nonnegative".into()));
    }
    if signals.iter().any(|s| s.dim() != init.signal_dim()) {
        return Err(Error::ShapeMismatch(
            "signal dimension does not match the dictionary".into(),
        ));
    }
    let mut dict = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..signals.len()).collect();
    let mut lr = config.learning_rate;
    let mut epoch_costs = Vec::with_capacity(config.max_epochs);
    for _epoch in 0..config.max_epochs {
        indices.shuffle(&mut rng);
        let mut cost_sum = 0.0;
        let mut cost_count = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let concat = ConcatDictionary::from_single(dict.clone());
            let l = crate::solvers::estimate_lipschitz(dict.atoms());
            let solver = SolverConfig::new(vec![alpha], 1.0, fista_iters)
                .with_stop_tol(0.0)
                .with_lipschitz(l);
            let coded: Vec<(Signal, ComponentCode)> = chunk
                .par_iter()
                .map(|&i| -> Result<(Signal, ComponentCode)> {
                    let trace = fista(&signals[i], &concat, &solver, None)?;
                    Ok((signals[i].clone(), trace.code))
                })
                .collect::<Result<_>>()?;
            for (signal, code) in &coded {
                cost_sum += lasso_cost_raw(
                    code.values(),
                    &signal.data,
                    dict.atoms(),
                    &[dict.atom_count()],
                    &[alpha],
                )?;
                cost_count += 1;
            }
            if lr != 0.0 {
                let grad = dict_gradient(&dict, &coded)?;
                let stepped = Dictionary::new(dict.atoms() - &grad.mapv(|g| lr * g))?;
                dict = normalize_columns(&stepped)?;
            }
        }
        epoch_costs.push(cost_sum / cost_count as f64);
        lr *= config.lr_decay;
    }
    Ok((dict, epoch_costs))
}

/// Fresh random dictionary: columns drawn from the standard normal
/// distribution and normalized.
pub fn random_dictionary(m: usize, n: usize, seed: u64) -> Result<Dictionary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = Array2::from_shape_fn((m, n), |_| StandardNormal.sample(&mut rng));
    normalize_columns(&Dictionary::new(atoms)?)
}

/// Learn one dictionary per component from its own unmixed data, then
/// concatenate. `component_signals`, `inits`, and `alphas` run in parallel
/// over components and must agree on the signal dimension.
pub fn learn_component_dictionaries(
    component_signals: &[Vec<Signal>],
    inits: &[Dictionary],
    alphas: &[f64],
    config: &TrainConfig,
    fista_iters: usize,
) -> Result<(ConcatDictionary, Vec<Vec<f64>>)> {
    if component_signals.is_empty() {
        return Err(Error::EmptySource("component datasets"));
    }
    if component_signals.len() != inits.len() || component_signals.len() != alphas.len() {
        return Err(Error::PartitionMismatch {
            expected: component_signals.len(),
            got: inits.len().min(alphas.len()),
        });
    }
    let m = inits[0].signal_dim();
    if inits.iter().any(|d| d.signal_dim() != m) {
        return Err(Error::ShapeMismatch(
            "component dictionaries must share the signal dimension".into(),
        ));
    }
    let mut parts = Vec::with_capacity(inits.len());
    let mut histories = Vec::with_capacity(inits.len());
    for ((signals, init), alpha) in component_signals.iter().zip(inits).zip(alphas) {
        let (dict, costs) = learn_dictionary(signals, init, *alpha, config, fista_iters)?;
        parts.push(dict);
        histories.push(costs);
    }
    Ok((ConcatDictionary::new(parts)?, histories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use rand::Rng;

    fn planted_signals(
        dict: &Dictionary,
        count: usize,
        nonzeros: usize,
        seed: u64,
    ) -> Vec<Signal> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dict.atom_count();
        (0..count)
            .map(|_| {
                let mut x = Array1::<f64>::zeros(n);
                for _ in 0..nonzeros {
                    let i = rng.gen_range(0..n);
                    x[i] =
                        if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.5..1.5);
                }
                Signal::new(dict.atoms().dot(&x)).unwrap()
            })
            .collect()
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let dict = random_dictionary(6, 8, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch: Vec<(Signal, ComponentCode)> = (0..4)
            .map(|_| {
                let x = Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0));
                let y = dict.atoms().dot(&x);
                (Signal::new(y).unwrap(), ComponentCode::single(x).unwrap())
            })
            .collect();
        let grad = dict_gradient(&dict, &batch).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn zero_dictionary_gradient_is_minus_outer_product() {
        let dict = Dictionary::new(Array2::zeros((3, 4))).unwrap();
        let y = Array1::from(vec![1.0, 2.0, -1.0]);
        let x = Array1::from(vec![0.5, 0.0, -1.0, 2.0]);
        let batch = vec![(
            Signal::new(y.clone()).unwrap(),
            ComponentCode::single(x.clone()).unwrap(),
        )];
        let grad = dict_gradient(&dict, &batch).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_abs_diff_eq!(grad[(i, j)], -y[i] * x[j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let dict = random_dictionary(5, 7, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch: Vec<(Signal, ComponentCode)> = (0..3)
            .map(|_| {
                (
                    Signal::new(Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0))).unwrap(),
                    ComponentCode::single(Array1::from_shape_fn(7, |_| rng.gen_range(-1.0..1.0)))
                        .unwrap(),
                )
            })
            .collect();
        let grad = dict_gradient(&dict, &batch).unwrap();
        // codes held constant; the α-term does not depend on A
        let loss = |d: &Dictionary| -> f64 {
            batch
                .iter()
                .map(|(s, c)| {
                    lasso_cost_raw(c.values(), &s.data, d.atoms(), &[7], &[0.3]).unwrap()
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        let h = 1e-6;
        for _ in 0..5 {
            let (i, j) = (rng.gen_range(0..5), rng.gen_range(0..7));
            let mut plus = dict.atoms().clone();
            plus[(i, j)] += h;
            let mut minus = dict.atoms().clone();
            minus[(i, j)] -= h;
            let fd = (loss(&Dictionary::new(plus).unwrap())
                - loss(&Dictionary::new(minus).unwrap()))
                / (2.0 * h);
            let an = grad[(i, j)];
            let scale = fd.abs().max(an.abs()).max(1e-8);
            assert!(
                (fd - an).abs() / scale <= 1e-5,
                "entry ({i},{j}): fd {fd} vs {an}"
            );
        }
    }

    #[test]
    fn zero_learning_rate_keeps_the_dictionary() {
        let dict = random_dictionary(6, 6, 5).unwrap();
        let signals = planted_signals(&dict, 10, 1, 6);
        let config = TrainConfig::new(0.0, 5, 2, 7);
        let (out, _) = learn_dictionary(&signals, &dict, 0.05, &config, 30).unwrap();
        assert_eq!(out.atoms(), dict.atoms());
    }

    #[test]
    fn learning_reduces_the_coding_cost() {
        let truth = random_dictionary(8, 8, 10).unwrap();
        let signals = planted_signals(&truth, 60, 1, 11);
        let init = random_dictionary(8, 8, 12).unwrap();
        let config = TrainConfig::new(0.8, 10, 12, 13);
        let (learned, costs) = learn_dictionary(&signals, &init, 0.05, &config, 80).unwrap();
        assert!(learned.is_normalized());
        assert!(costs.last().unwrap() < &(0.6 * costs[0]), "costs {costs:?}");
    }

    #[test]
    fn single_atom_signal_is_fit_almost_exactly() {
        let truth = random_dictionary(6, 6, 20).unwrap();
        let atom = truth.atoms().column(2).to_owned();
        let signals = vec![Signal::new(atom).unwrap()];
        let cost = mean_coding_cost(&truth, &signals, 1e-8, 400).unwrap();
        assert!(cost < 1e-6, "cost {cost}");
    }

    #[test]
    fn columns_stay_unit_norm() {
        let truth = random_dictionary(7, 9, 30).unwrap();
        let signals = planted_signals(&truth, 30, 2, 31);
        let init = random_dictionary(7, 9, 32).unwrap();
        let config = TrainConfig::new(0.5, 10, 4, 33);
        let (out, _) = learn_dictionary(&signals, &init, 0.05, &config, 40).unwrap();
        for col in out.atoms().columns() {
            assert_abs_diff_eq!(col.dot(&col).sqrt(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn fixed_seed_runs_are_bitwise_reproducible() {
        let truth = random_dictionary(6, 8, 40).unwrap();
        let signals = planted_signals(&truth, 20, 2, 41);
        let init = random_dictionary(6, 8, 42).unwrap();
        let config = TrainConfig::new(0.3, 7, 3, 43);
        let (a, _) = learn_dictionary(&signals, &init, 0.05, &config, 30).unwrap();
        let (b, _) = learn_dictionary(&signals, &init, 0.05, &config, 30).unwrap();
        for (x, y) in a.atoms().iter().zip(b.atoms().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn normalization_is_a_pure_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let atoms = Array2::from_shape_fn((5, 6), |_| rng.gen_range(-2.0..2.0));
        let d = Dictionary::new(atoms.clone()).unwrap();
        let n = normalize_columns(&d).unwrap();
        for j in 0..6 {
            let before = atoms.column(j);
            let after = n.atoms().column(j);
            let cos =
                before.dot(&after) / (before.dot(&before).sqrt() * after.dot(&after).sqrt());
            assert_abs_diff_eq!(cos, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn component_learning_separates_generators() {
        // two disjoint synthetic generators: each learned part must code its
        // own source at clearly lower cost than the other part
        let gen_a = random_dictionary(10, 8, 60).unwrap();
        let gen_b = random_dictionary(10, 8, 61).unwrap();
        let sig_a = planted_signals(&gen_a, 60, 1, 62);
        let sig_b = planted_signals(&gen_b, 60, 1, 63);
        let config = TrainConfig::new(0.8, 10, 25, 64);
        let inits = vec![
            random_dictionary(10, 8, 65).unwrap(),
            random_dictionary(10, 8, 66).unwrap(),
        ];
        let (concat, _) = learn_component_dictionaries(
            &[sig_a.clone(), sig_b.clone()],
            &inits,
            &[0.05, 0.05],
            &config,
            80,
        )
        .unwrap();
        assert_eq!(concat.component_count(), 2);
        let part_a = &concat.parts()[0];
        let part_b = &concat.parts()[1];
        let own = mean_coding_cost(part_a, &sig_a, 0.01, 150).unwrap();
        let cross = mean_coding_cost(part_b, &sig_a, 0.01, 150).unwrap();
        assert!(cross >= 2.0 * own, "own {own} vs cross {cross}");
        let own_b = mean_coding_cost(part_b, &sig_b, 0.01, 150).unwrap();
        let cross_b = mean_coding_cost(part_a, &sig_b, 0.01, 150).unwrap();
        assert!(cross_b >= 2.0 * own_b, "own {own_b} vs cross {cross_b}");
    }

    #[test]
    fn component_learning_rejects_mismatched_dims() {
        let a = random_dictionary(6, 6, 70).unwrap();
        let b = random_dictionary(7, 6, 71).unwrap();
        let sig = planted_signals(&a, 5, 1, 72);
        let config = TrainConfig::new(0.1, 5, 1, 73);
        let err =
            learn_component_dictionaries(&[sig.clone(), sig], &[a, b], &[0.1, 0.1], &config, 10);
        assert!(err.is_err());
    }

    #[test]
    fn single_component_reduces_to_learn_dictionary() {
        let truth = random_dictionary(6, 7, 80).unwrap();
        let signals = planted_signals(&truth, 15, 1, 81);
        let init = random_dictionary(6, 7, 82).unwrap();
        let config = TrainConfig::new(0.3, 5, 2, 83);
        let (direct, _) = learn_dictionary(&signals, &init, 0.05, &config, 30).unwrap();
        let (concat, _) = learn_component_dictionaries(
            &[signals],
            std::slice::from_ref(&init),
            &[0.05],
            &config,
            30,
        )
        .unwrap();
        assert_eq!(concat.component_count(), 1);
        for (x, y) in concat.parts()[0].atoms().iter().zip(direct.atoms().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
