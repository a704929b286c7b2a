//! Benchmark harness and downstream probes: accuracy/speed/sparsity records
//! per method and iteration budget, a logistic-regression classifier probe,
//! random Gaussian projections, and point-cloud exports.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::{rmse_raw, sparsity_raw, DEFAULT_ZERO_TOL};
use crate::solvers::{dispatch_encode, estimate_lipschitz, EncodeModel, Method};
use crate::splitting::build_splitting_operator;
use crate::types::{ComponentCode, ConcatDictionary, Signal, SolverConfig};
use crate::unrolled::{ListaParams, LsalsaParams};

/// Tuned parameters for one `(method, T)` benchmark entry.
#[derive(Debug, Clone)]
pub enum TunedModel {
    Iterative(SolverConfig),
    Lista(ListaParams),
    Lsalsa(LsalsaParams),
}

/// One `(method, T)` combination to benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkEntry {
    pub method: Method,
    pub t: usize,
    pub model: TunedModel,
}

/// Aggregated measurements for one benchmark entry.
#[derive(Debug, Clone)]
pub struct BenchmarkRecord {
    pub method: Method,
    pub t: usize,
    pub mean_rmse: f64,
    pub mean_sparsity: f64,
    pub mean_seconds: f64,
    pub classifier_error_pct: Option<f64>,
}

/// Write benchmark records as CSV.
pub fn write_benchmark_csv<W: std::io::Write>(
    records: &[BenchmarkRecord],
    w: &mut W,
) -> Result<()> {
    writeln!(w, "# schema=bench-v1")?;
    writeln!(
        w,
        "method,t,mean_rmse,mean_sparsity,mean_seconds,classifier_error_pct"
    )?;
    for r in records {
        let cls = r
            .classifier_error_pct
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method, r.t, r.mean_rmse, r.mean_sparsity, r.mean_seconds, cls
        )?;
    }
    Ok(())
}

/// Classifier probe attached to a benchmark run: codes (optionally pushed
/// through a fixed projection) are scored against the signals' labels.
pub struct ProbeSetup<'a> {
    pub classifier: &'a ProbeClassifier,
    pub projection: Option<&'a Array2<f64>>,
}

fn entry_matches_t(entry: &BenchmarkEntry) -> Result<()> {
    let ok = match &entry.model {
        TunedModel::Iterative(config) => config.max_iters == entry.t,
        TunedModel::Lista(p) => p.depth == entry.t,
        TunedModel::Lsalsa(p) => p.depth == entry.t,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::MissingModel {
            method: entry.method.name(),
            t: entry.t,
            detail: "model iteration budget does not match the requested T".into(),
        })
    }
}

/// Encode the full test set per `(method, T)` with exactly `T` iterations
/// and aggregate RMSE/sparsity/wallclock (plus classifier error when a probe
/// is attached).
///
/// One-time setup (splitting-operator factorization, Lipschitz estimation)
/// happens before the clock starts; the timed encodes run sequentially on
/// one thread.
pub fn run_benchmark(
    entries: &[BenchmarkEntry],
    dict: &ConcatDictionary,
    signals: &[Signal],
    optimal: &[ComponentCode],
    probe: Option<&ProbeSetup>,
) -> Result<Vec<BenchmarkRecord>> {
    if signals.is_empty() {
        return Err(Error::EmptySource("benchmark test set"));
    }
    if signals.len() != optimal.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} signals but {} optimal codes",
            signals.len(),
            optimal.len()
        )));
    }
    let mut records = Vec::with_capacity(entries.len());
    for entry in entries {
        entry_matches_t(entry)?;
        // setup outside the timed loop
        let config_storage;
        let splitting_storage;
        let (model, splitting_ref) = match &entry.model {
            TunedModel::Iterative(config) => {
                let mut config = config.clone().with_stop_tol(0.0);
                match entry.method {
                    Method::Salsa => {
                        splitting_storage = build_splitting_operator(dict, config.mu)?;
                        config_storage = config;
                        (
                            None,
                            Some((&config_storage, Some(&splitting_storage))),
                        )
                    }
                    _ => {
                        if config.lipschitz.is_none() {
                            config =
                                config.with_lipschitz(estimate_lipschitz(&dict.concatenated()));
                        }
                        config_storage = config;
                        (None, Some((&config_storage, None)))
                    }
                }
            }
            TunedModel::Lista(p) => (Some(EncodeModel::Lista(p)), None),
            TunedModel::Lsalsa(p) => (Some(EncodeModel::Lsalsa(p)), None),
        };

        let mut codes = Vec::with_capacity(signals.len());
        let mut seconds = 0.0_f64;
        for signal in signals {
            let clock = Instant::now();
            let code = match (&model, &splitting_ref) {
                (Some(m), _) => dispatch_encode(entry.method, signal, dict, m)?,
                (None, Some((config, splitting))) => {
                    let m = EncodeModel::Iterative {
                        config,
                        splitting: splitting.as_deref(),
                    };
                    dispatch_encode(entry.method, signal, dict, &m)?
                }
                (None, None) => unreachable!("model resolved above"),
            };
            seconds += clock.elapsed().as_secs_f64();
            codes.push(code);
        }
        let n = signals.len() as f64;
        let mean_rmse = codes
            .iter()
            .zip(optimal)
            .map(|(c, o)| rmse_raw(c.values(), o.values()))
            .sum::<f64>()
            / n;
        let mean_sparsity = codes
            .iter()
            .map(|c| sparsity_raw(c.values(), DEFAULT_ZERO_TOL))
            .sum::<f64>()
            / n;
        let classifier_error_pct = match probe {
            Some(setup) => {
                let labels: Vec<usize> = signals
                    .iter()
                    .map(|s| {
                        s.label.ok_or(Error::InvalidArgument(
                            "probe benchmark needs labeled signals".into(),
                        ))
                    })
                    .collect::<Result<_>>()?;
                let features: Vec<Array1<f64>> = codes
                    .iter()
                    .map(|c| match setup.projection {
                        Some(g) => g.dot(c.values()),
                        None => c.values().clone(),
                    })
                    .collect();
                Some(probe_error(setup.classifier, &features, &labels)?)
            }
            None => None,
        };
        records.push(BenchmarkRecord {
            method: entry.method,
            t: entry.t,
            mean_rmse,
            mean_sparsity,
            mean_seconds: seconds / n,
            classifier_error_pct,
        });
    }
    Ok(records)
}

/// Seeded random Gaussian projection: a `dim_out x dim_in` matrix with
/// i.i.d. `N(0, 1)` entries scaled by `1/√dim_out`, so `E‖Gx‖² = ‖x‖²`.
pub fn gaussian_projection(dim_in: usize, dim_out: usize, seed: u64) -> Result<Array2<f64>> {
    if dim_out == 0 || dim_out > dim_in {
        return Err(Error::ShapeMismatch(format!(
            "projection needs 1 <= dim_out <= dim_in, got {dim_out} and {dim_in}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim_out as f64).sqrt();
    Ok(Array2::from_shape_fn((dim_out, dim_in), |_| {
        let g: f64 = StandardNormal.sample(&mut rng);
        g * scale
    }))
}

/// Multinomial logistic-regression probe.
#[derive(Debug, Clone)]
pub struct ProbeClassifier {
    /// `classes x feature_dim` weight matrix.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Training error (percent) reached when training stopped.
    pub train_error_pct: f64,
}

/// Probe training settings.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Stop once the training error (percent) is at or below this target.
    pub target_error_pct: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            lr_decay: 0.9,
            max_epochs: 500,
            batch_size: 32,
            target_error_pct: 0.0,
            seed: 0,
        }
    }
}

fn softmax_in_place(z: &mut Array1<f64>) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Argmax with ties broken toward the lower class index.
fn predict(classifier: &ProbeClassifier, x: &Array1<f64>) -> usize {
    let scores = classifier.weights.dot(x) + &classifier.bias;
    let mut best = 0;
    for (i, v) in scores.iter().enumerate() {
        if *v > scores[best] {
            best = i;
        }
    }
    best
}

/// Train a multinomial logistic-regression probe with SGD on the softmax
/// cross-entropy until the training error reaches
/// `config.target_error_pct` or the epoch cap.
pub fn train_probe(
    features: &[Array1<f64>],
    labels: &[usize],
    classes: usize,
    config: &ProbeConfig,
) -> Result<ProbeClassifier> {
    if features.is_empty() {
        return Err(Error::EmptySource("probe training set"));
    }
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if classes == 0 || labels.iter().any(|l| *l >= classes) {
        return Err(Error::InvalidArgument(
            "labels must lie below the class count".into(),
        ));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim || !f.iter().all(|v| v.is_finite())) {
        return Err(Error::ShapeMismatch(
            "probe features must share a finite dimension".into(),
        ));
    }
    let mut classifier = ProbeClassifier {
        weights: Array2::zeros((classes, dim)),
        bias: Array1::zeros(classes),
        train_error_pct: 100.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..features.len()).collect();
    let mut lr = config.learning_rate;
    for epoch in 0..config.max_epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(config.batch_size) {
            let mut grad_w = Array2::<f64>::zeros((classes, dim));
            let mut grad_b = Array1::<f64>::zeros(classes);
            for &i in chunk {
                let mut p = classifier.weights.dot(&features[i]) + &classifier.bias;
                softmax_in_place(&mut p);
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(Error::DivergedLoss { epoch });
                }
                p[labels[i]] -= 1.0;
                for (c, mut row) in grad_w.rows_mut().into_iter().enumerate() {
                    if p[c] != 0.0 {
                        row.scaled_add(p[c], &features[i]);
                    }
                }
                grad_b += &p;
            }
            let scale = -lr / chunk.len() as f64;
            classifier.weights.scaled_add(scale, &grad_w);
            classifier.bias.scaled_add(scale, &grad_b);
        }
        classifier.train_error_pct = probe_error(&classifier, features, labels)?;
        if classifier.train_error_pct <= config.target_error_pct {
            break;
        }
        lr *= config.lr_decay;
    }
    Ok(classifier)
}

/// Percent argmax-prediction error of a classifier on a labeled feature set.
pub fn probe_error(
    classifier: &ProbeClassifier,
    features: &[Array1<f64>],
    labels: &[usize],
) -> Result<f64> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} features against {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features
        .iter()
        .any(|f| f.len() != classifier.weights.ncols())
    {
        return Err(Error::ShapeMismatch(
            "feature dimension does not match the classifier".into(),
        ));
    }
    let wrong = features
        .iter()
        .zip(labels)
        .filter(|(f, l)| predict(classifier, f) != **l)
        .count();
    Ok(100.0 * wrong as f64 / labels.len() as f64)
}

/// One per-sample point of the sparsity/accuracy trade-off cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudRow {
    pub method: Method,
    pub sample_id: usize,
    pub sparsity: f64,
    pub rmse: f64,
}

/// Compute per-sample `(sparsity, rmse)` pairs for a set of encoded codes
/// against their optimal counterparts.
pub fn point_cloud_rows(
    method: Method,
    codes: &[ComponentCode],
    optimal: &[ComponentCode],
) -> Result<Vec<PointCloudRow>> {
    if codes.len() != optimal.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} codes but {} optimal codes",
            codes.len(),
            optimal.len()
        )));
    }
    codes
        .iter()
        .zip(optimal)
        .enumerate()
        .map(|(sample_id, (c, o))| {
            Ok(PointCloudRow {
                method,
                sample_id,
                sparsity: sparsity_raw(c.values(), DEFAULT_ZERO_TOL),
                rmse: crate::metrics::rmse(c, o)?,
            })
        })
        .collect()
}

/// CSV export of the point cloud: one row per `(method, sample)`.
pub fn export_point_cloud<W: std::io::Write>(rows: &[PointCloudRow], w: &mut W) -> Result<()> {
    writeln!(w, "# schema=pointcloud-v1")?;
    writeln!(w, "method,sample_id,sparsity,rmse")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.method, r.sample_id, r.sparsity, r.rmse)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictlearn::random_dictionary;
    use crate::unrolled::lsalsa_init;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_signals(m: usize, count: usize, seed: u64) -> Vec<Signal> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                Signal::new(Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0))).unwrap()
            })
            .collect()
    }

    fn bench_fixture(
        seed: u64,
        count: usize,
    ) -> (ConcatDictionary, Vec<Signal>, Vec<ComponentCode>) {
        let dict = ConcatDictionary::from_single(random_dictionary(8, 12, seed).unwrap());
        let signals = random_signals(8, count, seed + 1);
        let config = SolverConfig::new(vec![0.2], 5.0, 200).with_stop_tol(1e-10);
        let (codes, _) = crate::data::generate_optimal_codes(
            &signals,
            &dict,
            &config,
            crate::data::CodeGenerator::Fista,
        )
        .unwrap();
        (dict, signals, codes)
    }

    #[test]
    fn single_entry_yields_single_record() {
        let (dict, signals, codes) = bench_fixture(1, 6);
        let entries = vec![BenchmarkEntry {
            method: Method::Salsa,
            t: 3,
            model: TunedModel::Iterative(SolverConfig::new(vec![0.2], 5.0, 3)),
        }];
        let records = run_benchmark(&entries, &dict, &signals, &codes, None).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].mean_rmse >= 0.0);
        assert!(records[0].mean_seconds > 0.0);
        assert!(records[0].mean_sparsity >= 0.0 && records[0].mean_sparsity <= 1.0);
    }

    #[test]
    fn lsalsa_at_init_matches_salsa_rmse() {
        let (dict, signals, codes) = bench_fixture(2, 5);
        let t = 4;
        let entries = vec![
            BenchmarkEntry {
                method: Method::Salsa,
                t,
                model: TunedModel::Iterative(SolverConfig::new(vec![0.2], 5.0, t)),
            },
            BenchmarkEntry {
                method: Method::Lsalsa,
                t,
                model: TunedModel::Lsalsa(lsalsa_init(&dict, &[0.2], 5.0, t).unwrap()),
            },
        ];
        let records = run_benchmark(&entries, &dict, &signals, &codes, None).unwrap();
        assert_abs_diff_eq!(
            records[0].mean_rmse,
            records[1].mean_rmse,
            epsilon = 1e-10
        );
    }

    #[test]
    fn duplicated_test_set_keeps_the_mean() {
        let (dict, signals, codes) = bench_fixture(3, 4);
        let entries = vec![BenchmarkEntry {
            method: Method::Fista,
            t: 5,
            model: TunedModel::Iterative(SolverConfig::new(vec![0.2], 5.0, 5)),
        }];
        let one = run_benchmark(&entries, &dict, &signals, &codes, None).unwrap();
        let doubled_signals: Vec<Signal> =
            signals.iter().chain(&signals).cloned().collect();
        let doubled_codes: Vec<ComponentCode> = codes.iter().chain(&codes).cloned().collect();
        let two = run_benchmark(&entries, &dict, &doubled_signals, &doubled_codes, None).unwrap();
        assert_abs_diff_eq!(one[0].mean_rmse, two[0].mean_rmse, epsilon = 1e-14);
    }

    #[test]
    fn mismatched_model_budget_is_missing_model() {
        let (dict, signals, codes) = bench_fixture(4, 3);
        let entries = vec![BenchmarkEntry {
            method: Method::Salsa,
            t: 3,
            model: TunedModel::Iterative(SolverConfig::new(vec![0.2], 5.0, 7)),
        }];
        assert!(matches!(
            run_benchmark(&entries, &dict, &signals, &codes, None),
            Err(Error::MissingModel { .. })
        ));
    }

    #[test]
    fn converged_benchmark_is_self_consistent() {
        let (dict, signals, codes) = bench_fixture(5, 4);
        let entries = vec![BenchmarkEntry {
            method: Method::Fista,
            t: 200,
            model: TunedModel::Iterative(
                SolverConfig::new(vec![0.2], 5.0, 200).with_stop_tol(1e-10),
            ),
        }];
        // stop_tol is forced to 0 inside the benchmark so both runs take the
        // same 200 iterations as the generator
        let records = run_benchmark(&entries, &dict, &signals, &codes, None).unwrap();
        assert!(records[0].mean_rmse <= 1e-6, "rmse {}", records[0].mean_rmse);
    }

    #[test]
    fn doubled_budget_takes_at_least_as_long() {
        let (dict, signals, codes) = bench_fixture(6, 20);
        let mk = |t: usize| BenchmarkEntry {
            method: Method::Salsa,
            t,
            model: TunedModel::Iterative(SolverConfig::new(vec![0.2], 5.0, t)),
        };
        let records =
            run_benchmark(&[mk(50), mk(100)], &dict, &signals, &codes, None).unwrap();
        assert!(
            records[1].mean_seconds >= records[0].mean_seconds,
            "t=100 took {}s vs t=50 {}s",
            records[1].mean_seconds,
            records[0].mean_seconds
        );
    }

    #[test]
    fn projection_basics() {
        let g = gaussian_projection(10, 4, 7).unwrap();
        assert_eq!(g.dim(), (4, 10));
        let g2 = gaussian_projection(10, 4, 7).unwrap();
        assert_eq!(g, g2);
        let zero = g.dot(&Array1::<f64>::zeros(10));
        assert!(zero.iter().all(|v| *v == 0.0));
        assert!(gaussian_projection(4, 10, 7).is_err());
    }

    #[test]
    fn projection_preserves_norms_in_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array1::from_shape_fn(30, |_| rng.gen_range(-1.0..1.0));
        let x_norm_sq = x.dot(&x);
        let mut total = 0.0;
        let trials = 1000;
        for seed in 0..trials {
            let g = gaussian_projection(30, 10, seed).unwrap();
            let gx = g.dot(&x);
            total += gx.dot(&gx);
        }
        let mean = total / trials as f64;
        assert!(
            (mean - x_norm_sq).abs() / x_norm_sq < 0.1,
            "E‖Gx‖² = {mean} vs ‖x‖² = {x_norm_sq}"
        );
    }

    fn separable_fixture(per_class: usize, seed: u64) -> (Vec<Array1<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..per_class {
                let center = if c == 0 { -2.0 } else { 2.0 };
                features.push(Array1::from_shape_fn(3, |_| {
                    center + rng.gen_range(-0.5..0.5)
                }));
                labels.push(c);
            }
        }
        (features, labels)
    }

    #[test]
    fn probe_reaches_zero_error_on_separable_data() {
        let (features, labels) = separable_fixture(20, 9);
        let probe = train_probe(&features, &labels, 2, &ProbeConfig::default()).unwrap();
        assert_eq!(probe.train_error_pct, 0.0);
        assert_eq!(probe_error(&probe, &features, &labels).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_trivially_learned() {
        let features = vec![Array1::from(vec![1.0, 2.0]); 6];
        let labels = vec![0usize; 6];
        let probe = train_probe(&features, &labels, 1, &ProbeConfig::default()).unwrap();
        assert_eq!(probe.train_error_pct, 0.0);
    }

    #[test]
    fn constant_features_hit_the_chance_floor() {
        let features = vec![Array1::from(vec![0.5, 0.5]); 40];
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let config = ProbeConfig {
            max_epochs: 50,
            ..ProbeConfig::default()
        };
        let probe = train_probe(&features, &labels, 2, &config).unwrap();
        let err = probe_error(&probe, &features, &labels).unwrap();
        assert_abs_diff_eq!(err, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn random_features_err_at_about_ninety_percent_for_ten_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let train: Vec<Array1<f64>> = (0..400)
            .map(|_| Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let train_labels: Vec<usize> = (0..400).map(|_| rng.gen_range(0..10)).collect();
        let config = ProbeConfig {
            max_epochs: 20,
            ..ProbeConfig::default()
        };
        let probe = train_probe(&train, &train_labels, 10, &config).unwrap();
        let test: Vec<Array1<f64>> = (0..2000)
            .map(|_| Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let test_labels: Vec<usize> = (0..2000).map(|_| rng.gen_range(0..10)).collect();
        let err = probe_error(&probe, &test, &test_labels).unwrap();
        assert!((85.0..95.0).contains(&err), "error {err}%");
    }

    #[test]
    fn probe_predictions_are_permutation_consistent() {
        let (features, labels) = separable_fixture(10, 11);
        let probe = train_probe(&features, &labels, 2, &ProbeConfig::default()).unwrap();
        // permute feature coordinates and the classifier columns identically
        let perm = [2usize, 0, 1];
        let permuted_probe = ProbeClassifier {
            weights: Array2::from_shape_fn((2, 3), |(c, j)| probe.weights[(c, perm[j])]),
            bias: probe.bias.clone(),
            train_error_pct: probe.train_error_pct,
        };
        for f in &features {
            let pf = Array1::from_shape_fn(3, |j| f[perm[j]]);
            assert_eq!(predict(&probe, f), predict(&permuted_probe, &pf));
        }
    }

    #[test]
    fn shuffled_labels_change_the_error_consistently() {
        let (features, labels) = separable_fixture(10, 12);
        let probe = train_probe(&features, &labels, 2, &ProbeConfig::default()).unwrap();
        let flipped: Vec<usize> = labels.iter().map(|l| 1 - l).collect();
        let err = probe_error(&probe, &features, &flipped).unwrap();
        assert_abs_diff_eq!(err, 100.0, epsilon = 1e-12);
    }

    #[test]
    fn point_cloud_export_shapes() {
        let mut out = Vec::new();
        export_point_cloud(&[], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2); // schema + header only

        let codes: Vec<ComponentCode> = (0..3)
            .map(|i| {
                ComponentCode::single(Array1::from(vec![i as f64, 0.0, 1.0])).unwrap()
            })
            .collect();
        let rows_a = point_cloud_rows(Method::Fista, &codes, &codes).unwrap();
        let rows_b = point_cloud_rows(Method::Salsa, &codes, &codes).unwrap();
        let mut out = Vec::new();
        export_point_cloud(
            &rows_a.iter().chain(&rows_b).cloned().collect::<Vec<_>>(),
            &mut out,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2 + 6);
        // values survive a parse at f64 text precision
        let line = text.lines().nth(2).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "fista");
        let sparsity: f64 = fields[2].parse().unwrap();
        assert_abs_diff_eq!(sparsity, rows_a[0].sparsity);
    }
}
