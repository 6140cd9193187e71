use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::attacks::MinMax;
use crate::Error;

/// Pair-counting AUC with ties worth one half.
fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// Independent regularised logistic loss.
fn oracle_objective(x: &[f64], y: &[bool], w: f64, b: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let p = 1.0 / (1.0 + (-(w * xi + b)).exp());
        total -= if yi { p.ln() } else { (1.0 - p).ln() };
    }
    total / x.len() as f64 + 0.5 * lambda * w * w
}

fn grid_minimum(x: &[f64], y: &[bool], lambda: f64) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let scan = |w0: f64, b0: f64, half: f64, step: f64| {
        let n = (2.0 * half / step).round() as i64;
        let mut local = (f64::INFINITY, w0, b0);
        for i in 0..=n {
            for j in 0..=n {
                let (w, b) = (w0 - half + i as f64 * step, b0 - half + j as f64 * step);
                let f = oracle_objective(x, y, w, b, lambda);
                if f < local.0 {
                    local = (f, w, b);
                }
            }
        }
        local
    };
    let coarse = scan(0.0, 0.0, 20.0, 0.05);
    let fine = scan(coarse.1, coarse.2, 0.1, 0.0005);
    if fine.0 < best.0 {
        best = fine;
    }
    best
}

#[test]
fn solver_matches_grid_search_on_one_feature() {
    let x = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let y = [false, false, true, false, true, true];
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    for lambda in [0.0, 0.01, 0.1] {
        let s = solve(&rows, &y, lambda).unwrap();
        assert!(s.converged);
        let (f_grid, w_grid, b_grid) = grid_minimum(&x, &y, lambda);
        let f_solver = oracle_objective(&x, &y, s.weights[0], s.bias, lambda);
        assert!((f_solver - f_grid).abs() < 1e-4, "lambda {lambda}: {f_solver} vs {f_grid}");
        assert!(f_solver <= f_grid + 1e-12);
        assert!((s.weights[0] - w_grid).abs() < 0.01 && (s.bias - b_grid).abs() < 0.01);
        assert!((s.objective - f_solver).abs() < 1e-12);
    }
}

fn blobs(n: usize, seed: u64, spread: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let member = i % 2 == 0;
        let c = if member { 1.0 } else { -1.0 };
        rows.push(vec![
            c + spread * (rng.random::<f64>() - 0.5),
            c + spread * (rng.random::<f64>() - 0.5),
        ]);
        labels.push(member);
    }
    (rows, labels)
}

#[test]
fn separable_data_is_classified_perfectly() {
    let (rows, labels) = blobs(20, 1, 0.5);
    let model = fit(&rows, &labels, &[true, true], &FitOptions::new(1)).unwrap();
    let probs = model.predict_all(&rows).unwrap();
    let m = threshold_metrics(&probs, &labels, 0.5).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert_eq!((m.tpr, m.fpr), (1.0, 0.0));
    // Every penalty separates perfectly, so the tie goes to the largest.
    assert_eq!(model.l2_lambda, 0.1);
    assert_eq!(model.cv_auc.len(), 5);
}

#[test]
fn heavy_penalty_shrinks_weights() {
    let (rows, labels) = blobs(20, 2, 3.0);
    let s = solve(&rows, &labels, 1e8).unwrap();
    assert!(s.weights.iter().all(|w| w.abs() < 1e-7));
    let model = fit(
        &rows,
        &labels,
        &[true, true],
        &FitOptions {
            lambda_grid: vec![1e8],
            folds: 5,
            seed: 0,
        },
    )
    .unwrap();
    for r in &rows {
        assert!((model.predict_proba(r).unwrap() - 0.5).abs() < 1e-6);
    }
}

fn fixed_model(w: Vec<f64>, b: f64) -> LogRegModel {
    let width = w.len();
    LogRegModel {
        weights: w,
        bias: b,
        l2_lambda: 0.0,
        feature_mask: vec![true; width],
        normalization: MinMax {
            min: vec![0.0; width],
            max: vec![1.0; width],
        },
        converged: true,
        cv_auc: vec![],
    }
}

#[test]
fn predict_proba_examples() {
    assert_eq!(fixed_model(vec![0.0], 0.0).predict_proba(&[3.0]).unwrap(), 0.5);
    assert_eq!(fixed_model(vec![1.0], 0.0).predict_proba(&[0.0]).unwrap(), 0.5);
    let m = fixed_model(vec![2.0, -1.0], 0.3);
    let lo = m.predict_proba(&[0.1, 0.5]).unwrap();
    let hi = m.predict_proba(&[0.2, 0.5]).unwrap();
    assert!(hi > lo);
    assert!((lo - 1.0 / (1.0 + (-(0.2 - 0.5 + 0.3f64)).exp())).abs() < 1e-15);
    assert!(matches!(m.predict_proba(&[0.1]), Err(Error::Contract(_))));
    assert_eq!(sigmoid(-800.0), 0.0);
    assert_eq!(sigmoid(800.0), 1.0);
}

#[test]
fn masked_model_reads_only_kept_columns() {
    let (rows, labels) = blobs(30, 3, 1.0);
    let wide: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], 99.0, r[1]]).collect();
    let model = fit(&wide, &labels, &[true, false, true], &FitOptions::new(3)).unwrap();
    assert_eq!(model.weights.len(), 2);
    let a = model.predict_proba(&[0.5, 1.0, 0.5]).unwrap();
    let b = model.predict_proba(&[0.5, -1e6, 0.5]).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        fit(&wide, &labels, &[false, false, false], &FitOptions::new(3)),
        Err(Error::Input(_))
    ));
    assert!(matches!(
        fit(&wide[..3], &[true, false, false], &[true, true, true], &FitOptions::new(3)),
        Err(Error::Input(_))
    ));
}

#[test]
fn auc_examples() {
    let (curve, a) = roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
    assert_eq!(a, 1.0);
    assert_eq!((curve.fpr[0], curve.tpr[0]), (0.0, 0.0));
    assert_eq!((*curve.fpr.last().unwrap(), *curve.tpr.last().unwrap()), (1.0, 1.0));
    assert_eq!(curve.tpr_at_fpr(0.0), 1.0);
    assert_eq!(auc(&[0.3; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
    assert_eq!(auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
    assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::Input(_))));
    assert!(matches!(auc(&[0.1], &[true, false]), Err(Error::Input(_))));
    assert!(curve.to_csv().starts_with("fpr,tpr\n0,0\n"));

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let scores: Vec<f64> = (0..20).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
    assert_eq!(auc(&scores, &labels).unwrap(), pair_count_auc(&scores, &labels));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trapezoid_equals_pair_count(
        data in proptest::collection::vec((0u8..6, any::<bool>()), 2..50)
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let (curve, a) = roc_auc(&scores, &labels).unwrap();
        prop_assert_eq!(a, pair_count_auc(&scores, &labels));
        prop_assert!(curve.fpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(curve.tpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*curve.fpr.last().unwrap(), 1.0);
        prop_assert_eq!(*curve.tpr.last().unwrap(), 1.0);

        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auc(&transformed, &labels).unwrap(), a);
    }

    #[test]
    fn smaller_penalty_fits_training_data_at_least_as_well(seed in 0u64..40) {
        let (rows, labels) = blobs(24, seed, 4.0);
        let mut prev: Option<f64> = None;
        for lambda in [1.0, 0.1, 0.01, 0.001] {
            let s = solve(&rows, &labels, lambda).unwrap();
            prop_assert!(s.converged);
            let nll = objective(&rows, &labels, &s.weights, s.bias, 0.0);
            if let Some(p) = prev {
                prop_assert!(nll <= p + 1e-6, "{} then {}", p, nll);
            }
            prev = Some(nll);
        }
    }
}

#[test]
fn threshold_examples() {
    let probs = [0.9, 0.7, 0.2, 0.6];
    let labels = [true, true, false, false];
    let all = threshold_metrics(&probs, &labels, 0.0).unwrap();
    assert_eq!((all.tpr, all.fpr), (1.0, 1.0));
    let none = threshold_metrics(&probs, &labels, 1.0).unwrap();
    assert_eq!((none.tpr, none.fpr), (0.0, 0.0));
    // Strict rule: a score equal to the threshold is not a member.
    let at = threshold_metrics(&probs, &labels, 0.7).unwrap();
    assert_eq!((at.tpr, at.fpr), (0.5, 0.0));
    let perfect = threshold_metrics(&[0.9, 0.8, 0.1, 0.2], &labels, 0.5).unwrap();
    assert_eq!((perfect.tpr, perfect.fpr, perfect.accuracy), (1.0, 0.0, 1.0));

    let best = select_threshold(&probs, &labels).unwrap();
    assert_eq!(best.accuracy, 1.0);
    assert!((0.6..0.7).contains(&best.threshold));
}

#[test]
fn ablation_structure() {
    let specs = canonical_specs();
    assert_eq!(specs.len(), 13);
    assert_eq!(specs[0].name, "all");
    assert_eq!(specs[12].name, "all but feat proj");
    assert!(specs.iter().all(|s| s.mask.iter().any(|&k| k)));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let make = |n: usize, rng: &mut ChaCha8Rng| {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let m = i % 2 == 0;
            let shift = if m { 0.8 } else { 0.0 };
            rows.push((0..7).map(|_| rng.random::<f64>() + shift).collect::<Vec<f64>>());
            labels.push(m);
        }
        (rows, labels)
    };
    let (xt, yt) = make(60, &mut rng);
    let (xs, ys) = make(40, &mut rng);
    let opts = FitOptions::new(4);
    let table = run_ablation((&xt, &yt), (&xs, &ys), &specs, &opts).unwrap();
    assert_eq!(table.len(), 13);
    let plain = fit(&xt, &yt, &[true; 7], &opts).unwrap();
    assert_eq!(table[0].auc, auc(&plain.predict_all(&xs).unwrap(), &ys).unwrap());

    let constant: Vec<Vec<f64>> = xt.iter().map(|r| vec![5.0, r[1]]).collect();
    let constant_test: Vec<Vec<f64>> = xs.iter().map(|r| vec![5.0, r[1]]).collect();
    let only_constant = AblationSpec {
        name: "constant".into(),
        mask: [true, false, false, false, false, false, false],
    };
    let padded = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let mut v = r.clone();
                v.resize(7, 0.0);
                v
            })
            .collect()
    };
    let row = run_ablation(
        (&padded(&constant), &yt),
        (&padded(&constant_test), &ys),
        &[only_constant],
        &opts,
    )
    .unwrap();
    assert_eq!(row[0].auc, 0.5);

    let empty = AblationSpec {
        name: "none".into(),
        mask: [false; 7],
    };
    assert!(run_ablation((&xt, &yt), (&xs, &ys), &[empty], &opts).is_err());
}
