mod common;

use common::*;
use icbias::data::{Provenance, Record};
use icbias::downstream::*;
use icbias::stats::spd_records;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Label is `x > 5` with `flip` label noise; group and color are noise.
fn threshold_data(n: usize, flip: f64, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..10.0);
            let mut label = (x > 5.0) as u32;
            if rng.random_bool(flip) {
                label = 1 - label;
            }
            toy_record(rng.random_range(0..2), rng.random_range(0..3), x, label)
        })
        .collect()
}

fn lr() -> ClassifierSpec {
    ClassifierSpec::new(ModelKind::LogisticRegression, FeaturePolicy::AttributeAware)
}

fn rf() -> ClassifierSpec {
    ClassifierSpec::new(ModelKind::RandomForest, FeaturePolicy::AttributeAware)
}

fn random_problem(seed: u64, n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let z: f64 = x[i * d..(i + 1) * d].iter().enumerate().map(|(j, v)| v * (j as f64 - 1.0)).sum();
            (rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())) as u8 as f64
        })
        .collect();
    (x, y)
}

fn finite_difference(x: &[f64], y: &[f64], d: usize, w: &[f64], b: f64, l2: f64) -> Vec<f64> {
    let h = 1e-6;
    let mut out = Vec::with_capacity(d + 1);
    for j in 0..=d {
        let (mut wp, mut wm) = (w.to_vec(), w.to_vec());
        let (mut bp, mut bm) = (b, b);
        if j < d {
            wp[j] += h;
            wm[j] -= h;
        } else {
            bp += h;
            bm -= h;
        }
        out.push((logistic_loss(x, y, d, &wp, bp, l2) - logistic_loss(x, y, d, &wm, bm, l2)) / (2.0 * h));
    }
    out
}

#[test]
fn lr_gradient_matches_finite_differences() {
    let d = 4;
    let (x, y) = random_problem(11, 300, d);
    let p = LogisticParams::default();
    let m = fit_binary(&x, &y, d, &p);
    // at the returned weights, and at a point far from the optimum
    let far: Vec<f64> = (0..d).map(|j| 0.7 - 0.4 * j as f64).collect();
    for (w, b) in [(m.weights.clone(), m.bias), (far, -0.3)] {
        let g = logistic_gradient(&x, &y, d, &w, b, p.l2);
        let fd = finite_difference(&x, &y, d, &w, b, p.l2);
        for (a, e) in g.iter().zip(&fd) {
            assert!((a - e).abs() <= 1e-4 * e.abs().max(1e-3), "{a} vs {e}");
        }
    }
}

#[test]
fn lr_converges_with_monotone_loss() {
    let d = 3;
    let (x, y) = random_problem(12, 400, d);
    let m = fit_binary(&x, &y, d, &LogisticParams::default());
    assert!(m.iterations < 5000);
    assert!(m.grad_norm < 1e-6);
    assert!(m.losses.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn lr_decision_is_sign_of_hand_score() {
    let m = BinaryLogistic {
        weights: vec![1.5, -2.0],
        bias: 0.25,
        iterations: 0,
        grad_norm: 0.0,
        losses: Vec::new(),
    };
    let model = LogisticModel {
        classes: vec![0, 1],
        models: vec![m.clone()],
    };
    // 1.5*1 - 2*0.5 + 0.25 = 0.75
    assert_eq!(m.score(&[1.0, 0.5]), 0.75);
    assert_eq!(model.predict_row(&[1.0, 0.5]), 1);
    // 1.5*0 - 2*1 + 0.25 = -1.75
    assert_eq!(m.score(&[0.0, 1.0]), -1.75);
    assert_eq!(model.predict_row(&[0.0, 1.0]), 0);
}

#[test]
fn single_class_training_is_an_error() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let recs = vec![toy_record(0, 0, 1.0, 1), toy_record(1, 1, 2.0, 1)];
    assert!(train(&lr(), &dataset(&schema, recs), &sub, 0).is_err());
}

#[test]
fn uninformative_features_give_majority_accuracy() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let make = |seed: u64, n: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs: Vec<Record> = (0..n)
            .map(|_| {
                toy_record(
                    rng.random_range(0..2),
                    rng.random_range(0..3),
                    rng.random_range(0.0..10.0),
                    rng.random_bool(0.7) as u32,
                )
            })
            .collect();
        dataset(&schema, recs)
    };
    for spec in [lr(), rf()] {
        let mut acc = 0.0;
        for seed in 0..5u64 {
            let train_ds = make(100 + seed, 1500);
            let test = make(200 + seed, 1500);
            let m = train(&spec, &train_ds, &sub, seed).unwrap();
            let p = m.predict(&test).unwrap();
            let hits = p.labels.iter().zip(test.records()).filter(|(a, r)| **a == r.label).count();
            acc += hits as f64 / test.len() as f64 / 5.0;
        }
        assert!((acc - 0.7).abs() < 0.03, "{}: {acc}", spec.tag());
    }
}

#[test]
fn overfit_forest_recovers_training_labels() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let ds = dataset(&schema, threshold_data(300, 0.0, 3));
    let m = train(&rf(), &ds, &sub, 0).unwrap();
    let p = m.predict(&ds).unwrap();
    let hits = p.labels.iter().zip(ds.records()).filter(|(a, r)| **a == r.label).count();
    assert!(hits as f64 / ds.len() as f64 > 0.99);
}

#[test]
fn mdi_concentrates_on_the_signal() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let mut spec = rf();
    spec.forest.max_depth = 3;
    let mut noise = 0.0;
    for seed in 0..5u64 {
        let ds = dataset(&schema, threshold_data(1000, 0.1, seed));
        let m = train(&spec, &ds, &sub, seed).unwrap();
        let mdi = mdi_importance(&m).unwrap();
        let total: f64 = mdi.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(mdi.iter().all(|(_, v)| *v >= 0.0));
        noise += (mdi[0].1 + mdi[1].1) / 5.0;
    }
    assert!(noise < 0.2, "noise importance {noise}");

    let clean = dataset(&schema, threshold_data(500, 0.0, 9));
    let m = train(&rf(), &clean, &sub, 0).unwrap();
    assert!(mdi_importance(&m).unwrap()[2].1 > 0.9);
    let lr_model = train(&lr(), &clean, &sub, 0).unwrap();
    assert!(mdi_importance(&lr_model).is_err());
}

#[test]
fn blind_models_never_see_the_protected_feature() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    // the label leaks through the protected feature
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let recs: Vec<Record> = threshold_data(600, 0.0, 4)
        .into_iter()
        .map(|mut r| {
            let g = if rng.random_bool(0.9) { r.label } else { 1 - r.label };
            r.values[0] = icbias::data::Value::Category(g);
            r
        })
        .collect();
    let ds = dataset(&schema, recs);
    for kind in [ModelKind::LogisticRegression, ModelKind::RandomForest] {
        let m = train(&ClassifierSpec::new(kind, FeaturePolicy::AttributeBlind), &ds, &sub, 0).unwrap();
        assert!(m.encoder.columns.iter().all(|c| c.feature() != 0));
        if kind == ModelKind::RandomForest {
            assert_eq!(mdi_importance(&m).unwrap()[0].1, 0.0);
            let e = evaluate_model(&m, &ds, &sub, 0).unwrap();
            assert_eq!(e.protected_mdi, Some(0.0));
        }
    }
    let aware = train(&rf(), &ds, &sub, 0).unwrap();
    assert!(mdi_importance(&aware).unwrap()[0].1 > 0.0);
}

#[test]
fn unseen_categories_are_flagged() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let recs: Vec<Record> = threshold_data(200, 0.0, 5)
        .into_iter()
        .map(|mut r| {
            r.values[1] = icbias::data::Value::Category(r.values[1].category().unwrap() % 2);
            r
        })
        .collect();
    let m = train(&lr(), &dataset(&schema, recs), &sub, 0).unwrap();
    let test = dataset(&schema, vec![toy_record(0, 2, 8.0, 1), toy_record(1, 0, 1.0, 0)]);
    let p = m.predict(&test).unwrap();
    assert_eq!(p.unseen, 1);
    assert_eq!(p.labels, vec![1, 0]);
}

#[test]
fn spd_d_equals_spd_of_predicted_labels() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let ds = dataset(&schema, threshold_data(400, 0.2, 6));
    let test = dataset(&schema, threshold_data(300, 0.2, 7));
    for spec in [lr(), rf()] {
        let m = train(&spec, &ds, &sub, 1).unwrap();
        let e = evaluate_model(&m, &test, &sub, 1).unwrap();
        let p = m.predict(&test).unwrap();
        let relabeled: Vec<Record> = test
            .records()
            .iter()
            .zip(&p.labels)
            .map(|(r, &l)| Record::new(r.values.clone(), l))
            .collect();
        assert_eq!(e.spd_d, spd_records(&relabeled, &sub).unwrap());
    }
}

#[test]
fn constant_positive_predictor_has_zero_spd_d() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let ds = dataset(&schema, threshold_data(200, 0.1, 8));
    let mut m = train(&lr(), &ds, &sub, 0).unwrap();
    if let Fitted::Logistic(l) = &mut m.fitted {
        l.models[0].weights.iter_mut().for_each(|w| *w = 0.0);
        l.models[0].bias = 10.0;
    }
    let e = evaluate_model(&m, &ds, &sub, 0).unwrap();
    assert_eq!(e.spd_d, 0.0);
}

#[test]
fn single_seed_report_has_zero_spread() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let ds = dataset(&schema, threshold_data(300, 0.1, 10));
    let r = evaluate_downstream(&rf(), &ds, &ds, &sub, &[3]).unwrap();
    assert_eq!(r.macro_f1.std, 0.0);
    assert_eq!(r.spd_d.std, 0.0);
    assert_eq!(r.per_seed.len(), 1);
}

#[test]
fn model_dump_round_trips() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let ds = dataset(&schema, threshold_data(300, 0.1, 11));
    let dir = tempfile::tempdir().unwrap();
    for spec in [lr(), rf()] {
        let m = train(&spec, &ds, &sub, 2).unwrap();
        let path = dir.path().join(format!("{}.bin", spec.tag()));
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.predict(&ds).unwrap(), m.predict(&ds).unwrap());
        assert!(dir.path().join(format!("{}.bin.txt", spec.tag())).exists());
    }
    std::fs::write(dir.path().join("junk.bin"), b"nope").unwrap();
    assert!(load_model(dir.path().join("junk.bin")).is_err());
}

#[test]
fn training_is_deterministic_per_seed() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let ds = dataset(&schema, threshold_data(300, 0.2, 12));
    let a = train(&rf(), &ds, &sub, 5).unwrap();
    let b = train(&rf(), &ds, &sub, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(ds.with_provenance(Provenance::Synthetic).len(), 300);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn forest_vote_ignores_tree_order(seed in any::<u64>()) {
        let schema = toy_schema();
        let sub = toy_subgroup(&schema);
        let ds = dataset(&schema, threshold_data(150, 0.3, seed));
        let mut spec = rf();
        spec.forest.n_trees = 12;
        let m = train(&spec, &ds, &sub, seed).unwrap();
        let mut rev = m.clone();
        if let Fitted::Forest(f) = &mut rev.fitted {
            f.trees.reverse();
        }
        prop_assert_eq!(m.predict(&ds).unwrap(), rev.predict(&ds).unwrap());
    }
}
