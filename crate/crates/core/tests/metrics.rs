mod common;

use common::oracles::*;
use common::*;
use icbias::data::{Conjunct, SubgroupSpec};
use icbias::downstream::macro_f1;
use icbias::stats::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return v;
    }
    raw.iter().map(|v| v / total).collect()
}

fn cat(mass: Vec<f64>) -> CategoricalDistribution {
    let support = (0..mass.len()).map(|i| format!("c{i}")).collect();
    CategoricalDistribution::new(support, mass).unwrap()
}

#[test]
fn tvd_matches_event_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(1..9);
        let p = simplex(&mut rng, n);
        let q = simplex(&mut rng, n);
        let got = tvd(&cat(p.clone()), &cat(q.clone())).unwrap();
        assert!((got - tvd_events(&p, &q)).abs() < 1e-9);
    }
}

#[test]
fn categorical_jsd_matches_entropy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.random_range(1..9);
        let p = simplex(&mut rng, n);
        let q = simplex(&mut rng, n);
        let got = jsd(&Distribution::Categorical(cat(p.clone())), &Distribution::Categorical(cat(q.clone()))).unwrap();
        assert!((got - jsd_entropy(&p, &q)).abs() < 1e-9, "{got} vs {}", jsd_entropy(&p, &q));
    }
}

#[test]
fn histogram_jsd_matches_entropy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let a: Vec<f64> = (0..rng.random_range(1..60)).map(|_| rng.random_range(-2.0..12.0)).collect();
        let b: Vec<f64> = (0..rng.random_range(1..60)).map(|_| rng.random_range(0.0..10.0)).collect();
        let edges = equal_width_edges(0.0, 10.0, DEFAULT_BINS);
        let ha = Histogram::from_values(&a, edges.clone(), JSD_SMOOTHING).unwrap();
        let hb = Histogram::from_values(&b, edges.clone(), JSD_SMOOTHING).unwrap();
        let got = jsd(&Distribution::Histogram(ha), &Distribution::Histogram(hb)).unwrap();
        let want = jsd_entropy(
            &histogram(&a, &edges, JSD_SMOOTHING),
            &histogram(&b, &edges, JSD_SMOOTHING),
        );
        assert!((got - want).abs() < 1e-6);
    }
}

#[test]
fn spd_matches_count_oracle() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let recs = random_records(&mut rng, n);
        let fav: Vec<bool> = recs.iter().map(|r| r.label == 1).collect();
        let unpriv: Vec<bool> = recs.iter().map(|r| r.category(0) == 0).collect();
        match (spd_records(&recs, &sub), spd_counts(&fav, &unpriv)) {
            (Ok(got), Some(want)) => assert!((got - want).abs() < 1e-9),
            (Err(_), None) => {}
            (got, want) => panic!("disagree on definedness: {got:?} vs {want:?}"),
        }
    }
}

#[test]
fn eo_and_eod_match_rate_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..400 {
        let n = rng.random_range(4..50);
        let preds: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let unpriv: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        match rate_gaps(&preds, &truth, &unpriv) {
            Some((dt, df)) => {
                assert!((eo(&preds, &truth, &unpriv).unwrap() - dt.abs()).abs() < 1e-9);
                assert!((eod(&preds, &truth, &unpriv).unwrap() - 0.5 * (dt.abs() + df.abs())).abs() < 1e-9);
                checked += 1;
            }
            None => assert!(eod(&preds, &truth, &unpriv).is_err()),
        }
    }
    assert!(checked >= 200);
}

#[test]
fn macro_f1_matches_confusion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let k = rng.random_range(2..5);
        let preds: Vec<u32> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let truth: Vec<u32> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let got = macro_f1(&preds, &truth).unwrap();
        assert!((got - macro_f1_confusion(&preds, &truth)).abs() < 1e-9);
    }
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.random_range(3..20);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x + 0.1 + 0.05 * rng.random::<f64>()).collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        let (slope, intercept, r2) = ols_normal(&xs, &ys);
        assert!((fit.slope - slope).abs() < 1e-9);
        assert!((fit.intercept - intercept).abs() < 1e-9);
        assert!((fit.r_squared - r2).abs() < 1e-9);
    }
}

#[test]
fn drift_score_by_hand() {
    let schema = toy_schema();
    // a: all group a / red, x = 1, labels 0,1
    let a = dataset(&schema, vec![toy_record(0, 0, 1.0, 0), toy_record(0, 0, 1.0, 1)]);
    // b: group split, colors red/green, x = 9, labels 1,1
    let b = dataset(&schema, vec![toy_record(0, 0, 9.0, 1), toy_record(1, 1, 9.0, 1)]);
    let d = drift_score(&a, &b).unwrap();
    // group 0.5, color 0.5, label 0.5
    assert!((d.categorical_mean_tvd - 0.5).abs() < 1e-12);
    let edges = equal_width_edges(1.0, 9.0, DEFAULT_BINS);
    let want = jsd_entropy(
        &histogram(&[1.0, 1.0], &edges, JSD_SMOOTHING),
        &histogram(&[9.0, 9.0], &edges, JSD_SMOOTHING),
    );
    assert!((d.numerical_mean_jsd - want).abs() < 1e-9);
    assert!((d.total - 0.5 - want).abs() < 1e-9);
    assert_eq!(drift_score(&a, &a).unwrap().total, 0.0);
}

#[test]
fn block_spd_uses_contiguous_blocks() {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    // two blocks: the first at parity, the second with spd = 1
    let recs = vec![
        toy_record(0, 0, 1.0, 1),
        toy_record(1, 0, 1.0, 1),
        toy_record(0, 0, 1.0, 1),
        toy_record(1, 0, 1.0, 0),
    ];
    let b = block_spd(&dataset(&schema, recs), &sub, 2).unwrap();
    assert_eq!(b.values, vec![0.0, 1.0]);
    assert_eq!(b.mean, 0.5);
    assert_eq!(b.std, 0.5);
}

proptest! {
    #[test]
    fn tvd_and_jsd_are_bounded_metrics(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = simplex(&mut rng, n);
        let q = simplex(&mut rng, n);
        let t = tvd_mass(&p, &q);
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert!((t - tvd_mass(&q, &p)).abs() < 1e-15);
        prop_assert_eq!(tvd_mass(&p, &p), 0.0);
        let j = jsd_mass(&p, &q);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert!((j - jsd_mass(&q, &p)).abs() < 1e-12);
        prop_assert!(jsd_mass(&p, &p).abs() < 1e-12);
    }

    #[test]
    fn spd_flips_sign_when_groups_swap(seed in any::<u64>(), n in 2usize..60) {
        let schema = toy_schema();
        let a = toy_subgroup(&schema);
        let b = SubgroupSpec::new(vec![Conjunct::equals("group", "b")], "1").compile(&schema).unwrap();
        let recs = random_records(&mut ChaCha8Rng::seed_from_u64(seed), n);
        match (spd_records(&recs, &a), spd_records(&recs, &b)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x + y).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&x));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "definedness differs"),
        }
    }

    #[test]
    fn block_mean_and_population_std(seed in any::<u64>(), blocks in 1usize..6) {
        let schema = toy_schema();
        let recs = random_records(&mut ChaCha8Rng::seed_from_u64(seed), 40);
        let ds = dataset(&schema, recs);
        let s = block_stats(&ds, |r| Ok(r.iter().map(|x| x.number(2)).sum::<f64>() / r.len() as f64), blocks).unwrap();
        prop_assert_eq!(s.values.len(), blocks);
        let mean = s.values.iter().sum::<f64>() / blocks as f64;
        let var = s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / blocks as f64;
        prop_assert!((s.mean - mean).abs() < 1e-12);
        prop_assert!((s.std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ols_recovers_exact_lines(slope in -5.0f64..5.0, intercept in -5.0f64..5.0, n in 2usize..20) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + intercept).collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - intercept).abs() < 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn macro_f1_ignores_example_order(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let truth: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let p2: Vec<u32> = idx.iter().map(|&i| preds[i]).collect();
        let t2: Vec<u32> = idx.iter().map(|&i| truth[i]).collect();
        let f = macro_f1(&preds, &truth).unwrap();
        prop_assert!((f - macro_f1(&p2, &t2).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f));
    }
}
