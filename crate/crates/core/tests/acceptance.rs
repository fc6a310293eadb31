//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its PASS/FAIL line even when captured output is hidden.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::oracles::*;
use common::*;
use icbias::data::{Conjunct, Record, Value};
use icbias::downstream::{macro_f1, ClassifierSpec, FeaturePolicy, ModelKind};
use icbias::experiment::*;
use icbias::fixtures::Fixture;
use icbias::generate::*;
use icbias::mitigation::{fair_spd_prune, Strategy};
use icbias::prompt::{inject_marginal_bias, BiasSpec};
use icbias::stats::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

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

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut bump = |name: &'static str, err: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(err);
    };
    let mut undefined_mismatch = 0;

    for _ in 0..200 {
        let n = rng.random_range(1..9);
        let p = simplex(&mut rng, n);
        let q = simplex(&mut rng, n);
        bump("tvd", (tvd(&cat(p.clone()), &cat(q.clone())).unwrap() - tvd_events(&p, &q)).abs());
        let j = jsd(&Distribution::Categorical(cat(p.clone())), &Distribution::Categorical(cat(q.clone()))).unwrap();
        bump("jsd_cat", (j - jsd_entropy(&p, &q)).abs());
    }
    for _ in 0..200 {
        let a: Vec<f64> = (0..rng.random_range(1..60)).map(|_| rng.random_range(-2.0..12.0)).collect();
        let b: Vec<f64> = (0..rng.random_range(1..60)).map(|_| rng.random_range(0.0..10.0)).collect();
        let edges = equal_width_edges(0.0, 10.0, DEFAULT_BINS);
        let ha = Histogram::from_values(&a, edges.clone(), JSD_SMOOTHING).unwrap();
        let hb = Histogram::from_values(&b, edges.clone(), JSD_SMOOTHING).unwrap();
        let got = jsd(&Distribution::Histogram(ha), &Distribution::Histogram(hb)).unwrap();
        let want = jsd_entropy(&histogram(&a, &edges, JSD_SMOOTHING), &histogram(&b, &edges, JSD_SMOOTHING));
        bump("jsd_hist", (got - want).abs());
    }

    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let recs = random_records(&mut rng, n);
        let fav: Vec<bool> = recs.iter().map(|r| r.label == 1).collect();
        let unpriv: Vec<bool> = recs.iter().map(|r| r.category(0) == 0).collect();
        match (spd_records(&recs, &sub), spd_counts(&fav, &unpriv)) {
            (Ok(got), Some(want)) => bump("spd", (got - want).abs()),
            (Err(_), None) => {}
            _ => undefined_mismatch += 1,
        }
    }

    let mut defined = 0;
    while defined < 200 {
        let n = rng.random_range(4..50);
        let preds: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let unpriv: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        match rate_gaps(&preds, &truth, &unpriv) {
            Some((dt, df)) => {
                bump("eo", (eo(&preds, &truth, &unpriv).unwrap() - dt.abs()).abs());
                bump("eod", (eod(&preds, &truth, &unpriv).unwrap() - 0.5 * (dt.abs() + df.abs())).abs());
                defined += 1;
            }
            None => undefined_mismatch += eod(&preds, &truth, &unpriv).is_ok() as usize,
        }
    }

    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let k = rng.random_range(2..5);
        let preds: Vec<u32> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let truth: Vec<u32> = (0..n).map(|_| rng.random_range(0..k)).collect();
        bump("macro_f1", (macro_f1(&preds, &truth).unwrap() - macro_f1_confusion(&preds, &truth)).abs());
    }

    for _ in 0..200 {
        let n = rng.random_range(3..20);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x + 0.1 + 0.05 * rng.random::<f64>()).collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        let (slope, intercept, r2) = ols_normal(&xs, &ys);
        let err = (fit.slope - slope).abs().max((fit.intercept - intercept).abs()).max((fit.r_squared - r2).abs());
        bump("ols", err);
    }

    let pass = undefined_mismatch == 0
        && worst.iter().all(|(name, err)| *err <= if name.starts_with("jsd_hist") { 1e-6 } else { 1e-9 });
    let detail = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("max abs error: {detail}; definedness mismatches {undefined_mismatch}"))
}

fn mixture_linearity() -> Outcome {
    let schema = toy_schema();
    let spec = AnchorSpec {
        features: vec![MarginalSpec {
            feature: "group".into(),
            dist: MarginalDist::Mass([("a".to_string(), 0.1), ("b".to_string(), 0.9)].into()),
        }],
        labels: vec![],
        default_label: [("0".to_string(), 0.5), ("1".to_string(), 0.5)].into(),
    };
    let anchor = AnchorModel::from_spec(schema.clone(), &spec).unwrap();
    let gen = MixtureGenerator::new(anchor.clone(), 20.0).unwrap();
    let k = 80;
    let shape = RunShape::unconstrained(5000, 2, 10);
    let target = vec![Conjunct::equals("group", "a")];
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (step, pi) in [0.0, 0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
        let bias = BiasSpec::marginal(target.clone(), pi).compile(&schema).unwrap();
        let run = simulate_generation(&gen, &schema, &shape, 500 + step as u64, |p| {
            let seed = 1000 * step as u64 + p as u64;
            let base = anchor.sample(k, seed);
            inject_marginal_bias(base.records(), &schema, &bias, &anchor, seed)
        })
        .unwrap();
        let in_target = |rs: &[Record]| rs.iter().filter(|r| r.category(0) == 0).count() as f64 / rs.len() as f64;
        xs.push(in_target(run.pooled_prompts().unwrap().records()));
        ys.push(in_target(run.data.records()));
    }
    let fit = ols_fit(&xs, &ys).unwrap();
    let pass = (fit.slope - 0.8).abs() <= 0.05 && fit.r_squared >= 0.98;
    outcome(pass, format!("slope {:.4} (target 0.8 +- 0.05), r2 {:.4}", fit.slope, fit.r_squared))
}

fn monotone_beta() -> Outcome {
    let mut cfg = ExperimentConfig::new("beta", DatasetConfig::fixture(Fixture::Compas));
    cfg.bias = Some(BiasSpec::marginal(vec![Conjunct::equals("race", "African-American")], 0.0));
    cfg.seeds = vec![0, 1, 2];
    let report = run_propagation(&cfg, &RunOptions::default()).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in &cfg.seeds {
        let mut fits: Vec<&BetaFit> = report.fits.iter().filter(|f| f.seed == Some(*seed)).collect();
        fits.sort_by_key(|f| f.k);
        let ks: Vec<usize> = fits.iter().map(|f| f.k).collect();
        let strict = ks == [20, 40, 60, 80] && fits.windows(2).all(|w| w[0].beta < w[1].beta);
        pass &= strict;
        let betas: Vec<String> = fits.iter().map(|f| format!("{:.3}", f.beta)).collect();
        lines.push(format!("s{seed} [{}]", betas.join(" < ")));
    }
    outcome(pass, lines.join("; "))
}

fn attack_config(id: &str, pis: &[f64], classifiers: Vec<ClassifierSpec>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(id, DatasetConfig::fixture(Fixture::Compas));
    cfg.k_grid = vec![80];
    cfg.pi_grid = pis.to_vec();
    cfg.seeds = SEEDS.to_vec();
    cfg.classifiers = classifiers;
    cfg
}

fn row<'a>(rows: &'a [ReportRow], pi: f64, seed: u64, model: &str) -> &'a ReportRow {
    rows.iter()
        .find(|r| r.pi == pi && r.seed == seed && r.model == model)
        .unwrap_or_else(|| panic!("no row for pi {pi} seed {seed} model {model:?}"))
}

fn attack_threshold() -> Outcome {
    let cfg = attack_config("threshold", &[0.0, 0.3], vec![]);
    assert_eq!(GeneratorConfig::default().tag(), "simulated");
    let report = run_attack(&cfg, &RunOptions::default()).unwrap();
    let mut shifts = Vec::new();
    let mut pass = true;
    for seed in SEEDS {
        let base = row(&report.rows, 0.0, seed, "").spd_s.unwrap();
        let hit = row(&report.rows, 0.3, seed, "");
        let shift = hit.spd_s.unwrap().abs() - base.abs();
        pass &= shift > 0.1 && hit.attack_success == Some(true);
        shifts.push(format!("{shift:.3}"));
    }
    outcome(pass, format!("|SPD_S| shift per seed [{}] (> 0.1 required)", shifts.join(", ")))
}

fn forest(policy: FeaturePolicy) -> ClassifierSpec {
    ClassifierSpec::new(ModelKind::RandomForest, policy)
}

/// Shared by the decoupling and reliance criteria.
fn downstream_report() -> (ExperimentReport, Duration) {
    let start = Instant::now();
    let classifiers = vec![
        ClassifierSpec::new(ModelKind::LogisticRegression, FeaturePolicy::AttributeAware),
        forest(FeaturePolicy::AttributeAware),
        forest(FeaturePolicy::AttributeBlind),
    ];
    let cfg = attack_config("downstream", &[0.0, 0.6], classifiers);
    let report = run_attack(&cfg, &RunOptions::default()).unwrap();
    (report, start.elapsed())
}

/// `dF1_R` is the change in seed-mean F1; the SPD_D increase is counted
/// per seed.
fn decoupling(report: &ExperimentReport) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for model in ["lr-aware", "rf-aware"] {
        let (mut df1_sum, mut spd_up, mut worst_f1) = (0.0, 0, 0.0f64);
        for seed in SEEDS {
            let a = row(&report.rows, 0.0, seed, model);
            let b = row(&report.rows, 0.6, seed, model);
            let df1 = b.f1_r.unwrap() - a.f1_r.unwrap();
            df1_sum += df1;
            worst_f1 = worst_f1.max(df1.abs());
            spd_up += (b.spd_d.unwrap().abs() > a.spd_d.unwrap().abs()) as usize;
        }
        let df1 = df1_sum / SEEDS.len() as f64;
        pass &= df1.abs() < 0.05 && spd_up >= 4;
        lines.push(format!(
            "{model}: dF1_R {df1:+.3} (largest single seed {worst_f1:.3}), |SPD_D| up in {spd_up}/5"
        ));
    }
    outcome(pass, lines.join("; "))
}

fn reliance(report: &ExperimentReport) -> Outcome {
    let mut up = 0;
    let mut values = Vec::new();
    for seed in SEEDS {
        let a = row(&report.rows, 0.0, seed, "rf-aware").mdi_protected.unwrap();
        let b = row(&report.rows, 0.6, seed, "rf-aware").mdi_protected.unwrap();
        up += (b > a) as usize;
        values.push(format!("{a:.3}->{b:.3}"));
    }
    let blind_zero = report
        .rows
        .iter()
        .filter(|r| r.model == "rf-blind")
        .all(|r| r.mdi_protected == Some(0.0));
    outcome(
        up >= 4 && blind_zero,
        format!("aware MDI up in {up}/5 [{}]; blind exactly zero: {blind_zero}", values.join(", ")),
    )
}

fn fair_spd_contract() -> Outcome {
    let schema = toy_schema();
    let sub = toy_subgroup(&schema);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut checked, mut optimal, mut excess, mut degenerate, mut infeasible, mut monotone) = (0, 0, 0, 0, 0, true);
    let mut oracle_feasible_but_flagged = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=15);
        let mut recs = random_records(&mut rng, n);
        recs[0].values[0] = Value::Category(0);
        recs[1].values[0] = Value::Category(1);
        let mut counts = [[0usize; 2]; 2];
        for r in &recs {
            counts[r.category(0) as usize][r.label as usize] += 1;
        }
        let best = min_removals_for_parity(counts, 0.02);
        let p = fair_spd_prune(&recs, &sub, 0.02).unwrap();
        monotone &= p.trace.windows(2).all(|w| w[1] <= w[0]);
        if p.degenerate() {
            degenerate += 1;
            oracle_feasible_but_flagged += best.is_some() as usize;
            continue;
        }
        let kept: Vec<Record> = p.kept.iter().map(|&i| recs[i].clone()).collect();
        if spd_records(&kept, &sub).map_or(true, |s| s.abs() > 0.02) {
            infeasible += 1;
            continue;
        }
        checked += 1;
        if let Some(best) = best {
            optimal += (p.removed.len() == best) as usize;
            excess += p.removed.len().saturating_sub(best);
        }
    }
    let pass = monotone && infeasible == 0 && checked > 0;
    outcome(
        pass,
        format!(
            "{checked} feasible, {degenerate} flagged ({oracle_feasible_but_flagged} of them oracle-feasible), \
             {infeasible} infeasible; greedy optimal in {optimal}/{checked}, {excess} extra removals; trace monotone: {monotone}"
        ),
    )
}

fn mitigation_ordering() -> Outcome {
    let mut cfg = attack_config("ordering", &[0.3], vec![]);
    cfg.mitigation.strategies = vec![Strategy::None, Strategy::GroupBalanced, Strategy::FairSpd];
    let report = run_mitigation(&cfg, &RunOptions::default()).unwrap();
    let mean_abs = |strategy: Strategy| {
        let v: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.mitigation == strategy.as_str() && r.pi == 0.3)
            .map(|r| r.spd_s.unwrap().abs())
            .collect();
        assert_eq!(v.len(), SEEDS.len());
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (fair, balanced, none) = (mean_abs(Strategy::FairSpd), mean_abs(Strategy::GroupBalanced), mean_abs(Strategy::None));
    outcome(
        fair <= balanced && balanced <= none,
        format!("mean |SPD_S|: fair_spd {fair:.4} <= group_balanced {balanced:.4} <= none {none:.4}"),
    )
}

fn covariate_shift() -> Outcome {
    let cfg = attack_config("shift", &[0.0, 0.6], vec![]);
    let report = run_attack(&cfg, &RunOptions::default()).unwrap();
    let mean = |pi: f64, f: fn(&ReportRow) -> Option<f64>| {
        SEEDS.iter().map(|&s| f(row(&report.rows, pi, s, "")).unwrap()).sum::<f64>() / SEEDS.len() as f64
    };
    let (t0, t6) = (mean(0.0, |r| r.aligned_mass_target), mean(0.6, |r| r.aligned_mass_target));
    let (o0, o6) = (mean(0.0, |r| r.aligned_mass_other), mean(0.6, |r| r.aligned_mass_other));
    outcome(
        t6 - t0 >= 0.2 && (o6 - o0).abs() < 0.05,
        format!("target {t0:.3} -> {t6:.3} (+{:.3}), other {o0:.3} -> {o6:.3} ({:+.3})", t6 - t0, o6 - o0),
    )
}

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::new("determinism", DatasetConfig::fixture(Fixture::Compas));
    cfg.bias = Some(BiasSpec::marginal(vec![Conjunct::equals("race", "African-American")], 0.0));
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for (i, workers) in [Some(1), Some(1), Some(4)].into_iter().enumerate() {
        let opts = RunOptions { workers, ..RunOptions::default() };
        let report = run_propagation(&cfg, &opts).unwrap();
        let out = dir.path().join(format!("run{i}"));
        emit_report(&report, ReportFormat::Csv, &out).unwrap();
        bytes.push((std::fs::read(out.join("report.csv")).unwrap(), std::fs::read(out.join("fits.csv")).unwrap()));
    }
    let same = bytes[0] == bytes[1];
    let across = bytes[0] == bytes[2];
    outcome(
        same && across && !bytes[0].0.is_empty(),
        format!("repeat identical: {same}; workers 1 vs 4 identical: {across}; {} report bytes", bytes[0].0.len()),
    )
}

fn main() -> ExitCode {
    let (downstream, downstream_time) = downstream_report();
    let downstream = &downstream;
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(u32, &str, Option<Duration>, Check)> = vec![
        (1, "metric oracle equivalence", Some(Duration::from_secs(10)), Box::new(metric_oracles)),
        (2, "mixture linearity", Some(Duration::from_secs(30)), Box::new(mixture_linearity)),
        (3, "monotone beta_k", Some(Duration::from_secs(120)), Box::new(monotone_beta)),
        (4, "attack success threshold", Some(Duration::from_secs(60)), Box::new(attack_threshold)),
        (5, "utility-fairness decoupling", None, Box::new(move || decoupling(downstream))),
        (6, "fair-spd contract", Some(Duration::from_secs(60)), Box::new(fair_spd_contract)),
        (7, "mitigation ordering", Some(Duration::from_secs(180)), Box::new(mitigation_ordering)),
        (8, "feature-aligned covariate shift", None, Box::new(covariate_shift)),
        (9, "protected-feature reliance", None, Box::new(move || reliance(downstream))),
        (10, "determinism", None, Box::new(determinism)),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check()));
        // the shared downstream sweep counts towards criterion 5
        let elapsed = start.elapsed() + if n == 5 { downstream_time } else { Duration::ZERO };
        let (mut pass, mut detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let limit = if n == 5 { Some(Duration::from_secs(180)) } else { limit };
        if let Some(limit) = limit {
            if elapsed > limit {
                pass = false;
                detail.push_str(&format!("; over the {}s budget", limit.as_secs()));
            }
        }
        failed += (!pass) as usize;
        println!(
            "{} criterion {n} ({name}): {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
