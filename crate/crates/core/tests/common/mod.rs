#![allow(dead_code)]

pub mod oracles;

use std::sync::Arc;

use icbias::data::{Conjunct, Dataset, FeatureSpec, Protected, Provenance, Record, Schema, Subgroup, SubgroupSpec, Value};
use rand::Rng;

/// `group ∈ {a, b}` (protected, `a` unprivileged), `color ∈ {red, green, blue}`,
/// `x ∈ [0, 10]`, label `{0, 1}` with `1` favorable.
pub fn toy_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new(
            vec![
                FeatureSpec::categorical("group", ["a", "b"]),
                FeatureSpec::categorical("color", ["red", "green", "blue"]),
                FeatureSpec::numerical("x", 0.0, 10.0),
            ],
            FeatureSpec::categorical("label", ["0", "1"]),
            Protected {
                name: "group".into(),
                features: vec!["group".into()],
            },
        )
        .unwrap(),
    )
}

pub fn toy_subgroup(schema: &Schema) -> Subgroup {
    SubgroupSpec::new(vec![Conjunct::equals("group", "a")], "1").compile(schema).unwrap()
}

pub fn toy_record(group: u32, color: u32, x: f64, label: u32) -> Record {
    Record::new(vec![Value::Category(group), Value::Category(color), Value::Number(x)], label)
}

pub fn random_records<R: Rng>(rng: &mut R, n: usize) -> Vec<Record> {
    (0..n)
        .map(|_| {
            toy_record(
                rng.random_range(0..2),
                rng.random_range(0..3),
                (rng.random::<f64>() * 10.0 * 100.0).round() / 100.0,
                rng.random_range(0..2),
            )
        })
        .collect()
}

pub fn dataset(schema: &Arc<Schema>, records: Vec<Record>) -> Dataset {
    Dataset::new(schema.clone(), records, Provenance::Real).unwrap()
}

/// Every value matches its feature kind and lies in its support or range.
pub fn schema_valid(schema: &Schema, r: &Record) -> bool {
    r.values.len() == schema.n_features()
        && (r.label as usize) < schema.n_labels()
        && schema.features().iter().zip(&r.values).all(|(f, v)| match (f.support(), v) {
            (Some(s), Value::Category(c)) => (*c as usize) < s.len(),
            (None, Value::Number(x)) => {
                let (lo, hi) = f.range().unwrap();
                *x >= lo && *x <= hi && (!f.is_integer() || x.fract() == 0.0)
            }
            _ => false,
        })
}

/// Gender × race toy schema for intersectional cells; label `{0, 1}`.
pub fn cell_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new(
            vec![
                FeatureSpec::categorical("gender", ["Female", "Male"]),
                FeatureSpec::categorical("race", ["Black", "White"]),
                FeatureSpec::numerical("x", 0.0, 1.0),
            ],
            FeatureSpec::categorical("label", ["0", "1"]),
            Protected {
                name: "gender_race".into(),
                features: vec!["gender".into(), "race".into()],
            },
        )
        .unwrap(),
    )
}
