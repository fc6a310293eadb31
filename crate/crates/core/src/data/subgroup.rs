use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::record::{Record, Value};
use super::schema::{FeatureKind, Schema};
use crate::error::{Error, Result};

/// Condition on a single feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Equals(String),
    /// Closed interval, numerical features only.
    Interval([f64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conjunct {
    pub feature: String,
    #[serde(flatten)]
    pub condition: Condition,
}

impl Conjunct {
    pub fn equals(feature: &str, value: &str) -> Self {
        Conjunct {
            feature: feature.into(),
            condition: Condition::Equals(value.into()),
        }
    }

    pub fn interval(feature: &str, lo: f64, hi: f64) -> Self {
        Conjunct {
            feature: feature.into(),
            condition: Condition::Interval([lo, hi]),
        }
    }
}

/// Declarative subgroup: the unprivileged group is the conjunction of the
/// listed conditions, the privileged group is its complement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupSpec {
    pub unprivileged: Vec<Conjunct>,
    pub favorable_label: String,
}

impl SubgroupSpec {
    pub fn new(unprivileged: Vec<Conjunct>, favorable_label: &str) -> Self {
        SubgroupSpec {
            unprivileged,
            favorable_label: favorable_label.into(),
        }
    }

    pub fn compile(&self, schema: &Schema) -> Result<Subgroup> {
        let predicate = Predicate::compile(&self.unprivileged, schema)?;
        let favorable = schema.label_index(&self.favorable_label).ok_or_else(|| {
            Error::Subgroup(format!(
                "favorable label `{}` not in label support",
                self.favorable_label
            ))
        })?;
        Ok(Subgroup { predicate, favorable })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Test {
    Category(u32),
    Interval(f64, f64),
}

/// Compiled conjunct list resolved against a schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    tests: Vec<(usize, Test)>,
    conjuncts: Vec<Conjunct>,
}

impl Predicate {
    pub fn compile(conjuncts: &[Conjunct], schema: &Schema) -> Result<Self> {
        if conjuncts.is_empty() {
            return Err(Error::Subgroup("no conjuncts".into()));
        }
        let mut tests = Vec::with_capacity(conjuncts.len());
        for c in conjuncts {
            let idx = schema
                .feature_index(&c.feature)
                .ok_or_else(|| Error::Subgroup(format!("unknown feature `{}`", c.feature)))?;
            let spec = schema.feature(idx);
            let test = match (&c.condition, &spec.kind) {
                (Condition::Equals(v), FeatureKind::Categorical { .. }) => {
                    Test::Category(spec.category_index(v).ok_or_else(|| {
                        Error::Subgroup(format!("`{v}` not in support of `{}`", c.feature))
                    })?)
                }
                (Condition::Equals(v), FeatureKind::Numerical { .. }) => {
                    let x: f64 = v.parse().map_err(|_| {
                        Error::Subgroup(format!("`{v}` is not a number for `{}`", c.feature))
                    })?;
                    Test::Interval(x, x)
                }
                (Condition::Interval([lo, hi]), FeatureKind::Numerical { .. }) => {
                    if !(lo <= hi) {
                        return Err(Error::Subgroup(format!(
                            "empty interval [{lo}, {hi}] on `{}`",
                            c.feature
                        )));
                    }
                    Test::Interval(*lo, *hi)
                }
                (Condition::Interval(_), FeatureKind::Categorical { .. }) => {
                    return Err(Error::Subgroup(format!(
                        "interval on categorical feature `{}`",
                        c.feature
                    )))
                }
            };
            tests.push((idx, test));
        }
        Ok(Predicate {
            tests,
            conjuncts: conjuncts.to_vec(),
        })
    }

    pub fn matches(&self, record: &Record) -> bool {
        self.tests.iter().all(|(idx, t)| match (t, record.values[*idx]) {
            (Test::Category(c), Value::Category(v)) => *c == v,
            (Test::Interval(lo, hi), Value::Number(x)) => x >= *lo && x <= *hi,
            _ => false,
        })
    }

    pub fn conjuncts(&self) -> &[Conjunct] {
        &self.conjuncts
    }

    /// Feature indices constrained by this predicate.
    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.tests.iter().map(|(i, _)| *i)
    }

    /// Overwrite the constrained features so `record` satisfies the
    /// predicate. Values already inside an interval are kept; others are
    /// drawn uniformly within it.
    pub fn force<R: Rng + ?Sized>(&self, schema: &Schema, record: &mut Record, rng: &mut R) {
        for (idx, t) in &self.tests {
            match *t {
                Test::Category(c) => record.values[*idx] = Value::Category(c),
                Test::Interval(lo, hi) => {
                    let current = record.values[*idx].number().unwrap_or(f64::NAN);
                    if !(current >= lo && current <= hi) {
                        let spec = schema.feature(*idx);
                        record.values[*idx] = Value::Number(uniform_in(lo, hi, spec.is_integer(), rng));
                    }
                }
            }
        }
    }

    pub fn label(&self) -> String {
        self.conjuncts
            .iter()
            .map(|c| match &c.condition {
                Condition::Equals(v) => format!("{}={v}", c.feature),
                Condition::Interval([lo, hi]) => format!("{}∈[{lo},{hi}]", c.feature),
            })
            .collect::<Vec<_>>()
            .join("&")
    }
}

pub(crate) fn uniform_in<R: Rng + ?Sized>(lo: f64, hi: f64, integer: bool, rng: &mut R) -> f64 {
    if integer {
        let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
        if a > b {
            return lo;
        }
        rng.random_range(a..=b) as f64
    } else if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Compiled subgroup with its favorable label.
#[derive(Clone, Debug, PartialEq)]
pub struct Subgroup {
    pub predicate: Predicate,
    pub favorable: u32,
}

impl Subgroup {
    pub fn is_unprivileged(&self, record: &Record) -> bool {
        self.predicate.matches(record)
    }

    pub fn is_favorable(&self, label: u32) -> bool {
        label == self.favorable
    }

    pub fn mask(&self, records: &[Record]) -> Vec<bool> {
        records.iter().map(|r| self.predicate.matches(r)).collect()
    }
}

/// Indices of records in the unprivileged group. The complement is the
/// privileged group.
pub fn subgroup_mask(ds: &Dataset, sub: &Subgroup) -> Vec<usize> {
    ds.records()
        .iter()
        .enumerate()
        .filter(|(_, r)| sub.is_unprivileged(r))
        .map(|(i, _)| i)
        .collect()
}
