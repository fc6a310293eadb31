use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{validate_record, Record};
use super::schema::Schema;
use crate::error::{Error, Result};
use crate::stats::{equal_width_edges, CategoricalDistribution, Distribution, Histogram, DEFAULT_BINS};

/// Where a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
    Prompt,
    Anchor,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
            Provenance::Prompt => "prompt",
            Provenance::Anchor => "anchor",
        };
        f.write_str(s)
    }
}

/// Immutable, schema-validated collection of records.
#[derive(Clone, Debug)]
pub struct Dataset {
    schema: Arc<Schema>,
    records: Arc<[Record]>,
    provenance: Provenance,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.records == other.records
    }
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, records: Vec<Record>, provenance: Provenance) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            validate_record(&schema, r).map_err(|reason| Error::Cell {
                row: i,
                column: "*".into(),
                reason,
            })?;
        }
        Ok(Dataset {
            schema,
            records: records.into(),
            provenance,
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(&self, provenance: Provenance) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.clone(),
            provenance,
        }
    }

    /// Records at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: self.provenance,
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records[range].to_vec().into(),
            provenance: self.provenance,
        }
    }

    /// Values of a numerical feature, in record order.
    pub fn numbers(&self, feature: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.number(feature)).collect()
    }
}

/// Result of [`split_dataset`]. `degenerate` is set when either side is empty.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub degenerate: bool,
}

/// Seeded random partition into train/test with `round(fraction * n)`
/// training rows.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if ds.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    let n = ds.len();
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (tr, te) = order.split_at(n_train);
    let (mut tr, mut te) = (tr.to_vec(), te.to_vec());
    tr.sort_unstable();
    te.sort_unstable();
    Ok(Split {
        train: ds.select(&tr),
        test: ds.select(&te),
        degenerate: tr.is_empty() || te.is_empty(),
    })
}

/// Empirical distribution of one feature (or of the label when `feature`
/// names the label column). Numerical features use [`DEFAULT_BINS`]
/// equal-width bins over the observed min/max.
pub fn empirical_distribution(ds: &Dataset, feature: &str) -> Result<Distribution> {
    if ds.is_empty() {
        return Err(Error::Empty("empirical distribution of an empty dataset".into()));
    }
    let schema = ds.schema();
    if feature == schema.label().name {
        let mut counts = vec![0.0; schema.n_labels()];
        for r in ds.records() {
            counts[r.label as usize] += 1.0;
        }
        return Ok(Distribution::Categorical(CategoricalDistribution::from_counts(
            schema.label().support().unwrap().to_vec(),
            &counts,
        )?));
    }
    let idx = schema.require_feature(feature)?;
    let spec = schema.feature(idx);
    match spec.support() {
        Some(support) => {
            let mut counts = vec![0.0; support.len()];
            for r in ds.records() {
                counts[r.category(idx) as usize] += 1.0;
            }
            Ok(Distribution::Categorical(CategoricalDistribution::from_counts(
                support.to_vec(),
                &counts,
            )?))
        }
        None => {
            let xs = ds.numbers(idx);
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let edges = equal_width_edges(lo, hi, DEFAULT_BINS);
            Ok(Distribution::Histogram(Histogram::from_values(&xs, edges, 0.0)?))
        }
    }
}
