use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record, Schema, Subgroup, Value};
use crate::error::{Error, Result};

/// Whether protected-attribute columns enter the design matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturePolicy {
    #[default]
    AttributeAware,
    AttributeBlind,
}

impl FeaturePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            FeaturePolicy::AttributeAware => "aware",
            FeaturePolicy::AttributeBlind => "blind",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Column {
    Indicator { feature: usize, category: u32 },
    Numeric { feature: usize, mean: f64, std: f64 },
}

impl Column {
    pub fn feature(&self) -> usize {
        match self {
            Column::Indicator { feature, .. } | Column::Numeric { feature, .. } => *feature,
        }
    }
}

/// One-hot categoricals (categories seen in training only) and z-scored
/// numericals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub columns: Vec<Column>,
    pub column_names: Vec<String>,
    /// Schema features feeding at least one column.
    pub included: Vec<usize>,
    pub n_schema_features: usize,
}

/// Features a blind model may not see: the schema's protected features and
/// every feature named by the subgroup.
pub fn protected_features(schema: &Schema, sub: &Subgroup) -> Vec<usize> {
    let mut v: Vec<usize> = schema
        .protected_indices()
        .iter()
        .copied()
        .chain(sub.predicate.features())
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

impl Encoder {
    pub fn fit(train: &Dataset, excluded: &[usize]) -> Result<Encoder> {
        if train.is_empty() {
            return Err(Error::Empty("cannot fit an encoder to an empty dataset".into()));
        }
        let schema = train.schema();
        let mut columns = Vec::new();
        let mut column_names = Vec::new();
        let mut included = Vec::new();
        for (j, f) in schema.features().iter().enumerate() {
            if excluded.contains(&j) {
                continue;
            }
            included.push(j);
            if f.is_categorical() {
                let mut seen = vec![false; f.cardinality()];
                for r in train.records() {
                    seen[r.category(j) as usize] = true;
                }
                for (c, _) in seen.iter().enumerate().filter(|(_, s)| **s) {
                    columns.push(Column::Indicator {
                        feature: j,
                        category: c as u32,
                    });
                    column_names.push(format!("{}={}", f.name, f.category_name(c as u32)));
                }
            } else {
                let xs = train.numbers(j);
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
                columns.push(Column::Numeric { feature: j, mean, std });
                column_names.push(f.name.clone());
            }
        }
        Ok(Encoder {
            columns,
            column_names,
            included,
            n_schema_features: schema.n_features(),
        })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Encoded row; the flag is set when a categorical value has no column.
    pub fn encode(&self, r: &Record) -> (Vec<f64>, bool) {
        let mut row = Vec::with_capacity(self.columns.len());
        let mut hit = vec![false; self.n_schema_features];
        for c in &self.columns {
            let x = match (c, r.values[c.feature()]) {
                (Column::Indicator { feature, category }, Value::Category(v)) => {
                    if v == *category {
                        hit[*feature] = true;
                        1.0
                    } else {
                        0.0
                    }
                }
                (Column::Numeric { feature, mean, std }, Value::Number(x)) => {
                    hit[*feature] = true;
                    if *std > 0.0 {
                        (x - mean) / std
                    } else {
                        0.0
                    }
                }
                _ => panic!("record does not match the encoder schema"),
            };
            row.push(x);
        }
        let unseen = self.included.iter().any(|&j| !hit[j]);
        (row, unseen)
    }

    /// Row-major design matrix and the number of rows with unseen categories.
    pub fn matrix(&self, records: &[Record]) -> (Vec<f64>, usize) {
        let mut out = Vec::with_capacity(records.len() * self.width());
        let mut unseen = 0;
        for r in records {
            let (row, u) = self.encode(r);
            out.extend(row);
            unseen += u as usize;
        }
        (out, unseen)
    }
}
