//! Small bundled datasets shaped like Adult, Compas, Diabetes and Thyroid.
//!
//! Each fixture is drawn from a hand-written anchor (`data/<name>.anchor.toml`)
//! and the first [`BUNDLED_ROWS`] rows are shipped as CSV.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::data::{read_dataset, Dataset, Provenance, RangePolicy, Record, Schema, SubgroupSpec, Value};
use crate::error::{Error, Result};
use crate::generate::{AnchorModel, AnchorSpec};
use crate::prompt::adversarial_preset;

pub const BUNDLED_ROWS: usize = 2000;
pub const BUNDLED_SEED: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fixture {
    Adult,
    Compas,
    Diabetes,
    Thyroid,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::Adult, Fixture::Compas, Fixture::Diabetes, Fixture::Thyroid];

    pub fn as_str(self) -> &'static str {
        match self {
            Fixture::Adult => "adult",
            Fixture::Compas => "compas",
            Fixture::Diabetes => "diabetes",
            Fixture::Thyroid => "thyroid",
        }
    }

    fn schema_text(self) -> &'static str {
        match self {
            Fixture::Adult => include_str!("../data/adult.schema.json"),
            Fixture::Compas => include_str!("../data/compas.schema.json"),
            Fixture::Diabetes => include_str!("../data/diabetes.schema.json"),
            Fixture::Thyroid => include_str!("../data/thyroid.schema.json"),
        }
    }

    fn anchor_text(self) -> &'static str {
        match self {
            Fixture::Adult => include_str!("../data/adult.anchor.toml"),
            Fixture::Compas => include_str!("../data/compas.anchor.toml"),
            Fixture::Diabetes => include_str!("../data/diabetes.anchor.toml"),
            Fixture::Thyroid => include_str!("../data/thyroid.anchor.toml"),
        }
    }

    /// The shipped CSV extract.
    pub fn csv(self) -> &'static str {
        match self {
            Fixture::Adult => include_str!("../data/adult.csv"),
            Fixture::Compas => include_str!("../data/compas.csv"),
            Fixture::Diabetes => include_str!("../data/diabetes.csv"),
            Fixture::Thyroid => include_str!("../data/thyroid.csv"),
        }
    }

    pub fn schema(self) -> Arc<Schema> {
        Arc::new(Schema::from_json_str(self.schema_text()).expect("bundled schema is valid"))
    }

    pub fn anchor_spec(self) -> AnchorSpec {
        toml::from_str(self.anchor_text()).expect("bundled anchor spec is valid")
    }

    /// Subgroup targeted by the dataset's attack preset.
    pub fn subgroup(self) -> SubgroupSpec {
        adversarial_preset(self.as_str()).expect("every fixture has a preset").subgroup
    }

    /// `n` rows from the fixture's anchor. Real-valued columns are rounded
    /// to two decimals.
    pub fn generate(self, n: usize, seed: u64) -> Result<Dataset> {
        let schema = self.schema();
        let model = AnchorModel::from_spec(schema.clone(), &self.anchor_spec())?;
        let raw = model.sample(n, seed);
        let records: Vec<Record> = raw
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for (v, f) in r.values.iter_mut().zip(schema.features()) {
                    if let (Value::Number(x), Some((lo, hi))) = (*v, f.range()) {
                        if !f.is_integer() {
                            *v = Value::Number(((x * 100.0).round() / 100.0).clamp(lo, hi));
                        }
                    }
                }
                r
            })
            .collect();
        Dataset::new(schema, records, Provenance::Real)
    }

    /// The shipped extract as a dataset.
    pub fn load(self) -> Dataset {
        read_dataset(self.csv().as_bytes(), self.schema(), RangePolicy::Error, Provenance::Real)
            .expect("bundled CSV is valid")
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fixture `{s}`")))
    }
}
