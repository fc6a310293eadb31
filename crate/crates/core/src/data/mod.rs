//! Schemas, typed records, subgroup predicates and dataset ingestion.

mod dataset;
mod io;
mod record;
mod schema;
mod subgroup;

pub use dataset::{empirical_distribution, split_dataset, Dataset, Provenance, Split};
pub use io::{load_dataset, load_dataset_with, read_dataset, save_dataset, write_dataset};
pub use record::{format_number, RangePolicy, Record, Value};
pub use schema::{FeatureKind, FeatureSpec, Protected, Schema};
pub use subgroup::{subgroup_mask, Condition, Conjunct, Predicate, Subgroup, SubgroupSpec};

pub(crate) use record::{check_range, json_cell};
pub(crate) use subgroup::uniform_in;
