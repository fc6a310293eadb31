use serde_json::Value as Json;

use super::schema::{FeatureKind, FeatureSpec, Schema};

/// A single cell. Categories are stored as indices into the feature's
/// support and rendered back to their strings at every I/O boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Category(u32),
    Number(f64),
}

impl Value {
    pub fn category(self) -> Option<u32> {
        match self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }

    pub fn number(self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(x),
            Value::Category(_) => None,
        }
    }
}

/// One row: a value per schema feature plus the label.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub values: Vec<Value>,
    pub label: u32,
}

impl Record {
    pub fn new(values: Vec<Value>, label: u32) -> Self {
        Record { values, label }
    }

    /// Build a record from string cells in schema order (label last).
    /// Test and fixture helper; panics on invalid input.
    pub fn from_strs(schema: &Schema, cells: &[&str]) -> Record {
        assert_eq!(cells.len(), schema.n_features() + 1, "cell count");
        let values = schema
            .features()
            .iter()
            .zip(cells)
            .map(|(f, c)| parse_cell(f, c, RangePolicy::Error).unwrap_or_else(|e| panic!("{e}")))
            .collect();
        let label = schema
            .label_index(cells[schema.n_features()])
            .unwrap_or_else(|| panic!("unknown label {}", cells[schema.n_features()]));
        Record { values, label }
    }

    pub fn category(&self, feature: usize) -> u32 {
        self.values[feature].category().expect("categorical value")
    }

    pub fn number(&self, feature: usize) -> f64 {
        self.values[feature].number().expect("numerical value")
    }
}

/// What to do with a numerical cell outside its declared range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RangePolicy {
    #[default]
    Error,
    Clamp,
}

pub(crate) fn parse_cell(spec: &FeatureSpec, cell: &str, policy: RangePolicy) -> Result<Value, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err("blank cell (missing values are not supported)".into());
    }
    match &spec.kind {
        FeatureKind::Categorical { .. } => spec
            .category_index(cell)
            .map(Value::Category)
            .ok_or_else(|| format!("category `{cell}` not in support")),
        FeatureKind::Numerical { range, .. } => {
            let x: f64 = cell
                .parse()
                .map_err(|_| format!("`{cell}` is not a number"))?;
            if !x.is_finite() {
                return Err(format!("`{cell}` is not finite"));
            }
            check_range(x, range[0], range[1], policy).map(Value::Number)
        }
    }
}

pub(crate) fn check_range(x: f64, lo: f64, hi: f64, policy: RangePolicy) -> Result<f64, String> {
    if x >= lo && x <= hi {
        return Ok(x);
    }
    match policy {
        RangePolicy::Error => Err(format!("{x} outside range [{lo}, {hi}]")),
        RangePolicy::Clamp => Ok(x.clamp(lo, hi)),
    }
}

/// Render a number the way it is written to CSV and prompts: integral
/// values without a fractional part.
pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub(crate) fn format_cell(spec: &FeatureSpec, value: Value) -> String {
    match value {
        Value::Category(c) => spec.category_name(c).to_string(),
        Value::Number(x) => format_number(x),
    }
}

pub(crate) fn json_cell(spec: &FeatureSpec, value: Value) -> Json {
    match value {
        Value::Category(c) => Json::String(spec.category_name(c).to_string()),
        Value::Number(x) => {
            if x.fract() == 0.0 && x.abs() < 1e15 {
                Json::from(x as i64)
            } else {
                serde_json::Number::from_f64(x).map_or(Json::Null, Json::Number)
            }
        }
    }
}

/// Validate a record against the schema; returns a reason on failure.
pub(crate) fn validate_record(schema: &Schema, record: &Record) -> Result<(), String> {
    if record.values.len() != schema.n_features() {
        return Err(format!(
            "record has {} values, schema has {} features",
            record.values.len(),
            schema.n_features()
        ));
    }
    for (f, v) in schema.features().iter().zip(&record.values) {
        match (&f.kind, v) {
            (FeatureKind::Categorical { support }, Value::Category(c)) => {
                if *c as usize >= support.len() {
                    return Err(format!("`{}`: category index {c} out of support", f.name));
                }
            }
            (FeatureKind::Numerical { range, .. }, Value::Number(x)) => {
                if !(x.is_finite() && *x >= range[0] && *x <= range[1]) {
                    return Err(format!("`{}`: {x} outside [{}, {}]", f.name, range[0], range[1]));
                }
            }
            _ => return Err(format!("`{}`: value kind does not match feature kind", f.name)),
        }
    }
    if record.label as usize >= schema.n_labels() {
        return Err(format!("label index {} out of support", record.label));
    }
    Ok(())
}
