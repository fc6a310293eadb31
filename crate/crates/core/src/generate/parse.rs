use serde_json::{Map, Value as Json};

use crate::data::{check_range, RangePolicy, Record, Schema, Value};

/// Root-level failures: the whole response is unusable.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("response is not valid JSON: {0}")]
    NotJson(String),
    #[error("response has content after the JSON array")]
    TrailingContent,
    #[error("response root is not an array")]
    NotArray,
    #[error("expected {expected} objects, got {got}")]
    Count { expected: usize, got: usize },
}

/// A row rejected for violating the key contract or the schema.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RowRejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedBatch {
    pub records: Vec<Record>,
    pub rejected: Vec<RowRejection>,
}

/// Parse a model response that must be exactly a JSON array of `expected`
/// objects whose keys are the schema features then the label, in order.
pub fn parse_generation(text: &str, schema: &Schema, expected: usize) -> Result<ParsedBatch, ParseError> {
    let mut stream = serde_json::Deserializer::from_str(text.trim()).into_iter::<Json>();
    let root = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(ParseError::NotJson(e.to_string())),
        None => return Err(ParseError::NotJson("empty response".into())),
    };
    if stream.byte_offset() != text.trim().len() {
        return Err(ParseError::TrailingContent);
    }
    let Json::Array(items) = root else {
        return Err(ParseError::NotArray);
    };
    if items.len() != expected {
        return Err(ParseError::Count {
            expected,
            got: items.len(),
        });
    }
    let keys = schema.key_order();
    let mut out = ParsedBatch::default();
    for (index, item) in items.iter().enumerate() {
        match parse_row(item, schema, &keys) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejected.push(RowRejection { index, reason }),
        }
    }
    Ok(out)
}

fn parse_row(item: &Json, schema: &Schema, keys: &[&str]) -> Result<Record, String> {
    let Json::Object(obj) = item else {
        return Err("element is not an object".into());
    };
    check_keys(obj, keys)?;
    let mut values = Vec::with_capacity(schema.n_features());
    for spec in schema.features() {
        let v = &obj[&spec.name];
        let value = match spec.support() {
            Some(_) => {
                let s = v
                    .as_str()
                    .ok_or_else(|| format!("`{}`: expected a string", spec.name))?;
                let c = spec
                    .category_index(s)
                    .ok_or_else(|| format!("`{}`: `{s}` not in support", spec.name))?;
                Value::Category(c)
            }
            None => {
                let x = v
                    .as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("`{}`: expected a number", spec.name))?;
                if spec.is_integer() && x.fract() != 0.0 {
                    return Err(format!("`{}`: {x} is not an integer", spec.name));
                }
                let (lo, hi) = spec.range().expect("numerical");
                let x = check_range(x, lo, hi, RangePolicy::Error)
                    .map_err(|e| format!("`{}`: {e}", spec.name))?;
                Value::Number(x)
            }
        };
        values.push(value);
    }
    let label_name = &schema.label().name;
    let s = obj[label_name]
        .as_str()
        .ok_or_else(|| format!("`{label_name}`: expected a string"))?;
    let label = schema
        .label_index(s)
        .ok_or_else(|| format!("`{label_name}`: `{s}` not in support"))?;
    Ok(Record::new(values, label))
}

fn check_keys(obj: &Map<String, Json>, keys: &[&str]) -> Result<(), String> {
    for k in obj.keys() {
        if !keys.contains(&k.as_str()) {
            return Err(format!("extra key `{k}`"));
        }
    }
    for k in keys {
        if !obj.contains_key(*k) {
            return Err(format!("missing key `{k}`"));
        }
    }
    if obj.keys().map(String::as_str).ne(keys.iter().copied()) {
        return Err("keys out of schema order".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Protected};

    fn schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::integer("age", 18.0, 90.0),
                FeatureSpec::categorical("race", ["Black", "White"]),
            ],
            FeatureSpec::categorical("y", ["0", "1"]),
            Protected {
                name: "race".into(),
                features: vec!["race".into()],
            },
        )
        .unwrap()
    }

    #[test]
    fn valid_pair() {
        let text = r#"[{"age": 30, "race": "Black", "y": "1"}, {"age": 41, "race": "White", "y": "0"}]"#;
        let b = parse_generation(text, &schema(), 2).unwrap();
        assert_eq!(b.records.len(), 2);
        assert!(b.rejected.is_empty());
    }

    #[test]
    fn root_errors() {
        let s = schema();
        let one = r#"{"age": 30, "race": "Black", "y": "1"}"#;
        assert_eq!(parse_generation(one, &s, 1), Err(ParseError::NotArray));
        let three = format!("[{one},{one},{one}]");
        assert_eq!(
            parse_generation(&three, &s, 2),
            Err(ParseError::Count { expected: 2, got: 3 })
        );
        let prose = format!("[{one}]\nHere are the samples.");
        assert_eq!(parse_generation(&prose, &s, 1), Err(ParseError::TrailingContent));
        assert!(matches!(parse_generation("Sure!", &s, 1), Err(ParseError::NotJson(_))));
    }

    #[test]
    fn row_rejections() {
        let s = schema();
        let text = r#"[
            {"age": 30, "race": "Black", "y": "1", "note": "x"},
            {"race": "Black", "age": 30, "y": "1"},
            {"age": 30, "race": "Martian", "y": "1"},
            {"age": 300, "race": "Black", "y": "1"},
            {"age": 30.5, "race": "Black", "y": "1"},
            {"age": "30", "race": "Black", "y": "1"},
            {"age": 30, "race": "Black"}
        ]"#;
        let b = parse_generation(text, &s, 7).unwrap();
        assert!(b.records.is_empty());
        let reasons: Vec<&str> = b.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons[0], "extra key `note`");
        assert_eq!(reasons[1], "keys out of schema order");
        assert!(reasons[2].contains("not in support"));
        assert!(reasons[3].contains("outside"));
        assert!(reasons[4].contains("not an integer"));
        assert!(reasons[5].contains("expected a number"));
        assert_eq!(reasons[6], "missing key `y`");
    }
}
