use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::dataset::{Dataset, Provenance};
use super::record::{format_cell, parse_cell, RangePolicy, Record};
use super::schema::Schema;
use crate::error::{Error, Result};

/// Load a CSV with a header row. Columns are matched by name; every
/// feature and the label must be present and no other column may appear.
pub fn load_dataset(path: impl AsRef<Path>, schema: Arc<Schema>) -> Result<Dataset> {
    load_dataset_with(path, schema, RangePolicy::Error)
}

pub fn load_dataset_with(
    path: impl AsRef<Path>,
    schema: Arc<Schema>,
    policy: RangePolicy,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema, policy, Provenance::Real)
}

/// Parse CSV from any reader. Row indices in errors are 0-based data rows.
pub fn read_dataset<R: Read>(
    reader: R,
    schema: Arc<Schema>,
    policy: RangePolicy,
    provenance: Provenance,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let keys = schema.key_order();
    for h in &header {
        if !keys.contains(&h.as_str()) {
            return Err(Error::UnexpectedColumn(h.clone()));
        }
    }
    let mut columns = Vec::with_capacity(keys.len());
    for k in &keys {
        let pos = header
            .iter()
            .position(|h| h == k)
            .ok_or_else(|| Error::MissingColumn(k.to_string()))?;
        columns.push(pos);
    }
    let label_col = columns[schema.n_features()];

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let mut values = Vec::with_capacity(schema.n_features());
        for (fi, spec) in schema.features().iter().enumerate() {
            let cell = rec.get(columns[fi]).unwrap_or("");
            let v = parse_cell(spec, cell, policy).map_err(|reason| Error::Cell {
                row,
                column: spec.name.clone(),
                reason,
            })?;
            values.push(v);
        }
        let label_cell = rec.get(label_col).unwrap_or("").trim();
        let label = schema.label_index(label_cell).ok_or_else(|| Error::Cell {
            row,
            column: schema.label().name.clone(),
            reason: if label_cell.is_empty() {
                "blank cell (missing values are not supported)".into()
            } else {
                format!("label `{label_cell}` not in support")
            },
        })?;
        records.push(Record::new(values, label));
    }
    Dataset::new(schema, records, provenance)
}

/// Write CSV in canonical column order.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let schema = ds.schema();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.key_order())?;
    let mut row = Vec::with_capacity(schema.n_features() + 1);
    for r in ds.records() {
        row.clear();
        for (spec, v) in schema.features().iter().zip(&r.values) {
            row.push(format_cell(spec, *v));
        }
        row.push(schema.label_name(r.label).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Protected};

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                vec![
                    FeatureSpec::integer("age", 17.0, 90.0),
                    FeatureSpec::categorical("race", ["Black", "White", "Other"]),
                    FeatureSpec::categorical("gender", ["Female", "Male"]),
                ],
                FeatureSpec::categorical("income", ["<=50K", ">50K"]),
                Protected {
                    name: "race".into(),
                    features: vec!["race".into()],
                },
            )
            .unwrap(),
        )
    }

    fn read(text: &str, policy: RangePolicy) -> Result<Dataset> {
        read_dataset(text.as_bytes(), schema(), policy, Provenance::Real)
    }

    #[test]
    fn three_rows() {
        let d = read(
            "age,race,gender,income\n39,White,Male,<=50K\n50,Black,Female,>50K\n28,Other,Male,<=50K\n",
            RangePolicy::Error,
        )
        .unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.records()[1].category(1), 0);
    }

    #[test]
    fn column_order_is_free() {
        let d = read("income,gender,race,age\n>50K,Male,White,40\n", RangePolicy::Error).unwrap();
        assert_eq!(d.records()[0].number(0), 40.0);
    }

    #[test]
    fn unknown_category_names_row_and_column() {
        let err = read(
            "age,race,gender,income\n39,White,Male,<=50K\n40,Martian,Male,<=50K\n",
            RangePolicy::Error,
        )
        .unwrap_err();
        match err {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "race");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn out_of_range_errors_unless_clamped() {
        let text = "age,race,gender,income\n250,White,Male,<=50K\n";
        assert!(matches!(read(text, RangePolicy::Error), Err(Error::Cell { .. })));
        let d = read(text, RangePolicy::Clamp).unwrap();
        assert_eq!(d.records()[0].number(0), 90.0);
    }

    #[test]
    fn missing_and_extra_columns() {
        assert!(matches!(
            read("age,race,income\n39,White,<=50K\n", RangePolicy::Error),
            Err(Error::MissingColumn(c)) if c == "gender"
        ));
        assert!(matches!(
            read("age,race,gender,income,zip\n39,White,Male,<=50K,1\n", RangePolicy::Error),
            Err(Error::UnexpectedColumn(c)) if c == "zip"
        ));
    }

    #[test]
    fn blank_and_unparseable_cells() {
        assert!(read("age,race,gender,income\n,White,Male,<=50K\n", RangePolicy::Error).is_err());
        assert!(read("age,race,gender,income\nold,White,Male,<=50K\n", RangePolicy::Error).is_err());
        assert!(read("age,race,gender,income\n39,White,Male,\n", RangePolicy::Error).is_err());
    }

    #[test]
    fn write_then_read() {
        let text = "age,race,gender,income\n39,White,Male,<=50K\n50,Black,Female,>50K\n";
        let d = read(text, RangePolicy::Error).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), text);
        let back = read_dataset(&buf[..], schema(), RangePolicy::Error, Provenance::Real).unwrap();
        assert_eq!(back, d);
    }
}
