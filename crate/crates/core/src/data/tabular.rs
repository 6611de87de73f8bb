//! CSV ingestion for tabular datasets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    /// `None` takes every column except the label, in header order.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            feature_columns: None,
        }
    }
}

struct Table {
    headers: Vec<String>,
    records: Vec<(usize, csv::StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(records.len() + 2, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(Table { headers, records })
}

fn column_index(headers: &[String], name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_owned()))
}

fn parse_features(table: &Table, columns: &[usize]) -> Result<Matrix, DataError> {
    let mut x = Matrix::zeros(table.records.len(), columns.len());
    for (i, (line, rec)) in table.records.iter().enumerate() {
        for (j, &c) in columns.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::NonNumeric {
                    line: *line,
                    col: c + 1,
                    column: table.headers[c].clone(),
                    value: cell.to_owned(),
                })?;
            x.set(i, j, v);
        }
    }
    Ok(x)
}

/// Loads a labelled dataset. Label values are mapped to class indices in order
/// of first occurrence; the original values become the class names.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let table = read_table(path.as_ref())?;
    let label_col = column_index(&table.headers, &schema.label_column)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names
            .iter()
            .map(|n| column_index(&table.headers, n))
            .collect::<Result<_, _>>()?,
        None => (0..table.headers.len()).filter(|&c| c != label_col).collect(),
    };
    let x = parse_features(&table, &feature_cols)?;

    let mut class_names: Vec<String> = Vec::new();
    let labels = table
        .records
        .iter()
        .map(|(_, rec)| {
            let v = rec.get(label_col).unwrap_or("");
            match class_names.iter().position(|c| c == v) {
                Some(k) => k,
                None => {
                    class_names.push(v.to_owned());
                    class_names.len() - 1
                }
            }
        })
        .collect();
    let names = feature_cols.iter().map(|&c| table.headers[c].clone()).collect();
    Dataset::new(x, labels, class_names.len())?
        .with_feature_names(names)?
        .with_class_names(class_names)
}

/// Loads unlabelled feature rows by column name.
pub fn load_features(path: impl AsRef<Path>, columns: &[String]) -> Result<Matrix, DataError> {
    let table = read_table(path.as_ref())?;
    let idx: Vec<usize> = columns
        .iter()
        .map(|n| column_index(&table.headers, n))
        .collect::<Result<_, _>>()?;
    parse_features(&table, &idx)
}

impl Dataset {
    /// Writes features and the label (as its class name) under `label_column`.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names().iter().map(String::as_str).collect();
        header.push(label_column);
        w.write_record(&header)?;
        for (row, &label) in self.features().iter_rows().zip(self.labels()) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.class_names()[label].clone());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    fn write(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let p = dir.path().join("d.csv");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn hand_written_file_loads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b,label\n1.5,-2,pos\n0.25,3e2,neg\n7,0.1,pos\n");
        let d = load_csv(&p, &CsvSchema::new("label")).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.class_names(), &["pos".to_string(), "neg".to_string()]);
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert_eq!(d.features().row(1), &[0.25, 300.0]);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);

        let out = dir.path().join("out.csv");
        d.write_csv(&out, "label").unwrap();
        assert_eq!(load_csv(&out, &CsvSchema::new("label")).unwrap(), d);
    }

    #[test]
    fn non_numeric_cell_names_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b,label\n1,2,x\n3,oops,y\n");
        match load_csv(&p, &CsvSchema::new("label")) {
            Err(DataError::NonNumeric {
                line, col, column, ..
            }) => {
                assert_eq!((line, col, column.as_str()), (3, 2, "b"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b\n1,2\n");
        assert!(matches!(
            load_csv(&p, &CsvSchema::new("label")),
            Err(DataError::MissingColumn(c)) if c == "label"
        ));
        let schema = CsvSchema {
            label_column: "b".into(),
            feature_columns: Some(vec!["zzz".into()]),
        };
        assert!(matches!(load_csv(&p, &schema), Err(DataError::MissingColumn(_))));
        let p = write(&dir, "a,label\n");
        assert!(matches!(
            load_csv(&p, &CsvSchema::new("label")),
            Err(DataError::EmptyFile)
        ));
    }

    #[test]
    fn selected_feature_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "id,a,b,y\n9,1,2,0\n8,3,4,1\n");
        let schema = CsvSchema {
            label_column: "y".into(),
            feature_columns: Some(vec!["b".into(), "a".into()]),
        };
        let d = load_csv(&p, &schema).unwrap();
        assert_eq!(d.features().row(0), &[2.0, 1.0]);
        let x = load_features(&p, &["a".to_string()]).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 3.0]);
    }
}
