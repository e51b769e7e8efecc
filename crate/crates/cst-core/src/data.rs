//! Column-major tabular dataset with CSV ingestion and emission.
//!
//! All values are stored as `f64`; categorical attributes are numeric codes
//! assigned by the caller (the CLI maps strings through schema-supplied value
//! maps before the data reaches this type). Records are identified by row
//! index throughout the toolkit, so every derived dataset (counterfactuals,
//! filtered copies) keeps or documents its alignment with the source.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use indexmap::IndexMap;

use crate::error::{CstError, Result};

/// Per-column mapping from raw CSV strings to numeric codes.
#[derive(Debug, Clone, Default)]
pub struct ValueMaps(pub BTreeMap<String, BTreeMap<String, f64>>);

impl ValueMaps {
    fn translate(&self, column: &str, raw: &str) -> Option<f64> {
        self.0.get(column).and_then(|m| m.get(raw)).copied()
    }
}

/// Immutable-after-construction table of named `f64` columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    columns: IndexMap<String, Vec<f64>>,
    rows: usize,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from `(name, values)` pairs; all columns must share one length.
    pub fn from_columns<I, S>(columns: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut data = Self::new();
        for (name, values) in columns {
            data.insert_column(name.into(), values)?;
        }
        Ok(data)
    }

    /// Add or replace a column. The first column fixes the row count.
    pub fn insert_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if self.columns.is_empty() {
            self.rows = values.len();
        } else if values.len() != self.rows {
            return Err(CstError::ShapeMismatch(format!(
                "column has {} rows, dataset has {}",
                values.len(),
                self.rows
            )));
        }
        self.columns.insert(name.into(), values);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| CstError::MissingColumn(name.to_string()))
    }

    pub fn value(&self, name: &str, row: usize) -> Result<f64> {
        let col = self.column(name)?;
        col.get(row).copied().ok_or_else(|| {
            CstError::ShapeMismatch(format!("row {} out of bounds ({})", row, col.len()))
        })
    }

    /// Rename a column in place, keeping its position.
    pub fn rename_column(&mut self, from: &str, to: impl Into<String>) -> Result<()> {
        let idx = self
            .columns
            .get_index_of(from)
            .ok_or_else(|| CstError::MissingColumn(from.to_string()))?;
        let to = to.into();
        let (_, values) = self.columns.shift_remove_index(idx).expect("index valid");
        self.columns.shift_insert(idx, to, values);
        Ok(())
    }

    /// Keep rows where `keep[i]` is true. Row indices are re-assigned densely.
    pub fn filter(&self, keep: &[bool]) -> Result<Dataset> {
        if keep.len() != self.rows {
            return Err(CstError::ShapeMismatch(format!(
                "mask has {} entries, dataset has {} rows",
                keep.len(),
                self.rows
            )));
        }
        let mut out = Dataset::new();
        for (name, values) in &self.columns {
            let filtered: Vec<f64> = values
                .iter()
                .zip(keep)
                .filter_map(|(v, &k)| k.then_some(*v))
                .collect();
            out.insert_column(name.clone(), filtered)?;
        }
        Ok(out)
    }

    /// Read a headered CSV. Cells are parsed as numbers unless `maps` supplies
    /// a string-to-code translation for the column.
    pub fn read_csv<R: Read>(reader: R, maps: &ValueMaps) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(CstError::ShapeMismatch(format!(
                    "record {} has {} fields, header has {}",
                    line + 2,
                    record.len(),
                    headers.len()
                )));
            }
            for (j, raw) in record.iter().enumerate() {
                let value = match maps.translate(&headers[j], raw) {
                    Some(code) => code,
                    None => raw.parse::<f64>().map_err(|_| {
                        CstError::Other(format!(
                            "line {}: cannot parse '{}' in column '{}' (no value map entry)",
                            line + 2,
                            raw,
                            headers[j]
                        ))
                    })?,
                };
                columns[j].push(value);
            }
        }
        let mut data = Dataset::new();
        for (name, values) in headers.into_iter().zip(columns) {
            data.insert_column(name, values)?;
        }
        Ok(data)
    }

    /// Write a headered CSV with full-precision (shortest round-trip) floats.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.columns.keys())?;
        for row in 0..self.rows {
            let record: Vec<String> = self
                .columns
                .values()
                .map(|col| format_full(col[row]))
                .collect();
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form of an `f64`.
pub fn format_full(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_round_trip() {
        let data = Dataset::from_columns([
            ("a", vec![1.0, 2.0]),
            ("b", vec![0.5, -3.25]),
        ])
        .unwrap();
        assert_eq!(data.n_rows(), 2);
        assert_eq!(data.column("b").unwrap(), &[0.5, -3.25]);
        assert!(matches!(
            data.column("missing"),
            Err(CstError::MissingColumn(_))
        ));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut data = Dataset::new();
        data.insert_column("a", vec![1.0, 2.0]).unwrap();
        assert!(data.insert_column("b", vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let data = Dataset::from_columns([
            ("x", vec![0.1, 35000.0, -2.5e-9]),
            ("y", vec![1.0, 0.0, 1.0]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), &ValueMaps::default()).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn csv_parse_errors_carry_line_numbers() {
        let csv = "x,y\n1,2\nbad,4\n";
        let err = Dataset::read_csv(csv.as_bytes(), &ValueMaps::default()).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("line 3"), "{message}");
        assert!(message.contains("'bad'"), "{message}");
    }

    #[test]
    fn csv_value_maps_translate_strings() {
        let csv = "race,score\nWhite,1.5\nNon-White,2.5\n";
        let mut maps = ValueMaps::default();
        maps.0.insert(
            "race".into(),
            [("White".to_string(), 0.0), ("Non-White".to_string(), 1.0)].into(),
        );
        let data = Dataset::read_csv(csv.as_bytes(), &maps).unwrap();
        assert_eq!(data.column("race").unwrap(), &[0.0, 1.0]);
        assert_eq!(data.column("score").unwrap(), &[1.5, 2.5]);
    }

    #[test]
    fn rename_preserves_column_position() {
        let mut data = Dataset::from_columns([
            ("a", vec![1.0]),
            ("b", vec![2.0]),
            ("c", vec![3.0]),
        ])
        .unwrap();
        data.rename_column("b", "B").unwrap();
        assert_eq!(data.column_names().collect::<Vec<_>>(), vec!["a", "B", "c"]);
        assert_eq!(data.column("B").unwrap(), &[2.0]);
    }

    #[test]
    fn filter_keeps_alignment_of_columns() {
        let data = Dataset::from_columns([
            ("a", vec![1.0, 2.0, 3.0]),
            ("b", vec![10.0, 20.0, 30.0]),
        ])
        .unwrap();
        let kept = data.filter(&[true, false, true]).unwrap();
        assert_eq!(kept.n_rows(), 2);
        assert_eq!(kept.column("b").unwrap(), &[10.0, 30.0]);
    }
}
