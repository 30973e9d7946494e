//! CSV tables of per-object vectors.
//!
//! The first column is the object id. Columns whose header starts with
//! `label` hold categorical labels; every other column must be numeric.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub ids: Vec<String>,
    pub label_names: Vec<String>,
    pub labels: Vec<Vec<String>>,
    pub value_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid_data(format!("csv: {e}"))
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.value_names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|r| r[j]).collect())
    }

    pub fn label_column(&self, name: &str) -> Option<Vec<String>> {
        let j = self.label_names.iter().position(|n| n == name)?;
        Some(self.labels.iter().map(|r| r[j].clone()).collect())
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.is_empty() {
            return Err(Error::invalid_data("csv has no columns"));
        }
        let is_label: Vec<bool> = headers.iter().skip(1).map(|h| h.starts_with("label")).collect();
        let mut t = Table::default();
        for (h, &l) in headers.iter().skip(1).zip(&is_label) {
            if l {
                t.label_names.push(h.to_string());
            } else {
                t.value_names.push(h.to_string());
            }
        }
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            t.ids.push(rec[0].to_string());
            let mut labels = Vec::new();
            let mut values = Vec::new();
            for (field, &l) in rec.iter().skip(1).zip(&is_label) {
                if l {
                    labels.push(field.to_string());
                } else {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| Error::invalid_data(format!("row {}: {field:?} is not a number", line + 2)))?;
                    if !v.is_finite() {
                        return Err(Error::invalid_data(format!("row {}: non-finite value", line + 2)));
                    }
                    values.push(v);
                }
            }
            t.labels.push(labels);
            t.values.push(values);
        }
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        header.extend(self.label_names.iter().cloned());
        header.extend(self.value_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.ids.len() {
            let mut row = vec![self.ids[i].clone()];
            row.extend(self.labels[i].iter().cloned());
            row.extend(self.values[i].iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid_data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let src = "id,label_class,a,b\nx,vessel,1.5,2\ny,aneurysm,-3,4e-2\n";
        let t = Table::from_reader(src.as_bytes()).unwrap();
        assert_eq!(t.value_names, ["a", "b"]);
        assert_eq!(t.label_column("label_class").unwrap(), ["vessel", "aneurysm"]);
        assert_eq!(t.column("b").unwrap(), [2.0, 0.04]);
        assert_eq!(Table::from_reader(t.to_csv().unwrap().as_bytes()).unwrap(), t);
        assert!(Table::from_reader("id,a\nx,oops\n".as_bytes()).is_err());
    }
}
