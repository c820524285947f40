//! Minimal numeric column store used by the estimators.
//!
//! Every column is `f64`. Columns used as fixed-effect or cluster labels must
//! hold integer values; [`Frame::labels`] converts them to group codes.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::EconError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    n_rows: usize,
    columns: Vec<(String, Vec<f64>)>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }

    /// Adds or replaces a column.
    pub fn set(&mut self, name: &str, values: Vec<f64>) -> Result<(), EconError> {
        if self.columns.is_empty() {
            self.n_rows = values.len();
        } else if values.len() != self.n_rows {
            return Err(EconError::ColumnLength {
                column: name.to_string(),
                expected: self.n_rows,
                got: values.len(),
            });
        }
        match self.columns.iter_mut().find(|(n, _)| n == name) {
            Some((_, col)) => *col = values,
            None => self.columns.push((name.to_string(), values)),
        }
        Ok(())
    }

    pub fn with(mut self, name: &str, values: Vec<f64>) -> Result<Self, EconError> {
        self.set(name, values)?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], EconError> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| EconError::MissingColumn(name.to_string()))
    }

    /// Dense group codes `0..levels` for an integer-valued column, assigned
    /// in ascending label order.
    pub fn labels(&self, name: &str) -> Result<(Vec<usize>, usize), EconError> {
        group_codes(name, self.column(name)?)
    }

    /// Rows where `keep` is true, in order.
    pub fn filter(&self, keep: &[bool]) -> Frame {
        let columns: Vec<(String, Vec<f64>)> = self
            .columns
            .iter()
            .map(|(n, v)| {
                (
                    n.clone(),
                    v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect(),
                )
            })
            .collect();
        Frame {
            n_rows: keep.iter().filter(|&&k| k).count(),
            columns,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        for i in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|(_, v)| v[i].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV whose cells are all numeric; empty cells become NaN.
    pub fn read_csv<R: Read>(reader: R) -> Result<Frame, EconError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, cell) in rec.iter().enumerate().take(names.len()) {
                let cell = cell.trim();
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| EconError::NonNumeric {
                        column: names[j].clone(),
                        line: line + 1,
                        value: cell.to_string(),
                    })?
                };
                cols[j].push(v);
            }
        }
        let mut frame = Frame::new();
        for (n, c) in names.iter().zip(cols) {
            frame.set(n, c)?;
        }
        Ok(frame)
    }
}

pub(crate) fn group_codes(name: &str, values: &[f64]) -> Result<(Vec<usize>, usize), EconError> {
    let mut levels: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(EconError::NonIntegerLabel(name.to_string()));
        }
        levels.insert(v as i64, 0);
    }
    for (code, slot) in levels.values_mut().enumerate() {
        *slot = code;
    }
    let codes = values.iter().map(|&v| levels[&(v as i64)]).collect();
    Ok((codes, levels.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_and_length_check() {
        let mut f = Frame::new().with("a", vec![1.0, 2.0]).unwrap();
        assert!(f.set("b", vec![1.0]).is_err());
        f.set("a", vec![3.0, 4.0]).unwrap();
        assert_eq!(f.column("a").unwrap(), &[3.0, 4.0]);
        assert!(matches!(f.column("z"), Err(EconError::MissingColumn(_))));
    }

    #[test]
    fn labels_are_dense_and_sorted() {
        let f = Frame::new().with("y", vec![2001.0, 1999.0, 2001.0]).unwrap();
        assert_eq!(f.labels("y").unwrap(), (vec![1, 0, 1], 2));
        let g = Frame::new().with("y", vec![1.5]).unwrap();
        assert!(g.labels("y").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let f = Frame::new()
            .with("a", vec![1.0, 0.1 + 0.2])
            .unwrap()
            .with("b", vec![f64::NAN, -3.0])
            .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = Frame::read_csv(&buf[..]).unwrap();
        assert_eq!(back.column("a").unwrap(), f.column("a").unwrap());
        assert!(back.column("b").unwrap()[0].is_nan());
    }
}
