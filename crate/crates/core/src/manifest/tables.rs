use std::collections::HashMap;
use std::io::{Read, Write};

use crate::stats::MosEntry;
use crate::Dimension;

pub const PREDICTIONS_HEADER: [&str; 3] = ["item_id", "dimension", "predicted_score"];
pub const MOS_HEADER: [&str; 5] = ["item_id", "dimension", "mos", "rater_count", "stddev_across_raters"];

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
}

fn csv_err(e: csv::Error) -> TableError {
    let line = e.position().map_or(0, |p| p.line());
    TableError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Model-predicted scores keyed by dimension and item id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    by_dimension: [HashMap<String, f64>; 3],
}

impl Predictions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item_id: impl Into<String>, dimension: Dimension, score: f64) -> Option<f64> {
        self.by_dimension[dimension.index()].insert(item_id.into(), score)
    }

    pub fn get(&self, item_id: &str, dimension: Dimension) -> Option<f64> {
        self.by_dimension[dimension.index()].get(item_id).copied()
    }

    pub fn len(&self) -> usize {
        self.by_dimension.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries sorted by (dimension, item_id).
    pub fn sorted(&self) -> Vec<(Dimension, &str, f64)> {
        let mut v: Vec<_> = Dimension::ALL
            .iter()
            .flat_map(|&d| {
                self.by_dimension[d.index()]
                    .iter()
                    .map(move |(id, s)| (d, id.as_str(), *s))
            })
            .collect();
        v.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        v
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), TableError> {
    let headers = rdr.headers().map_err(csv_err)?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(TableError::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64, TableError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(TableError::Parse {
            line,
            message: format!("{what} `{field}` is not a finite number"),
        }),
    }
}

fn parse_dim(field: &str, line: u64) -> Result<Dimension, TableError> {
    field
        .parse()
        .map_err(|e: crate::ParseDimensionError| TableError::Parse {
            line,
            message: e.to_string(),
        })
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Predictions, TableError> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &PREDICTIONS_HEADER)?;
    let mut out = Predictions::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let dim = parse_dim(&row[1], line)?;
        let score = parse_f64(&row[2], "predicted_score", line)?;
        if out.insert(&row[0], dim, score).is_some() {
            return Err(TableError::Parse {
                line,
                message: format!("duplicate prediction for `{}` ({dim})", &row[0]),
            });
        }
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(writer: W, predictions: &Predictions) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTIONS_HEADER).map_err(csv_err)?;
    for (d, id, s) in predictions.sorted() {
        w.write_record([id, d.as_str(), &s.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mos<R: Read>(reader: R) -> Result<Vec<MosEntry>, TableError> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &MOS_HEADER)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let rater_count: usize = row[3].parse().map_err(|_| TableError::Parse {
            line,
            message: format!("rater_count `{}` is not an integer", &row[3]),
        })?;
        out.push(MosEntry {
            item_id: row[0].to_string(),
            dimension: parse_dim(&row[1], line)?,
            mos: parse_f64(&row[2], "mos", line)?,
            rater_count,
            stddev_across_raters: parse_f64(&row[4], "stddev_across_raters", line)?,
        });
    }
    Ok(out)
}

/// Writes MOS rows at full precision (shortest round-trip formatting).
pub fn write_mos<'a, W: Write>(writer: W, entries: impl IntoIterator<Item = &'a MosEntry>) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MOS_HEADER).map_err(csv_err)?;
    for e in entries {
        w.write_record([
            e.item_id.as_str(),
            e.dimension.as_str(),
            &e.mos.to_string(),
            &e.rater_count.to_string(),
            &e.stddev_across_raters.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
