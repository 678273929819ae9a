//! CSV ingestion for observational tables, and CSV export of datasets.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{KarError, Result};

/// Maps file columns onto the roles of a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub treatment: String,
    pub outcome: String,
    pub anchors: Vec<String>,
    #[serde(default)]
    pub group: Option<String>,
    /// Columns replaced by their natural log at ingestion.
    #[serde(default)]
    pub log: Vec<String>,
    /// Group value used as the training subpopulation by the real-data protocol.
    #[serde(default)]
    pub train_group: Option<String>,
}

impl ColumnSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KarError::Parse {
            what: "column schema",
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    fn numeric_columns(&self) -> Vec<&str> {
        let mut cols = vec![self.treatment.as_str(), self.outcome.as_str()];
        cols.extend(self.anchors.iter().map(String::as_str));
        cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(KarError::invalid("schema needs at least one anchor column"));
        }
        let mut all = self.numeric_columns();
        all.extend(self.group.as_deref());
        let mut seen = HashSet::new();
        for name in &all {
            if !seen.insert(*name) {
                return Err(KarError::invalid(format!("column '{name}' used twice in schema")));
            }
        }
        let numeric = self.numeric_columns();
        if let Some(bad) = self.log.iter().find(|c| !numeric.contains(&c.as_str())) {
            return Err(KarError::invalid(format!("log flag on unmapped column '{bad}'")));
        }
        if self.train_group.is_some() && self.group.is_none() {
            return Err(KarError::invalid("train_group given without a group column"));
        }
        Ok(())
    }
}

/// Result of [`load_csv`]: the dataset and what was dropped on the way.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub data: Dataset,
    /// Rows with an empty, `NA` or non-numeric cell in a mapped column.
    pub dropped_missing: usize,
    /// Rows with a nonpositive value in a log-flagged column.
    pub dropped_nonpositive: usize,
}

impl LoadedCsv {
    pub fn dropped(&self) -> usize {
        self.dropped_missing + self.dropped_nonpositive
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

enum Row {
    Kept(Vec<f64>, Option<String>),
    Missing,
    Nonpositive,
}

/// Reads a comma-separated file with a header row.
///
/// Rows are dropped (never imputed) and counted; a malformed row (wrong
/// field count, invalid UTF-8) is an error.
pub fn load_csv(path: &Path, schema: &ColumnSchema) -> Result<LoadedCsv> {
    schema.validate()?;
    if !path.exists() {
        return Err(KarError::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| KarError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |e: csv::Error| KarError::Parse {
        what: "CSV",
        location: match e.position() {
            Some(p) => format!("{} line {}", path.display(), p.line()),
            None => path.display().to_string(),
        },
        message: e.to_string(),
    };
    let header = reader.headers().map_err(parse_err)?.clone();
    let locate = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| KarError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let numeric: Vec<(usize, bool)> = schema
        .numeric_columns()
        .into_iter()
        .map(|name| Ok((locate(name)?, schema.log.iter().any(|l| l == name))))
        .collect::<Result<_>>()?;
    let group_col = schema.group.as_deref().map(locate).transpose()?;

    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut groups = Vec::new();
    let (mut dropped_missing, mut dropped_nonpositive) = (0, 0);
    for record in reader.records() {
        let record = record.map_err(parse_err)?;
        let row = classify(&record, &numeric, group_col);
        match row {
            Row::Kept(v, g) => {
                values.push(v);
                groups.extend(g);
            }
            Row::Missing => dropped_missing += 1,
            Row::Nonpositive => dropped_nonpositive += 1,
        }
    }
    if values.is_empty() {
        return Err(KarError::NoRows {
            path: path.to_path_buf(),
            dropped: dropped_missing + dropped_nonpositive,
        });
    }

    let n = values.len();
    let dz = schema.anchors.len();
    let x = DMatrix::from_fn(n, 1, |i, _| values[i][0]);
    let y = DVector::from_fn(n, |i, _| values[i][1]);
    let z = DMatrix::from_fn(n, dz, |i, j| values[i][2 + j]);
    let mut data = Dataset::new(x, y, z)?;
    if group_col.is_some() {
        data = data.with_group(groups)?;
    }
    Ok(LoadedCsv {
        data,
        dropped_missing,
        dropped_nonpositive,
    })
}

fn classify(record: &csv::StringRecord, numeric: &[(usize, bool)], group_col: Option<usize>) -> Row {
    let mut out = Vec::with_capacity(numeric.len());
    let mut nonpositive = false;
    for &(col, log) in numeric {
        let cell = record.get(col).unwrap_or("");
        if is_missing(cell) {
            return Row::Missing;
        }
        let Ok(v) = cell.parse::<f64>() else {
            return Row::Missing;
        };
        if !v.is_finite() {
            return Row::Missing;
        }
        if log {
            if v <= 0.0 {
                nonpositive = true;
                continue;
            }
            out.push(v.ln());
        } else {
            out.push(v);
        }
    }
    let group = match group_col {
        Some(col) => {
            let cell = record.get(col).unwrap_or("");
            if is_missing(cell) {
                return Row::Missing;
            }
            Some(cell.to_string())
        }
        None => None,
    };
    if nonpositive {
        Row::Nonpositive
    } else {
        Row::Kept(out, group)
    }
}

fn column_names(prefix: &str, d: usize) -> Vec<String> {
    if d == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=d).map(|j| format!("{prefix}{j}")).collect()
    }
}

/// Writes `x…, y, z…[, group]` with full round-trip float precision.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = column_names("x", data.x_dim());
    header.push("y".into());
    header.extend(column_names("z", data.z_dim()));
    if data.group().is_some() {
        header.push("group".into());
    }
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.x().row(i).iter().map(|v| format!("{v:?}")).collect();
        row.push(format!("{:?}", data.y()[i]));
        row.extend(data.z().row(i).iter().map(|v| format!("{v:?}")));
        if let Some(g) = data.group() {
            row.push(g[i].clone());
        }
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| KarError::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> KarError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => KarError::io(path, io),
        other => KarError::Parse {
            what: "CSV output",
            location: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}
