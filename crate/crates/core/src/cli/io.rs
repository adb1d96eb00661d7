//! CSV ingestion and CSV/JSON emission.
//!
//! Input CSVs need a header row; lines starting with `#` are skipped, so the
//! files this crate writes can be read back. Every output starts with a
//! provenance record.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment_line(&self) -> String {
        format!(
            "# selbayes v{} config_sha256={} seed={}",
            self.version, self.config_sha256, self.seed
        )
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    lines: Vec<usize>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| parse_err(path, 0, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(path, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push(rec.iter().map(str::to_string).collect());
        lines.push(line);
    }
    Ok(RawTable { header, rows, lines })
}

fn parse_number(path: &Path, line: usize, column: &str, text: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| parse_err(path, line, format!("column {column:?}: {text:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("column {column:?}: non-finite value")));
    }
    Ok(v)
}

/// Numeric table with one row per sample; returns column labels and values.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let t = read_table(path)?;
    if t.rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let mut m = DMatrix::zeros(t.rows.len(), t.header.len());
    for (i, row) in t.rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            m[(i, j)] = parse_number(path, t.lines[i], &t.header[j], cell)?;
        }
    }
    Ok((t.header, m))
}

/// A single outcome column: the only column, or the named one.
pub fn read_vector(path: &Path, column: Option<&str>) -> Result<(String, DVector<f64>)> {
    let (labels, m) = read_matrix(path)?;
    let j = match column {
        Some(name) => labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| parse_err(path, 1, format!("no column named {name:?}")))?,
        None if labels.len() == 1 => 0,
        None => {
            return Err(parse_err(
                path,
                1,
                format!("{} columns found; name the outcome column", labels.len()),
            ))
        }
    };
    Ok((labels[j].clone(), m.column(j).into_owned()))
}

/// Table whose first column holds row labels (genes), remaining columns
/// numeric with sample labels in the header.
pub fn read_labeled_matrix(path: &Path) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let t = read_table(path)?;
    if t.header.len() < 2 {
        return Err(parse_err(path, 1, "need a label column and at least one value column"));
    }
    if t.rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let cols = t.header[1..].to_vec();
    let mut rows = Vec::with_capacity(t.rows.len());
    let mut m = DMatrix::zeros(t.rows.len(), cols.len());
    for (i, row) in t.rows.iter().enumerate() {
        rows.push(row[0].clone());
        for j in 0..cols.len() {
            m[(i, j)] = parse_number(path, t.lines[i], &cols[j], &row[j + 1])?;
        }
    }
    Ok((rows, cols, m))
}

/// Two-column long table `(key, value)` grouped by key in order of first
/// appearance.
pub fn read_grouped_values(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let t = read_table(path)?;
    if t.header.len() != 2 {
        return Err(parse_err(path, 1, "expected exactly two columns: id, value"));
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (row, &line) in t.rows.iter().zip(&t.lines) {
        let v = parse_number(path, line, &t.header[1], &row[1])?;
        match groups.iter_mut().find(|(k, _)| k == &row[0]) {
            Some((_, vals)) => vals.push(v),
            None => groups.push((row[0].clone(), vec![v])),
        }
    }
    Ok(groups)
}

/// Two-column long table `(set, member)` of strings, grouped by set.
pub fn read_grouped_labels(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let t = read_table(path)?;
    if t.header.len() != 2 {
        return Err(parse_err(path, 1, "expected exactly two columns: set, gene"));
    }
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for row in &t.rows {
        match groups.iter_mut().find(|(k, _)| k == &row[0]) {
            Some((_, vals)) => vals.push(row[1].clone()),
            None => groups.push((row[0].clone(), vec![row[1].clone()])),
        }
    }
    Ok(groups)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_csv(path: &Path, prov: &Provenance, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", prov.comment_line())?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| parse_err(path, 0, format!("cannot open: {e}")))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| parse_err(path, e.line(), e.to_string()))
}
