//! CSV interchange: one instance per row, one label per column, no header.
//! Label files hold 0/1 integers; score files hold floats written with 17
//! significant digits so they read back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{MlcmError, Result};
use crate::types::{LabelMatrix, PredictionSet, ScoreMatrix};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MlcmError + '_ {
    move |source| MlcmError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses a dense numeric CSV. `path` is only used to label errors.
pub fn parse_dense<R: Read>(reader: R, path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, path))?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if rows == 0 {
            cols = record.len();
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| MlcmError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("`{field}` is not a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(MlcmError::EmptyMatrix("rows"));
    }
    if cols == 0 {
        return Err(MlcmError::EmptyMatrix("columns"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

fn csv_error(err: csv::Error, path: &Path) -> MlcmError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => MlcmError::RaggedRow {
            path: path.to_path_buf(),
            line: pos.map_or(line, |p| p.line()),
            expected: expected_len as usize,
            found: len as usize,
        },
        csv::ErrorKind::Io(source) => MlcmError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => MlcmError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_dense(file, path)
}

pub fn load_label_matrix(path: impl AsRef<Path>) -> Result<LabelMatrix> {
    let path = path.as_ref();
    LabelMatrix::from_dense(&read_dense(path)?, None)
}

/// Loads `m` prediction files in model order.
pub fn load_prediction_set<P: AsRef<Path>>(paths: &[P]) -> Result<PredictionSet> {
    let mut raw = Vec::with_capacity(paths.len());
    for p in paths {
        raw.push(read_dense(p.as_ref())?);
    }
    let (set, _) = crate::types::validate(&raw, None)?;
    Ok(set)
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreMatrix> {
    ScoreMatrix::new(read_dense(path.as_ref())?)
}

fn write_rows(path: &Path, rows: usize, cols: usize, cell: impl Fn(usize, usize) -> String) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for i in 0..rows {
        let line: Vec<String> = (0..cols).map(|j| cell(i, j)).collect();
        writeln!(out, "{}", line.join(",")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn save_scores(scores: &ScoreMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), scores.nrows(), scores.ncols(), |i, j| {
        format_score(scores[(i, j)])
    })
}

pub fn save_label_matrix(labels: &LabelMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), labels.nrows(), labels.ncols(), |i, j| {
        if labels.get(i, j) { "1" } else { "0" }.to_string()
    })
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// `dir/pred_{k}.csv` for `k = 1..=m`.
pub fn prediction_paths(dir: &Path, m: usize) -> Vec<PathBuf> {
    (1..=m).map(|k| dir.join(format!("pred_{k}.csv"))).collect()
}
