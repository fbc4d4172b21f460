//! Feature and label files.
//!
//! Feature matrices are read from CSV (numeric, with at most one header row)
//! or from the binary layout
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `DMJC` |
//! | 2 | version, u16 LE (= 1) |
//! | 8 | rows, u64 LE |
//! | 8 | cols, u64 LE |
//! | 4·rows·cols | f32 LE, row-major |
//!
//! Files starting with the magic are read as binary; files named `*.bin` or
//! `*.dmjc` must carry it.

use std::io::Read;
use std::path::{Path, PathBuf};

use crate::numerics::Matrix;
use crate::pipeline::config::Normalization;

pub const MAGIC: &[u8; 4] = b"DMJC";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: missing DMJC magic bytes")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u16 },
    #[error("{path}: expected {expected} bytes of matrix data, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("{path}: line {line} has {found} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line}: cannot parse {field:?} as a number")]
    Parse {
        path: PathBuf,
        line: u64,
        field: String,
    },
    #[error("{path}: non-finite value at row {row}, column {col}")]
    NonFinite {
        path: PathBuf,
        row: usize,
        col: usize,
    },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error("{path}: CSV error: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Inconsistent(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a CSV or binary feature matrix.
pub fn load_feature_matrix(path: &Path) -> Result<Matrix, DataError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let binary_name = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("bin") | Some("dmjc")
    );
    if bytes.starts_with(MAGIC) {
        parse_binary(path, &bytes)
    } else if binary_name {
        Err(DataError::BadMagic {
            path: path.to_path_buf(),
        })
    } else {
        parse_csv(path, &bytes)
    }
}

fn parse_binary(path: &Path, bytes: &[u8]) -> Result<Matrix, DataError> {
    let truncated = |expected: u64| DataError::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len() as u64,
    };
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN as u64));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(DataError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[14..22].try_into().expect("8 bytes"));
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .and_then(|b| b.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| truncated(u64::MAX))?;
    if bytes.len() as u64 != expected {
        return Err(truncated(expected));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    if rows == 0 {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (idx, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(DataError::NonFinite {
                path: path.to_path_buf(),
                row: idx / cols.max(1),
                col: idx % cols.max(1),
            });
        }
        data.push(v as f64);
    }
    Ok(Matrix::new(rows, cols, data).expect("length and finiteness checked"))
}

fn parse_csv(path: &Path, bytes: &[u8]) -> Result<Matrix, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, &str> = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| f))
            .collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue,
            Err(field) => {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line,
                    field: field.to_string(),
                })
            }
        };
        let expected = *cols.get_or_insert(values.len());
        if values.len() != expected {
            return Err(DataError::RaggedRow {
                path: path.to_path_buf(),
                line,
                expected,
                found: values.len(),
            });
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                path: path.to_path_buf(),
                row: rows,
                col,
            });
        }
        data.extend(values);
        rows += 1;
    }
    match cols {
        Some(cols) if rows > 0 => Ok(Matrix::new(rows, cols, data).expect("checked")),
        _ => Err(DataError::Empty {
            path: path.to_path_buf(),
        }),
    }
}

/// Writes the binary layout. Values are stored as f32.
pub fn write_feature_binary(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Writes a headerless CSV; values use the shortest exact decimal form.
pub fn write_feature_csv(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let mut text = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Reads one integer label per line (first column), optional header.
pub fn load_labels(path: &Path) -> Result<Vec<usize>, DataError> {
    let mut file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let field = record.get(0).unwrap_or("");
        if field.is_empty() {
            continue;
        }
        match field.parse::<usize>() {
            Ok(l) => labels.push(l),
            Err(_) if idx == 0 => continue,
            Err(_) => {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: record.position().map_or(idx as u64 + 1, |p| p.line()),
                    field: field.to_string(),
                })
            }
        }
    }
    if labels.is_empty() {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(labels)
}

/// Labels with a `label` header.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), DataError> {
    std::fs::write(path, crate::pipeline::report::labels_csv(labels)).map_err(io_err(path))
}

/// Column-wise normalisation; constant columns map to 0.
pub fn normalize(m: &Matrix, how: Normalization) -> Matrix {
    let (n, d) = m.shape();
    match how {
        Normalization::None => m.clone(),
        Normalization::UnitInterval => {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for row in m.row_iter() {
                for c in 0..d {
                    lo[c] = lo[c].min(row[c]);
                    hi[c] = hi[c].max(row[c]);
                }
            }
            Matrix::from_fn(n, d, |r, c| {
                let span = hi[c] - lo[c];
                if span > 0.0 {
                    (m[(r, c)] - lo[c]) / span
                } else {
                    0.0
                }
            })
        }
        Normalization::Standardize => {
            let mean = m.column_means();
            let mut var = vec![0.0; d];
            for row in m.row_iter() {
                for c in 0..d {
                    let dev = row[c] - mean[(0, c)];
                    var[c] += dev * dev;
                }
            }
            let sd: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
            Matrix::from_fn(n, d, |r, c| {
                if sd[c] > 0.0 {
                    (m[(r, c)] - mean[(0, c)]) / sd[c]
                } else {
                    0.0
                }
            })
        }
    }
}
