//! Small helpers for the plain-text numeric files used by the dataset and cycle loaders.

use std::fs;
use std::path::Path;

use crate::error::{io_err, Error, Result};

/// A parsed data row together with its 1-based line number.
pub(crate) type Row = (usize, Vec<f64>);

/// Reads comma-separated numeric rows. Blank lines and `#` comments are
/// skipped. When `header` is true the first data line is returned separately
/// as raw cells.
pub(crate) fn read_rows(path: &Path, header: bool) -> Result<(Option<Vec<String>>, Vec<Row>)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_rows(path, &text, header)
}

pub(crate) fn parse_rows(
    path: &Path,
    text: &str,
    header: bool,
) -> Result<(Option<Vec<String>>, Vec<Row>)> {
    let mut head = None;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if header && head.is_none() && rows.is_empty() {
            head = Some(cells.iter().map(|c| c.to_string()).collect());
            continue;
        }
        let mut vals = Vec::with_capacity(cells.len());
        for cell in cells {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            vals.push(v);
        }
        rows.push((idx + 1, vals));
    }
    Ok((head, rows))
}

/// True when a line looks like a column header rather than data.
pub(crate) fn looks_like_header(line: &str) -> bool {
    line.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}
