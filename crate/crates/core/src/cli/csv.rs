//! Strict numeric CSV: comma separated, LF line endings, no quoting, an
//! optional single header row recognised by a non-numeric first row.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DesignMatrix;

pub fn load_csv_matrix(path: impl AsRef<Path>) -> Result<DesignMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_matrix(&text, path)
}

/// Loads a single-column response file.
pub fn load_csv_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let m = load_csv_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::invalid(format!(
            "{}: expected one column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(m.as_slice().to_vec())
}

pub fn parse_csv_matrix(text: &str, path: &Path) -> Result<DesignMatrix> {
    let mut lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(Error::invalid(format!("{}: file is empty", path.display())));
    }

    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let first: Vec<&str> = lines[0].split(',').collect();
    let header = first.iter().any(|c| parse_cell(c).is_none());
    let width = first.len();
    let body_start = usize::from(header);

    let mut data = Vec::with_capacity((lines.len() - body_start) * width);
    for (offset, line) in lines[body_start..].iter().enumerate() {
        let lineno = body_start + offset + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(parse_err(
                lineno,
                format!("expected {width} fields, found {}", cells.len()),
            ));
        }
        for (j, cell) in cells.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| {
                parse_err(
                    lineno,
                    format!("column {}: '{}' is not a finite number", j + 1, cell.trim()),
                )
            })?;
            data.push(v);
        }
    }
    let n = data.len() / width;
    DesignMatrix::from_row_major(n, width, data)
}

fn parse_cell(cell: &str) -> Option<f64> {
    let t = cell.trim();
    // `f64::from_str` accepts "inf" and "NaN"; only plain decimal numbers are allowed here
    if t.is_empty()
        || t.chars()
            .any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
    {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv_matrix<W: Write>(out: &mut W, x: &DesignMatrix) -> std::io::Result<()> {
    let mut line = String::new();
    for row in x.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            let _ = write!(line, "{}", fmt_f64(*v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}
