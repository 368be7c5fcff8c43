//! Plain-text file formats: completed matrices, uncertainty sidecars and masks.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! value read back has the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mgp_core::data::{MaskedCell, MissingMask, Standardization};
use mgp_core::imputation::ImputedCell;
use mgp_core::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MISSING: &str = "NA";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(Error::io(path))?))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = create(&tmp)?;
        w.write_all(contents).map_err(Error::io(&tmp))?;
        w.flush().map_err(Error::io(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(Error::io(path))
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        MISSING.into()
    } else {
        format!("{v:?}")
    }
}

fn parse_value(path: &Path, line: usize, column: usize, cell: &str) -> Result<f64> {
    if cell.is_empty() || cell == MISSING {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: format!("'{cell}' is not a number"),
    })
}

pub fn write_matrix_csv(path: &Path, header: &[String], m: &Mat) -> Result<()> {
    if header.len() != m.cols() {
        return Err(Error::Config(format!(
            "{} header names for {} columns",
            header.len(),
            m.cols()
        )));
    }
    let mut w = create(path)?;
    let io = Error::io(path);
    let mut body = String::new();
    body.push_str(&header.join(","));
    body.push('\n');
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_value(v)).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io)
}

/// Numeric CSV with a header row; `NA` and empty cells read as `NaN`.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Mat)> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut lines = BufReader::new(file).lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l
            .map_err(Error::io(path))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect(),
        None => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                column: 0,
                message: "missing header row".into(),
            })
        }
    };
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 2,
                column: cells.len(),
                message: format!("expected {} fields, found {}", header.len(), cells.len()),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            data.push(parse_value(path, k + 2, c + 1, cell)?);
        }
        rows += 1;
    }
    let cols = header.len();
    Ok((header, Mat::from_vec(rows, cols, data)))
}

/// One line per imputed cell: `row,col,column,mean,variance`, where mean and
/// variance summarise the predictive mixture. With `scale`, moments are
/// mapped back to raw units.
pub fn write_uncertainty_csv(
    path: &Path,
    names: &[String],
    cells: &[ImputedCell],
    scale: Option<&Standardization>,
) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("row,col,column,mean,variance\n");
    for c in cells {
        let (mut mean, mut var) = (c.mixture.mean(), c.mixture.variance());
        if let Some(s) = scale {
            mean = mean * s.stds[c.col] + s.means[c.col];
            var *= s.stds[c.col] * s.stds[c.col];
        }
        let name = names.get(c.col).map(String::as_str).unwrap_or("");
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            c.row,
            c.col,
            name,
            fmt_value(mean),
            fmt_value(var)
        ));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(Error::io(path))
}

/// First line of a mask file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub rate: f64,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    /// Fingerprint of the matrix the mask was drawn from.
    pub dataset: String,
}

/// A JSON header line, then `row,col,truth` triplets.
pub fn write_mask(path: &Path, mask: &MissingMask, dataset_fingerprint: &str) -> Result<()> {
    let header = MaskHeader {
        rate: mask.rate,
        seed: mask.seed,
        rows: mask.rows,
        cols: mask.cols,
        dataset: dataset_fingerprint.to_string(),
    };
    let mut body = serde_json::to_string(&header).map_err(Error::json(path))?;
    body.push_str("\nrow,col,truth\n");
    for c in &mask.cells {
        body.push_str(&format!("{},{},{:?}\n", c.row, c.col, c.truth));
    }
    let mut w = create(path)?;
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(Error::io(path))
}

pub fn read_mask(path: &Path) -> Result<(MaskHeader, MissingMask)> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let mut lines = text.lines();
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let header: MaskHeader = serde_json::from_str(lines.next().unwrap_or(""))
        .map_err(|e| parse_err(1, e.column(), format!("mask header: {e}")))?;
    if lines.next().map(str::trim) != Some("row,col,truth") {
        return Err(parse_err(2, 1, "expected 'row,col,truth'".into()));
    }
    let mut cells = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 3;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(parse_err(lineno, f.len(), "expected row,col,truth".into()));
        }
        let index = |c: usize| {
            f[c].parse::<usize>()
                .map_err(|_| parse_err(lineno, c + 1, format!("'{}' is not an index", f[c])))
        };
        let (row, col) = (index(0)?, index(1)?);
        if row >= header.rows || col >= header.cols {
            return Err(parse_err(
                lineno,
                1,
                format!(
                    "cell ({row}, {col}) outside {}x{}",
                    header.rows, header.cols
                ),
            ));
        }
        let truth = f[2]
            .parse::<f64>()
            .map_err(|_| parse_err(lineno, 3, format!("'{}' is not a number", f[2])))?;
        cells.push(MaskedCell { row, col, truth });
    }
    cells.sort_by_key(|c| (c.row, c.col));
    let mask = MissingMask {
        rows: header.rows,
        cols: header.cols,
        cells,
        rate: header.rate,
        seed: header.seed,
    };
    Ok((header, mask))
}
