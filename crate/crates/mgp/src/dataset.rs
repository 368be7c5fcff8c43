//! CSV ingestion with a JSON column schema.
//!
//! A schema lists every CSV column in order:
//!
//! ```json
//! { "name": "parkinson",
//!   "columns": [ { "name": "id", "kind": "ignore" },
//!                { "name": "jitter", "kind": "continuous" },
//!                { "name": "class", "kind": "categorical" } ] }
//! ```
//!
//! Empty cells and `NA` are missing. Categorical columns become one indicator
//! column per observed level; a missing categorical value blanks the whole group.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use mgp_core::data::{Column, ColumnKind, Dataset};
use mgp_core::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Continuous,
    Categorical,
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    /// Matched case-insensitively against [`KNOWN_DATASETS`].
    #[serde(default)]
    pub name: Option<String>,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        serde_json::from_str(&text).map_err(Error::json(path))
    }

    /// Every header column continuous.
    pub fn all_continuous(header: &[String]) -> Schema {
        Schema {
            name: None,
            columns: header
                .iter()
                .map(|h| ColumnSpec {
                    name: h.clone(),
                    kind: ColumnRole::Continuous,
                })
                .collect(),
        }
    }
}

/// Size of a benchmark dataset as published: rows and attributes before encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnownDataset {
    pub name: &'static str,
    pub rows: usize,
    pub features: usize,
}

pub const KNOWN_DATASETS: [KnownDataset; 5] = [
    KnownDataset {
        name: "protein",
        rows: 45_730,
        features: 10,
    },
    KnownDataset {
        name: "keggd",
        rows: 53_414,
        features: 23,
    },
    KnownDataset {
        name: "keggud",
        rows: 65_554,
        features: 28,
    },
    KnownDataset {
        name: "parkinson",
        rows: 1_040,
        features: 24,
    },
    KnownDataset {
        name: "totalbrainvolume",
        rows: 867,
        features: 31,
    },
];

pub fn known_dataset(name: &str) -> Option<KnownDataset> {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    KNOWN_DATASETS.iter().copied().find(|k| k.name == key)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeReport {
    pub expected: KnownDataset,
    pub rows: usize,
    pub features: usize,
}

impl SizeReport {
    pub fn matches(&self) -> bool {
        self.rows == self.expected.rows && self.features == self.expected.features
    }
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub name: String,
    pub dataset: Dataset,
    /// Attributes before one-hot encoding (ignored columns excluded).
    pub features: usize,
    pub size_report: Option<SizeReport>,
    /// Hash of the encoded values and column names.
    pub fingerprint: String,
    pub source: PathBuf,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Categorical levels sort numerically when every level parses as a number.
fn sorted_levels(values: &BTreeSet<String>) -> Vec<String> {
    let mut levels: Vec<String> = values.iter().cloned().collect();
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        levels = pairs.into_iter().map(|p| p.1).collect();
    }
    levels
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(Error::io(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column: len as usize,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads `path` under `schema`; with no schema every column is continuous.
pub fn load_csv(path: &Path, schema: Option<&Schema>) -> Result<LoadedDataset> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let owned;
    let schema = match schema {
        Some(s) => s,
        None => {
            owned = Schema::all_continuous(&header);
            &owned
        }
    };
    if schema.columns.len() != header.len() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!(
                "schema declares {} columns, file has {}",
                schema.columns.len(),
                header.len()
            ),
        });
    }
    for (spec, h) in schema.columns.iter().zip(&header) {
        if spec.name != *h {
            log::warn!(
                "{}: header '{h}' does not match schema name '{}'",
                path.display(),
                spec.name
            );
        }
    }

    let mut raw: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        raw.push(rec.iter().map(str::to_string).collect());
    }
    let n = raw.len();

    let mut columns: Vec<Column> = Vec::new();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    let mut group = 0;
    let mut features = 0;
    for (c, spec) in schema.columns.iter().enumerate() {
        match spec.kind {
            ColumnRole::Ignore => {}
            ColumnRole::Continuous => {
                features += 1;
                let mut col = Vec::with_capacity(n);
                for (i, row) in raw.iter().enumerate() {
                    let cell = row[c].as_str();
                    if is_missing(cell) {
                        col.push(f64::NAN);
                        continue;
                    }
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => col.push(v),
                        _ => {
                            return Err(Error::Parse {
                                path: path.to_path_buf(),
                                line: i + 2,
                                column: c + 1,
                                message: format!(
                                    "'{cell}' is not a finite number in continuous column '{}'",
                                    spec.name
                                ),
                            })
                        }
                    }
                }
                columns.push(Column::continuous(spec.name.clone()));
                blocks.push(col);
            }
            ColumnRole::Categorical => {
                features += 1;
                let seen: BTreeSet<String> = raw
                    .iter()
                    .map(|r| r[c].clone())
                    .filter(|v| !is_missing(v))
                    .collect();
                for level in sorted_levels(&seen) {
                    let col = raw
                        .iter()
                        .map(|r| {
                            let v = r[c].as_str();
                            if is_missing(v) {
                                f64::NAN
                            } else if v == level {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    columns.push(Column {
                        name: format!("{}={level}", spec.name),
                        kind: ColumnKind::OneHot { group },
                    });
                    blocks.push(col);
                }
                group += 1;
            }
        }
    }
    let values = Mat::from_fn(n, blocks.len(), |i, j| blocks[j][i]);
    let dataset = Dataset::new(values, columns)?;

    let name = schema.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let size_report = known_dataset(&name).map(|expected| SizeReport {
        expected,
        rows: n,
        features,
    });
    if let Some(r) = &size_report {
        if r.matches() {
            log::info!("{name}: {n} rows, {features} attributes as published");
        } else {
            log::warn!(
                "{name}: {n} rows and {features} attributes, published size is {} rows and {} attributes",
                r.expected.rows,
                r.expected.features
            );
        }
    }
    let fingerprint = fingerprint::dataset(&dataset);
    Ok(LoadedDataset {
        name,
        dataset,
        features,
        size_report,
        fingerprint,
        source: path.to_path_buf(),
    })
}
