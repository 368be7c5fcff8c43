use std::path::{Path, PathBuf};

use mgp_core::eval::{
    render_rank_summary, render_rate_table, render_summary_csv, Record, ResultsTable,
};

use crate::error::{Error, Result};
use crate::formats::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    /// `tables.txt` (one aligned table per rate) and `ranks.txt`.
    Text,
    /// `summary.csv`: per-cell mean and standard error.
    Csv,
    /// `records.jsonl`: one record per line.
    Jsonl,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Text, ReportFormat::Csv, ReportFormat::Jsonl];
}

pub fn render_tables(table: &ResultsTable) -> String {
    let rates = table.rates();
    if rates.is_empty() {
        return "method\n".into();
    }
    let mut out = String::new();
    for (k, rate) in rates.into_iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        out.push_str(&format!("# missing rate {rate}\n"));
        out.push_str(&render_rate_table(table, rate));
    }
    out
}

pub fn render_records(table: &ResultsTable) -> String {
    table
        .records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records contain only finite numbers") + "\n")
        .collect()
}

/// Writes the requested report files into `dir` and returns their paths.
pub fn emit_report(
    table: &ResultsTable,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Text => {
                put("tables.txt", render_tables(table))?;
                put("ranks.txt", render_rank_summary(table))?;
            }
            ReportFormat::Csv => put("summary.csv", render_summary_csv(table))?,
            ReportFormat::Jsonl => put("records.jsonl", render_records(table))?,
        }
    }
    Ok(written)
}

/// Reads a `records.jsonl` dump; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<ResultsTable> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let mut table = ResultsTable::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        table.insert(r);
    }
    Ok(table)
}
