//! RMSE scoring, per-cell summaries, average ranks and the Nemenyi critical distance.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{contract, Error, Result};
use crate::Mat;

/// `sqrt(mean_d MSE_d)` over the dimensions with at least one masked cell,
/// where `MSE_d` averages the squared errors of dimension `d`'s masked cells.
pub fn rmse(truth: &Mat, imputed: &Mat, missing: &[bool]) -> Result<f64> {
    if truth.shape() != imputed.shape() {
        return Err(Error::Shape {
            op: "rmse",
            left: truth.shape(),
            right: imputed.shape(),
        });
    }
    if missing.len() != truth.len() {
        return Err(Error::Shape {
            op: "rmse mask",
            left: truth.shape(),
            right: (missing.len(), 1),
        });
    }
    let d = truth.cols();
    let mut sq = alloc::vec![0.0; d];
    let mut cnt = alloc::vec![0usize; d];
    for i in 0..truth.rows() {
        for j in 0..d {
            if missing[i * d + j] {
                let e = imputed[(i, j)] - truth[(i, j)];
                sq[j] += e * e;
                cnt[j] += 1;
            }
        }
    }
    let per_dim: Vec<f64> = (0..d)
        .filter(|&j| cnt[j] > 0)
        .map(|j| sq[j] / cnt[j] as f64)
        .collect();
    if per_dim.is_empty() {
        return Err(contract("rmse needs at least one masked cell"));
    }
    Ok(libm::sqrt(
        per_dim.iter().sum::<f64>() / per_dim.len() as f64,
    ))
}

/// One benchmark outcome.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Record {
    pub method: String,
    pub dataset: String,
    pub rate: f64,
    pub split: u64,
    pub rmse: f64,
    pub seconds: f64,
}

impl Record {
    fn key(&self) -> (&str, &str, u64, u64) {
        (&self.method, &self.dataset, self.rate.to_bits(), self.split)
    }
}

/// Mean and standard error of one (method, dataset, rate) cell over splits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over `√n`; `None` for a single split.
    pub stderr: Option<f64>,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        libm::sqrt(var) / libm::sqrt(n as f64)
    });
    Some(Summary { mean, stderr, n })
}

/// Records keyed by (method, dataset, rate, split); inserting an existing key replaces it.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResultsTable {
    pub records: Vec<Record>,
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

impl ResultsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: Record) {
        match self.records.iter_mut().find(|x| x.key() == r.key()) {
            Some(slot) => *slot = r,
            None => self.records.push(r),
        }
    }

    pub fn get(&self, method: &str, dataset: &str, rate: f64, split: u64) -> Option<&Record> {
        self.records
            .iter()
            .find(|r| r.key() == (method, dataset, rate.to_bits(), split))
    }

    /// Methods in first-seen order.
    pub fn methods(&self) -> Vec<String> {
        let mut v = Vec::new();
        for r in &self.records {
            push_unique(&mut v, r.method.clone());
        }
        v
    }

    pub fn datasets(&self) -> Vec<String> {
        let mut v = Vec::new();
        for r in &self.records {
            push_unique(&mut v, r.dataset.clone());
        }
        v
    }

    /// Rates in ascending order.
    pub fn rates(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for r in &self.records {
            push_unique(&mut v, r.rate);
        }
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn summary(&self, method: &str, dataset: &str, rate: f64) -> Option<Summary> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.method == method && r.dataset == dataset && r.rate == rate)
            .map(|r| r.rmse)
            .collect();
        summarize(&v)
    }
}

/// Ranks with ties sharing the average of their positions (1 = smallest).
pub fn average_rank_positions(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mean rank of every method over the (dataset, split, rate) cells, lower
/// RMSE ranked first. `rate = Some(r)` restricts to one missing rate.
pub fn average_ranks(
    table: &ResultsTable,
    methods: &[String],
    rate: Option<f64>,
) -> Result<Vec<(String, f64)>> {
    let mut cells: BTreeMap<(String, u64, u64), ()> = BTreeMap::new();
    for r in &table.records {
        if rate.is_none_or(|x| x == r.rate) && methods.contains(&r.method) {
            cells.insert((r.dataset.clone(), r.split, r.rate.to_bits()), ());
        }
    }
    let mut holes = Vec::new();
    let mut sums = alloc::vec![0.0; methods.len()];
    for (dataset, split, rate_bits) in cells.keys() {
        let rate = f64::from_bits(*rate_bits);
        let mut vals = Vec::with_capacity(methods.len());
        for m in methods {
            match table.get(m, dataset, rate, *split) {
                Some(r) if r.rmse.is_finite() => vals.push(r.rmse),
                _ => holes.push(format!("{m}/{dataset}/rate={rate}/split={split}")),
            }
        }
        if vals.len() == methods.len() {
            for (s, r) in sums.iter_mut().zip(average_rank_positions(&vals)) {
                *s += r;
            }
        }
    }
    if !holes.is_empty() {
        return Err(Error::Aggregation(format!(
            "missing records: {}",
            holes.join(", ")
        )));
    }
    if cells.is_empty() {
        return Err(Error::Aggregation("no records to rank".into()));
    }
    let n = cells.len() as f64;
    Ok(methods
        .iter()
        .cloned()
        .zip(sums.into_iter().map(|s| s / n))
        .collect())
}

/// Studentised range statistic divided by √2, `k = 2..=20`.
const Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];
const Q_10: [f64; 19] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.077, 3.120,
    3.159, 3.196, 3.230, 3.261, 3.291, 3.319,
];

/// `q_α(k) √(k(k+1) / 6N)` for `k` methods compared over `N` cells.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    let table = if alpha == 0.05 {
        &Q_05
    } else if alpha == 0.10 {
        &Q_10
    } else {
        return Err(contract(format!(
            "alpha {alpha} is not supported (0.05 or 0.10)"
        )));
    };
    if !(2..=20).contains(&k) {
        return Err(contract(format!("k = {k} methods is outside 2..=20")));
    }
    if n == 0 {
        return Err(contract("critical distance needs at least one dataset"));
    }
    let k_f = k as f64;
    Ok(table[k - 2] * libm::sqrt(k_f * (k_f + 1.0) / (6.0 * n as f64)))
}

fn fmt_summary(s: Option<Summary>) -> String {
    match s {
        Some(Summary {
            mean,
            stderr: Some(e),
            ..
        }) => format!("{mean:.2}({e:.2})"),
        Some(Summary {
            mean, stderr: None, ..
        }) => format!("{mean:.2}"),
        None => "-".into(),
    }
}

/// Methods × datasets RMSE table for one rate; the best mean per dataset is starred.
pub fn render_rate_table(table: &ResultsTable, rate: f64) -> String {
    let methods = table.methods();
    let datasets = table.datasets();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = alloc::vec![String::from("method")];
    header.extend(datasets.iter().cloned());
    rows.push(header);
    let best: Vec<Option<f64>> = datasets
        .iter()
        .map(|d| {
            methods
                .iter()
                .filter_map(|m| table.summary(m, d, rate).map(|s| s.mean))
                .min_by(f64::total_cmp)
        })
        .collect();
    for m in &methods {
        let mut row = alloc::vec![m.clone()];
        for (d, b) in datasets.iter().zip(&best) {
            let s = table.summary(m, d, rate);
            let mut cell = fmt_summary(s);
            if let (Some(s), Some(b)) = (s, b) {
                if s.mean == *b {
                    cell.push('*');
                }
            }
            row.push(cell);
        }
        rows.push(row);
    }
    align(&rows)
}

fn align(rows: &[Vec<String>]) -> String {
    let ncol = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncol)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// CSV of per-cell summaries: `method,dataset,rate,mean,stderr,n`.
pub fn render_summary_csv(table: &ResultsTable) -> String {
    let mut out = String::from("method,dataset,rate,mean,stderr,n\n");
    for rate in table.rates() {
        for m in table.methods() {
            for d in table.datasets() {
                if let Some(s) = table.summary(&m, &d, rate) {
                    let se = s.stderr.map(|e| format!("{e}")).unwrap_or_default();
                    let _ = writeln!(out, "{m},{d},{rate},{},{se},{}", s.mean, s.n);
                }
            }
        }
    }
    out
}

/// Average-rank listing with the critical distance at α = 0.05.
pub fn render_rank_summary(table: &ResultsTable) -> String {
    let methods = table.methods();
    let mut out = String::from("method  average_rank\n");
    if methods.len() < 2 {
        return out;
    }
    let mut sections: Vec<(String, Option<f64>)> = alloc::vec![(String::from("all rates"), None)];
    sections.extend(
        table
            .rates()
            .into_iter()
            .map(|r| (format!("rate {r}"), Some(r))),
    );
    for (title, rate) in sections {
        let _ = writeln!(out, "# {title}");
        match average_ranks(table, &methods, rate) {
            Ok(mut ranks) => {
                ranks.sort_by(|a, b| a.1.total_cmp(&b.1));
                for (m, r) in &ranks {
                    let _ = writeln!(out, "{m}  {r:.3}");
                }
                let n_cells = table
                    .records
                    .iter()
                    .filter(|r| rate.is_none_or(|x| x == r.rate))
                    .map(|r| (r.dataset.clone(), r.split))
                    .collect::<alloc::collections::BTreeSet<_>>()
                    .len();
                if let Ok(cd) = nemenyi_cd(methods.len(), n_cells, 0.05) {
                    let _ = writeln!(
                        out,
                        "critical distance (alpha=0.05, k={}, N={n_cells}): {cd:.3}",
                        methods.len()
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "ranks unavailable: {e}");
            }
        }
    }
    out
}
