//! Encoded datasets, train/test splitting, MCAR masking and z-scores.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{contract, Error, Result};
use crate::imputation::observed_column_means;
use crate::rng::seeded;
use crate::Mat;

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ColumnKind {
    Continuous,
    /// Indicator for one level of a categorical variable; members of a group
    /// share `group`.
    OneHot {
        group: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }
}

/// Per-column affine z-score parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population standard deviations with zero clamped to 1.
    pub stds: Vec<f64>,
    /// Standard deviations before the clamp.
    pub raw_stds: Vec<f64>,
}

/// Encoded numeric table; `NaN` marks a missing cell.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub values: Mat,
    pub columns: Vec<Column>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(values: Mat, columns: Vec<Column>) -> Result<Self> {
        if values.cols() != columns.len() {
            return Err(Error::Shape {
                op: "dataset columns",
                left: values.shape(),
                right: (values.rows(), columns.len()),
            });
        }
        Ok(Dataset {
            values,
            columns,
            standardization: None,
        })
    }

    /// All-continuous dataset with generated column names.
    pub fn from_matrix(values: Mat) -> Self {
        let columns = (0..values.cols())
            .map(|j| Column::continuous(alloc::format!("x{j}")))
            .collect();
        Dataset {
            values,
            columns,
            standardization: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            values: self.values.select_rows(idx),
            columns: self.columns.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Masking units: a continuous column on its own, or all members of a
    /// one-hot group together. Sorted by first column.
    pub fn units(&self) -> Vec<Vec<usize>> {
        let mut units: Vec<Vec<usize>> = Vec::new();
        let mut groups: Vec<(usize, usize)> = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            match c.kind {
                ColumnKind::Continuous => units.push(alloc::vec![j]),
                ColumnKind::OneHot { group } => match groups.iter().find(|(g, _)| *g == group) {
                    Some(&(_, u)) => units[u].push(j),
                    None => {
                        groups.push((group, units.len()));
                        units.push(alloc::vec![j]);
                    }
                },
            }
        }
        units
    }
}

/// Row permutation by `seed`; the first `⌈frac N⌉` rows form the training split.
pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(contract("train fraction must lie strictly between 0 and 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    // Guard against `0.7 * 10 = 7.000000000000001`.
    let n_train = (libm::ceil(train_frac * n as f64 - 1e-9) as usize).min(n);
    let test = order.split_off(n_train);
    Ok((order, test))
}

pub fn split(dataset: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(dataset.rows(), train_frac, seed)?;
    Ok((dataset.select_rows(&tr), dataset.select_rows(&te)))
}

/// A removed cell and the value it held.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MaskedCell {
    pub row: usize,
    pub col: usize,
    pub truth: f64,
}

/// Cells removed by MCAR injection, sorted by `(row, col)`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MissingMask {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<MaskedCell>,
    pub rate: f64,
    pub seed: u64,
}

impl MissingMask {
    pub fn empty(rows: usize, cols: usize, rate: f64, seed: u64) -> Self {
        MissingMask {
            rows,
            cols,
            cells: Vec::new(),
            rate,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Row-major `true` = removed.
    pub fn indicator(&self) -> Vec<bool> {
        let mut m = alloc::vec![false; self.rows * self.cols];
        for c in &self.cells {
            m[c.row * self.cols + c.col] = true;
        }
        m
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.cells
            .binary_search_by(|c| (c.row, c.col).cmp(&(row, col)))
            .is_ok()
    }

    fn check(&self, m: &Mat) -> Result<()> {
        if m.shape() != (self.rows, self.cols) {
            return Err(Error::Shape {
                op: "mask",
                left: m.shape(),
                right: (self.rows, self.cols),
            });
        }
        Ok(())
    }

    /// Blanks the masked cells.
    pub fn apply(&self, values: &Mat) -> Result<Mat> {
        self.check(values)?;
        let mut out = values.clone();
        for c in &self.cells {
            out[(c.row, c.col)] = f64::NAN;
        }
        Ok(out)
    }

    /// Writes the stored truth back into the masked cells.
    pub fn restore(&self, values: &Mat) -> Result<Mat> {
        self.check(values)?;
        let mut out = values.clone();
        for c in &self.cells {
            out[(c.row, c.col)] = c.truth;
        }
        Ok(out)
    }

    /// Dense matrix that holds the truth at masked cells and `NaN` elsewhere.
    pub fn truth_matrix(&self) -> Mat {
        let mut out = Mat::filled(self.rows, self.cols, f64::NAN);
        for c in &self.cells {
            out[(c.row, c.col)] = c.truth;
        }
        out
    }
}

/// Removes `round(rate · eligible)` units uniformly without replacement from
/// the currently observed units. Units that would leave a column with no
/// observed cell are swapped for other units.
pub fn inject_mcar(dataset: &Dataset, rate: f64, seed: u64) -> Result<MissingMask> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Injection(alloc::format!(
            "rate {rate} is outside [0, 1)"
        )));
    }
    if ![0.0, 0.1, 0.2, 0.3, 0.4]
        .iter()
        .any(|r| (r - rate).abs() < 1e-12)
    {
        log::warn!("missing rate {rate} is not one of 0.1, 0.2, 0.3, 0.4");
    }
    let x = &dataset.values;
    let (n, d) = x.shape();
    let units = dataset.units();
    // (row, unit) pairs whose cells are all observed
    let eligible: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..units.len()).map(move |u| (i, u)))
        .filter(|&(i, u)| units[u].iter().all(|&j| !x[(i, j)].is_nan()))
        .collect();
    let target = libm::round(rate * eligible.len() as f64) as usize;
    let mut mask = MissingMask::empty(n, d, rate, seed);
    if target == 0 {
        return Ok(mask);
    }
    let mut rng = seeded(seed);
    let mut chosen = alloc::vec![false; eligible.len()];
    for k in index::sample(&mut rng, eligible.len(), target) {
        chosen[k] = true;
    }
    // observed cells left per unit after masking
    let mut left: Vec<usize> = (0..units.len())
        .map(|u| (0..n).filter(|&i| !x[(i, units[u][0])].is_nan()).count())
        .collect();
    for (k, &(_, u)) in eligible.iter().enumerate() {
        if chosen[k] {
            left[u] -= 1;
        }
    }
    for u in 0..units.len() {
        while left[u] == 0 {
            let mine: Vec<usize> = (0..eligible.len())
                .filter(|&k| chosen[k] && eligible[k].1 == u)
                .collect();
            let spare: Vec<usize> = (0..eligible.len())
                .filter(|&k| !chosen[k] && eligible[k].1 != u && left[eligible[k].1] > 1)
                .collect();
            if mine.is_empty() || spare.is_empty() {
                return Err(Error::Injection(alloc::format!(
                    "cannot keep an observed cell in column {} at rate {rate}",
                    units[u][0]
                )));
            }
            let back = mine[rng.random_range(0..mine.len())];
            let swap = spare[rng.random_range(0..spare.len())];
            log::info!(
                "mcar: redrawing row {} of column {} to keep it observed",
                eligible[back].0,
                units[u][0]
            );
            chosen[back] = false;
            chosen[swap] = true;
            left[u] += 1;
            left[eligible[swap].1] -= 1;
        }
    }
    for (k, &(i, u)) in eligible.iter().enumerate() {
        if chosen[k] {
            for &j in &units[u] {
                mask.cells.push(MaskedCell {
                    row: i,
                    col: j,
                    truth: x[(i, j)],
                });
            }
        }
    }
    mask.cells.sort_by_key(|c| (c.row, c.col));
    Ok(mask)
}

/// Means and population standard deviations of the observed cells of `train`.
pub fn fit_standardization(train: &Mat) -> Standardization {
    let means = observed_column_means(train);
    let raw_stds: Vec<f64> = (0..train.cols())
        .map(|j| {
            let (s, k) = (0..train.rows())
                .map(|i| train[(i, j)])
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, k), v| {
                    (s + (v - means[j]) * (v - means[j]), k + 1)
                });
            if k == 0 {
                0.0
            } else {
                libm::sqrt(s / k as f64)
            }
        })
        .collect();
    let stds = raw_stds
        .iter()
        .map(|&s| if s > 0.0 { s } else { 1.0 })
        .collect();
    let means = means
        .into_iter()
        .map(|m| if m.is_nan() { 0.0 } else { m })
        .collect();
    Standardization {
        means,
        stds,
        raw_stds,
    }
}

impl Standardization {
    pub fn apply(&self, x: &Mat) -> Mat {
        Mat::from_fn(x.rows(), x.cols(), |i, j| {
            (x[(i, j)] - self.means[j]) / self.stds[j]
        })
    }

    pub fn invert(&self, z: &Mat) -> Mat {
        Mat::from_fn(z.rows(), z.cols(), |i, j| {
            z[(i, j)] * self.stds[j] + self.means[j]
        })
    }

    /// Standardises a single value of column `j`.
    pub fn apply_value(&self, j: usize, v: f64) -> f64 {
        (v - self.means[j]) / self.stds[j]
    }
}

/// Z-scores both splits with statistics from the observed training cells.
pub fn standardize(train: &Mat, test: &Mat) -> Result<(Mat, Mat, Standardization)> {
    if train.cols() != test.cols() {
        return Err(Error::Shape {
            op: "standardize",
            left: train.shape(),
            right: test.shape(),
        });
    }
    let s = fit_standardization(train);
    Ok((s.apply(train), s.apply(test), s))
}

pub fn unstandardize(z: &Mat, s: &Standardization) -> Mat {
    s.invert(z)
}
