//! Gaussian-mixture predictions for missing cells.

use alloc::vec::Vec;

use crate::Mat;

/// Equally weighted mixture of one-dimensional Gaussians.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianMixture {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn single(mean: f64, variance: f64) -> Self {
        GaussianMixture {
            means: alloc::vec![mean],
            variances: alloc::vec![variance],
        }
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }

    /// Law of total variance: mean component variance plus variance of the means.
    pub fn variance(&self) -> f64 {
        let k = self.means.len() as f64;
        let mu = self.mean();
        let within = self.variances.iter().sum::<f64>() / k;
        let between = self.means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / k;
        within + between
    }
}

/// Predictive distribution for one missing cell.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImputedCell {
    pub row: usize,
    pub col: usize,
    pub mixture: GaussianMixture,
}

/// Completed matrix plus a mixture per missing cell. Observed cells of the
/// input are copied through unchanged and have no entry in `cells`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImputationResult {
    pub completed: Mat,
    pub cells: Vec<ImputedCell>,
}

impl ImputationResult {
    /// Builds the result from the incomplete input and per-cell mixtures.
    /// Missing cells without a mixture keep `fallback[col]`.
    pub fn assemble(input: &Mat, mut cells: Vec<ImputedCell>, fallback: &[f64]) -> Self {
        cells.sort_by_key(|c| (c.row, c.col));
        let mut completed = input.clone();
        for i in 0..input.rows() {
            for j in 0..input.cols() {
                if input[(i, j)].is_nan() {
                    completed[(i, j)] = fallback[j];
                }
            }
        }
        for c in &cells {
            completed[(c.row, c.col)] = c.mixture.mean();
        }
        ImputationResult { completed, cells }
    }
}

/// Per-column mean of the non-missing entries (`NaN` for an all-missing column).
pub fn observed_column_means(data: &Mat) -> Vec<f64> {
    (0..data.cols())
        .map(|j| {
            let (s, n) = (0..data.rows())
                .map(|i| data[(i, j)])
                .filter(|x| !x.is_nan())
                .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            if n == 0 {
                f64::NAN
            } else {
                s / n as f64
            }
        })
        .collect()
}

/// Replaces `NaN` cells by `fill[col]`.
pub fn fill_missing(data: &Mat, fill: &[f64]) -> Mat {
    Mat::from_fn(data.rows(), data.cols(), |i, j| {
        let x = data[(i, j)];
        if x.is_nan() {
            fill[j]
        } else {
            x
        }
    })
}

/// `1.0` for observed cells, `0.0` for missing ones.
pub fn observed_indicator(data: &Mat) -> Mat {
    data.map(|x| if x.is_nan() { 0.0 } else { 1.0 })
}
