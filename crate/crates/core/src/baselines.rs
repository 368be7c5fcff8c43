//! Non-GP imputers: column mean, column median, k-nearest neighbours and
//! deterministic chained linear regressions (MICE).

use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::imputation::{fill_missing, observed_column_means};
use crate::tensorgrad::linalg::{lstsq_qr, ridge};
use crate::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BaselineKind {
    Mean,
    Median,
    Knn,
    Mice,
}

/// State fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FittedImputer {
    Mean(Vec<f64>),
    Median(Vec<f64>),
    Knn {
        train: Mat,
        k: usize,
    },
    /// `coefficients[j]` is `[intercept, β…]` over the other columns, empty
    /// when there is only one column.
    Mice {
        means: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        rounds: usize,
    },
}

fn require_observed(stats: &[f64]) -> Result<()> {
    match stats.iter().position(|m| m.is_nan()) {
        Some(j) => Err(contract(alloc::format!(
            "column {j} has no observed training values"
        ))),
        None => Ok(()),
    }
}

/// Median of the observed cells of each column.
pub fn observed_column_medians(data: &Mat) -> Vec<f64> {
    (0..data.cols())
        .map(|j| {
            let mut v: Vec<f64> = data.col(j).into_iter().filter(|x| !x.is_nan()).collect();
            if v.is_empty() {
                return f64::NAN;
            }
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        })
        .collect()
}

pub fn fit_mean(train: &Mat) -> Result<FittedImputer> {
    let m = observed_column_means(train);
    require_observed(&m)?;
    Ok(FittedImputer::Mean(m))
}

pub fn fit_median(train: &Mat) -> Result<FittedImputer> {
    let m = observed_column_medians(train);
    require_observed(&m)?;
    Ok(FittedImputer::Median(m))
}

fn check_width(expected: usize, data: &Mat) -> Result<()> {
    if data.cols() != expected {
        return Err(Error::Shape {
            op: "imputer input",
            left: data.shape(),
            right: (data.rows(), expected),
        });
    }
    Ok(())
}

impl FittedImputer {
    pub fn kind(&self) -> BaselineKind {
        match self {
            FittedImputer::Mean(_) => BaselineKind::Mean,
            FittedImputer::Median(_) => BaselineKind::Median,
            FittedImputer::Knn { .. } => BaselineKind::Knn,
            FittedImputer::Mice { .. } => BaselineKind::Mice,
        }
    }

    /// Completes `data`; observed cells are copied unchanged.
    pub fn transform(&self, data: &Mat) -> Result<Mat> {
        match self {
            FittedImputer::Mean(s) | FittedImputer::Median(s) => {
                check_width(s.len(), data)?;
                Ok(fill_missing(data, s))
            }
            FittedImputer::Knn { train, k } => knn_impute(train, data, *k),
            FittedImputer::Mice {
                means,
                coefficients,
                rounds,
            } => {
                check_width(coefficients.len(), data)?;
                Ok(apply_mice(data, means, coefficients, *rounds))
            }
        }
    }
}

/// Mean-imputes train and test with the training column means.
pub fn fit_transform_mean(train: &Mat, test: &Mat) -> Result<(Mat, Mat)> {
    let f = fit_mean(train)?;
    Ok((f.transform(train)?, f.transform(test)?))
}

/// Median-imputes train and test with the training column medians.
pub fn fit_transform_median(train: &Mat, test: &Mat) -> Result<(Mat, Mat)> {
    let f = fit_median(train)?;
    Ok((f.transform(train)?, f.transform(test)?))
}

/// Distance over coordinates observed in both rows, scaled up by
/// `D / shared` so rows with fewer shared coordinates are comparable.
/// `None` when the rows share no coordinate.
pub fn pairwise_observed_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (x, y) in a.iter().zip(b) {
        if !x.is_nan() && !y.is_nan() {
            sum += (x - y) * (x - y);
            shared += 1;
        }
    }
    (shared > 0).then(|| libm::sqrt(sum * a.len() as f64 / shared as f64))
}

/// Fills each missing cell of `query` with the average of that attribute over
/// the `k` nearest training rows observing it (ties by lower row index).
pub fn knn_impute(train: &Mat, query: &Mat, k: usize) -> Result<Mat> {
    if k == 0 {
        return Err(contract("knn needs k >= 1"));
    }
    check_width(train.cols(), query)?;
    let fallback = observed_column_means(train);
    let mut out = query.clone();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.rows());
    for q in 0..query.rows() {
        let row = query.row(q);
        if !row.iter().any(|x| x.is_nan()) {
            continue;
        }
        dist.clear();
        // rows sharing no observed coordinate with the query are not neighbours
        dist.extend(
            (0..train.rows())
                .filter_map(|t| pairwise_observed_distance(row, train.row(t)).map(|d| (d, t))),
        );
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for j in 0..query.cols() {
            if !row[j].is_nan() {
                continue;
            }
            let picked: Vec<f64> = dist
                .iter()
                .map(|&(_, t)| train[(t, j)])
                .filter(|v| !v.is_nan())
                .take(k)
                .collect();
            out[(q, j)] = if picked.is_empty() {
                log::warn!(
                    "knn: no comparable training row observes column {j}; using the column mean"
                );
                fallback[j]
            } else {
                picked.iter().sum::<f64>() / picked.len() as f64
            };
            if out[(q, j)].is_nan() {
                return Err(contract(alloc::format!(
                    "column {j} has no observed training values"
                )));
            }
        }
    }
    Ok(out)
}

pub fn fit_knn(train: &Mat, k: usize) -> Result<FittedImputer> {
    if k == 0 {
        return Err(contract("knn needs k >= 1"));
    }
    Ok(FittedImputer::Knn {
        train: train.clone(),
        k,
    })
}

fn design(completed: &Mat, rows: &[usize], target: usize) -> Mat {
    let d = completed.cols();
    Mat::from_fn(rows.len(), d, |r, c| {
        if c == 0 {
            1.0
        } else {
            let src = if c - 1 < target { c - 1 } else { c };
            completed[(rows[r], src)]
        }
    })
}

fn predict(coef: &[f64], row: &[f64], target: usize) -> f64 {
    let mut y = coef[0];
    let mut c = 1;
    for (j, &x) in row.iter().enumerate() {
        if j != target {
            y += coef[c] * x;
            c += 1;
        }
    }
    y
}

fn fit_column(completed: &Mat, observed_rows: &[usize], col: usize, y: &[f64]) -> Result<Vec<f64>> {
    let x = design(completed, observed_rows, col);
    match lstsq_qr(&x, y) {
        Some(b) => Ok(b),
        None => {
            log::debug!("mice: rank-deficient design for column {col}; using ridge 1e-6");
            ridge(&x, y, 1e-6)
        }
    }
}

/// Per-round residual RMSE on observed training cells, recorded by MICE.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MiceTrace {
    pub residual_rmse: Vec<f64>,
}

/// Chained linear regressions. Each round regresses every missing-bearing
/// column (in index order) on all other columns of the current completed
/// training matrix, using the rows where that column is observed, and
/// re-predicts its missing cells in both splits.
pub fn mice_impute(train: &Mat, test: &Mat, rounds: usize) -> Result<(Mat, Mat, MiceTrace)> {
    if rounds == 0 {
        return Err(contract("mice needs at least one round"));
    }
    check_width(train.cols(), test)?;
    let d = train.cols();
    let means = observed_column_means(train);
    require_observed(&means)?;
    let mut tr = fill_missing(train, &means);
    let mut te = fill_missing(test, &means);
    if d < 2 {
        return Ok((tr, te, MiceTrace::default()));
    }
    let has_missing = |m: &Mat, j: usize| (0..m.rows()).any(|i| m[(i, j)].is_nan());
    let targets: Vec<usize> = (0..d)
        .filter(|&j| has_missing(train, j) || has_missing(test, j))
        .collect();
    let mut trace = MiceTrace::default();
    for _ in 0..rounds {
        let (mut sq, mut cnt) = (0.0, 0usize);
        for &j in &targets {
            let rows: Vec<usize> = (0..train.rows())
                .filter(|&i| !train[(i, j)].is_nan())
                .collect();
            let y: Vec<f64> = rows.iter().map(|&i| train[(i, j)]).collect();
            let coef = fit_column(&tr, &rows, j, &y)?;
            for (&i, &yi) in rows.iter().zip(&y) {
                let r = predict(&coef, tr.row(i), j) - yi;
                sq += r * r;
                cnt += 1;
            }
            for i in 0..train.rows() {
                if train[(i, j)].is_nan() {
                    tr[(i, j)] = predict(&coef, tr.row(i), j);
                }
            }
            for i in 0..test.rows() {
                if test[(i, j)].is_nan() {
                    te[(i, j)] = predict(&coef, te.row(i), j);
                }
            }
        }
        trace.residual_rmse.push(if cnt == 0 {
            0.0
        } else {
            libm::sqrt(sq / cnt as f64)
        });
    }
    Ok((tr, te, trace))
}

/// Fits MICE on `train` alone, then regresses every column on the completed
/// training matrix so that inputs may be missing anywhere.
pub fn fit_mice(train: &Mat, rounds: usize) -> Result<FittedImputer> {
    let empty = Mat::zeros(0, train.cols());
    let (completed, _, _) = mice_impute(train, &empty, rounds)?;
    let d = train.cols();
    let means = observed_column_means(train);
    let mut coefficients = alloc::vec![Vec::new(); d];
    for j in 0..d {
        if d < 2 {
            break;
        }
        let rows: Vec<usize> = (0..train.rows())
            .filter(|&i| !train[(i, j)].is_nan())
            .collect();
        let y: Vec<f64> = rows.iter().map(|&i| train[(i, j)]).collect();
        coefficients[j] = fit_column(&completed, &rows, j, &y)?;
    }
    Ok(FittedImputer::Mice {
        means,
        coefficients,
        rounds,
    })
}

fn apply_mice(data: &Mat, means: &[f64], coefficients: &[Vec<f64>], rounds: usize) -> Mat {
    let mut out = fill_missing(data, means);
    for _ in 0..rounds {
        for (j, coef) in coefficients.iter().enumerate() {
            if coef.is_empty() {
                continue;
            }
            for i in 0..data.rows() {
                if data[(i, j)].is_nan() {
                    out[(i, j)] = predict(coef, out.row(i), j);
                }
            }
        }
    }
    out
}
