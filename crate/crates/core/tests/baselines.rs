use mgp_core::baselines::{fit_transform_mean, fit_transform_median, knn_impute, mice_impute};
use mgp_core::rng::seeded;
use mgp_core::Mat;
use proptest::prelude::*;
use rand::Rng;

fn with_holes(m: &Mat, rate: f64, seed: u64, keep_first_row: bool) -> Mat {
    let mut rng = seeded(seed);
    Mat::from_fn(m.rows(), m.cols(), |i, j| {
        if (keep_first_row && i == 0) || rng.random::<f64>() >= rate {
            m[(i, j)]
        } else {
            f64::NAN
        }
    })
}

/// Brute force: every pairwise distance computed from scratch, full sort with
/// index tie-break, average of the first `k` rows observing the column.
fn knn_oracle(train: &Mat, query: &Mat, k: usize) -> Mat {
    let d = train.cols();
    let mut out = query.clone();
    for q in 0..query.rows() {
        for j in 0..d {
            if !query[(q, j)].is_nan() {
                continue;
            }
            let mut cand: Vec<(f64, usize)> = Vec::new();
            for t in 0..train.rows() {
                if train[(t, j)].is_nan() {
                    continue;
                }
                let shared: Vec<usize> = (0..d)
                    .filter(|&c| !query[(q, c)].is_nan() && !train[(t, c)].is_nan())
                    .collect();
                if shared.is_empty() {
                    continue;
                }
                let ss: f64 = shared
                    .iter()
                    .map(|&c| (query[(q, c)] - train[(t, c)]).powi(2))
                    .sum();
                cand.push(((ss * d as f64 / shared.len() as f64).sqrt(), t));
            }
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            if cand.is_empty() {
                let obs: Vec<f64> = (0..train.rows())
                    .map(|t| train[(t, j)])
                    .filter(|v| !v.is_nan())
                    .collect();
                out[(q, j)] = obs.iter().sum::<f64>() / obs.len() as f64;
            } else {
                let take = &cand[..k.min(cand.len())];
                out[(q, j)] =
                    take.iter().map(|&(_, t)| train[(t, j)]).sum::<f64>() / take.len() as f64;
            }
        }
    }
    out
}

fn preserved(input: &Mat, output: &Mat) -> bool {
    input
        .as_slice()
        .iter()
        .zip(output.as_slice())
        .all(|(a, b)| a.is_nan() || a.to_bits() == b.to_bits())
}

#[test]
fn knn_worked_example_and_truncation() {
    let train = Mat::from_rows(&[[0.0, 10.0], [1.0, 20.0], [10.0, 99.0]]);
    let q = Mat::from_rows(&[[0.5, f64::NAN]]);
    assert_eq!(knn_impute(&train, &q, 2).unwrap()[(0, 1)], 15.0);
    let all = knn_impute(&train, &q, 10).unwrap()[(0, 1)];
    assert!((all - 43.0).abs() < 1e-12);
    let exact = Mat::from_rows(&[[1.0, f64::NAN]]);
    assert_eq!(knn_impute(&train, &exact, 1).unwrap()[(0, 1)], 20.0);
}

#[test]
fn mice_is_exact_on_noiseless_linear_data() {
    let mut rng = seeded(3);
    let x: Vec<f64> = (0..150).map(|_| rng.random_range(-3.0..3.0)).collect();
    let full = Mat::from_fn(150, 2, |i, j| if j == 0 { x[i] } else { 2.0 * x[i] });
    let mut train = full.clone();
    for i in (0..150).step_by(5) {
        train[(i, 1)] = f64::NAN;
    }
    let test_full = Mat::from_fn(20, 2, |i, j| (i as f64 - 10.0) * 0.3 * (j + 1) as f64);
    let mut test = test_full.clone();
    for i in 0..20 {
        test[(i, 1)] = f64::NAN;
    }
    let (tr, te, _) = mice_impute(&train, &test, 1).unwrap();
    assert!(tr.max_abs_diff(&full) <= 1e-8);
    assert!(te.max_abs_diff(&test_full) <= 1e-8);
    let (same, _, _) = mice_impute(&full, &full, 10).unwrap();
    assert_eq!(same, full);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn knn_matches_brute_force(seed in 0u64..100_000, n in 1usize..200, d in 1usize..5, k in 1usize..5, rate in 0.0f64..0.5) {
        let mut rng = seeded(seed);
        let base = Mat::from_fn(n, d, |_, _| (rng.random_range(-2.0f64..2.0) * 4.0).round() / 4.0);
        let train = with_holes(&base, rate, seed + 1, true);
        let qbase = Mat::from_fn(10, d, |_, _| (rng.random_range(-2.0f64..2.0) * 4.0).round() / 4.0);
        let query = with_holes(&qbase, rate, seed + 2, false);
        let got = knn_impute(&train, &query, k).unwrap();
        let want = knn_oracle(&train, &query, k);
        for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0) || (a.is_nan() && b.is_nan()));
        }
        prop_assert!(preserved(&query, &got));
    }

    #[test]
    fn baselines_preserve_observed_cells(seed in 0u64..100_000, n in 2usize..40, d in 1usize..5, rate in 0.0f64..0.6) {
        let mut rng = seeded(seed);
        let base = Mat::from_fn(n, d, |_, _| rng.random_range(-5.0..5.0));
        let train = with_holes(&base, rate, seed + 1, true);
        let test = with_holes(&base, rate, seed + 2, false);
        let (a, b) = fit_transform_mean(&train, &test).unwrap();
        prop_assert!(preserved(&train, &a) && preserved(&test, &b));
        let (a, b) = fit_transform_median(&train, &test).unwrap();
        prop_assert!(preserved(&train, &a) && preserved(&test, &b));
        let (a, b, _) = mice_impute(&train, &test, 3).unwrap();
        prop_assert!(preserved(&train, &a) && preserved(&test, &b));
        prop_assert!(a.is_finite() && b.is_finite());
    }

    #[test]
    fn mice_residuals_do_not_increase_on_linear_data(seed in 0u64..100_000, n in 20usize..80, rate in 0.05f64..0.3) {
        let mut rng = seeded(seed);
        let coef: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut base = Mat::zeros(n, 4);
        for i in 0..n {
            let xs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            for j in 0..3 {
                base[(i, j)] = xs[j];
            }
            base[(i, 3)] = xs.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>() + 0.5;
        }
        let train = with_holes(&base, rate, seed + 7, true);
        let (_, _, trace) = mice_impute(&train, &train, 10).unwrap();
        prop_assert_eq!(trace.residual_rmse.len(), 10);
        for w in trace.residual_rmse.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", trace.residual_rmse);
        }
    }
}
