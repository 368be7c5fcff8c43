use mgp_core::data::{
    fit_standardization, inject_mcar, split_indices, standardize, unstandardize, Column,
    ColumnKind, Dataset,
};
use mgp_core::rng::seeded;
use mgp_core::{Error, Mat};
use proptest::prelude::*;
use rand::Rng;

/// Two continuous columns and a three-level one-hot group, with some
/// pre-existing holes.
fn mixed(n: usize, seed: u64, holes: f64) -> Dataset {
    let mut rng = seeded(seed);
    let mut v = Mat::zeros(n, 5);
    for i in 0..n {
        v[(i, 0)] = rng.random_range(-3.0..3.0);
        v[(i, 1)] = rng.random_range(10.0..20.0);
        let level = rng.random_range(2..5);
        v[(i, level)] = 1.0;
        if i > 0 && rng.random::<f64>() < holes {
            v[(i, 0)] = f64::NAN;
        }
        if i > 0 && rng.random::<f64>() < holes {
            for j in 2..5 {
                v[(i, j)] = f64::NAN;
            }
        }
    }
    let mut cols = vec![Column::continuous("a"), Column::continuous("b")];
    for l in 0..3 {
        cols.push(Column {
            name: format!("c={l}"),
            kind: ColumnKind::OneHot { group: 0 },
        });
    }
    Dataset::new(v, cols).unwrap()
}

fn bits(m: &Mat) -> Vec<u64> {
    m.as_slice().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn full_column_loss_is_an_injection_error() {
    let d = Dataset::from_matrix(Mat::column(vec![1.0, 2.0]));
    assert!(matches!(inject_mcar(&d, 0.9, 1), Err(Error::Injection(_))));
    assert!(matches!(inject_mcar(&d, 1.0, 1), Err(Error::Injection(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_round_trip_is_bit_exact(seed in 0u64..100_000, n in 2usize..60, rate in 0.0f64..0.45, holes in 0.0f64..0.3) {
        let d = mixed(n, seed, holes);
        let mask = inject_mcar(&d, rate, seed).unwrap();
        let blank = mask.apply(&d.values).unwrap();
        prop_assert_eq!(bits(&mask.restore(&blank).unwrap()), bits(&d.values));
        for c in &mask.cells {
            prop_assert!(blank[(c.row, c.col)].is_nan());
            prop_assert_eq!(c.truth.to_bits(), d.values[(c.row, c.col)].to_bits());
        }
        prop_assert_eq!(&inject_mcar(&d, rate, seed).unwrap(), &mask);
    }

    #[test]
    fn mask_respects_units_and_counts(seed in 0u64..100_000, n in 2usize..60, rate in 0.0f64..0.45, holes in 0.0f64..0.3) {
        let d = mixed(n, seed, holes);
        let mask = inject_mcar(&d, rate, seed).unwrap();
        let blank = mask.apply(&d.values).unwrap();
        // one unit per continuous column plus one for the group
        let eligible: usize = (0..n)
            .map(|i| (!d.values[(i, 0)].is_nan()) as usize + 1 + (!d.values[(i, 2)].is_nan()) as usize)
            .sum();
        let units = mask.cells.iter().filter(|c| c.col < 3).count();
        prop_assert_eq!(units, (rate * eligible as f64).round() as usize);
        for i in 0..n {
            let group: Vec<bool> = (2..5).map(|j| mask.is_masked(i, j)).collect();
            prop_assert!(group.iter().all(|&m| m == group[0]));
            if !blank[(i, 2)].is_nan() {
                prop_assert_eq!((2..5).map(|j| blank[(i, j)]).sum::<f64>(), 1.0);
            }
        }
        for j in 0..5 {
            prop_assert!((0..n).any(|i| !blank[(i, j)].is_nan()), "column {} lost", j);
        }
    }

    #[test]
    fn standardised_training_columns_are_unit_scaled(seed in 0u64..100_000, n in 2usize..80, holes in 0.0f64..0.3) {
        let d = mixed(n, seed, holes);
        let test = mixed(7, seed + 1, 0.0).values.map(|x| x * 100.0);
        let (z, _, s) = standardize(&d.values, &test).unwrap();
        for j in 0..5 {
            let obs: Vec<f64> = (0..n).map(|i| z[(i, j)]).filter(|v| !v.is_nan()).collect();
            let m = obs.iter().sum::<f64>() / obs.len() as f64;
            let sd = (obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / obs.len() as f64).sqrt();
            prop_assert!(m.abs() < 1e-8);
            if s.raw_stds[j] > 0.0 {
                prop_assert!((sd - 1.0).abs() < 1e-8);
            } else {
                prop_assert!(obs.iter().all(|&v| v == 0.0));
            }
        }
        let back = unstandardize(&z, &s);
        for (a, b) in back.as_slice().iter().zip(d.values.as_slice()) {
            prop_assert!((a.is_nan() && b.is_nan()) || (a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn statistics_ignore_test_rows_and_masked_cells(seed in 0u64..100_000, n in 3usize..50, rate in 0.1f64..0.4) {
        let d = mixed(n, seed, 0.0);
        let mask = inject_mcar(&d, rate, seed).unwrap();
        let train = mask.apply(&d.values).unwrap();
        let mut scrambled = train.clone();
        let mut rng = seeded(seed + 3);
        // replacing the blanked cells by anything else NaN-valued changes nothing
        for c in &mask.cells {
            scrambled[(c.row, c.col)] = f64::from_bits(0x7ff8_0000_0000_0000 | rng.random_range(1..1000));
        }
        let a = standardize(&train, &Mat::filled(2, 5, 1e6)).unwrap().2;
        let b = standardize(&scrambled, &Mat::filled(4, 5, -3.0)).unwrap().2;
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, fit_standardization(&train));
    }

    #[test]
    fn split_is_a_seeded_partition(seed in 0u64..100_000, n in 1usize..300, frac in 0.05f64..0.95) {
        let (tr, te) = split_indices(n, frac, seed).unwrap();
        prop_assert_eq!(tr.len(), ((frac * n as f64) - 1e-9).ceil() as usize);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, frac, seed).unwrap(), (tr, te));
    }
}
