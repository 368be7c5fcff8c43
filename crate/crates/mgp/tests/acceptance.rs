//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 3 to 6 need the benchmark datasets. They are read from
//! `$MGP_DATA_DIR` (`parkinson.csv`, `keggud.csv`, each with an optional
//! `.json` schema next to it); without them those criteria report FAIL with
//! the reason. The process exits nonzero when a criterion that ran fails, or
//! on any FAIL when `ACCEPTANCE_STRICT=1`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use mgp::config::{ExperimentConfig, Hyper, Method};
use mgp::dataset::{load_csv, LoadedDataset, Schema};
use mgp::formats::{read_mask, write_mask};
use mgp::runner::{self, run_benchmark, run_cell, CellSpec};
use mgp_core::baselines::{knn_impute, mice_impute};
use mgp_core::data::{inject_mcar, Dataset};
use mgp_core::dgp::{dgp_elbo, DgpNetwork, FinalExpectation};
use mgp_core::eval::{nemenyi_cd, ResultsTable};
use mgp_core::kernels::RbfArdKernel;
use mgp_core::mgp::{
    initial_impute, mgp_elbo, order_missing_attributes, ChainNoise, MgpNetwork, OrderDirection,
};
use mgp_core::optim::Trainable;
use mgp_core::rng::{seeded, standard_normal};
use mgp_core::svgp::{exact_gp_oracle, init_inducing, svgp_elbo, MeanFunction, SparseGPLayer};
use mgp_core::tensorgrad::{Graph, Var};
use mgp_core::Mat;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

struct Verdict {
    pass: bool,
    /// False when the check could not be carried out at all.
    ran: bool,
    detail: String,
}

impl Verdict {
    fn checked(pass: bool, detail: String) -> Self {
        Verdict {
            pass,
            ran: true,
            detail,
        }
    }

    fn skipped(detail: String) -> Self {
        Verdict {
            pass: false,
            ran: false,
            detail,
        }
    }
}

// ---------------------------------------------------------------- gradients

const H: f64 = 1e-5;

fn toy(seed: u64) -> (Mat, Mat) {
    let mut rng = seeded(seed);
    let x = Mat::from_fn(20, 3, |_, _| rng.random_range(-1.5..1.5));
    let mut y = Mat::from_fn(20, 3, |i, j| {
        (x[(i, (j + 2) % 3)] * 1.1).cos() - 0.4 * x[(i, j)]
    });
    for i in (0..20).step_by(3) {
        y[(i, (i / 3) % 3)] = f64::NAN;
    }
    (x, y)
}

fn jiggle<T: Trainable>(model: &mut T, seed: u64) {
    let mut rng = seeded(seed);
    for p in model.params_mut() {
        for v in p.as_mut_slice() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
}

fn worst_relative_error<T: Trainable>(
    model: &mut T,
    f: impl Fn(&T, &mut Graph, &[Var]) -> mgp_core::Result<Var>,
) -> f64 {
    let mut g = Graph::new();
    let vars = model.bind_params(&mut g);
    let root = f(model, &mut g, &vars).unwrap();
    let ad = g.gradient(root, &vars).unwrap();
    let eval = |m: &T| {
        let mut g = Graph::new();
        let vars = m.bind_params(&mut g);
        let r = f(m, &mut g, &vars).unwrap();
        g.value(r).to_scalar()
    };
    let mut worst: f64 = 0.0;
    for (b, grad) in ad.iter().enumerate() {
        let (mut num, mut den) = (0.0, 0.0f64);
        for k in 0..grad.len() {
            let orig = model.params()[b].as_slice()[k];
            model.params_mut()[b].as_mut_slice()[k] = orig + H;
            let up = eval(model);
            model.params_mut()[b].as_mut_slice()[k] = orig - H;
            let down = eval(model);
            model.params_mut()[b].as_mut_slice()[k] = orig;
            let fd = (up - down) / (2.0 * H);
            let a = grad.as_slice()[k];
            num += (fd - a) * (fd - a);
            den = den.max(fd * fd).max(a * a);
        }
        if den > 1e-20 {
            worst = worst.max((num / den).sqrt());
        }
    }
    worst
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut errors = Vec::new();

    let (x, y) = toy(21);
    let z = init_inducing(&x, 5, &mut seeded(22));
    let mut layer = SparseGPLayer::new(z.clone(), 3, MeanFunction::Zero, Some(0.1));
    jiggle(&mut layer, 23);
    errors.push((
        "svgp",
        worst_relative_error(&mut layer, |l, g, v| {
            svgp_elbo(g, l, &l.vars_from(v), &x, &y, 40)
        }),
    ));

    for (name, expectation) in [
        ("dgp closed-form", FinalExpectation::ClosedForm),
        ("dgp sampled", FinalExpectation::Sampled),
    ] {
        let mut net = DgpNetwork::new(z.clone(), 3, 3, 3, 0.1).unwrap();
        net.final_expectation = expectation;
        for layer in &mut net.layers {
            for s in &mut layer.q_scale {
                *s = Mat::from_fn(5, 5, |i, j| if i == j { 0.3 } else { 0.0 });
            }
        }
        jiggle(&mut net, 24);
        let noise = net
            .draw_noise(
                20,
                2,
                expectation == FinalExpectation::Sampled,
                &mut seeded(25),
            )
            .unwrap();
        errors.push((
            name,
            worst_relative_error(&mut net, |n, g, v| {
                dgp_elbo(g, n, &n.vars_from(v), &x, &y, 20, &noise)
            }),
        ));
    }

    let ordering = order_missing_attributes(&y, OrderDirection::Ascending);
    let (x_hat, means) = initial_impute(&y).unwrap();
    let missing = y.map(|v| if v.is_nan() { 1.0 } else { 0.0 });
    let mut rng = seeded(26);
    let mut net = MgpNetwork::new(ordering, &x_hat, means, true, 5, 0.1, &mut rng).unwrap();
    jiggle(&mut net, 27);
    let noise = ChainNoise {
        samples: 2,
        eps: (0..3).map(|_| standard_normal(&mut rng, 40, 1)).collect(),
    };
    let target: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
    errors.push((
        "mgp",
        worst_relative_error(&mut net, |n, g, v| {
            mgp_elbo(
                g,
                n,
                &n.vars_from(v),
                &x_hat,
                &missing,
                Some(&target),
                30,
                &noise,
            )
        }),
    ));

    let secs = start.elapsed().as_secs_f64();
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let parts: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    Verdict::checked(
        worst <= 1e-3 && secs < 60.0,
        format!("{} (bound 1e-3), {secs:.1}s (bound 60s)", parts.join(", ")),
    )
}

// ------------------------------------------------------------- exact oracle

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Optimal collapsed-bound `q(u)` for inducing inputs equal to the data.
fn optimal_layer(x: &Mat, y: &[f64], kernel: &RbfArdKernel, noise: f64) -> SparseGPLayer {
    let k = to_na(&kernel.matrix(x, x).unwrap());
    let inner = (&k + &k * &k / noise).try_inverse().unwrap();
    let mean = &k * &inner * &k * DVector::from_column_slice(y) / noise;
    let cov = &k * &inner * &k;
    let cov = (&cov + cov.transpose()) * 0.5;
    let l = cov.cholesky().unwrap().l();
    let mut layer = SparseGPLayer::new(x.clone(), 1, MeanFunction::Zero, Some(noise));
    layer.kernel = kernel.clone();
    layer.jitter = 0.0;
    layer.q_mean = Mat::column(mean.iter().copied().collect());
    layer.q_scale = vec![Mat::from_fn(l.nrows(), l.ncols(), |i, j| l[(i, j)])];
    layer
}

/// Dense LU posterior, independent of the library's Cholesky path.
fn lu_posterior(
    x: &Mat,
    y: &[f64],
    kernel: &RbfArdKernel,
    noise: f64,
    xs: &Mat,
) -> (Vec<f64>, Vec<f64>) {
    let k = to_na(&kernel.matrix(x, x).unwrap()) + DMatrix::identity(x.rows(), x.rows()) * noise;
    let ks = to_na(&kernel.matrix(x, xs).unwrap());
    let kinv = k.lu().try_inverse().unwrap();
    let mean = ks.transpose() * &kinv * DVector::from_column_slice(y);
    let var = (0..xs.rows())
        .map(|j| kernel.amplitude() - (ks.column(j).transpose() * &kinv * ks.column(j))[(0, 0)])
        .collect();
    (mean.iter().copied().collect(), var)
}

fn exact_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    for (seed, n) in [(31u64, 2usize), (32, 8), (33, 17), (34, 33), (35, 50)] {
        let mut rng = seeded(seed);
        let x = Mat::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..n)
            .map(|i| (1.3 * x[(i, 0)]).sin() - 0.4 * x[(i, 1)])
            .collect();
        let xs = Mat::from_fn(12, 2, |_, _| rng.random_range(-3.5..3.5));
        let kernel = RbfArdKernel::with_params(&[0.8, 1.4], 1.2);
        let noise = 0.1;
        let got = optimal_layer(&x, &y, &kernel, noise)
            .predictive_marginals(&xs)
            .unwrap();
        let lib = exact_gp_oracle(&x, &y, &kernel, noise, &xs).unwrap();
        let (mean, var) = lu_posterior(&x, &y, &kernel, noise, &xs);
        for j in 0..xs.rows() {
            worst = worst
                .max((got.mean[(j, 0)] - mean[j]).abs())
                .max((got.variance[(j, 0)] - var[j]).abs())
                .max((lib.mean[(j, 0)] - mean[j]).abs())
                .max((lib.variance[(j, 0)] - var[j]).abs());
        }
    }
    Verdict::checked(
        worst <= 1e-6,
        format!("max deviation {worst:.2e} over N in 2..=50 (bound 1e-6)"),
    )
}

// --------------------------------------------------------- benchmark data

struct Benchmark {
    table: ResultsTable,
    name: String,
    failures: Vec<String>,
    slowest_gp: f64,
}

fn data_file(name: &str) -> Result<(PathBuf, Option<PathBuf>), String> {
    let dir = std::env::var_os("MGP_DATA_DIR").ok_or("MGP_DATA_DIR is not set")?;
    let dir = PathBuf::from(dir);
    let csv = dir.join(format!("{name}.csv"));
    if !csv.exists() {
        return Err(format!("{} not found", csv.display()));
    }
    let schema = dir.join(format!("{name}.json"));
    Ok((csv, schema.exists().then_some(schema)))
}

fn load_named(name: &str) -> Result<LoadedDataset, String> {
    let (csv, schema) = data_file(name)?;
    let schema = schema
        .map(|p| Schema::load(&p))
        .transpose()
        .map_err(|e| e.to_string())?;
    load_csv(&csv, schema.as_ref()).map_err(|e| e.to_string())
}

fn cache_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cells")
}

fn benchmark(
    data: &LoadedDataset,
    methods: &[Method],
    rates: &[f64],
    iterations: usize,
) -> Benchmark {
    let cfg = ExperimentConfig {
        dataset: data.source.clone(),
        schema: None,
        methods: methods.to_vec(),
        rates: rates.to_vec(),
        seeds: vec![1, 2, 3, 4, 5],
        train_frac: 0.7,
        hyper: Hyper {
            iterations,
            ..Hyper::default()
        },
        out: cache_root(),
        jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let outcome = run_benchmark(&cfg, data, &cache_root());
    let slowest_gp = outcome
        .table
        .records
        .iter()
        .filter(|r| ["svgp", "dgp", "mgp"].contains(&r.method.as_str()))
        .map(|r| r.seconds)
        .fold(0.0, f64::max);
    Benchmark {
        table: outcome.table,
        name: data.name.clone(),
        failures: outcome
            .failures
            .iter()
            .map(|f| format!("{}: {}", f.spec.label(), f.error))
            .collect(),
        slowest_gp,
    }
}

fn mean_rmse(b: &Benchmark, method: Method, rate: f64) -> Option<f64> {
    b.table
        .summary(method.name(), &b.name, rate)
        .filter(|s| s.n == 5)
        .map(|s| s.mean)
}

const PARKINSON_TARGETS: [(Method, f64, f64); 5] = [
    (Method::Mean, 1.07, 0.10),
    (Method::Median, 1.09, 0.10),
    (Method::Mice, 0.47, 0.10),
    (Method::Svgp, 0.68, 0.12),
    (Method::Mgp, 0.43, 0.15),
];

fn parkinson_targets(park: &Result<Benchmark, String>) -> Verdict {
    let b = match park {
        Ok(b) => b,
        Err(e) => return Verdict::skipped(e.clone()),
    };
    let mut pass = b.slowest_gp <= 600.0;
    let mut parts = Vec::new();
    for (method, want, tol) in PARKINSON_TARGETS {
        match mean_rmse(b, method, 0.1) {
            Some(got) => {
                pass &= (got - want).abs() <= tol;
                parts.push(format!("{method} {got:.3} (target {want}±{tol})"));
            }
            None => {
                pass = false;
                parts.push(format!("{method} incomplete"));
            }
        }
    }
    parts.push(format!("slowest GP cell {:.0}s (bound 600s)", b.slowest_gp));
    Verdict::checked(pass, parts.join(", "))
}

fn ordering_claim(park: &Result<Benchmark, String>) -> Verdict {
    let b = match park {
        Ok(b) => b,
        Err(e) => return Verdict::skipped(e.clone()),
    };
    let get = |m| mean_rmse(b, m, 0.1);
    match (get(Method::Mgp), get(Method::Svgp), get(Method::Mean)) {
        (Some(mgp), Some(svgp), Some(mean)) => Verdict::checked(
            mgp < svgp && mgp < mean,
            format!("mgp {mgp:.3}, svgp {svgp:.3}, mean {mean:.3}"),
        ),
        _ => Verdict::checked(false, "incomplete cells".into()),
    }
}

fn rate_trend(park: &Result<Benchmark, String>) -> Verdict {
    let b = match park {
        Ok(b) => b,
        Err(e) => return Verdict::skipped(e.clone()),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for method in Method::ALL {
        match (mean_rmse(b, method, 0.1), mean_rmse(b, method, 0.4)) {
            (Some(lo), Some(hi)) => {
                pass &= hi >= lo;
                parts.push(format!("{method} {lo:.3}->{hi:.3}"));
            }
            _ => {
                pass = false;
                parts.push(format!("{method} incomplete"));
            }
        }
    }
    Verdict::checked(pass, parts.join(", "))
}

fn subsample(data: &LoadedDataset, rows: usize) -> LoadedDataset {
    let mut idx: Vec<usize> = (0..data.dataset.rows()).collect();
    idx.shuffle(&mut seeded(0));
    idx.truncate(rows);
    idx.sort_unstable();
    let dataset: Dataset = data.dataset.select_rows(&idx);
    LoadedDataset {
        name: format!("{}-sub{rows}", data.name),
        fingerprint: format!("{}-sub{rows}", data.fingerprint),
        dataset,
        features: data.features,
        size_report: None,
        source: data.source.clone(),
    }
}

fn keggud_subsample() -> Verdict {
    let data = match load_named("keggud") {
        Ok(d) => subsample(&d, 2000),
        Err(e) => return Verdict::skipped(e),
    };
    let b = benchmark(&data, &[Method::Mean, Method::Mgp], &[0.1], 2000);
    match (
        mean_rmse(&b, Method::Mgp, 0.1),
        mean_rmse(&b, Method::Mean, 0.1),
    ) {
        (Some(mgp), Some(mean)) => {
            let gain = 1.0 - mgp / mean;
            Verdict::checked(
                gain >= 0.30,
                format!(
                    "mgp {mgp:.3}, mean {mean:.3}, relative gain {:.0}% (bound 30%)",
                    100.0 * gain
                ),
            )
        }
        _ => Verdict::checked(
            false,
            format!("incomplete cells: {}", b.failures.join("; ")),
        ),
    }
}

// --------------------------------------------------------------- properties

fn holes(m: &Mat, rate: f64, seed: u64) -> Mat {
    let mut rng = seeded(seed);
    Mat::from_fn(m.rows(), m.cols(), |i, j| {
        if i == 0 || rng.random::<f64>() >= rate {
            m[(i, j)]
        } else {
            f64::NAN
        }
    })
}

fn knn_brute_force(train: &Mat, query: &Mat, k: usize) -> Mat {
    let d = train.cols();
    let mut out = query.clone();
    for q in 0..query.rows() {
        for j in (0..d).filter(|&j| query[(q, j)].is_nan()) {
            let mut cand: Vec<(f64, usize)> = (0..train.rows())
                .filter(|&t| !train[(t, j)].is_nan())
                .filter_map(|t| {
                    let shared: Vec<usize> = (0..d)
                        .filter(|&c| !query[(q, c)].is_nan() && !train[(t, c)].is_nan())
                        .collect();
                    if shared.is_empty() {
                        return None;
                    }
                    let ss: f64 = shared
                        .iter()
                        .map(|&c| (query[(q, c)] - train[(t, c)]).powi(2))
                        .sum();
                    Some(((ss * d as f64 / shared.len() as f64).sqrt(), t))
                })
                .collect();
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let col: Vec<f64> = if cand.is_empty() {
                (0..train.rows())
                    .map(|t| train[(t, j)])
                    .filter(|v| !v.is_nan())
                    .collect()
            } else {
                cand[..k.min(cand.len())]
                    .iter()
                    .map(|&(_, t)| train[(t, j)])
                    .collect()
            };
            out[(q, j)] = col.iter().sum::<f64>() / col.len() as f64;
        }
    }
    out
}

fn tiny_hyper() -> Hyper {
    Hyper {
        inducing: 6,
        batch: 16,
        iterations: 15,
        samples: 3,
        ..Hyper::default()
    }
}

fn property_suite() -> Verdict {
    let mut failed = Vec::new();

    // observed cells and variances, every method
    let mut rng = seeded(41);
    let full = Mat::from_fn(24, 3, |i, j| {
        (i as f64 * 0.4 + j as f64).sin() + rng.random_range(-0.1..0.1)
    });
    let input = holes(&full, 0.2, 42);
    let ordering = order_missing_attributes(&input, OrderDirection::Ascending);
    for method in Method::ALL {
        let hyper = tiny_hyper();
        let result = runner::fit(method, &hyper, &input, ordering.clone(), 7)
            .and_then(|(model, _)| runner::impute(&model, &input, &hyper, 7));
        match result {
            Ok(r) => {
                let kept = input
                    .as_slice()
                    .iter()
                    .zip(r.completed.as_slice())
                    .all(|(a, b)| {
                        if a.is_nan() {
                            b.is_finite()
                        } else {
                            a.to_bits() == b.to_bits()
                        }
                    });
                if !kept {
                    failed.push(format!("{method} changed an observed cell"));
                }
                if method.is_gp() && r.cells.iter().any(|c| !(c.mixture.variance() > 0.0)) {
                    failed.push(format!("{method} non-positive variance"));
                }
            }
            Err(e) => failed.push(format!("{method}: {e}")),
        }
    }

    // predictive variance and KL of random layers
    for seed in 0..30u64 {
        let mut rng = seeded(100 + seed);
        let z = Mat::from_fn(5, 2, |_, _| rng.random_range(-2.0..2.0));
        let mut layer = SparseGPLayer::new(z, 2, MeanFunction::Zero, Some(0.1));
        layer.q_mean = Mat::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        for s in &mut layer.q_scale {
            *s = Mat::from_fn(5, 5, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Greater => rng.random_range(-0.5..0.5),
                std::cmp::Ordering::Equal => rng.random_range(0.05..1.5),
                std::cmp::Ordering::Less => 0.0,
            });
        }
        let xs = Mat::from_fn(8, 2, |_, _| rng.random_range(-4.0..4.0));
        let var = layer.predictive_marginals(&xs).unwrap().variance;
        if var.as_slice().iter().any(|v| !(*v > 0.0)) {
            failed.push(format!("layer seed {seed}: non-positive variance"));
        }
        let mut g = Graph::new();
        let lv = layer.bind(&mut g);
        let kl = layer
            .prior(&mut g, &lv)
            .and_then(|p| layer.kl(&mut g, &p))
            .unwrap();
        if g.value(kl).to_scalar() < -1e-9 {
            failed.push(format!("layer seed {seed}: negative KL"));
        }
    }

    // KNN against brute force
    for seed in 0..40u64 {
        let mut rng = seeded(200 + seed);
        let n = rng.random_range(1..=200);
        let d = rng.random_range(1..5);
        let k = rng.random_range(1..5);
        let base = Mat::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let train = holes(&base, 0.3, seed);
        let query = holes(
            &Mat::from_fn(7, d, |_, _| rng.random_range(-2.0..2.0)),
            0.4,
            seed + 1,
        );
        let got = knn_impute(&train, &query, k).unwrap();
        if got.max_abs_diff(&knn_brute_force(&train, &query, k)) > 1e-12 {
            failed.push(format!("knn seed {seed} differs from brute force"));
        }
    }

    // MICE on a noiseless plane
    let mut rng = seeded(43);
    let full = Mat::from_fn(120, 3, |_, _| rng.random_range(-2.0..2.0));
    let full = Mat::from_fn(120, 3, |i, j| {
        if j == 2 {
            0.5 * full[(i, 0)] - 1.5 * full[(i, 1)] + 0.25
        } else {
            full[(i, j)]
        }
    });
    let mut train = full.clone();
    for i in (0..120).step_by(4) {
        train[(i, 2)] = f64::NAN;
    }
    let (filled, _, _) = mice_impute(&train, &train, 5).unwrap();
    let mice_err = filled.max_abs_diff(&full);
    if mice_err > 1e-8 {
        failed.push(format!("mice error {mice_err:.1e}"));
    }

    // mask file round trip
    let mut values = Mat::from_fn(30, 4, |i, j| (i * 4 + j) as f64 / 7.0);
    values[(0, 0)] = -0.0;
    values[(1, 1)] = f64::MIN_POSITIVE / 8.0;
    values[(2, 2)] = f64::MAX;
    let mask = inject_mcar(&Dataset::from_matrix(values), 0.5, 44).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.csv");
    write_mask(&path, &mask, "fp").unwrap();
    let (_, back) = read_mask(&path).unwrap();
    let same = back.cells.len() == mask.cells.len()
        && back.cells.iter().zip(&mask.cells).all(|(a, b)| {
            a.row == b.row && a.col == b.col && a.truth.to_bits() == b.truth.to_bits()
        });
    if !same {
        failed.push("mask round trip is not bit-exact".into());
    }

    let cd = nemenyi_cd(8, 25, 0.05).unwrap();
    if (cd - 2.100).abs() > 0.001 {
        failed.push(format!("critical difference {cd:.4}"));
    }

    Verdict::checked(
        failed.is_empty(),
        if failed.is_empty() {
            format!("all checks hold, mice error {mice_err:.1e}, CD {cd:.4}")
        } else {
            failed.join("; ")
        },
    )
}

// -------------------------------------------------------------- determinism

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    let mut body = String::from("a,b,c,d\n");
    for i in 0..60 {
        let x = i as f64 * 0.21;
        body.push_str(&format!(
            "{x},{},{},{}\n",
            x.sin(),
            (0.5 * x).cos() * 2.0,
            x * x * 0.1
        ));
    }
    std::fs::write(&path, body).unwrap();
    let data = load_csv(&path, None).unwrap();
    let hyper = Hyper {
        iterations: 40,
        ..tiny_hyper()
    };
    let mut diffs = Vec::new();
    for method in Method::ALL {
        let spec = CellSpec {
            method,
            rate: 0.2,
            seed: 3,
        };
        let a = run_cell(&data, &hyper, 0.7, &spec).unwrap().record.rmse;
        let b = run_cell(&data, &hyper, 0.7, &spec).unwrap().record.rmse;
        if a.to_bits() != b.to_bits() {
            diffs.push(format!("{method} {a} vs {b}"));
        }
    }
    Verdict::checked(
        diffs.is_empty(),
        if diffs.is_empty() {
            format!("{} methods reproduce bit for bit", Method::ALL.len())
        } else {
            diffs.join("; ")
        },
    )
}

// ----------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Verdict::checked(
            false,
            format!("panicked: {}", runner::panic_message(p.as_ref())),
        )
    })
}

fn main() -> ExitCode {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut verdicts: BTreeMap<u32, (&str, Verdict)> = BTreeMap::new();
    verdicts.insert(1, ("gradient suite", guarded(gradient_suite)));
    verdicts.insert(2, ("exact GP oracle", guarded(exact_oracle)));

    let park = catch_unwind(AssertUnwindSafe(|| {
        load_named("parkinson").map(|d| benchmark(&d, &Method::ALL, &[0.1, 0.4], 2000))
    }))
    .unwrap_or_else(|p| Err(format!("panicked: {}", runner::panic_message(p.as_ref()))));
    if let Ok(b) = &park {
        for f in &b.failures {
            eprintln!("parkinson cell failed: {f}");
        }
    }
    verdicts.insert(
        3,
        ("Parkinson 10% RMSE", guarded(|| parkinson_targets(&park))),
    );
    verdicts.insert(
        4,
        ("MGP beats SVGP and Mean", guarded(|| ordering_claim(&park))),
    );
    verdicts.insert(
        5,
        ("RMSE grows from 10% to 40%", guarded(|| rate_trend(&park))),
    );
    verdicts.insert(6, ("KeggUD 2000-row subsample", guarded(keggud_subsample)));
    verdicts.insert(7, ("property checks", guarded(property_suite)));
    verdicts.insert(8, ("cell determinism", guarded(determinism)));

    let mut code = ExitCode::SUCCESS;
    for (id, (name, v)) in &verdicts {
        let tag = match (v.pass, v.ran) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not run)",
        };
        println!("criterion {id} {tag}: {name}: {}", v.detail);
        if !v.pass && (v.ran || strict) {
            code = ExitCode::FAILURE;
        }
    }
    code
}
