//! Model fitting and the method × rate × seed benchmark grid.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use mgp_core::baselines::{fit_knn, fit_mean, fit_median, fit_mice, mice_impute};
use mgp_core::data::{inject_mcar, split, standardize, Dataset, MissingMask, Standardization};
use mgp_core::dgp::{fit_dgp, DgpConfig};
use mgp_core::eval::{rmse, Record, ResultsTable};
use mgp_core::imputation::ImputationResult;
use mgp_core::mgp::{self, order_missing_attributes, AttributeOrdering, MgpConfig, OrderDirection};
use mgp_core::optim::{OptimConfig, TrainReport};
use mgp_core::rng::{derive_seed, seeded};
use mgp_core::svgp::{fit_svgp, SvgpConfig};
use mgp_core::Mat;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Model, FORMAT};
use crate::config::{ExperimentConfig, Hyper, Method};
use crate::dataset::LoadedDataset;
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::formats::write_atomic;

const TAG_TRAIN_MASK: u64 = 1;
const TAG_TEST_MASK: u64 = 2;
const TAG_FIT: u64 = 3;
const TAG_PREDICT: u64 = 4;

/// Bumped whenever a change would alter cached cell results.
const CELL_VERSION: u32 = 1;

fn optim(hyper: &Hyper) -> OptimConfig {
    OptimConfig {
        iterations: hyper.iterations,
        batch_size: hyper.batch,
        learning_rate: hyper.lr,
        log_every: (hyper.iterations / 20).max(1),
    }
}

/// Fits `method` on `train` (standardised, `NaN` = missing). `ordering` is
/// only used by MGP.
pub fn fit(
    method: Method,
    hyper: &Hyper,
    train: &Mat,
    ordering: AttributeOrdering,
    seed: u64,
) -> Result<(Model, Option<TrainReport>)> {
    let fit_seed = derive_seed(seed, TAG_FIT);
    Ok(match method {
        Method::Mean => (Model::Baseline(fit_mean(train)?), None),
        Method::Median => (Model::Baseline(fit_median(train)?), None),
        Method::Knn => (Model::Baseline(fit_knn(train, hyper.knn_k)?), None),
        Method::Mice => (Model::Baseline(fit_mice(train, hyper.mice_rounds)?), None),
        Method::Svgp => {
            let cfg = SvgpConfig {
                inducing: hyper.inducing,
                optim: optim(hyper),
                seed: fit_seed,
                ..SvgpConfig::default()
            };
            let (m, r) = fit_svgp(train, &cfg)?;
            (Model::Svgp(m), Some(r))
        }
        Method::Dgp => {
            let cfg = DgpConfig {
                inducing: hyper.inducing,
                samples: hyper.samples,
                optim: optim(hyper),
                seed: fit_seed,
                ..DgpConfig::default()
            };
            let (m, r) = fit_dgp(train, &cfg)?;
            (Model::Dgp(m), Some(r))
        }
        Method::Mgp => {
            let cfg = MgpConfig {
                inducing: hyper.inducing,
                samples: hyper.samples,
                optim: optim(hyper),
                direction: OrderDirection::Ascending,
                seed: fit_seed,
                ..MgpConfig::default()
            };
            let (m, r) = mgp::train_mgp(train, ordering, None, &cfg)?;
            (Model::Mgp(m), Some(r))
        }
    })
}

/// Completes `data`. Baselines return no per-cell mixtures.
pub fn impute(model: &Model, data: &Mat, hyper: &Hyper, seed: u64) -> Result<ImputationResult> {
    let mut rng = seeded(derive_seed(seed, TAG_PREDICT));
    Ok(match model {
        Model::Baseline(f) => ImputationResult {
            completed: f.transform(data)?,
            cells: Vec::new(),
        },
        Model::Svgp(m) => m.impute(data)?,
        Model::Dgp(m) => m.impute(data, &mut rng)?,
        Model::Mgp(net) => mgp::impute(net, data, hyper.samples, &mut rng)?,
    })
}

/// Standardised train/test pair for one (rate, seed) cell.
#[derive(Clone, Debug)]
pub struct PreparedCell {
    pub train: Mat,
    pub test: Mat,
    /// Standardised test values before injection.
    pub test_truth: Mat,
    pub test_mask: MissingMask,
    /// Built from the raw masked training split.
    pub ordering: AttributeOrdering,
    pub standardization: Standardization,
}

/// Split, inject MCAR into both halves at `rate`, then standardise with
/// training statistics.
pub fn prepare_cell(data: &Dataset, rate: f64, seed: u64, train_frac: f64) -> Result<PreparedCell> {
    let (train, test) = split(data, train_frac, seed)?;
    let train_mask = inject_mcar(&train, rate, derive_seed(seed, TAG_TRAIN_MASK))?;
    let test_mask = inject_mcar(&test, rate, derive_seed(seed, TAG_TEST_MASK))?;
    let train_raw = train_mask.apply(&train.values)?;
    let test_raw = test_mask.apply(&test.values)?;
    let ordering = order_missing_attributes(&train_raw, OrderDirection::Ascending);
    let (train_z, test_z, standardization) = standardize(&train_raw, &test_raw)?;
    Ok(PreparedCell {
        train: train_z,
        test: test_z,
        test_truth: standardization.apply(&test.values),
        test_mask,
        ordering,
        standardization,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub method: Method,
    pub rate: f64,
    pub seed: u64,
}

impl CellSpec {
    pub fn label(&self) -> String {
        format!("{}/rate={}/seed={}", self.method, self.rate, self.seed)
    }
}

pub fn cell_fingerprint(
    data: &LoadedDataset,
    hyper: &Hyper,
    train_frac: f64,
    spec: &CellSpec,
) -> String {
    fingerprint::json(&serde_json::json!({
        "version": CELL_VERSION,
        "dataset": data.fingerprint,
        "name": data.name,
        "train_frac": train_frac,
        "method": spec.method,
        "rate": spec.rate,
        "seed": spec.seed,
        "hyper": hyper.relevant_to(spec.method),
    }))
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub record: Record,
    pub checkpoint: Checkpoint,
}

/// Runs one cell and scores the test-split injected cells.
pub fn run_cell(
    data: &LoadedDataset,
    hyper: &Hyper,
    train_frac: f64,
    spec: &CellSpec,
) -> Result<CellOutcome> {
    let cell = prepare_cell(&data.dataset, spec.rate, spec.seed, train_frac)?;
    if cell.test_mask.is_empty() {
        return Err(Error::Config(format!(
            "{}: no test cells were masked, RMSE is undefined",
            spec.label()
        )));
    }
    let start = Instant::now();
    let (model, training) = fit(
        spec.method,
        hyper,
        &cell.train,
        cell.ordering.clone(),
        spec.seed,
    )?;
    let completed = match spec.method {
        // chained regressions re-predict the test cells inside every round
        Method::Mice => mice_impute(&cell.train, &cell.test, hyper.mice_rounds)?.1,
        _ => impute(&model, &cell.test, hyper, spec.seed)?.completed,
    };
    let seconds = start.elapsed().as_secs_f64();
    let score = rmse(&cell.test_truth, &completed, &cell.test_mask.indicator())?;
    let record = Record {
        method: spec.method.to_string(),
        dataset: data.name.clone(),
        rate: spec.rate,
        split: spec.seed,
        rmse: score,
        seconds,
    };
    let checkpoint = Checkpoint {
        format: FORMAT.into(),
        method: spec.method,
        hyper: hyper.clone(),
        fingerprint: cell_fingerprint(data, hyper, train_frac, spec),
        columns: data.dataset.columns.clone(),
        standardization: cell.standardization,
        model,
        training,
    };
    Ok(CellOutcome { record, checkpoint })
}

/// `record.json` inside a cell directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedRecord {
    pub fingerprint: String,
    pub spec: CellSpec,
    pub record: Record,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub spec: CellSpec,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct BenchmarkOutcome {
    pub table: ResultsTable,
    pub failures: Vec<CellFailure>,
    /// Cells answered from the cache.
    pub reused: usize,
}

pub fn grid(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &rate in &cfg.rates {
            for &seed in &cfg.seeds {
                cells.push(CellSpec { method, rate, seed });
            }
        }
    }
    cells
}

/// Directory holding the checkpoint and record of a cell, keyed by fingerprint.
pub fn cell_dir(cache_root: &Path, fingerprint: &str) -> PathBuf {
    cache_root.join(fingerprint)
}

fn cached(dir: &Path, fingerprint: &str) -> Option<Record> {
    let text = std::fs::read(dir.join("record.json")).ok()?;
    let c: CachedRecord = serde_json::from_slice(&text).ok()?;
    (c.fingerprint == fingerprint).then_some(c.record)
}

fn run_and_store(
    data: &LoadedDataset,
    cfg: &ExperimentConfig,
    spec: &CellSpec,
    dir: &Path,
    fp: &str,
) -> Result<Record> {
    let out = run_cell(data, &cfg.hyper, cfg.train_frac, spec)?;
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    out.checkpoint.save(&dir.join("checkpoint.json"))?;
    let path = dir.join("record.json");
    let c = CachedRecord {
        fingerprint: fp.to_string(),
        spec: *spec,
        record: out.record.clone(),
    };
    write_atomic(
        &path,
        &serde_json::to_vec_pretty(&c).map_err(Error::json(&path))?,
    )?;
    Ok(out.record)
}

/// Text of a caught panic payload.
pub fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    let msg = p
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into());
    format!("panicked: {msg}")
}

/// A cell's record and whether it came from the cache, or its error.
type CellResult = std::result::Result<(Record, bool), String>;

/// Runs every grid cell on `cfg.jobs` worker threads. Cells whose
/// fingerprint already has a stored record under `cache_root` are reused.
pub fn run_benchmark(
    cfg: &ExperimentConfig,
    data: &LoadedDataset,
    cache_root: &Path,
) -> BenchmarkOutcome {
    let cells = grid(cfg);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, CellResult)>> = Mutex::new(Vec::new());
    let workers = cfg.jobs.clamp(1, cells.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = cells.get(k) else { break };
                let fp = cell_fingerprint(data, &cfg.hyper, cfg.train_frac, spec);
                let dir = cell_dir(cache_root, &fp);
                let outcome = match cached(&dir, &fp) {
                    Some(r) => {
                        log::info!("{}: reusing {}", spec.label(), dir.display());
                        Ok((r, true))
                    }
                    None => {
                        log::info!("{}: running", spec.label());
                        let run = || run_and_store(data, cfg, spec, &dir, &fp);
                        match std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)) {
                            Ok(r) => r.map(|r| (r, false)).map_err(|e| e.to_string()),
                            Err(p) => Err(panic_message(p.as_ref())),
                        }
                    }
                };
                match &outcome {
                    Ok((r, _)) => {
                        log::info!("{}: rmse {:.4} ({:.1}s)", spec.label(), r.rmse, r.seconds)
                    }
                    Err(e) => log::error!("{}: {e}", spec.label()),
                }
                results
                    .lock()
                    .expect("collector poisoned")
                    .push((k, outcome));
            });
        }
    });
    let mut results = results.into_inner().expect("collector poisoned");
    results.sort_by_key(|(k, _)| *k);
    let mut out = BenchmarkOutcome::default();
    for (k, r) in results {
        match r {
            Ok((record, reused)) => {
                out.reused += reused as usize;
                out.table.insert(record);
            }
            Err(error) => out.failures.push(CellFailure {
                spec: cells[k],
                error,
            }),
        }
    }
    out
}
