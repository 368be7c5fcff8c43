//! The three subcommands, callable without the argument parser.

use std::path::{Path, PathBuf};

use mgp_core::data::{fit_standardization, inject_mcar};
use mgp_core::eval::{rmse, ResultsTable};
use mgp_core::mgp::{order_missing_attributes, OrderDirection};
use mgp_core::Mat;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, FORMAT};
use crate::config::{resolve_iterations, ExperimentConfig};
use crate::dataset::{load_csv, LoadedDataset, Schema};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::formats::{write_atomic, write_mask, write_matrix_csv, write_uncertainty_csv};
use crate::report::{emit_report, read_records, render_tables, ReportFormat};
use crate::runner::{self, BenchmarkOutcome};

/// Creates `<root>/<kind>-<timestamp>`, adding a counter on collision.
pub fn make_run_dir(root: &Path, kind: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(Error::io(root))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S%.3f");
    for k in 0.. {
        let name = if k == 0 {
            format!("{kind}-{stamp}")
        } else {
            format!("{kind}-{stamp}-{k}")
        };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir)(e)),
        }
    }
    unreachable!("run directory counter exhausted")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(Error::json(path))?;
    write_atomic(path, &bytes)
}

/// Loads the dataset and materialises the iteration profile.
pub fn load(
    cfg: &mut ExperimentConfig,
    explicit_iterations: Option<usize>,
) -> Result<LoadedDataset> {
    let schema = cfg.schema.as_deref().map(Schema::load).transpose()?;
    let data = load_csv(&cfg.dataset, schema.as_ref())?;
    cfg.hyper.iterations = resolve_iterations(data.dataset.rows(), explicit_iterations);
    cfg.validate().map_err(Error::Config)?;
    Ok(data)
}

#[derive(Clone, Debug)]
pub struct ImputeOutcome {
    pub run_dir: PathBuf,
    /// Raw-unit matrix; observed input cells are copied bit for bit.
    pub completed: Mat,
    /// Standardised RMSE on cells removed by `--rate`, when requested.
    pub rmse: Option<f64>,
}

/// Fits `cfg.methods[0]` on every row of the dataset and fills its missing
/// cells. A nonzero `cfg.rates[0]` first removes that fraction of observed
/// cells (seed `cfg.seeds[0]`) and scores their recovery.
pub fn cmd_impute(
    mut cfg: ExperimentConfig,
    explicit_iterations: Option<usize>,
) -> Result<ImputeOutcome> {
    let data = load(&mut cfg, explicit_iterations)?;
    let method = cfg.methods[0];
    let seed = cfg.seeds[0];
    let rate = cfg.rates.first().copied().unwrap_or(0.0);
    let run_dir = make_run_dir(&cfg.out, "impute")?;
    write_json(&run_dir.join("config.json"), &cfg)?;
    let names: Vec<String> = data
        .dataset
        .columns
        .iter()
        .map(|c| c.name.clone())
        .collect();

    let mask = (rate > 0.0)
        .then(|| inject_mcar(&data.dataset, rate, seed))
        .transpose()?;
    let input = match &mask {
        Some(m) => {
            write_mask(&run_dir.join("mask.csv"), m, &data.fingerprint)?;
            m.apply(&data.dataset.values)?
        }
        None => data.dataset.values.clone(),
    };
    if !input.as_slice().iter().any(|v| v.is_nan()) {
        log::warn!(
            "{}: no missing cells, output equals input",
            cfg.dataset.display()
        );
        write_matrix_csv(&run_dir.join("completed.csv"), &names, &input)?;
        return Ok(ImputeOutcome {
            run_dir,
            completed: input,
            rmse: None,
        });
    }

    let ordering = order_missing_attributes(&input, OrderDirection::Ascending);
    let s = fit_standardization(&input);
    let z = s.apply(&input);
    let (model, training) = runner::fit(method, &cfg.hyper, &z, ordering, seed)?;
    let result = runner::impute(&model, &z, &cfg.hyper, seed)?;
    let back = s.invert(&result.completed);
    let completed = Mat::from_fn(input.rows(), input.cols(), |i, j| {
        if input[(i, j)].is_nan() {
            back[(i, j)]
        } else {
            input[(i, j)]
        }
    });
    write_matrix_csv(&run_dir.join("completed.csv"), &names, &completed)?;
    if method.is_gp() {
        write_uncertainty_csv(
            &run_dir.join("uncertainty.csv"),
            &names,
            &result.cells,
            Some(&s),
        )?;
    }
    let checkpoint = Checkpoint {
        format: FORMAT.into(),
        method,
        hyper: cfg.hyper.clone(),
        fingerprint: fingerprint::json(&(&cfg, &data.fingerprint)),
        columns: data.dataset.columns.clone(),
        standardization: s.clone(),
        model,
        training,
    };
    checkpoint.save(&run_dir.join("checkpoint.json"))?;

    let score = match &mask {
        Some(m) => {
            let truth = s.apply(&data.dataset.values);
            let v = rmse(&truth, &result.completed, &m.indicator())?;
            write_json(
                &run_dir.join("score.json"),
                &serde_json::json!({ "method": method, "rmse": v }),
            )?;
            Some(v)
        }
        None => None,
    };
    Ok(ImputeOutcome {
        run_dir,
        completed,
        rmse: score,
    })
}

#[derive(Debug)]
pub struct BenchmarkRun {
    pub run_dir: PathBuf,
    pub outcome: BenchmarkOutcome,
}

/// Runs the grid; completed cells are cached in `<out>/cells/<fingerprint>`.
pub fn cmd_benchmark(
    mut cfg: ExperimentConfig,
    explicit_iterations: Option<usize>,
) -> Result<BenchmarkRun> {
    let data = load(&mut cfg, explicit_iterations)?;
    if cfg.rates.is_empty() {
        return Err(Error::Config("at least one --rate is required".into()));
    }
    let run_dir = make_run_dir(&cfg.out, "benchmark")?;
    write_json(&run_dir.join("config.json"), &cfg)?;
    let outcome = runner::run_benchmark(&cfg, &data, &cfg.out.join("cells"));
    emit_report(&outcome.table, &run_dir, &ReportFormat::ALL)?;
    let failures: String = outcome
        .failures
        .iter()
        .map(|f| serde_json::to_string(f).expect("failure records are plain data") + "\n")
        .collect();
    write_atomic(&run_dir.join("failures.jsonl"), failures.as_bytes())?;
    Ok(BenchmarkRun { run_dir, outcome })
}

#[derive(Debug)]
pub struct ReportRun {
    pub run_dir: PathBuf,
    pub table: ResultsTable,
    /// Per-rate tables followed by the rank summary.
    pub text: String,
}

pub fn cmd_report(records: &Path, out: &Path) -> Result<ReportRun> {
    let table = read_records(records)?;
    let run_dir = make_run_dir(out, "report")?;
    emit_report(&table, &run_dir, &ReportFormat::ALL)?;
    let mut text = render_tables(&table);
    text.push('\n');
    text.push_str(&mgp_core::eval::render_rank_summary(&table));
    Ok(ReportRun {
        run_dir,
        table,
        text,
    })
}
