use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MGP_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "mgp-runs";

/// Datasets below this many rows train for [`SMALL_DATA_ITERATIONS`].
pub const SMALL_DATA_ROWS: usize = 2_000;
pub const SMALL_DATA_ITERATIONS: usize = 2_000;
pub const DEFAULT_ITERATIONS: usize = 10_000;

#[derive(
    Clone,
    Copy,
    Debug,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mean,
    Median,
    Knn,
    Mice,
    Svgp,
    Dgp,
    Mgp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mean,
        Method::Median,
        Method::Knn,
        Method::Mice,
        Method::Svgp,
        Method::Dgp,
        Method::Mgp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Median => "median",
            Method::Knn => "knn",
            Method::Mice => "mice",
            Method::Svgp => "svgp",
            Method::Dgp => "dgp",
            Method::Mgp => "mgp",
        }
    }

    pub fn is_gp(self) -> bool {
        matches!(self, Method::Svgp | Method::Dgp | Method::Mgp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model hyperparameters with every default materialised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub inducing: usize,
    pub batch: usize,
    pub lr: f64,
    pub iterations: usize,
    pub samples: usize,
    pub knn_k: usize,
    pub mice_rounds: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            inducing: 100,
            batch: 100,
            lr: 0.01,
            iterations: DEFAULT_ITERATIONS,
            samples: 20,
            knn_k: 2,
            mice_rounds: 10,
        }
    }
}

impl Hyper {
    /// The subset of settings that influence `method`, for cell fingerprints.
    pub fn relevant_to(&self, method: Method) -> serde_json::Value {
        use serde_json::json;
        match method {
            Method::Mean | Method::Median => json!({}),
            Method::Knn => json!({ "knn_k": self.knn_k }),
            Method::Mice => json!({ "mice_rounds": self.mice_rounds }),
            Method::Svgp => json!({
                "inducing": self.inducing, "batch": self.batch,
                "lr": self.lr, "iterations": self.iterations,
            }),
            Method::Dgp | Method::Mgp => json!({
                "inducing": self.inducing, "batch": self.batch, "lr": self.lr,
                "iterations": self.iterations, "samples": self.samples,
            }),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("inducing", self.inducing),
            ("batch", self.batch),
            ("iterations", self.iterations),
            ("samples", self.samples),
            ("knn-k", self.knn_k),
            ("mice-rounds", self.mice_rounds),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("--{name} must be at least 1"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(format!("--lr must be positive, got {}", self.lr));
        }
        Ok(())
    }
}

/// Iteration count for a dataset of `rows` rows unless set explicitly.
pub fn resolve_iterations(rows: usize, explicit: Option<usize>) -> usize {
    explicit.unwrap_or(if rows < SMALL_DATA_ROWS {
        SMALL_DATA_ITERATIONS
    } else {
        DEFAULT_ITERATIONS
    })
}

/// Resolved settings of one command invocation, echoed beside its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub schema: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train_frac: f64,
    pub hyper: Hyper,
    pub out: PathBuf,
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.hyper.validate()?;
        if self.methods.is_empty() {
            return Err("at least one --method is required".into());
        }
        if self.seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(format!("--rate must lie in [0, 1), got {r}"));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_frac
            ));
        }
        if self.jobs == 0 {
            return Err("--jobs must be at least 1".into());
        }
        Ok(())
    }
}
