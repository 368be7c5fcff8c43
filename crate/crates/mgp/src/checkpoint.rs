//! JSON model checkpoints.

use std::path::Path;

use mgp_core::baselines::FittedImputer;
use mgp_core::data::{Column, Standardization};
use mgp_core::dgp::DgpImputer;
use mgp_core::mgp::MgpNetwork;
use mgp_core::optim::TrainReport;
use mgp_core::svgp::SvgpImputer;
use serde::{Deserialize, Serialize};

use crate::config::{Hyper, Method};
use crate::error::{Error, Result};
use crate::formats::write_atomic;

pub const FORMAT: &str = "mgp-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "lowercase")]
pub enum Model {
    Baseline(FittedImputer),
    Svgp(SvgpImputer),
    Dgp(DgpImputer),
    /// Carries the attribute ordering and the initial-imputation means.
    Mgp(MgpNetwork),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub method: Method,
    pub hyper: Hyper,
    /// Fingerprint of the run configuration that produced this model.
    pub fingerprint: String,
    pub columns: Vec<Column>,
    /// Maps raw columns to the scale the model was trained on.
    pub standardization: Standardization,
    pub model: Model,
    pub training: Option<TrainReport>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).map_err(Error::json(path))?;
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read(path).map_err(Error::io(path))?;
        let ck: Checkpoint = serde_json::from_slice(&text).map_err(Error::json(path))?;
        if ck.format != FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint format '{}'",
                path.display(),
                ck.format
            )));
        }
        Ok(ck)
    }
}
