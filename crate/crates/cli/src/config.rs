//! JSON run configuration shared by all subcommands. Flags override file
//! values; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use flowlhd::error::{Error, Result};
use flowlhd::train::TrainConfig;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub real: Option<String>,
    pub gen: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSection {
    /// Seed for per-image dequantization noise during metric evaluation.
    pub eval_seed: u64,
}

impl Default for MetricSection {
    fn default() -> MetricSection {
        MetricSection { eval_seed: 0 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub separations: Option<Vec<f64>>,
    pub sizes: Option<Vec<usize>>,
    pub runs: Option<usize>,
    pub noise: Option<Vec<f64>>,
    pub blur: Option<Vec<f64>>,
    pub salt_pepper: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub arch: Option<String>,
    pub train: Option<TrainConfig>,
    pub data: Option<DataSection>,
    pub metric: Option<MetricSection>,
    pub grids: Option<GridSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn load_opt(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.clone().unwrap_or_default()
    }

    pub fn eval_seed(&self) -> u64 {
        self.metric.as_ref().map(|m| m.eval_seed).unwrap_or(0)
    }
}
