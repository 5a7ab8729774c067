//! `flowlhd fld`: single-flow likelihood distance from a trained checkpoint.

use std::path::PathBuf;

use serde::Serialize;

use flowlhd::error::Result;
use flowlhd::flow::checkpoint::load_checkpoint;
use flowlhd::metrics::{fld, MetricResult};

use crate::{check_dataset_matches, load_dataset};

#[derive(Clone, Debug, Serialize)]
pub struct FldParams {
    pub real: PathBuf,
    pub gen: PathBuf,
    pub ckpt: PathBuf,
    pub seed: u64,
    /// Optional per-sample likelihood table output.
    pub table_out: Option<PathBuf>,
}

pub fn cmd_fld(params: &FldParams) -> Result<MetricResult> {
    let model = load_checkpoint(&params.ckpt)?;
    let real = load_dataset(&params.real, None)?;
    let gen = load_dataset(&params.gen, None)?;
    check_dataset_matches(&model, &real, "real set")?;
    check_dataset_matches(&model, &gen, "generated set")?;
    let (result, table) = fld(
        &model,
        &real,
        &gen,
        params.seed,
        vec![params.ckpt.display().to_string()],
    )?;
    if let Some(path) = &params.table_out {
        std::fs::write(path, table.to_csv())?;
    }
    Ok(result)
}
