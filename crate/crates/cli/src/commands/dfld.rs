//! `flowlhd dfld`: train one flow per set, then the dual-flow distance.

use std::path::{Path, PathBuf};

use serde::Serialize;

use flowlhd::data::Dataset;
use flowlhd::error::Result;
use flowlhd::flow::checkpoint::{load_checkpoint, save_checkpoint};
use flowlhd::flow::model::FlowModel;
use flowlhd::metrics::{dfld, LikelihoodTable, MetricResult};
use flowlhd::train::{train, TrainConfig};

use crate::commands::train::{build_for_dataset, init_seed_for};
use crate::{cache_dir, config_hash, load_dataset};

#[derive(Clone, Debug, Serialize)]
pub struct DfldParams {
    pub real: PathBuf,
    pub gen: PathBuf,
    /// Defaults to dfld-simple for images and flow2d(6) for points.
    pub arch: Option<String>,
    pub train: TrainConfig,
    pub eval_seed: u64,
    /// Score the real-trained flow against itself (identical flows).
    pub reuse_gen_ckpt: bool,
    /// Where the two checkpoints are written; defaults to the cache dir or
    /// the system temp dir.
    pub out_dir: Option<PathBuf>,
}

fn default_arch(dataset: &Dataset) -> &'static str {
    if dataset.is_images() {
        "dfld-simple"
    } else {
        "flow2d(6)"
    }
}

/// Train a flow for one side of the metric, reusing a cached checkpoint
/// keyed by the resolved parameters when FLOWLHD_CACHE_DIR is set.
pub fn train_side(
    role: &str,
    arch: &str,
    dataset: &Dataset,
    cfg: &TrainConfig,
    params_hash: u64,
    out_dir: &Path,
) -> Result<(FlowModel, PathBuf)> {
    let name = format!("{params_hash:016x}-{role}.fldc");
    let cached = cache_dir().map(|d| d.join(&name));
    if let Some(path) = &cached {
        if path.is_file() {
            return Ok((load_checkpoint(path)?, path.clone()));
        }
    }
    let mut cfg = cfg.clone();
    cfg.seed = init_seed_for(cfg.seed, role);
    let mut model = build_for_dataset(arch, dataset, init_seed_for(cfg.seed, "init"))?;
    train(&mut model, dataset, &cfg, None)?;
    let path = match cached {
        Some(p) => p,
        None => out_dir.join(&name),
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(&model, &path)?;
    Ok((model, path))
}

pub fn cmd_dfld(params: &DfldParams) -> Result<(MetricResult, LikelihoodTable)> {
    params.train.validate()?;
    let real = load_dataset(&params.real, None)?;
    let gen = load_dataset(&params.gen, None)?;
    let arch = params.arch.clone().unwrap_or_else(|| default_arch(&real).to_string());
    let hash = config_hash(params);
    let out_dir = params
        .out_dir
        .clone()
        .or_else(cache_dir)
        .unwrap_or_else(|| std::env::temp_dir().join("flowlhd-ckpts"));

    let (flow_r, ckpt_r) = train_side("real", &arch, &real, &params.train, hash, &out_dir)?;
    let (flow_g, ckpt_g) = if params.reuse_gen_ckpt {
        (load_checkpoint(&ckpt_r)?, ckpt_r.clone())
    } else {
        train_side("gen", &arch, &gen, &params.train, hash, &out_dir)?
    };

    dfld(
        &flow_r,
        &flow_g,
        &real,
        &gen,
        params.eval_seed,
        vec![ckpt_r.display().to_string(), ckpt_g.display().to_string()],
    )
}
