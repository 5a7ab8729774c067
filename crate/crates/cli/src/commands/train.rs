//! `flowlhd train`: fit a flow on a dataset and write checkpoint + history.

use std::path::PathBuf;

use serde::Serialize;

use flowlhd::error::{Error, Result};
use flowlhd::flow::arch::{build_model_seeded, parse_arch, ArchDescriptor, ArchKind};
use flowlhd::flow::checkpoint::save_checkpoint;
use flowlhd::flow::model::FlowModel;
use flowlhd::train::{train, TrainConfig, TrainHistory};
use flowlhd::RngStream;

use crate::{config_hash, load_dataset};

#[derive(Clone, Debug, Serialize)]
pub struct TrainParams {
    pub data: PathBuf,
    pub arch: String,
    pub out: PathBuf,
    pub history_out: Option<PathBuf>,
    pub train: TrainConfig,
    pub resize: bool,
}

pub struct TrainOutcome {
    pub model: FlowModel,
    pub history: TrainHistory,
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
}

/// Derive the parameter-init seed from the training seed; D-FLD trains two
/// flows with the same config but independent streams.
pub fn init_seed_for(train_seed: u64, role: &str) -> u64 {
    RngStream::from_seed(train_seed).substream_str(role).substream_str("init").next_u64()
}

pub fn build_for_dataset(
    arch: &str,
    dataset: &flowlhd::data::Dataset,
    init_seed: u64,
) -> Result<FlowModel> {
    let desc = match (parse_arch(arch)?, dataset.resolution(), dataset.point_dim()) {
        (ArchKind::Flow2d(_), _, Some(dim)) => ArchDescriptor::points(arch, dim)?,
        (ArchKind::Flow2d(_), Some(_), _) => {
            return Err(Error::config(format!("{arch} trains on 2D points, not images")))
        }
        (_, Some((c, h, w)), _) => ArchDescriptor::image(arch, c, h, w)?,
        (_, None, _) => {
            return Err(Error::config(format!("{arch} trains on images, not 2D points")))
        }
    };
    build_model_seeded(&desc, init_seed)
}

pub fn cmd_train(params: &TrainParams) -> Result<TrainOutcome> {
    params.train.validate()?;
    let dataset = load_dataset(&params.data, None)?;
    let mut model =
        build_for_dataset(&params.arch, &dataset, init_seed_for(params.train.seed, "train"))?;
    let history = train(&mut model, &dataset, &params.train, Some(&params.out))?;
    save_checkpoint(&model, &params.out)?;
    let history_path = params
        .history_out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.csv", params.out.display())));
    let csv = history.to_csv(config_hash(params), params.train.seed);
    if let Some(parent) = history_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&history_path, csv)?;
    Ok(TrainOutcome { model, history, checkpoint: params.out.clone(), history_path })
}
