//! `flowlhd distort`: apply one parameterized degradation to an image set.

use std::path::PathBuf;

use serde::Serialize;

use flowlhd::data::{save_image_dir, DataStore};
use flowlhd::distortion::{DistortionKind, DistortionSpec};
use flowlhd::error::{Error, Result};

use crate::load_dataset;

#[derive(Clone, Debug, Serialize)]
pub struct DistortParams {
    pub input: PathBuf,
    pub out: PathBuf,
    pub kind: String,
    pub param: f64,
    pub seed: u64,
}

pub fn cmd_distort(params: &DistortParams) -> Result<usize> {
    let kind = DistortionKind::parse(&params.kind)?;
    let spec = DistortionSpec { kind, param: params.param, seed: params.seed };
    spec.validate()?;
    let dataset = load_dataset(&params.input, None)?;
    let images = match dataset.store() {
        DataStore::Images(b) => b,
        DataStore::Points(_) => {
            return Err(Error::data("distortion operates on image sets, not 2D points"))
        }
    };
    let distorted = spec.apply(images)?;
    save_image_dir(&params.out, &distorted, dataset.ids())?;
    Ok(distorted.n)
}
