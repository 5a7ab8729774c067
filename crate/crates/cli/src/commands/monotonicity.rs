//! `flowlhd monotonicity`: FLD across a distortion-severity grid. The given
//! real directory should be a held-out split, not the training images.

use std::path::PathBuf;

use serde::Serialize;

use flowlhd::data::{DataStore, Dataset};
use flowlhd::distortion::{DistortionKind, DistortionSpec};
use flowlhd::error::{Error, Result};
use flowlhd::flow::checkpoint::load_checkpoint;
use flowlhd::metrics::{eval_log_likelihoods, fld_value_from_means};
use flowlhd::util::fmt_f64;
use flowlhd::RngStream;

use crate::{check_dataset_matches, config_hash, load_dataset, write_csv};

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityParams {
    pub real: PathBuf,
    pub ckpt: PathBuf,
    pub kind: String,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct MonotonicityRow {
    pub param: f64,
    pub fld: f64,
}

pub fn cmd_monotonicity(params: &MonotonicityParams) -> Result<Vec<MonotonicityRow>> {
    let kind = DistortionKind::parse(&params.kind)?;
    if params.grid.is_empty() {
        return Err(Error::config("distortion grid must be nonempty"));
    }
    for &p in &params.grid {
        DistortionSpec { kind, param: p, seed: 0 }.validate()?;
    }
    let model = load_checkpoint(&params.ckpt)?;
    let real = load_dataset(&params.real, None)?;
    check_dataset_matches(&model, &real, "real set")?;
    let images = match real.store() {
        DataStore::Images(b) => b.clone(),
        DataStore::Points(_) => {
            return Err(Error::data("monotonicity experiments require image data"))
        }
    };

    // Real-set likelihoods are shared by every grid level.
    let ll_real = eval_log_likelihoods(&model, &real, params.seed)?;
    let mean_real = ll_real.iter().sum::<f64>() / ll_real.len() as f64;
    let root = RngStream::from_seed(params.seed);

    let mut rows = Vec::new();
    for (i, &level) in params.grid.iter().enumerate() {
        let spec = DistortionSpec {
            kind,
            param: level,
            seed: root.substream_str("distortion").substream(i as u64).next_u64(),
        };
        let distorted = spec.apply(&images)?;
        // Distorted copies keep their source ids, so they receive the same
        // dequantization noise as the originals.
        let gen = Dataset::from_images(real.ids().to_vec(), distorted)?;
        let ll_gen = eval_log_likelihoods(&model, &gen, params.seed)?;
        let mean_gen = ll_gen.iter().sum::<f64>() / ll_gen.len() as f64;
        rows.push(MonotonicityRow { param: level, fld: fld_value_from_means(mean_gen, mean_real)? });
    }

    let mut body = String::from("param,fld\n");
    for row in &rows {
        body.push_str(&format!("{},{}\n", fmt_f64(row.param), fmt_f64(row.fld)));
    }
    write_csv(&params.out, &body, config_hash(params), params.seed, &[])?;
    Ok(rows)
}
