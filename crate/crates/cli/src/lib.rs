//! Command implementations behind the `flowlhd` binary. Each command is an
//! ordinary function so experiment harnesses and tests can call them
//! without spawning processes.

pub mod commands;
pub mod config;

use std::path::Path;

use flowlhd::data::{load_image_dir, tensor_io, Dataset};
use flowlhd::error::{Error, Result};
use flowlhd::flow::arch::InputSpec;
use flowlhd::flow::model::FlowModel;
use flowlhd::util::fnv1a64;

pub use commands::demo2d::{cmd_demo2d, Demo2dParams};
pub use commands::dfld::{cmd_dfld, DfldParams};
pub use commands::distort::{cmd_distort, DistortParams};
pub use commands::fld::{cmd_fld, FldParams};
pub use commands::gen::{cmd_gen2d, cmd_gen_images, Gen2dParams, GenImagesParams};
pub use commands::monotonicity::{cmd_monotonicity, MonotonicityParams};
pub use commands::sample_efficiency::{cmd_sample_efficiency, SampleEfficiencyParams};
pub use commands::train::{cmd_train, TrainParams};
pub use config::RunConfig;

/// Exit-code policy: 0 success, 1 internal/numerics failure, 2 usage,
/// config or data error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Data(_)
        | Error::Domain(_)
        | Error::ArchMismatch(_)
        | Error::Format { .. } => 2,
        Error::Shape(_) | Error::Numerics(_) | Error::State(_) | Error::Io(_) => 1,
    }
}

/// Stable hash of a command's resolved parameters; recorded in CSV
/// trailers and used as the checkpoint-cache key.
pub fn config_hash<T: serde::Serialize>(params: &T) -> u64 {
    fnv1a64(serde_json::to_string(params).expect("params serialize").as_bytes())
}

/// Checkpoint cache directory; caching is enabled only when
/// FLOWLHD_CACHE_DIR is set and nonempty.
pub fn cache_dir() -> Option<std::path::PathBuf> {
    match std::env::var("FLOWLHD_CACHE_DIR") {
        Ok(dir) if !dir.is_empty() => Some(std::path::PathBuf::from(dir)),
        _ => None,
    }
}

/// Load a dataset from a PNG directory or a `.tnsr` raw tensor file.
pub fn load_dataset(path: &Path, resize_to: Option<(usize, usize)>) -> Result<Dataset> {
    if path.is_dir() {
        return load_image_dir(path, resize_to, false);
    }
    if path.extension().and_then(|e| e.to_str()) == Some("tnsr") {
        if !path.is_file() {
            return Err(Error::data(format!("tensor file {} does not exist", path.display())));
        }
        return match tensor_io::read_raw(path)? {
            tensor_io::RawTensor::F64(t) => Dataset::from_points("pt", t),
            tensor_io::RawTensor::U8 { shape, data } if shape.len() == 4 => {
                let imgs = flowlhd::data::ImageBatch::from_pixels(
                    shape[0], shape[1], shape[2], shape[3], data,
                )?;
                let ids = (0..imgs.n).map(|i| format!("img_{i:06}")).collect();
                Dataset::from_images(ids, imgs)
            }
            tensor_io::RawTensor::U8 { shape, .. } => Err(Error::data(format!(
                "image tensor file must be rank 4, got shape {shape:?}"
            ))),
        };
    }
    Err(Error::data(format!(
        "data path {} is neither a directory of PNGs nor a .tnsr file",
        path.display()
    )))
}

/// Check a dataset against a model's input spec; ArchMismatch otherwise.
pub fn check_dataset_matches(model: &FlowModel, dataset: &Dataset, what: &str) -> Result<()> {
    match (model.input_spec(), dataset.resolution(), dataset.point_dim()) {
        (InputSpec::Image { channels, height, width }, Some((c, h, w)), _) => {
            if (*channels, *height, *width) == (c, h, w) {
                Ok(())
            } else {
                Err(Error::ArchMismatch(format!(
                    "{what}: checkpoint expects {channels}x{height}x{width} images, data is {c}x{h}x{w}"
                )))
            }
        }
        (InputSpec::Points { dim }, _, Some(d)) => {
            if *dim == d {
                Ok(())
            } else {
                Err(Error::ArchMismatch(format!(
                    "{what}: checkpoint expects dim-{dim} points, data has dim {d}"
                )))
            }
        }
        (InputSpec::Image { .. }, None, _) => {
            Err(Error::ArchMismatch(format!("{what}: image checkpoint given point data")))
        }
        (InputSpec::Points { .. }, _, None) => {
            Err(Error::ArchMismatch(format!("{what}: 2D checkpoint given image data")))
        }
    }
}

pub(crate) fn write_csv(path: &Path, body: &str, hash: u64, seed: u64, extra: &[String]) -> Result<()> {
    let mut out = String::from(body);
    for line in extra {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(&format!("# config_hash={hash:016x} seed={seed}\n"));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub(crate) fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid number {tok:?} in list {s:?}")))
        })
        .collect()
}

pub(crate) fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("invalid integer {tok:?} in list {s:?}")))
        })
        .collect()
}
