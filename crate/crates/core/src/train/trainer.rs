//! Maximum-likelihood training loop.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::dataset::{BatchData, Dataset};
use crate::error::{Error, Result};
use crate::flow::model::FlowModel;
use crate::numerics::rng::RngStream;
use crate::numerics::store::HasParams;
use crate::numerics::tensor::Tensor;
use crate::train::adam::{adam_step, AdamHyper, AdamState};
use crate::train::config::TrainConfig;
use crate::util::fmt_f64;

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    /// bits/dim for image models, nats/point for 2D models.
    pub train_nll: f64,
    pub val_nll: Option<f64>,
    pub seconds: f64,
    /// Largest post-clip global gradient norm seen this epoch.
    pub max_grad_norm: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// CSV with header and a trailing comment recording config hash + seed.
    pub fn to_csv(&self, config_hash: u64, seed: u64) -> String {
        let mut out = String::from("epoch,train_nll,val_nll,seconds\n");
        for e in &self.epochs {
            let val = e.val_nll.map(fmt_f64).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch,
                fmt_f64(e.train_nll),
                val,
                fmt_f64(e.seconds)
            ));
        }
        out.push_str(&format!("# config_hash={config_hash:016x} seed={seed}\n"));
        out
    }
}

/// Per-sample loss weight: images train in bits/dim, 2D flows in nats.
fn loss_scale(model: &FlowModel) -> f64 {
    if model.dequant.is_some() {
        1.0 / (model.input_dim() as f64 * std::f64::consts::LN_2)
    } else {
        1.0
    }
}

fn batch_loss(lp: &[f64], scale: f64) -> f64 {
    let n = lp.len() as f64;
    lp.iter().map(|&l| -l * scale).sum::<f64>() / n
}

/// Mean negative log-likelihood of a batch (bits/dim for images, nats for
/// points). Pure evaluation; dequantization noise comes from `rng`.
pub fn nll_loss(model: &FlowModel, batch: &BatchData, rng: &mut RngStream) -> Result<f64> {
    let scale = loss_scale(model);
    let lp = match batch {
        BatchData::Points(p) => {
            if p.shape()[0] == 0 {
                return Err(Error::data("nll_loss requires a nonempty batch"));
            }
            model.log_prob_points(p)?
        }
        BatchData::Images(imgs) => {
            if imgs.n == 0 {
                return Err(Error::data("nll_loss requires a nonempty batch"));
            }
            model.log_prob_images_rng(imgs, rng)?
        }
    };
    let loss = batch_loss(&lp, scale);
    if !loss.is_finite() {
        return Err(Error::numerics("non-finite loss"));
    }
    Ok(loss)
}

fn check_compatible(model: &FlowModel, dataset: &Dataset) -> Result<()> {
    use crate::flow::arch::InputSpec;
    match (model.input_spec(), dataset.resolution()) {
        (InputSpec::Image { channels, height, width }, Some((c, h, w))) => {
            if (*channels, *height, *width) != (c, h, w) {
                Err(Error::ArchMismatch(format!(
                    "model expects {channels}x{height}x{width} images, dataset is {c}x{h}x{w}"
                )))
            } else {
                Ok(())
            }
        }
        (InputSpec::Points { dim }, None) => {
            if dataset.point_dim() != Some(*dim) {
                Err(Error::ArchMismatch(format!(
                    "model expects dim-{dim} points, dataset has {:?}",
                    dataset.point_dim()
                )))
            } else {
                Ok(())
            }
        }
        (InputSpec::Image { .. }, None) => {
            Err(Error::ArchMismatch("image model given a point dataset".into()))
        }
        (InputSpec::Points { .. }, Some(_)) => {
            Err(Error::ArchMismatch("2D model given an image dataset".into()))
        }
    }
}

/// Train in place. Deterministic given the config seed: shuffling,
/// dequantization noise and validation noise all derive from it.
/// Periodic checkpoints go to `<checkpoint_path>.epochN` when configured.
pub fn train(
    model: &mut FlowModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("cannot train on an empty dataset"));
    }
    if dataset.len() < cfg.batch_size {
        return Err(Error::data(format!(
            "dataset size {} is smaller than batch_size {}",
            dataset.len(),
            cfg.batch_size
        )));
    }
    check_compatible(model, dataset)?;
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }

    let root = RngStream::from_seed(cfg.seed);
    let shuffle_root = root.substream_str("shuffle");
    let noise_root = root.substream_str("dequant-noise");
    let val_noise_root = root.substream_str("val-noise");

    // Deterministic validation split.
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    root.substream_str("val-split").clone().shuffle(&mut indices);
    let val_n = (dataset.len() as f64 * cfg.validation_fraction).floor() as usize;
    let mut val_idx: Vec<usize> = indices[..val_n].to_vec();
    let mut train_idx: Vec<usize> = indices[val_n..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    if train_idx.is_empty() {
        return Err(Error::data("validation split leaves no training data"));
    }

    // Data-dependent actnorm init from the first batch of epoch 0.
    if model.has_uninitialized_actnorms() {
        let mut first = train_idx.clone();
        shuffle_root.substream(0).shuffle(&mut first);
        let take = cfg.batch_size.min(first.len());
        if let BatchData::Points(p) = dataset.batch(&first[..take]) {
            model.init_actnorms(&p)?;
        }
    }

    let scale = loss_scale(model);
    let hyper = AdamHyper {
        learning_rate: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let mut store = model.params();
    let mut adam = AdamState::new();
    let mut last_checkpoint: Option<PathBuf> = None;

    let describe_ckpt = |last: &Option<PathBuf>| -> String {
        match last {
            Some(p) => format!("last good checkpoint: {}", p.display()),
            None => "no checkpoint written yet".to_string(),
        }
    };

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let mut order = train_idx.clone();
        shuffle_root.substream(epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut max_grad_norm = 0.0f64;

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = dataset.batch(chunk);
            let lp = match &batch {
                BatchData::Points(p) => model.forward_train_points(p),
                BatchData::Images(imgs) => {
                    let mut noise = Tensor::zeros(&[imgs.n, imgs.c, imgs.h, imgs.w]);
                    noise_root
                        .substream(epoch as u64)
                        .substream(step as u64)
                        .fill_uniform(noise.data_mut());
                    model.forward_train_images(imgs, &noise)
                }
            }
            .map_err(|e| match e {
                Error::Numerics(msg) => Error::Numerics(format!(
                    "epoch {epoch} step {step}: {msg} ({})",
                    describe_ckpt(&last_checkpoint)
                )),
                other => other,
            })?;
            let loss = batch_loss(&lp, scale);
            if !loss.is_finite() {
                return Err(Error::Numerics(format!(
                    "epoch {epoch} step {step}: loss became non-finite ({})",
                    describe_ckpt(&last_checkpoint)
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();

            let weight = -scale / chunk.len() as f64;
            let weights = vec![weight; chunk.len()];
            store.zero_grads();
            model.backward(&weights, &mut store)?;
            let norm = store.grad_norm();
            if norm > cfg.grad_clip {
                store.scale_grads(cfg.grad_clip / norm);
            }
            max_grad_norm = max_grad_norm.max(store.grad_norm());
            adam_step(&mut store, &mut adam, &hyper);
            model.load_params(&store, "")?;
        }

        let val_nll = if val_idx.is_empty() {
            None
        } else {
            let mut rng = val_noise_root.substream(0);
            let mut sum = 0.0;
            for chunk in val_idx.chunks(cfg.batch_size) {
                let loss = nll_loss(model, &dataset.batch(chunk), &mut rng)?;
                sum += loss * chunk.len() as f64;
            }
            Some(sum / val_idx.len() as f64)
        };

        history.epochs.push(EpochStats {
            epoch,
            train_nll: loss_sum / seen as f64,
            val_nll,
            seconds: t0.elapsed().as_secs_f64(),
            max_grad_norm,
        });

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            if let Some(base) = checkpoint_path {
                let path = PathBuf::from(format!("{}.epoch{}", base.display(), epoch + 1));
                crate::flow::checkpoint::save_checkpoint(model, &path)?;
                last_checkpoint = Some(path);
            }
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::arch::{build_model, ArchDescriptor};
    use crate::flow::LN_2PI;

    #[test]
    fn nll_of_origin_under_empty_flow() {
        let model = build_model(&ArchDescriptor::points("flow2d(0)", 2).unwrap()).unwrap();
        let batch = BatchData::Points(Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap());
        let loss = nll_loss(&model, &batch, &mut RngStream::from_seed(0)).unwrap();
        assert!((loss - LN_2PI).abs() < 1e-9, "{loss}");
    }

    #[test]
    fn image_loss_is_positive_bits_per_dim() {
        let desc = ArchDescriptor::image("dfld-simple", 3, 4, 4).unwrap();
        let model = build_model(&desc).unwrap();
        let mut imgs = crate::data::ImageBatch::zeros(2, 3, 4, 4);
        let mut rng = RngStream::from_seed(1);
        for p in &mut imgs.pixels {
            *p = rng.below(256) as u8;
        }
        let loss = nll_loss(&model, &BatchData::Images(imgs), &mut rng).unwrap();
        assert!(loss > 0.0, "bits/dim loss must be positive, got {loss}");
    }

    #[test]
    fn concatenated_batches_average_exactly() {
        let mut rng = RngStream::from_seed(2);
        let model =
            crate::flow::arch::build_model_seeded(&ArchDescriptor::points("flow2d(2)", 2).unwrap(), 3)
                .unwrap();
        let mut a = Tensor::zeros(&[3, 2]);
        let mut b = Tensor::zeros(&[5, 2]);
        rng.fill_normal(a.data_mut());
        rng.fill_normal(b.data_mut());
        let mut ab_data = a.data().to_vec();
        ab_data.extend_from_slice(b.data());
        let ab = Tensor::from_vec(&[8, 2], ab_data).unwrap();
        let la = nll_loss(&model, &BatchData::Points(a), &mut rng).unwrap();
        let lb = nll_loss(&model, &BatchData::Points(b), &mut rng).unwrap();
        let lab = nll_loss(&model, &BatchData::Points(ab), &mut rng).unwrap();
        assert!((lab - (3.0 * la + 5.0 * lb) / 8.0).abs() < 1e-10);
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let desc = ArchDescriptor::points("flow2d(2)", 2).unwrap();
        let mut model = build_model(&desc).unwrap();
        let before = model.params();
        let points = crate::data::gen_two_moons(64, 0.05, &mut RngStream::from_seed(5));
        let dataset = Dataset::from_points("pt", points).unwrap();
        let cfg = TrainConfig { epochs: 0, batch_size: 16, ..TrainConfig::default() };
        let history = train(&mut model, &dataset, &cfg, None).unwrap();
        assert!(history.epochs.is_empty());
        let after = model.params();
        for (name, entry) in before.iter() {
            assert_eq!(entry.value.data(), after.value(name).unwrap().data());
        }
    }

    #[test]
    fn empty_and_small_datasets_error() {
        let desc = ArchDescriptor::points("flow2d(1)", 2).unwrap();
        let mut model = build_model(&desc).unwrap();
        let tiny = Dataset::from_points("pt", Tensor::zeros(&[3, 2])).unwrap();
        let cfg = TrainConfig { batch_size: 8, ..TrainConfig::default() };
        assert!(matches!(train(&mut model, &tiny, &cfg, None), Err(Error::Data(_))));
    }
}
