//! FLD and D-FLD: likelihood-based distances between a real and a
//! generated sample set.
//!
//! - FLD = (mean log-likelihood of generated samples) / (mean log-likelihood
//!   of real samples) under one flow trained on real data. Approaches 1 when
//!   the sets match, grows above 1 as the generated set degrades.
//! - D-FLD = log2(1 + m), m = mean over all samples of
//!   |log-likelihood under the real-trained flow - log-likelihood under the
//!   generated-trained flow|. Zero iff the two flows agree on every sample.
//!
//! Dequantization noise is seeded per sample id, so the same file gets the
//! same noise under every flow and set; the metric never pays for noise
//! variance.

use serde::Serialize;

use crate::data::dataset::{BatchData, Dataset};
use crate::error::{Error, Result};
use crate::flow::model::FlowModel;
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;
use crate::util::fmt_f64;

const EVAL_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Fld,
    Dfld,
}

/// Metric value plus the evaluation metadata that makes it reproducible.
#[derive(Clone, Debug, Serialize)]
pub struct MetricResult {
    pub metric: MetricKind,
    pub value: f64,
    pub n_real: usize,
    pub n_gen: usize,
    /// Mean log-likelihood of the generated set under the real-trained flow.
    pub mean_ll_gen: f64,
    /// Mean log-likelihood of the real set under the real-trained flow.
    pub mean_ll_real: f64,
    pub seed: u64,
    pub checkpoints: Vec<String>,
}

impl MetricResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric result serializes")
    }
}

#[derive(Clone, Debug)]
pub struct LikelihoodRow {
    pub id: String,
    pub ll_r: f64,
    pub ll_g: Option<f64>,
}

/// Per-sample log-likelihoods; ids unique, values finite.
#[derive(Clone, Debug, Default)]
pub struct LikelihoodTable {
    pub rows: Vec<LikelihoodRow>,
}

impl LikelihoodTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,ll_r,ll_g\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.id,
                fmt_f64(row.ll_r),
                row.ll_g.map(fmt_f64).unwrap_or_default()
            ));
        }
        out
    }
}

/// Per-sample log-likelihoods of a dataset, ascending id order. Image noise
/// is derived from (seed, sample id) so it is stable across flows and sets.
pub fn eval_log_likelihoods(model: &FlowModel, dataset: &Dataset, seed: u64) -> Result<Vec<f64>> {
    let root = RngStream::from_seed(seed);
    let mut out = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        match dataset.batch(chunk) {
            BatchData::Points(p) => out.extend(model.log_prob_points(&p)?),
            BatchData::Images(imgs) => {
                let mut noise = Tensor::zeros(&[imgs.n, imgs.c, imgs.h, imgs.w]);
                let per = imgs.c * imgs.h * imgs.w;
                for (k, &idx) in chunk.iter().enumerate() {
                    let mut stream = root.substream_str(&dataset.ids()[idx]);
                    stream.fill_uniform(&mut noise.data_mut()[k * per..(k + 1) * per]);
                }
                out.extend(model.log_prob_images(&imgs, &noise)?);
            }
        }
    }
    for v in &out {
        if !v.is_finite() {
            return Err(Error::numerics("non-finite log-likelihood during evaluation"));
        }
    }
    Ok(out)
}

fn check_same_input_spec(a: &FlowModel, b: &FlowModel) -> Result<()> {
    if a.input_spec() != b.input_spec() {
        return Err(Error::config(format!(
            "flows disagree on input spec: {} vs {}",
            a.input_spec().describe(),
            b.input_spec().describe()
        )));
    }
    Ok(())
}

/// d(x) = |L_r(x) - L_g(x)| in nats, evaluated with the same dequantization
/// noise seed under both flows.
pub fn per_image_distance(
    flow_r: &FlowModel,
    flow_g: &FlowModel,
    sample: &BatchData,
    noise_seed: u64,
) -> Result<f64> {
    check_same_input_spec(flow_r, flow_g)?;
    let (lr, lg) = match sample {
        BatchData::Points(p) => {
            (flow_r.log_prob_points(p)?[0], flow_g.log_prob_points(p)?[0])
        }
        BatchData::Images(imgs) => {
            let mut noise = Tensor::zeros(&[imgs.n, imgs.c, imgs.h, imgs.w]);
            RngStream::from_seed(noise_seed).fill_uniform(noise.data_mut());
            (
                flow_r.log_prob_images(imgs, &noise)?[0],
                flow_g.log_prob_images(imgs, &noise)?[0],
            )
        }
    };
    Ok((lr - lg).abs())
}

/// m and log2(1 + m) from per-sample distances, summed in input order.
pub(crate) fn dfld_from_distances(distances: &[f64]) -> Result<(f64, f64)> {
    if distances.is_empty() {
        return Err(Error::data("D-FLD requires at least one sample"));
    }
    let m = distances.iter().sum::<f64>() / distances.len() as f64;
    Ok((m, (1.0 + m).log2()))
}

/// FLD ratio; both means must be strictly negative for the ratio semantics
/// to hold (always true for image likelihood bounds).
pub(crate) fn fld_from_means(mean_ll_gen: f64, mean_ll_real: f64) -> Result<f64> {
    if mean_ll_gen >= 0.0 || mean_ll_real >= 0.0 {
        return Err(Error::Domain(format!(
            "FLD requires strictly negative mean log-likelihoods (got gen {mean_ll_gen}, real {mean_ll_real}); use D-FLD for such data"
        )));
    }
    Ok(mean_ll_gen / mean_ll_real)
}

fn mean_in_order(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Dual-flow likelihood distance over the union of both sets.
pub fn dfld(
    flow_r: &FlowModel,
    flow_g: &FlowModel,
    real: &Dataset,
    gen: &Dataset,
    seed: u64,
    checkpoints: Vec<String>,
) -> Result<(MetricResult, LikelihoodTable)> {
    check_same_input_spec(flow_r, flow_g)?;
    if real.is_empty() && gen.is_empty() {
        return Err(Error::data("D-FLD requires at least one sample across both sets"));
    }
    let mut table = LikelihoodTable::default();
    let mut distances = Vec::with_capacity(real.len() + gen.len());
    let mut ll_r_over_real = Vec::new();
    let mut ll_r_over_gen = Vec::new();
    for (set, tag) in [(real, "real"), (gen, "gen")] {
        if set.is_empty() {
            continue;
        }
        let under_r = eval_log_likelihoods(flow_r, set, seed)?;
        let under_g = eval_log_likelihoods(flow_g, set, seed)?;
        for ((id, &lr), &lg) in set.ids().iter().zip(&under_r).zip(&under_g) {
            distances.push((lr - lg).abs());
            table.rows.push(LikelihoodRow {
                id: format!("{tag}/{id}"),
                ll_r: lr,
                ll_g: Some(lg),
            });
        }
        if tag == "real" {
            ll_r_over_real = under_r;
        } else {
            ll_r_over_gen = under_r;
        }
    }
    let (_, value) = dfld_from_distances(&distances)?;
    let result = MetricResult {
        metric: MetricKind::Dfld,
        value,
        n_real: real.len(),
        n_gen: gen.len(),
        mean_ll_gen: if ll_r_over_gen.is_empty() { f64::NAN } else { mean_in_order(&ll_r_over_gen) },
        mean_ll_real: if ll_r_over_real.is_empty() { f64::NAN } else { mean_in_order(&ll_r_over_real) },
        seed,
        checkpoints,
    };
    Ok((result, table))
}

/// Single-flow likelihood distance: ratio of mean log-likelihoods.
pub fn fld(
    flow: &FlowModel,
    real: &Dataset,
    gen: &Dataset,
    seed: u64,
    checkpoints: Vec<String>,
) -> Result<(MetricResult, LikelihoodTable)> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::data("FLD requires both sets to be nonempty"));
    }
    let ll_real = eval_log_likelihoods(flow, real, seed)?;
    let ll_gen = eval_log_likelihoods(flow, gen, seed)?;
    let mean_real = mean_in_order(&ll_real);
    let mean_gen = mean_in_order(&ll_gen);
    let value = fld_from_means(mean_gen, mean_real)?;
    let mut table = LikelihoodTable::default();
    for (id, &lr) in real.ids().iter().zip(&ll_real) {
        table.rows.push(LikelihoodRow { id: format!("real/{id}"), ll_r: lr, ll_g: None });
    }
    for (id, &lr) in gen.ids().iter().zip(&ll_gen) {
        table.rows.push(LikelihoodRow { id: format!("gen/{id}"), ll_r: lr, ll_g: None });
    }
    let result = MetricResult {
        metric: MetricKind::Fld,
        value,
        n_real: real.len(),
        n_gen: gen.len(),
        mean_ll_gen: mean_gen,
        mean_ll_real: mean_real,
        seed,
        checkpoints,
    };
    Ok((result, table))
}
