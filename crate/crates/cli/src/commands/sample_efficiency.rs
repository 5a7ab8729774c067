//! `flowlhd sample-efficiency`: FLD stability as a function of sample count.
//! For each size n, both sets are independently subsampled `runs` times and
//! the mean and standard deviation of FLD are reported.

use std::path::PathBuf;

use serde::Serialize;

use flowlhd::error::{Error, Result};
use flowlhd::flow::checkpoint::load_checkpoint;
use flowlhd::metrics::{eval_log_likelihoods, fld_value_from_means};
use flowlhd::util::fmt_f64;
use flowlhd::RngStream;

use crate::{check_dataset_matches, config_hash, load_dataset, write_csv};

#[derive(Clone, Debug, Serialize)]
pub struct SampleEfficiencyParams {
    pub real: PathBuf,
    pub gen: PathBuf,
    pub ckpt: PathBuf,
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct SampleEfficiencyRow {
    pub n: usize,
    pub mean_fld: f64,
    pub std_fld: f64,
}

fn subsample_mean(values: &[f64], indices: &mut Vec<usize>, n: usize, rng: &mut RngStream) -> f64 {
    rng.shuffle(indices);
    let mut chosen: Vec<usize> = indices[..n].to_vec();
    chosen.sort_unstable();
    chosen.iter().map(|&i| values[i]).sum::<f64>() / n as f64
}

pub fn cmd_sample_efficiency(params: &SampleEfficiencyParams) -> Result<Vec<SampleEfficiencyRow>> {
    if params.runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    if params.sizes.is_empty() {
        return Err(Error::config("sizes list must be nonempty"));
    }
    let model = load_checkpoint(&params.ckpt)?;
    let real = load_dataset(&params.real, None)?;
    let gen = load_dataset(&params.gen, None)?;
    check_dataset_matches(&model, &real, "real set")?;
    check_dataset_matches(&model, &gen, "generated set")?;
    for &n in &params.sizes {
        if n == 0 || n > real.len() || n > gen.len() {
            return Err(Error::data(format!(
                "subsample size {n} exceeds set sizes (real {}, gen {})",
                real.len(),
                gen.len()
            )));
        }
    }

    // Per-sample likelihoods are computed once; a subsampled FLD is a ratio
    // of subsample means.
    let ll_real = eval_log_likelihoods(&model, &real, params.seed)?;
    let ll_gen = eval_log_likelihoods(&model, &gen, params.seed)?;
    let root = RngStream::from_seed(params.seed);

    let mut rows = Vec::new();
    for (size_idx, &n) in params.sizes.iter().enumerate() {
        let mut values = Vec::with_capacity(params.runs);
        for run in 0..params.runs {
            let mut rng = root
                .substream_str("subsample")
                .substream(size_idx as u64)
                .substream(run as u64);
            let mut idx_r: Vec<usize> = (0..real.len()).collect();
            let mut idx_g: Vec<usize> = (0..gen.len()).collect();
            let mean_r = subsample_mean(&ll_real, &mut idx_r, n, &mut rng);
            let mean_g = subsample_mean(&ll_gen, &mut idx_g, n, &mut rng);
            values.push(fld_value_from_means(mean_g, mean_r)?);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (values.len() - 1) as f64)
                .sqrt()
        };
        rows.push(SampleEfficiencyRow { n, mean_fld: mean, std_fld: std });
    }

    let mut body = String::from("n,mean_fld,std_fld\n");
    for row in &rows {
        body.push_str(&format!(
            "{},{},{}\n",
            row.n,
            fmt_f64(row.mean_fld),
            fmt_f64(row.std_fld)
        ));
    }
    let mut extra = Vec::new();
    if params.runs == 1 {
        extra.push("degenerate: runs=1, std_fld is 0 by convention".to_string());
    }
    write_csv(&params.out, &body, config_hash(params), params.seed, &extra)?;
    Ok(rows)
}
