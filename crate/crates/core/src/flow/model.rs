//! Flow composition: ordered invertible transforms over a standard-normal
//! prior, with exact per-sample log-likelihood.

use crate::data::image_batch::ImageBatch;
use crate::error::{Error, Result};
use crate::flow::actnorm::{ActNorm, ActNormCache};
use crate::flow::arch::{ArchDescriptor, InputSpec};
use crate::flow::coupling::{CouplingCache, CouplingLayer};
use crate::flow::dequant::{DequantCache, DequantStage};
use crate::flow::prior_logp_per_sample;
use crate::flow::split::{split_forward, split_inverse};
use crate::flow::squeeze::{squeeze, unsqueeze};
use crate::flow::vec_coupling::{VecCouplingCache, VecCouplingLayer};
use crate::numerics::rng::RngStream;
use crate::numerics::store::{HasParams, ParamStore};
use crate::numerics::tensor::Tensor;

/// Output of one invertible transform: the transformed tensor plus each
/// sample's log |det Jacobian| contribution in nats.
#[derive(Clone, Debug)]
pub struct TransformResult {
    pub output: Tensor,
    pub log_det: Vec<f64>,
}

/// One step of a flow.
pub enum Flow {
    ActNorm(ActNorm),
    Coupling(CouplingLayer),
    VecCoupling(VecCouplingLayer),
    Squeeze,
    Split,
}

impl Clone for Flow {
    fn clone(&self) -> Flow {
        match self {
            Flow::ActNorm(a) => Flow::ActNorm(a.clone()),
            Flow::Coupling(c) => Flow::Coupling(c.clone()),
            Flow::VecCoupling(c) => Flow::VecCoupling(c.clone()),
            Flow::Squeeze => Flow::Squeeze,
            Flow::Split => Flow::Split,
        }
    }
}

enum FlowCache {
    ActNorm(ActNormCache),
    Coupling(CouplingCache),
    VecCoupling(VecCouplingCache),
    Squeeze,
    Split { dropped: Tensor },
}

/// Encoded batch: final latent plus everything needed to invert or score.
pub struct Encoded {
    pub latent: Tensor,
    pub log_det: Vec<f64>,
    pub splits: Vec<Tensor>,
    pub split_logp: Vec<f64>,
}

/// Cached forward pass consumed by [`FlowModel::backward`].
pub struct ForwardTrace {
    dequant: Option<DequantCache>,
    caches: Vec<FlowCache>,
    latent: Tensor,
    log_prob: Vec<f64>,
}

/// Either kind of sampled batch.
pub enum SampleBatch {
    Images(ImageBatch),
    Points(Tensor),
}

/// Per-sample latent layout implied by the transform list.
pub struct LatentLayout {
    pub final_shape: Vec<usize>,
    pub split_shapes: Vec<Vec<usize>>,
}

impl LatentLayout {
    pub fn total_dim(&self) -> usize {
        self.final_shape.iter().product::<usize>()
            + self.split_shapes.iter().map(|s| s.iter().product::<usize>()).sum::<usize>()
    }
}

pub struct FlowModel {
    desc: ArchDescriptor,
    pub dequant: Option<DequantStage>,
    pub transforms: Vec<Flow>,
    last_trace: Option<ForwardTrace>,
}

impl Clone for FlowModel {
    fn clone(&self) -> FlowModel {
        FlowModel {
            desc: self.desc.clone(),
            dequant: self.dequant.clone(),
            transforms: self.transforms.clone(),
            last_trace: None,
        }
    }
}

impl std::fmt::Debug for FlowModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowModel")
            .field("desc", &self.desc)
            .field("transforms", &self.transforms.len())
            .finish_non_exhaustive()
    }
}

fn transform_prefix(i: usize) -> String {
    format!("t{i:02}")
}

impl FlowModel {
    pub fn new(desc: ArchDescriptor, dequant: Option<DequantStage>, transforms: Vec<Flow>) -> FlowModel {
        FlowModel { desc, dequant, transforms, last_trace: None }
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.desc
    }

    pub fn input_spec(&self) -> &InputSpec {
        &self.desc.input
    }

    /// Per-sample input dimensionality after dequantization.
    pub fn input_dim(&self) -> usize {
        match self.desc.input {
            InputSpec::Image { channels, height, width } => channels * height * width,
            InputSpec::Points { dim } => dim,
        }
    }

    fn check_image_input(&self, imgs: &ImageBatch) -> Result<()> {
        match self.desc.input {
            InputSpec::Image { channels, height, width } => {
                if imgs.c != channels || imgs.h != height || imgs.w != width {
                    Err(Error::shape(format!(
                        "batch {}x{}x{} does not match model input {}x{}x{}",
                        imgs.c, imgs.h, imgs.w, channels, height, width
                    )))
                } else {
                    Ok(())
                }
            }
            InputSpec::Points { .. } => {
                Err(Error::shape("this model takes 2D points, not images"))
            }
        }
    }

    fn check_points_input(&self, pts: &Tensor) -> Result<()> {
        match self.desc.input {
            InputSpec::Points { dim } => {
                let (_, d) = pts.dims2()?;
                if d != dim {
                    Err(Error::shape(format!("points have dim {d}, model expects {dim}")))
                } else {
                    Ok(())
                }
            }
            InputSpec::Image { .. } => Err(Error::shape("this model takes images, not points")),
        }
    }

    /// Latent shapes implied by the transforms; also validates that total
    /// latent dimensionality equals input dimensionality.
    pub fn latent_layout(&self) -> Result<LatentLayout> {
        let mut shape: Vec<usize> = match self.desc.input {
            InputSpec::Image { channels, height, width } => vec![channels, height, width],
            InputSpec::Points { dim } => vec![dim],
        };
        let mut split_shapes = Vec::new();
        for t in &self.transforms {
            match t {
                Flow::Squeeze => {
                    if shape.len() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0 {
                        return Err(Error::shape(format!("cannot squeeze shape {shape:?}")));
                    }
                    shape = vec![shape[0] * 4, shape[1] / 2, shape[2] / 2];
                }
                Flow::Split => {
                    if shape.len() != 3 || shape[0] % 2 != 0 {
                        return Err(Error::shape(format!("cannot split shape {shape:?}")));
                    }
                    shape[0] /= 2;
                    split_shapes.push(shape.clone());
                }
                _ => {}
            }
        }
        let layout = LatentLayout { final_shape: shape, split_shapes };
        if layout.total_dim() != self.input_dim() {
            return Err(Error::shape(format!(
                "latent dimensionality {} does not match input {}",
                layout.total_dim(),
                self.input_dim()
            )));
        }
        Ok(layout)
    }

    // -- continuous forward / inverse -------------------------------------

    /// Run the transform chain on a continuous input (post-dequantization
    /// for image models; the raw points for 2D models).
    pub fn encode_continuous(&self, x: &Tensor) -> Result<Encoded> {
        let ((enc, _), _) = self.encode_impl(x, false)?;
        Ok(enc)
    }

    fn encode_impl(&self, x: &Tensor, want_cache: bool) -> Result<((Encoded, Vec<FlowCache>), ())> {
        let n = x.shape()[0];
        let mut cur = x.clone();
        let mut log_det = vec![0.0; n];
        let mut split_logp = vec![0.0; n];
        let mut splits = Vec::new();
        let mut caches = Vec::new();
        for t in &self.transforms {
            match t {
                Flow::ActNorm(a) => {
                    if want_cache {
                        let (r, c) = a.forward_train(&cur)?;
                        caches.push(FlowCache::ActNorm(c));
                        cur = r.output;
                        add_assign(&mut log_det, &r.log_det);
                    } else {
                        let r = a.forward(&cur)?;
                        cur = r.output;
                        add_assign(&mut log_det, &r.log_det);
                    }
                }
                Flow::Coupling(c) => {
                    if want_cache {
                        let (r, cc) = c.forward_train(&cur, None)?;
                        caches.push(FlowCache::Coupling(cc));
                        cur = r.output;
                        add_assign(&mut log_det, &r.log_det);
                    } else {
                        let r = c.forward(&cur, None)?;
                        cur = r.output;
                        add_assign(&mut log_det, &r.log_det);
                    }
                }
                Flow::VecCoupling(c) => {
                    if want_cache {
                        let (r, cc) = c.forward_train(&cur)?;
                        caches.push(FlowCache::VecCoupling(cc));
                        cur = r.output;
                        add_assign(&mut log_det, &r.log_det);
                    } else {
                        let r = c.forward(&cur)?;
                        cur = r.output;
                        add_assign(&mut log_det, &r.log_det);
                    }
                }
                Flow::Squeeze => {
                    cur = squeeze(&cur)?;
                    if want_cache {
                        caches.push(FlowCache::Squeeze);
                    }
                }
                Flow::Split => {
                    let (kept, dropped, logp) = split_forward(&cur)?;
                    add_assign(&mut split_logp, &logp);
                    if want_cache {
                        caches.push(FlowCache::Split { dropped: dropped.clone() });
                    }
                    splits.push(dropped);
                    cur = kept;
                }
            }
        }
        Ok(((Encoded { latent: cur, log_det, splits, split_logp }, caches), ()))
    }

    /// Invert the transform chain. `splits` must hold the dropped halves in
    /// the order they were produced during encoding.
    pub fn decode_continuous(&self, latent: &Tensor, splits: &[Tensor]) -> Result<Tensor> {
        let mut stack: Vec<&Tensor> = splits.iter().collect();
        let mut cur = latent.clone();
        for t in self.transforms.iter().rev() {
            match t {
                Flow::ActNorm(a) => cur = a.inverse(&cur)?,
                Flow::Coupling(c) => cur = c.inverse(&cur, None)?,
                Flow::VecCoupling(c) => cur = c.inverse(&cur)?,
                Flow::Squeeze => cur = unsqueeze(&cur)?,
                Flow::Split => {
                    let dropped = stack
                        .pop()
                        .ok_or_else(|| Error::State("missing split half during decode".into()))?;
                    cur = split_inverse(&cur, dropped)?;
                }
            }
        }
        if !stack.is_empty() {
            return Err(Error::State("unused split halves during decode".into()));
        }
        Ok(cur)
    }

    // -- log-likelihood ----------------------------------------------------

    /// Spec op surface: dequantize an image batch with explicit noise.
    pub fn dequantize(&self, imgs: &ImageBatch, noise: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        self.check_image_input(imgs)?;
        let stage = self
            .dequant
            .as_ref()
            .ok_or_else(|| Error::config("model has no dequantization stage"))?;
        let (y, corr, _) = stage.forward(&imgs.to_int_tensor(), noise, false)?;
        Ok((y, corr))
    }

    /// Per-sample log-likelihood of images given explicit dequantization
    /// noise (uniform in [0,1), same shape as the batch).
    pub fn log_prob_images(&self, imgs: &ImageBatch, noise: &Tensor) -> Result<Vec<f64>> {
        let (lp, _) = self.image_forward(imgs, noise, false)?;
        Ok(lp)
    }

    /// Per-sample log-likelihood with noise drawn from the stream
    /// (deterministic given the stream state).
    pub fn log_prob_images_rng(&self, imgs: &ImageBatch, rng: &mut RngStream) -> Result<Vec<f64>> {
        let mut noise = Tensor::zeros(&[imgs.n, imgs.c, imgs.h, imgs.w]);
        rng.fill_uniform(noise.data_mut());
        self.log_prob_images(imgs, &noise)
    }

    pub fn log_prob_points(&self, pts: &Tensor) -> Result<Vec<f64>> {
        self.check_points_input(pts)?;
        let enc = self.encode_continuous(pts)?;
        let prior = prior_logp_per_sample(&enc.latent);
        let mut lp = prior;
        add_assign(&mut lp, &enc.log_det);
        add_assign(&mut lp, &enc.split_logp);
        for v in &lp {
            if !v.is_finite() {
                return Err(Error::numerics("non-finite log-likelihood"));
            }
        }
        Ok(lp)
    }

    fn image_forward(
        &self,
        imgs: &ImageBatch,
        noise: &Tensor,
        want_cache: bool,
    ) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
        self.check_image_input(imgs)?;
        let stage = self
            .dequant
            .as_ref()
            .ok_or_else(|| Error::config("image model requires a dequantization stage"))?;
        let x_int = imgs.to_int_tensor();
        let (y, corr, dequant_cache) = stage.forward(&x_int, noise, want_cache)?;
        let ((enc, caches), ()) = self.encode_impl(&y, want_cache)?;
        let prior = prior_logp_per_sample(&enc.latent);
        let mut lp = prior;
        add_assign(&mut lp, &enc.log_det);
        add_assign(&mut lp, &enc.split_logp);
        add_assign(&mut lp, &corr);
        for v in &lp {
            if !v.is_finite() {
                return Err(Error::numerics("non-finite log-likelihood"));
            }
        }
        let trace = want_cache.then(|| ForwardTrace {
            dequant: dequant_cache,
            caches,
            latent: enc.latent,
            log_prob: lp.clone(),
        });
        Ok((lp, trace))
    }

    // -- training ------------------------------------------------------------

    /// Forward pass that records the trace needed by [`FlowModel::backward`].
    pub fn forward_train_images(&mut self, imgs: &ImageBatch, noise: &Tensor) -> Result<Vec<f64>> {
        let (lp, trace) = self.image_forward(imgs, noise, true)?;
        self.last_trace = trace;
        Ok(lp)
    }

    pub fn forward_train_points(&mut self, pts: &Tensor) -> Result<Vec<f64>> {
        self.check_points_input(pts)?;
        let ((enc, caches), ()) = self.encode_impl(pts, true)?;
        let prior = prior_logp_per_sample(&enc.latent);
        let mut lp = prior;
        add_assign(&mut lp, &enc.log_det);
        add_assign(&mut lp, &enc.split_logp);
        for v in &lp {
            if !v.is_finite() {
                return Err(Error::numerics("non-finite log-likelihood"));
            }
        }
        self.last_trace = Some(ForwardTrace {
            dequant: None,
            caches,
            latent: enc.latent,
            log_prob: lp.clone(),
        });
        Ok(lp)
    }

    /// Reverse-mode pass for the most recent training forward. `weights[i]`
    /// is dLoss/d(log_prob_i); parameter gradients accumulate into `store`.
    pub fn backward(&mut self, weights: &[f64], store: &mut ParamStore) -> Result<()> {
        let trace = self
            .last_trace
            .take()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let n = trace.latent.shape()[0];
        if weights.len() != n {
            return Err(Error::shape(format!(
                "{} loss weights for a batch of {n}",
                weights.len()
            )));
        }
        // d log_prob / d z = -z for the standard-normal prior.
        let mut grad = prior_grad(&trace.latent, weights);
        for (idx, (t, cache)) in
            self.transforms.iter().zip(&trace.caches).enumerate().rev()
        {
            let prefix = transform_prefix(idx);
            match (t, cache) {
                (Flow::ActNorm(a), FlowCache::ActNorm(c)) => {
                    grad = a.backward(c, &grad, weights, store, &format!("{prefix}.actnorm"))?;
                }
                (Flow::Coupling(l), FlowCache::Coupling(c)) => {
                    grad = l.backward(c, &grad, weights, store, &format!("{prefix}.coupling"))?;
                }
                (Flow::VecCoupling(l), FlowCache::VecCoupling(c)) => {
                    grad = l.backward(c, &grad, weights, store, &format!("{prefix}.coupling"))?;
                }
                (Flow::Squeeze, FlowCache::Squeeze) => {
                    grad = unsqueeze(&grad)?;
                }
                (Flow::Split, FlowCache::Split { dropped }) => {
                    let grad_dropped = prior_grad(dropped, weights);
                    grad = split_inverse(&grad, &grad_dropped)?;
                }
                _ => return Err(Error::State("trace does not match transforms".into())),
            }
        }
        if let (Some(stage), Some(dc)) = (&self.dequant, &trace.dequant) {
            stage.backward(dc, &grad, weights, store, "deq")?;
        }
        Ok(())
    }

    /// Log-probabilities from the most recent training forward.
    pub fn last_log_prob(&self) -> Option<&[f64]> {
        self.last_trace.as_ref().map(|t| t.log_prob.as_slice())
    }

    pub fn has_uninitialized_actnorms(&self) -> bool {
        self.transforms.iter().any(|t| matches!(t, Flow::ActNorm(a) if !a.is_initialized()))
    }

    /// Data-dependent init: walk the flow over a batch and set each
    /// uninitialized actnorm so its input is standardized.
    pub fn init_actnorms(&mut self, batch: &Tensor) -> Result<()> {
        let mut cur = batch.clone();
        for t in &mut self.transforms {
            match t {
                Flow::ActNorm(a) => {
                    if !a.is_initialized() {
                        a.init_from_batch(&cur)?;
                    }
                    cur = a.forward(&cur)?.output;
                }
                Flow::Coupling(c) => cur = c.forward(&cur, None)?.output,
                Flow::VecCoupling(c) => cur = c.forward(&cur)?.output,
                Flow::Squeeze => cur = squeeze(&cur)?,
                Flow::Split => {
                    let (kept, _, _) = split_forward(&cur)?;
                    cur = kept;
                }
            }
        }
        Ok(())
    }

    // -- sampling ------------------------------------------------------------

    /// Draw latents from the prior and invert the flow. Image models return
    /// discretized pixel batches.
    pub fn sample(&self, rng: &mut RngStream, n: usize) -> Result<SampleBatch> {
        let layout = self.latent_layout()?;
        let mut latent_shape = vec![n];
        latent_shape.extend(&layout.final_shape);
        let mut latent = Tensor::zeros(&latent_shape);
        rng.fill_normal(latent.data_mut());
        let mut splits = Vec::new();
        for s in &layout.split_shapes {
            let mut shape = vec![n];
            shape.extend(s);
            let mut t = Tensor::zeros(&shape);
            rng.fill_normal(t.data_mut());
            splits.push(t);
        }
        let y = self.decode_continuous(&latent, &splits)?;
        match self.desc.input {
            InputSpec::Image { channels, height, width } => {
                let pixels = DequantStage::discretize(&y)?;
                Ok(SampleBatch::Images(ImageBatch::from_pixels(
                    n, channels, height, width, pixels,
                )?))
            }
            InputSpec::Points { .. } => Ok(SampleBatch::Points(y)),
        }
    }

    // -- parameters and reporting ---------------------------------------------

    /// All trainable parameters as a snapshot store.
    pub fn params(&self) -> ParamStore {
        self.param_store("")
    }

    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        lines.push(format!("architecture: {}", self.desc.name));
        lines.push(format!("input: {}", self.desc.input.describe()));
        if let Some(stage) = &self.dequant {
            if stage.is_variational() {
                for (i, c) in stage.couplings.iter().enumerate() {
                    lines.push(format!(
                        "dequant coupling {i} ({} mask, parity {}, {} params)",
                        c.mask.label(),
                        c.mask.parity(),
                        c.param_count()
                    ));
                }
            } else {
                lines.push("dequant (uniform)".to_string());
            }
        }
        for (i, t) in self.transforms.iter().enumerate() {
            let line = match t {
                Flow::ActNorm(a) => format!("t{i:02} actnorm ({} dims)", a.log_s.numel()),
                Flow::Coupling(c) => format!(
                    "t{i:02} coupling ({} mask, parity {}, {} params)",
                    c.mask.label(),
                    c.mask.parity(),
                    c.param_count()
                ),
                Flow::VecCoupling(c) => format!(
                    "t{i:02} coupling ({} mask, parity {}, {} params)",
                    c.mask.label(),
                    c.mask.parity(),
                    c.param_count()
                ),
                Flow::Squeeze => format!("t{i:02} squeeze"),
                Flow::Split => format!("t{i:02} split"),
            };
            lines.push(line);
        }
        lines.push(format!("total parameters: {}", self.param_count()));
        lines.join("\n")
    }
}

impl HasParams for FlowModel {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        let p = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        if let Some(stage) = &self.dequant {
            stage.visit_params(&p("deq"), f);
        }
        for (i, t) in self.transforms.iter().enumerate() {
            let tp = p(&transform_prefix(i));
            match t {
                Flow::ActNorm(a) => a.visit_params(&format!("{tp}.actnorm"), f),
                Flow::Coupling(c) => c.visit_params(&format!("{tp}.coupling"), f),
                Flow::VecCoupling(c) => c.visit_params(&format!("{tp}.coupling"), f),
                Flow::Squeeze | Flow::Split => {}
            }
        }
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        let p = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        if let Some(stage) = &mut self.dequant {
            stage.visit_params_mut(&p("deq"), f);
        }
        for (i, t) in self.transforms.iter_mut().enumerate() {
            let tp = p(&transform_prefix(i));
            match t {
                Flow::ActNorm(a) => a.visit_params_mut(&format!("{tp}.actnorm"), f),
                Flow::Coupling(c) => c.visit_params_mut(&format!("{tp}.coupling"), f),
                Flow::VecCoupling(c) => c.visit_params_mut(&format!("{tp}.coupling"), f),
                Flow::Squeeze | Flow::Split => {}
            }
        }
    }
}

fn add_assign(acc: &mut [f64], delta: &[f64]) {
    for (a, d) in acc.iter_mut().zip(delta) {
        *a += d;
    }
}

/// Gradient of sum_i w_i * log N(z_i; 0, I) with respect to z.
fn prior_grad(z: &Tensor, weights: &[f64]) -> Tensor {
    let mut g = Tensor::zeros(z.shape());
    let n = z.shape()[0];
    for s in 0..n {
        let zs = z.sample(s);
        let gs = g.sample_mut(s);
        for (gv, &zv) in gs.iter_mut().zip(zs) {
            *gv = -zv * weights[s];
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::arch;
    use crate::flow::LN_2PI;

    #[test]
    fn empty_flow_log_prob_is_prior() {
        let model = arch::build_model(&ArchDescriptor::points("flow2d(0)", 2).unwrap()).unwrap();
        let x = Tensor::from_vec(&[2, 2], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let lp = model.log_prob_points(&x).unwrap();
        assert!((lp[0] - (-LN_2PI)).abs() < 1e-9, "{}", lp[0]);
        assert!((lp[1] - (-LN_2PI - 0.5)).abs() < 1e-9, "{}", lp[1]);
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut model =
            arch::build_model(&ArchDescriptor::points("flow2d(2)", 2).unwrap()).unwrap();
        let mut store = model.params();
        let r = model.backward(&[1.0], &mut store);
        assert!(matches!(r, Err(Error::State(_))));
    }

    #[test]
    fn latent_layout_preserves_dimensionality() {
        let desc = ArchDescriptor::image("fld-multiscale", 3, 16, 16).unwrap();
        let model = arch::build_model(&desc).unwrap();
        let layout = model.latent_layout().unwrap();
        assert_eq!(layout.total_dim(), 3 * 16 * 16);
        assert_eq!(layout.split_shapes.len(), 1);
    }
}
