//! Invertible transforms, flow composition, exact log-likelihood and
//! checkpoint serialization.

pub mod actnorm;
pub mod arch;
pub mod checkpoint;
pub mod coupling;
pub mod dequant;
pub mod mask;
pub mod model;
pub mod split;
pub mod squeeze;
pub mod vec_coupling;

pub use arch::{build_model, ArchDescriptor, ArchKind, InputSpec};
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use mask::Mask;
pub use model::{FlowModel, TransformResult};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Per-sample standard-normal log-density, summed over all non-batch dims
/// in ascending index order.
pub fn prior_logp_per_sample(z: &crate::Tensor) -> Vec<f64> {
    let n = z.shape()[0];
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let mut lp = 0.0;
        for &v in z.sample(s) {
            lp += -0.5 * (v * v + LN_2PI);
        }
        out.push(lp);
    }
    out
}
