//! Deterministic f64 tensor arithmetic with hand-derived reverse-mode
//! gradients and a finite-difference oracle.
//!
//! Block registry (every differentiable block and where its derivative
//! lives):
//!
//! | block                | forward                                   | backward          |
//! |----------------------|-------------------------------------------|-------------------|
//! | `conv2d`             | zero-padded cross-correlation             | [`conv`]          |
//! | `Linear`             | `y = x W + b`, weight stored input-major  | [`linear`]        |
//! | `concat_elu`         | `concat(elu(x), elu(-x))` over channels   | [`blocks`]        |
//! | `GatedConvBlock`     | residual `x + val * sigmoid(gate)`        | [`blocks`]        |
//! | `ChannelLayerNorm`   | per-position normalization over channels  | [`blocks`]        |
//! | coupling affine      | `y = x*exp(s) + t`, soft-clamped `s`      | `flow::coupling`  |
//! | actnorm              | `y = exp(log_s)*x + b`                    | `flow::actnorm`   |
//! | dequant squashing    | logit / sigmoid with log-det terms        | `flow::dequant`   |
//!
//! All cross-sample reductions accumulate in ascending sample order so that
//! results are bit-identical regardless of thread count.

pub mod conv;
pub mod grad_check;
pub mod linear;
pub mod matmul;
pub mod rng;
pub mod store;
pub mod tensor;

pub mod blocks;

pub use rng::RngStream;
pub use store::ParamStore;
pub use tensor::Tensor;
