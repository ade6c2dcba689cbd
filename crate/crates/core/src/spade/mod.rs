//! SPADE generator and multiscale discriminator conditioned on the graph volume.

mod checkpoint;
mod discriminator;
mod generator;
mod train;

use candle_core::Tensor;

use crate::error::Result;

pub use checkpoint::{load_checkpoint, load_model, save_checkpoint, CheckpointMeta};
pub use discriminator::{
    assemble_discriminator_batch, DiscriminatorSlices, MultiscaleDiscriminator, PatchDiscriminator,
};
pub use generator::{Generator, SpadeNorm, SpadeResBlock};
pub use train::{
    generate_image, model_summary, sample_noise, tensor_to_image, LossReport, ModelSummary, TrafficModel, TrainState,
    TrainingBatch,
};

/// Spatially-adaptive denormalization:
/// `γ_{c,y,x} · (h_{n,c,y,x} − μ_c) / σ_c + β_{c,y,x}`.
///
/// `μ_c` and `σ_c` are the batch statistics of channel `c` over `(n, y, x)` using the
/// biased variance, with `σ_c = sqrt(max(var_c, eps²))` so a constant channel does
/// not divide by zero. `gamma` and `beta` broadcast against `h` (`n × c × y × x` or
/// `1 × c × y × x`).
pub fn spade_normalize(h: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = h.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
    let centered = h.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
    let sigma = var.maximum(eps * eps)?.sqrt()?;
    let normalized = centered.broadcast_div(&sigma)?;
    Ok(normalized.broadcast_mul(gamma)?.broadcast_add(beta)?)
}
