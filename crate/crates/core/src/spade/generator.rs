use candle_core::Tensor;

use super::spade_normalize;
use crate::config::ModelConfig;
use crate::dataset::LABEL_COUNT;
use crate::error::{ensure_domain, Result};
use crate::nn::{join, leaky_relu, resize, Conv2d, ParamStore};

const NORM_EPS: f64 = 1e-5;

/// Parameter-free batch normalization modulated by per-pixel `γ`, `β` computed from
/// the conditioning tensor.
#[derive(Clone, Debug)]
pub struct SpadeNorm {
    shared: Conv2d,
    gamma: Conv2d,
    beta: Conv2d,
}

impl SpadeNorm {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        channels: usize,
        cond_channels: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(Self {
            shared: Conv2d::new(params, &join(name, "shared"), cond_channels, hidden, 3, 1, 1)?,
            // γ starts near 1 so the block is close to plain normalization at init.
            gamma: Conv2d::with_bias(params, &join(name, "gamma"), hidden, channels, 3, 1.0)?,
            beta: Conv2d::with_bias(params, &join(name, "beta"), hidden, channels, 3, 0.0)?,
        })
    }

    /// `cond` must already be at the resolution of `x`.
    pub fn forward(&self, x: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let actv = self.shared.forward(cond)?.relu()?;
        let gamma = self.gamma.forward(&actv)?;
        let beta = self.beta.forward(&actv)?;
        spade_normalize(x, &gamma, &beta, NORM_EPS)
    }
}

/// Residual block with two SPADE-normalized 3×3 convolutions and a learned shortcut
/// when the channel count changes.
#[derive(Clone, Debug)]
pub struct SpadeResBlock {
    norm_0: SpadeNorm,
    conv_0: Conv2d,
    norm_1: SpadeNorm,
    conv_1: Conv2d,
    shortcut: Option<(SpadeNorm, Conv2d)>,
}

impl SpadeResBlock {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        fin: usize,
        fout: usize,
        cond_channels: usize,
        hidden: usize,
    ) -> Result<Self> {
        let fmid = fin.min(fout);
        let shortcut = if fin != fout {
            Some((
                SpadeNorm::new(params, &join(name, "norm_s"), fin, cond_channels, hidden)?,
                Conv2d::new(params, &join(name, "conv_s"), fin, fout, 1, 1, 0)?,
            ))
        } else {
            None
        };
        Ok(Self {
            norm_0: SpadeNorm::new(params, &join(name, "norm_0"), fin, cond_channels, hidden)?,
            conv_0: Conv2d::new(params, &join(name, "conv_0"), fin, fmid, 3, 1, 1)?,
            norm_1: SpadeNorm::new(params, &join(name, "norm_1"), fmid, cond_channels, hidden)?,
            conv_1: Conv2d::new(params, &join(name, "conv_1"), fmid, fout, 3, 1, 1)?,
            shortcut,
        })
    }

    pub fn forward(&self, x: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        let cond = resize(cond, h, w)?;
        let skip = match &self.shortcut {
            Some((norm, conv)) => conv.forward(&norm.forward(x, &cond)?)?,
            None => x.clone(),
        };
        let dx = self.conv_0.forward(&leaky_relu(&self.norm_0.forward(x, &cond)?, 0.2)?)?;
        let dx = self.conv_1.forward(&leaky_relu(&self.norm_1.forward(&dx, &cond)?, 0.2)?)?;
        Ok((skip + dx)?)
    }
}

/// SPADE generator.
///
/// The input is the segmentation one-hot, area-downsampled to the base resolution and
/// concatenated with a spatially broadcast noise vector. Each residual block is
/// modulated by the conditioning tensor rescaled to its resolution; blocks after the
/// first run at twice the previous resolution. Output is `tanh`, in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Generator {
    head: Conv2d,
    blocks: Vec<SpadeResBlock>,
    conv_img: Conv2d,
    base_size: usize,
    image_size: usize,
    noise_dim: usize,
    cond_channels: usize,
}

impl Generator {
    pub const PREFIX: &'static str = "generator";

    /// `cond_channels` is the depth of the tensor fed to the SPADE layers: the graph
    /// condition volume, or the label one-hot for a label-conditioned baseline.
    pub fn new(params: &mut ParamStore, config: &ModelConfig, cond_channels: usize) -> Result<Self> {
        let g = &config.generator;
        let name = |s: &str| join(Self::PREFIX, s);
        let head = Conv2d::new(params, &name("head"), LABEL_COUNT + g.noise_dim, g.channels[0], 3, 1, 1)?;
        let mut blocks = Vec::new();
        let mut fin = g.channels[0];
        for (i, fout) in g.channels.iter().enumerate() {
            blocks.push(SpadeResBlock::new(
                params,
                &name(&format!("block{i}")),
                fin,
                *fout,
                cond_channels,
                g.spade_hidden,
            )?);
            fin = *fout;
        }
        let conv_img = Conv2d::new(params, &name("conv_img"), fin, 3, 3, 1, 1)?;
        Ok(Self {
            head,
            blocks,
            conv_img,
            base_size: g.base_size,
            image_size: g.image_size,
            noise_dim: g.noise_dim,
            cond_channels,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// `segmap`: `n × 5 × S × S` one-hot at image size `S`; `cond`: `n × C × h × w`;
    /// `noise`: `n × noise_dim` (ignored when `noise_dim` is 0).
    pub fn forward(&self, segmap: &Tensor, cond: &Tensor, noise: Option<&Tensor>) -> Result<Tensor> {
        let (n, labels, h, w) = segmap.dims4()?;
        ensure_domain!(
            labels == LABEL_COUNT && h == self.image_size && w == self.image_size,
            "segmentation input must be n x {LABEL_COUNT} x {s} x {s}, got {:?}",
            segmap.dims(),
            s = self.image_size
        );
        ensure_domain!(
            cond.dim(0)? == n && cond.dim(1)? == self.cond_channels,
            "condition must be {n} x {} x h x w, got {:?}",
            self.cond_channels,
            cond.dims()
        );
        let s = self.base_size;
        let mut x = resize(segmap, s, s)?;
        if self.noise_dim > 0 {
            let z = noise.ok_or_else(|| crate::Error::domain("generator expects a noise vector"))?;
            ensure_domain!(
                z.dims() == [n, self.noise_dim],
                "noise must be {n} x {}, got {:?}",
                self.noise_dim,
                z.dims()
            );
            let z = z.reshape((n, self.noise_dim, 1, 1))?.broadcast_as((n, self.noise_dim, s, s))?;
            x = Tensor::cat(&[&x, &z.contiguous()?], 1)?;
        }
        let mut x = self.head.forward(&x)?;
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                let (_, _, h, w) = x.dims4()?;
                x = x.upsample_nearest2d(2 * h, 2 * w)?;
            }
            x = block.forward(&x, cond)?;
        }
        Ok(self.conv_img.forward(&leaky_relu(&x, 0.2)?)?.tanh()?)
    }
}
