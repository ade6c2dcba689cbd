use candle_core::Tensor;

use crate::config::ModelConfig;
use crate::dataset::LABEL_COUNT;
use crate::error::{ensure_domain, Result};
use crate::nn::{instance_norm, join, leaky_relu, Conv2d, ParamStore};

/// Images with the conditions they were drawn from.
#[derive(Clone, Debug)]
pub struct DiscriminatorSlices {
    /// `n × 3 × H × W` in `[-1, 1]`.
    pub images: Tensor,
    /// `n × 5 × H × W` one-hot.
    pub segmaps: Tensor,
    /// `n × C × rows × cols`; upsampled to `H × W` by replication.
    pub latents: Tensor,
}

impl DiscriminatorSlices {
    fn len(&self) -> Result<usize> {
        Ok(self.images.dim(0)?)
    }

    fn volume(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.images.dims4()?;
        ensure_domain!(c == 3, "images must have 3 channels, got {c}");
        ensure_domain!(
            self.segmaps.dims() == [n, LABEL_COUNT, h, w],
            "segmentation maps must be {n} x {LABEL_COUNT} x {h} x {w}, got {:?}",
            self.segmaps.dims()
        );
        let (ln, _, lh, lw) = self.latents.dims4()?;
        ensure_domain!(
            ln == n && h % lh == 0 && w % lw == 0,
            "latent images {:?} do not tile {n} images of {h}x{w}",
            self.latents.dims()
        );
        let latents = self.latents.upsample_nearest2d(h, w)?;
        Ok(Tensor::cat(&[&self.images, &self.segmaps, &latents], 1)?)
    }
}

/// Builds the discriminator input from `2k` real and `k` generated slices.
///
/// Fake `i` is paired with reals `2i` and `2i + 1`; each pair is stacked along the
/// height axis, fake on top. Volume `2i` therefore holds a fake and the real image
/// sharing its condition (when fake `i` was generated from the condition of real
/// `2i`). Every slice carries its own segmentation map and latent image. Output is
/// `2k × (8 + C) × 2H × W`; rows `[0, H)` are fake, rows `[H, 2H)` real.
pub fn assemble_discriminator_batch(
    real: &DiscriminatorSlices,
    fake: &DiscriminatorSlices,
) -> Result<Tensor> {
    let (nr, nf) = (real.len()?, fake.len()?);
    ensure_domain!(nf > 0, "no generated images");
    ensure_domain!(
        nr == 2 * nf,
        "need exactly twice as many real images as fakes, got {nr} real and {nf} fake"
    );
    let real_v = real.volume()?;
    let fake_v = fake.volume()?;
    ensure_domain!(
        real_v.dims()[1..] == fake_v.dims()[1..],
        "real slices {:?} and fake slices {:?} differ in shape",
        real_v.dims(),
        fake_v.dims()
    );
    // Repeat each fake twice: [f0, f0, f1, f1, ...].
    let (_, c, h, w) = fake_v.dims4()?;
    let fakes = fake_v
        .unsqueeze(1)?
        .broadcast_as((nf, 2, c, h, w))?
        .reshape((nr, c, h, w))?;
    Ok(Tensor::cat(&[&fakes, &real_v], 2)?)
}

/// PatchGAN discriminator returning every intermediate activation.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    layers: Vec<(Conv2d, bool)>,
    head: Conv2d,
}

impl PatchDiscriminator {
    /// `layers` stride-2 4×4 convolutions, one stride-1 3×3 convolution, then a 3×3
    /// convolution to one channel. Instance norm on all but the first layer.
    pub fn new(params: &mut ParamStore, name: &str, in_channels: usize, base: usize, layers: usize) -> Result<Self> {
        let mut convs = Vec::new();
        let mut fin = in_channels;
        for i in 0..layers {
            let fout = base << i.min(3);
            convs.push((Conv2d::new(params, &join(name, &format!("conv{i}")), fin, fout, 4, 2, 1)?, i > 0));
            fin = fout;
        }
        let fout = base << layers.min(3);
        convs.push((Conv2d::new(params, &join(name, &format!("conv{layers}")), fin, fout, 3, 1, 1)?, true));
        let head = Conv2d::new(params, &join(name, "head"), fout, 1, 3, 1, 1)?;
        Ok(Self { layers: convs, head })
    }

    /// Intermediate features followed by the score map (last element).
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let mut h = x.clone();
        for (conv, norm) in &self.layers {
            h = conv.forward(&h)?;
            if *norm {
                h = instance_norm(&h, 1e-5)?;
            }
            h = leaky_relu(&h, 0.2)?;
            out.push(h.clone());
        }
        out.push(self.head.forward(&h)?);
        Ok(out)
    }
}

/// Patch discriminators applied to successively 2×-downsampled copies of the input.
#[derive(Clone, Debug)]
pub struct MultiscaleDiscriminator {
    scales: Vec<PatchDiscriminator>,
}

impl MultiscaleDiscriminator {
    pub const PREFIX: &'static str = "discriminator";

    pub fn new(params: &mut ParamStore, config: &ModelConfig, in_channels: usize) -> Result<Self> {
        let d = &config.discriminator;
        let scales = (0..d.scales)
            .map(|s| {
                PatchDiscriminator::new(
                    params,
                    &join(Self::PREFIX, &format!("scale{s}")),
                    in_channels,
                    d.base_channels,
                    d.layers,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { scales })
    }

    pub fn scale_count(&self) -> usize {
        self.scales.len()
    }

    /// One feature list per scale, finest first.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Vec<Tensor>>> {
        let mut out = Vec::with_capacity(self.scales.len());
        let mut input = x.clone();
        for (i, d) in self.scales.iter().enumerate() {
            if i > 0 {
                input = input.avg_pool2d(2)?;
            }
            out.push(d.forward(&input)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn slices(n: usize, fill: f64) -> DiscriminatorSlices {
        let dev = Device::Cpu;
        DiscriminatorSlices {
            images: (Tensor::ones((n, 3, 8, 8), DType::F32, &dev).unwrap() * fill).unwrap(),
            segmaps: Tensor::zeros((n, 5, 8, 8), DType::F32, &dev).unwrap(),
            latents: Tensor::zeros((n, 2, 2, 2), DType::F32, &dev).unwrap(),
        }
    }

    #[test]
    fn fakes_on_top_reals_below() {
        let mut real = slices(4, 1.0);
        real.images = Tensor::arange(0f32, 4.0, &Device::Cpu)
            .unwrap()
            .reshape((4, 1, 1, 1))
            .unwrap()
            .broadcast_as((4, 3, 8, 8))
            .unwrap()
            .contiguous()
            .unwrap();
        let mut fake = slices(2, 0.0);
        fake.images = (Tensor::arange(0f32, 2.0, &Device::Cpu)
            .unwrap()
            .reshape((2, 1, 1, 1))
            .unwrap()
            .broadcast_as((2, 3, 8, 8))
            .unwrap()
            - 10.0)
            .unwrap();
        let v = assemble_discriminator_batch(&real, &fake).unwrap();
        assert_eq!(v.dims(), &[4, 10, 16, 8]);
        let corner = |n: usize, y: usize| v.get(n).unwrap().get(0).unwrap().get(y).unwrap().get(0).unwrap().to_scalar::<f32>().unwrap();
        assert_eq!([corner(0, 0), corner(1, 0), corner(2, 0), corner(3, 0)], [-10.0, -10.0, -9.0, -9.0]);
        assert_eq!([corner(0, 8), corner(1, 8), corner(2, 8), corner(3, 8)], [0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn ratio_is_enforced() {
        assert!(assemble_discriminator_batch(&slices(3, 1.0), &slices(2, 0.0)).is_err());
        assert!(assemble_discriminator_batch(&slices(2, 1.0), &slices(2, 0.0)).is_err());
    }
}
