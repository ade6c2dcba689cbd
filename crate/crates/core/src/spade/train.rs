use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor};
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{assemble_discriminator_batch, DiscriminatorSlices, Generator, MultiscaleDiscriminator};
use crate::condition::{index_tensor, Condition, ConditionModel};
use crate::config::{ModelConfig, TrainConfig};
use crate::dataset::{rasterize_boxes, DataPoint, SegmentationMap, LABEL_COUNT};
use crate::error::{ensure_domain, Error, Result};
use crate::nn::{Adam, ParamStore};
use crate::scene::{build_scene_graph, SceneEntity, SceneGraph, TimeEncoding};

/// Condition model plus generator, sharing one parameter store.
pub struct TrafficModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub condition: ConditionModel,
    pub generator: Generator,
}

impl TrafficModel {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new(seed, config.dtype());
        let condition = ConditionModel::new(&mut params, config)?;
        let generator = Generator::new(&mut params, config, config.condition.volume_channels())?;
        Ok(Self {
            config: config.clone(),
            params,
            condition,
            generator,
        })
    }

    /// Generates one image per graph. `segmaps` is `n × 5 × S × S`.
    pub fn generate(
        &self,
        graphs: &[&SceneGraph],
        segmaps: &Tensor,
        noise: Option<&Tensor>,
    ) -> Result<(Tensor, Condition)> {
        let cond = self.condition.forward(graphs)?;
        let images = self.generator.forward(segmaps, &cond.volume, noise)?;
        Ok((images, cond))
    }
}

/// Normal noise drawn from a ChaCha8 stream seeded with `seed`.
pub fn sample_noise(seed: u64, n: usize, dim: usize, dtype: DType) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f32> = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(Tensor::from_vec(v, (n, dim), &Device::Cpu)?.to_dtype(dtype)?)
}

pub(crate) fn image_tensor(image: &RgbImage, dtype: DType) -> Result<Tensor> {
    let (w, h) = image.dimensions();
    let t = Tensor::from_vec(image.as_raw().clone(), (h as usize, w as usize, 3), &Device::Cpu)?
        .permute((2, 0, 1))?
        .to_dtype(DType::F32)?;
    Ok(((t / 127.5)? - 1.0)?.to_dtype(dtype)?)
}

pub(crate) fn segmap_tensor(segmap: &SegmentationMap, dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        segmap.one_hot(),
        (LABEL_COUNT, segmap.height(), segmap.width()),
        &Device::Cpu,
    )?
    .to_dtype(dtype)?)
}

/// Converts one `3 × H × W` tensor in `[-1, 1]` to an 8-bit image.
pub fn tensor_to_image(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = t.dims3()?;
    ensure_domain!(c == 3, "expected 3 channels, got {c}");
    let v = ((t.to_dtype(DType::F32)?.clamp(-1f32, 1f32)? + 1.0)? * 127.5)?
        .round()?
        .permute((1, 2, 0))?
        .flatten_all()?
        .to_vec1::<f32>()?;
    let bytes = v.into_iter().map(|x| x as u8).collect();
    Ok(RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions"))
}

/// Stacked tensors for a list of data points.
pub struct TrainingBatch {
    pub images: Tensor,
    pub segmaps: Tensor,
    pub graphs: Vec<SceneGraph>,
}

impl TrainingBatch {
    pub fn new(points: &[&DataPoint], config: &ModelConfig) -> Result<Self> {
        ensure_domain!(!points.is_empty(), "empty batch");
        let s = config.generator.image_size;
        let dtype = config.dtype();
        let mut images = Vec::new();
        let mut segmaps = Vec::new();
        for (i, p) in points.iter().enumerate() {
            ensure_domain!(
                p.image.dimensions() == (s as u32, s as u32),
                "data point {i} is {:?}, model expects {s}x{s}",
                p.image.dimensions()
            );
            images.push(image_tensor(&p.image, dtype)?);
            segmaps.push(segmap_tensor(&p.segmap, dtype)?);
        }
        Ok(Self {
            images: Tensor::stack(&images, 0)?,
            segmaps: Tensor::stack(&segmaps, 0)?,
            graphs: points.iter().map(|p| p.graph.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Losses and diagnostics of one optimization step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub d_loss: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub g_adversarial: f64,
    pub g_feature_matching: f64,
    pub g_loss: f64,
    /// L2 norm of the gradient reaching the condition-model parameters.
    pub condition_grad_norm: f64,
}

/// Everything needed to continue training: both networks and both optimizers.
pub struct TrainState {
    pub model: TrafficModel,
    pub disc_params: ParamStore,
    pub discriminator: MultiscaleDiscriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub train: TrainConfig,
    pub step: u64,
}

const DISC_SEED_OFFSET: u64 = 0x5DEE_CE66;

impl TrainState {
    pub fn new(config: &ModelConfig, train: &TrainConfig) -> Result<Self> {
        let model = TrafficModel::new(config, train.seed)?;
        let mut disc_params = ParamStore::new(train.seed ^ DISC_SEED_OFFSET, config.dtype());
        let discriminator =
            MultiscaleDiscriminator::new(&mut disc_params, config, config.discriminator_input_channels())?;
        let opt_g = Adam::new(&model.params, train.generator_lr, train.beta1, train.beta2)?;
        let opt_d = Adam::new(&disc_params, train.discriminator_lr, train.beta1, train.beta2)?;
        Ok(Self {
            model,
            disc_params,
            discriminator,
            opt_g,
            opt_d,
            train: train.clone(),
            step: 0,
        })
    }

    /// Noise seed for `step`; a resumed run draws the same noise as an uninterrupted one.
    pub fn step_seed(&self, step: u64) -> u64 {
        self.train
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(step.wrapping_mul(0xBF58_476D_1CE4_E5B9))
    }

    /// One discriminator update followed by one generator update.
    ///
    /// The batch holds `2k` real images; `k` fakes are generated from the conditions
    /// of the even-indexed reals, so volume `2i` pairs fake `i` with the real image it
    /// was conditioned on. Feature matching compares those pairs only.
    pub fn train_step(&mut self, batch: &TrainingBatch) -> Result<LossReport> {
        let n = batch.len();
        ensure_domain!(n >= 2 && n % 2 == 0, "batch size must be even and >= 2, got {n}");
        let k = n / 2;
        let step = self.step;
        let model = &self.model;
        let graphs: Vec<&SceneGraph> = batch.graphs.iter().collect();
        let cond = model.condition.forward(&graphs)?;
        let even: Vec<usize> = (0..k).map(|i| 2 * i).collect();
        let fake_cond = cond.select(&even)?;
        let fake_seg = batch.segmaps.index_select(&index_tensor(&even, &Device::Cpu)?, 0)?;
        let noise = match model.generator.noise_dim() {
            0 => None,
            d => Some(sample_noise(self.step_seed(step), k, d, model.config.dtype())?),
        };
        let fakes = model.generator.forward(&fake_seg, &fake_cond.volume, noise.as_ref())?;

        // Discriminator update on detached inputs.
        let real_d = DiscriminatorSlices {
            images: batch.images.clone(),
            segmaps: batch.segmaps.clone(),
            latents: cond.latent.detach(),
        };
        let fake_d = DiscriminatorSlices {
            images: fakes.detach(),
            segmaps: fake_seg.clone(),
            latents: fake_cond.latent.detach(),
        };
        let outputs = self.discriminator.forward(&assemble_discriminator_batch(&real_d, &fake_d)?)?;
        let (d_real, d_fake) = hinge_discriminator(&outputs)?;
        let d_loss = (&d_real + &d_fake)?;
        let d_value = scalar(&d_loss)?;
        check_finite(step, "discriminator loss", d_value)?;
        self.opt_d.step(&d_loss.backward()?)?;

        // Generator update; gradients reach the condition model through both the
        // condition volume and the latent images shown to the discriminator.
        let real_g = DiscriminatorSlices {
            latents: cond.latent.clone(),
            ..real_d
        };
        let fake_g = DiscriminatorSlices {
            images: fakes,
            segmaps: fake_seg,
            latents: fake_cond.latent,
        };
        let outputs = self.discriminator.forward(&assemble_discriminator_batch(&real_g, &fake_g)?)?;
        let g_adv = generator_adversarial(&outputs)?;
        let mut g_loss = g_adv.clone();
        let mut fm_value = 0.0;
        if self.train.feature_matching_weight > 0.0 {
            let fm = (feature_matching(&outputs, k)? * self.train.feature_matching_weight)?;
            fm_value = scalar(&fm)?;
            g_loss = (g_loss + fm)?;
        }
        let g_value = scalar(&g_loss)?;
        check_finite(step, "generator loss", g_value)?;
        let grads = g_loss.backward()?;
        let grad_norm = grad_norm(&self.model.params, &grads, ConditionModel::PREFIX)?;
        check_finite(step, "condition gradient norm", grad_norm)?;
        self.opt_g.step(&grads)?;
        self.step += 1;

        Ok(LossReport {
            step: self.step,
            d_loss: d_value,
            d_real: scalar(&d_real)?,
            d_fake: scalar(&d_fake)?,
            g_adversarial: scalar(&g_adv)?,
            g_feature_matching: fm_value,
            g_loss: g_value,
            condition_grad_norm: grad_norm,
        })
    }
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn check_finite(step: u64, what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Training {
            step,
            message: format!("{what} is {value}"),
        })
    }
}

/// Splits a score map of stacked volumes into its fake (top) and real (bottom) halves.
fn halves(t: &Tensor) -> Result<(Tensor, Tensor)> {
    let h = t.dim(2)?;
    ensure_domain!(h % 2 == 0, "stacked feature map has odd height {h}");
    Ok((t.narrow(2, 0, h / 2)?, t.narrow(2, h / 2, h / 2)?))
}

/// Hinge loss terms `(mean relu(1 - D(real)), mean relu(1 + D(fake)))`, averaged over scales.
fn hinge_discriminator(outputs: &[Vec<Tensor>]) -> Result<(Tensor, Tensor)> {
    let mut real = Vec::new();
    let mut fake = Vec::new();
    for feats in outputs {
        let (f, r) = halves(feats.last().expect("non-empty feature list"))?;
        real.push(r.affine(-1.0, 1.0)?.relu()?.mean_all()?);
        fake.push((f + 1.0)?.relu()?.mean_all()?);
    }
    let s = outputs.len() as f64;
    Ok(((Tensor::stack(&real, 0)?.sum_all()? / s)?, (Tensor::stack(&fake, 0)?.sum_all()? / s)?))
}

fn generator_adversarial(outputs: &[Vec<Tensor>]) -> Result<Tensor> {
    let mut terms = Vec::new();
    for feats in outputs {
        let (f, _) = halves(feats.last().expect("non-empty feature list"))?;
        terms.push(f.mean_all()?.neg()?);
    }
    Ok((Tensor::stack(&terms, 0)?.sum_all()? / outputs.len() as f64)?)
}

/// L1 distance between discriminator features of each fake and the real image sharing
/// its condition (the even-indexed volumes), averaged over scales.
fn feature_matching(outputs: &[Vec<Tensor>], k: usize) -> Result<Tensor> {
    let even = index_tensor(&(0..k).map(|i| 2 * i).collect::<Vec<_>>(), &Device::Cpu)?;
    let mut terms = Vec::new();
    for feats in outputs {
        for f in &feats[..feats.len() - 1] {
            let (fake, real) = halves(&f.index_select(&even, 0)?)?;
            terms.push((fake - real.detach())?.abs()?.mean_all()?);
        }
    }
    Ok((Tensor::stack(&terms, 0)?.sum_all()? / outputs.len() as f64)?)
}

fn grad_norm(params: &ParamStore, grads: &GradStore, prefix: &str) -> Result<f64> {
    let mut total = 0.0;
    for (name, var) in params.iter() {
        if !name.starts_with(prefix) {
            continue;
        }
        if let Some(g) = grads.get(var.as_tensor()) {
            total += scalar(&g.sqr()?.sum_all()?)?;
        }
    }
    Ok(total.sqrt())
}

/// Renders a user scene with a trained model.
pub fn generate_image(
    model: &TrafficModel,
    entities: &[SceneEntity],
    time: TimeEncoding,
    seed: u64,
) -> Result<RgbImage> {
    let cfg = &model.config;
    let graph = build_scene_graph(entities, time, cfg.lattice, cfg.variant)?;
    let s = cfg.generator.image_size;
    let segmap = rasterize_boxes(entities.iter().map(|e| (e.entity_class, &e.bbox)), s, s)?;
    let seg = segmap_tensor(&segmap, cfg.dtype())?.unsqueeze(0)?;
    let noise = match cfg.generator.noise_dim {
        0 => None,
        d => Some(sample_noise(seed, 1, d, cfg.dtype())?),
    };
    let (images, _) = model.generate(&[&graph], &seg, noise.as_ref())?;
    tensor_to_image(&images.get(0)?)
}

/// Parameter counts of the graph-conditioned model against a label-conditioned SPADE
/// of the same generator and discriminator shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub condition_params: usize,
    pub generator_params: usize,
    pub discriminator_params: usize,
    pub total_params: usize,
    pub baseline_generator_params: usize,
    pub baseline_discriminator_params: usize,
    pub baseline_total_params: usize,
    /// `total / baseline_total - 1`.
    pub overhead: f64,
}

pub fn model_summary(config: &ModelConfig) -> Result<ModelSummary> {
    config.validate()?;
    // Counting parameters only needs shapes; f32 keeps this cheap for large configs.
    let mut cfg = config.clone();
    cfg.precision = crate::config::Precision::F32;
    let mut ours = ParamStore::new(0, DType::F32);
    ConditionModel::new(&mut ours, &cfg)?;
    Generator::new(&mut ours, &cfg, cfg.condition.volume_channels())?;
    let mut ours_d = ParamStore::new(0, DType::F32);
    MultiscaleDiscriminator::new(&mut ours_d, &cfg, cfg.discriminator_input_channels())?;

    let mut base = ParamStore::new(0, DType::F32);
    Generator::new(&mut base, &cfg, LABEL_COUNT)?;
    let mut base_d = ParamStore::new(0, DType::F32);
    MultiscaleDiscriminator::new(&mut base_d, &cfg, 3 + LABEL_COUNT)?;

    let condition_params = ours.parameter_count_with_prefix(ConditionModel::PREFIX);
    let generator_params = ours.parameter_count_with_prefix(Generator::PREFIX);
    let discriminator_params = ours_d.parameter_count();
    let total = ours.parameter_count() + discriminator_params;
    let baseline_total = base.parameter_count() + base_d.parameter_count();
    Ok(ModelSummary {
        condition_params,
        generator_params,
        discriminator_params,
        total_params: total,
        baseline_generator_params: base.parameter_count(),
        baseline_discriminator_params: base_d.parameter_count(),
        baseline_total_params: baseline_total,
        overhead: total as f64 / baseline_total as f64 - 1.0,
    })
}
