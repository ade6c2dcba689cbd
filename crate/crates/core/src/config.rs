//! Model and training configuration, loadable from TOML or JSON.

use std::path::Path;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use crate::dataset::LABEL_COUNT;
use crate::error::{ensure_domain, Error, Result};
use crate::scene::{GraphVariant, LatticeSpec};

/// Attention layers of the condition model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    /// Output width per head of each layer.
    pub widths: Vec<usize>,
    /// Head count per layer. Hidden layers concatenate heads; the last averages them.
    pub heads: Vec<usize>,
    pub negative_slope: f64,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            widths: vec![64, 64, 64],
            heads: vec![4, 4, 1],
            negative_slope: 0.2,
        }
    }
}

impl GatConfig {
    /// Width of the node embeddings leaving layer `i`.
    pub fn output_width(&self, layer: usize) -> usize {
        if layer + 1 == self.widths.len() {
            self.widths[layer]
        } else {
            self.widths[layer] * self.heads[layer]
        }
    }

    pub fn latent_channels(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }
}

/// Upsampling stages turning the latent image into the condition volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    /// Output channels of each 2× transposed-convolution stage; the last is the
    /// condition-volume depth.
    pub upsample_channels: Vec<usize>,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            upsample_channels: vec![64, 64, 64, 64],
        }
    }
}

impl ConditionConfig {
    pub fn volume_channels(&self) -> usize {
        *self.upsample_channels.last().unwrap_or(&0)
    }

    pub fn scale(&self) -> usize {
        1 << self.upsample_channels.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Output image side length.
    pub image_size: usize,
    /// Side length of the first residual block.
    pub base_size: usize,
    /// Channels of each residual block; every block after the first doubles resolution.
    pub channels: Vec<usize>,
    /// Hidden width of the convolutions producing gamma and beta.
    pub spade_hidden: usize,
    /// Length of the per-image noise vector; 0 disables noise.
    pub noise_dim: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            image_size: 640,
            base_size: 20,
            channels: vec![512, 512, 256, 128, 64, 32],
            spade_hidden: 128,
            noise_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
    /// Stride-2 layers per patch discriminator.
    pub layers: usize,
    /// Number of input scales, each half the previous resolution.
    pub scales: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            layers: 3,
            scales: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// Full model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: GraphVariant,
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub gat: GatConfig,
    #[serde(default)]
    pub condition: ConditionConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default = "default_precision")]
    pub precision: Precision,
}

fn default_precision() -> Precision {
    Precision::F32
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: GraphVariant::Cluster,
            lattice: LatticeSpec::default(),
            gat: GatConfig::default(),
            condition: ConditionConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            precision: Precision::F32,
        }
    }
}

impl ModelConfig {
    /// Desk-scale model: 4×4 lattice, 64×64 images, 8-channel condition path.
    pub fn toy(variant: GraphVariant) -> Self {
        Self {
            variant,
            lattice: LatticeSpec {
                rows: 4,
                cols: 4,
                connect_radius_hops: 1,
            },
            gat: GatConfig {
                widths: vec![8, 8, 8],
                heads: vec![2, 2, 1],
                negative_slope: 0.2,
            },
            condition: ConditionConfig {
                upsample_channels: vec![8, 8, 8, 8],
            },
            generator: GeneratorConfig {
                image_size: 64,
                base_size: 8,
                channels: vec![32, 32, 16, 16],
                spade_hidden: 16,
                noise_dim: 8,
            },
            discriminator: DiscriminatorConfig {
                base_channels: 16,
                layers: 3,
                scales: 2,
            },
            precision: Precision::F32,
        }
    }

    pub fn dtype(&self) -> DType {
        self.precision.dtype()
    }

    pub fn latent_channels(&self) -> usize {
        self.gat.latent_channels()
    }

    /// Channels of each discriminator input slice: image, segmentation one-hot, latent.
    pub fn discriminator_input_channels(&self) -> usize {
        3 + LABEL_COUNT + self.latent_channels()
    }

    /// Spatial size of the condition volume.
    pub fn volume_size(&self) -> (usize, usize) {
        let s = self.condition.scale();
        (self.lattice.rows * s, self.lattice.cols * s)
    }

    /// Resolution of each generator block.
    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.generator.channels.len())
            .map(|i| self.generator.base_size << i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        let g = &self.gat;
        ensure_domain!(!g.widths.is_empty(), "at least one GAT layer is required");
        ensure_domain!(
            g.widths.len() == g.heads.len(),
            "GAT widths and heads must have the same length"
        );
        ensure_domain!(
            g.widths.iter().chain(&g.heads).all(|v| *v > 0),
            "GAT widths and heads must be positive"
        );
        ensure_domain!(
            !self.condition.upsample_channels.is_empty()
                && self.condition.upsample_channels.iter().all(|c| *c > 0),
            "condition upsampling needs positive channel counts"
        );
        let gen = &self.generator;
        ensure_domain!(!gen.channels.is_empty(), "generator needs at least one block");
        ensure_domain!(gen.base_size > 0 && gen.spade_hidden > 0, "generator sizes must be positive");
        let top = gen.base_size << (gen.channels.len() - 1);
        ensure_domain!(
            top == gen.image_size,
            "generator blocks end at {top}px but image_size is {}",
            gen.image_size
        );
        ensure_domain!(
            gen.image_size % gen.base_size == 0,
            "image size must be a multiple of the base size"
        );
        let (vh, vw) = self.volume_size();
        for size in self.block_sizes() {
            let ok = |v: usize| v % size == 0 || size % v == 0;
            ensure_domain!(
                ok(vh) && ok(vw),
                "condition volume {vh}x{vw} cannot be rescaled to block size {size}"
            );
        }
        for v in [self.lattice.rows, self.lattice.cols] {
            ensure_domain!(
                gen.image_size % v == 0,
                "image size {} is not a multiple of the lattice size {v}",
                gen.image_size
            );
        }
        let d = &self.discriminator;
        ensure_domain!(d.layers >= 1 && d.scales >= 1 && d.base_channels > 0, "bad discriminator shape");
        let stride = 1usize << (d.layers + d.scales);
        ensure_domain!(
            (2 * gen.image_size) % stride == 0 && gen.image_size % (stride / 2) == 0,
            "image size {} too small for a {}-layer, {}-scale discriminator",
            gen.image_size,
            d.layers,
            d.scales
        );
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        load_config(path)
    }
}

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Real images per step; must be even, half as many fakes are generated.
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the discriminator feature-matching term; 0 disables it.
    pub feature_matching_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 12,
            eval_batch_size: 24,
            generator_lr: 1e-4,
            discriminator_lr: 4e-4,
            beta1: 0.0,
            beta2: 0.9,
            feature_matching_weight: 10.0,
            seed: 0,
        }
    }
}

/// Reads a TOML or JSON file, chosen by extension (`.json` is JSON, anything else TOML).
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}
