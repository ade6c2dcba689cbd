//! Graph-attention condition model: scene graph → latent image → condition volume.

use candle_core::{DType, Device, Tensor, D};

use crate::config::ModelConfig;
use crate::error::{ensure_domain, Result};
use crate::nn::{instance_norm, join, leaky_relu, ConvTranspose2d, Init, ParamStore};
use crate::scene::SceneGraph;

/// Several scene graphs packed as one disjoint graph, with a self-loop on every node.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    /// `nodes × feature_width`.
    pub features: Tensor,
    /// Edge sources, `edges`, u32.
    pub sources: Tensor,
    /// Edge targets, `edges`, u32.
    pub targets: Tensor,
    /// Node index of every lattice cell, graph-major then row-major, u32.
    pub lattice_nodes: Tensor,
    pub graphs: usize,
    pub rows: usize,
    pub cols: usize,
}

impl GraphBatch {
    pub fn new(graphs: &[&SceneGraph], dtype: DType) -> Result<Self> {
        ensure_domain!(!graphs.is_empty(), "empty graph batch");
        let (variant, lattice) = (graphs[0].variant(), graphs[0].lattice());
        let mut features = Vec::new();
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        let mut lattice_nodes = Vec::new();
        let mut offset = 0u32;
        for (i, g) in graphs.iter().enumerate() {
            ensure_domain!(
                g.variant() == variant && g.lattice() == lattice,
                "graph {i} layout differs from graph 0"
            );
            features.extend_from_slice(g.features());
            for n in 0..g.node_count() as u32 {
                sources.push(offset + n);
                targets.push(offset + n);
            }
            for (s, t) in g.edges() {
                sources.push(offset + *s as u32);
                targets.push(offset + *t as u32);
            }
            lattice_nodes.extend(g.lattice_index().iter().map(|n| offset + *n as u32));
            offset += g.node_count() as u32;
        }
        let dev = &Device::Cpu;
        let n = offset as usize;
        let features = Tensor::from_vec(features, (n, variant.feature_width()), dev)?.to_dtype(dtype)?;
        let e = sources.len();
        Ok(Self {
            features,
            sources: Tensor::from_vec(sources, e, dev)?,
            targets: Tensor::from_vec(targets, e, dev)?,
            lattice_nodes: Tensor::from_vec(lattice_nodes, graphs.len() * lattice.node_count(), dev)?,
            graphs: graphs.len(),
            rows: lattice.rows,
            cols: lattice.cols,
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.dim(0).unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.sources.dim(0).unwrap_or(0)
    }
}

/// Multi-head graph attention layer.
///
/// For an edge `j → i`, `e_ij = LeakyReLU(a_dst · W h_i + a_src · W h_j)` and the
/// weights are the softmax of `e_ij` over all edges entering `i` (including its
/// self-loop). Output is `ELU(Σ_j α_ij W h_j)`, heads concatenated or averaged.
#[derive(Clone, Debug)]
pub struct GatLayer {
    weight: Tensor,
    att_src: Tensor,
    att_dst: Tensor,
    bias: Tensor,
    heads: usize,
    width: usize,
    concat: bool,
    negative_slope: f64,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        in_width: usize,
        width: usize,
        heads: usize,
        concat: bool,
        negative_slope: f64,
    ) -> Result<Self> {
        let out = width * heads;
        Ok(Self {
            weight: params.create(&join(name, "weight"), &[in_width, out], Init::Glorot(in_width, out))?,
            att_src: params.create(&join(name, "att_src"), &[1, heads, width], Init::Glorot(width, 1))?,
            att_dst: params.create(&join(name, "att_dst"), &[1, heads, width], Init::Glorot(width, 1))?,
            bias: params.create(
                &join(name, "bias"),
                &[if concat { out } else { width }],
                Init::Const(0.0),
            )?,
            heads,
            width,
            concat,
            negative_slope,
        })
    }

    fn project(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.dim(0)?;
        Ok(x.matmul(&self.weight)?.reshape((n, self.heads, self.width))?)
    }

    /// Attention weights `α`, shape `edges × heads`, in edge order.
    pub fn attention(&self, x: &Tensor, batch: &GraphBatch) -> Result<Tensor> {
        self.attention_from(&self.project(x)?, batch, x.dim(0)?)
    }

    fn attention_from(&self, h: &Tensor, batch: &GraphBatch, n: usize) -> Result<Tensor> {
        let a_src = h.broadcast_mul(&self.att_src)?.sum(D::Minus1)?;
        let a_dst = h.broadcast_mul(&self.att_dst)?.sum(D::Minus1)?;
        let logits = (a_src.index_select(&batch.sources, 0)? + a_dst.index_select(&batch.targets, 0)?)?;
        let logits = leaky_relu(&logits, self.negative_slope)?;
        // Softmax is shift-invariant; a per-head constant shift keeps exp in range.
        let shift = logits.detach().max_keepdim(0)?;
        let ex = logits.broadcast_sub(&shift)?.exp()?;
        let denom = Tensor::zeros((n, self.heads), ex.dtype(), ex.device())?
            .index_add(&batch.targets, &ex, 0)?;
        Ok(ex.div(&denom.index_select(&batch.targets, 0)?)?)
    }

    pub fn forward(&self, x: &Tensor, batch: &GraphBatch) -> Result<Tensor> {
        let n = x.dim(0)?;
        let h = self.project(x)?;
        let alpha = self.attention_from(&h, batch, n)?;
        let messages = h
            .index_select(&batch.sources, 0)?
            .broadcast_mul(&alpha.unsqueeze(2)?)?;
        let agg = Tensor::zeros((n, self.heads, self.width), h.dtype(), h.device())?
            .index_add(&batch.targets, &messages, 0)?;
        let out = if self.concat {
            agg.reshape((n, self.heads * self.width))?
        } else {
            agg.mean(1)?
        };
        Ok(out.broadcast_add(&self.bias)?.elu(1.0)?)
    }
}

/// Gathers lattice-node embeddings into a `graphs × channels × rows × cols` image.
pub fn extract_latent_image(embeddings: &Tensor, batch: &GraphBatch) -> Result<Tensor> {
    let c = embeddings.dim(1)?;
    Ok(embeddings
        .index_select(&batch.lattice_nodes, 0)?
        .reshape((batch.graphs, batch.rows, batch.cols, c))?
        .permute((0, 3, 1, 2))?
        .contiguous()?)
}

/// Output of the condition model for a batch of graphs.
#[derive(Clone, Debug)]
pub struct Condition {
    /// `batch × C_ω × 16·rows × 16·cols` (for the default four stages).
    pub volume: Tensor,
    /// `batch × C_latent × rows × cols`.
    pub latent: Tensor,
}

impl Condition {
    /// Entries `indices` of the batch.
    pub fn select(&self, indices: &[usize]) -> Result<Condition> {
        let idx = index_tensor(indices, self.volume.device())?;
        Ok(Condition {
            volume: self.volume.index_select(&idx, 0)?,
            latent: self.latent.index_select(&idx, 0)?,
        })
    }

    pub fn detach(&self) -> Condition {
        Condition {
            volume: self.volume.detach(),
            latent: self.latent.detach(),
        }
    }
}

pub(crate) fn index_tensor(indices: &[usize], device: &Device) -> Result<Tensor> {
    let v: Vec<u32> = indices.iter().map(|i| *i as u32).collect();
    Ok(Tensor::from_vec(v, indices.len(), device)?)
}

/// Stacked attention layers followed by 2× transposed-convolution upsampling stages.
#[derive(Clone, Debug)]
pub struct ConditionModel {
    layers: Vec<GatLayer>,
    upsample: Vec<ConvTranspose2d>,
    config: ModelConfig,
}

impl ConditionModel {
    pub const PREFIX: &'static str = "condition";

    pub fn new(params: &mut ParamStore, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let gat = &config.gat;
        let mut layers = Vec::new();
        let mut width = config.variant.feature_width();
        for i in 0..gat.widths.len() {
            let last = i + 1 == gat.widths.len();
            layers.push(GatLayer::new(
                params,
                &join(Self::PREFIX, &format!("gat{i}")),
                width,
                gat.widths[i],
                gat.heads[i],
                !last,
                gat.negative_slope,
            )?);
            width = gat.output_width(i);
        }
        let mut upsample = Vec::new();
        for (i, out) in config.condition.upsample_channels.iter().enumerate() {
            upsample.push(ConvTranspose2d::new(
                params,
                &join(Self::PREFIX, &format!("up{i}")),
                width,
                *out,
                4,
                2,
                1,
            )?);
            width = *out;
        }
        Ok(Self {
            layers,
            upsample,
            config: config.clone(),
        })
    }

    pub fn layers(&self) -> &[GatLayer] {
        &self.layers
    }

    /// Node embeddings after every attention layer.
    pub fn embed(&self, batch: &GraphBatch) -> Result<Tensor> {
        let mut x = batch.features.clone();
        for layer in &self.layers {
            x = layer.forward(&x, batch)?;
        }
        Ok(x)
    }

    /// Upsamples a latent image to the condition volume.
    pub fn upsample(&self, latent: &Tensor) -> Result<Tensor> {
        let mut x = latent.clone();
        for stage in &self.upsample {
            x = leaky_relu(&instance_norm(&stage.forward(&x)?, 1e-5)?, 0.2)?;
        }
        Ok(x)
    }

    pub fn forward_batch(&self, batch: &GraphBatch) -> Result<Condition> {
        let latent = extract_latent_image(&self.embed(batch)?, batch)?;
        let volume = self.upsample(&latent)?;
        Ok(Condition { volume, latent })
    }

    pub fn forward(&self, graphs: &[&SceneGraph]) -> Result<Condition> {
        for (i, g) in graphs.iter().enumerate() {
            ensure_domain!(
                g.variant() == self.config.variant && g.lattice() == self.config.lattice,
                "graph {i} ({} / {}x{}) does not match the model ({} / {}x{})",
                g.variant(),
                g.lattice().rows,
                g.lattice().cols,
                self.config.variant,
                self.config.lattice.rows,
                self.config.lattice.cols
            );
        }
        self.forward_batch(&GraphBatch::new(graphs, self.config.dtype())?)
    }
}
