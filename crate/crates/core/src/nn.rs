//! Small neural-network toolkit on top of candle: seeded named parameters, the layers
//! the model uses, and an Adam optimizer whose state can be checkpointed.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Parameter initialization schemes.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Uniform in `±sqrt(1 / fan_in)`.
    FanIn(usize),
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot(usize, usize),
    Normal(f64),
    Const(f64),
}

/// Named trainable tensors with deterministic, seeded initialization.
///
/// Names are dotted paths (`condition.gat0.weight`); iteration order is sorted by name.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Creates a parameter. Names must be unique.
    pub fn create(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::domain(format!("parameter {name} defined twice")));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::FanIn(fan_in) => {
                let bound = (1.0 / fan_in.max(1) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..n).map(|_| dist.sample(&mut self.rng)).collect()
            }
            Init::Glorot(fan_in, fan_out) => {
                let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..n).map(|_| dist.sample(&mut self.rng)).collect()
            }
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).map_err(|e| Error::domain(e.to_string()))?;
                (0..n).map(|_| dist.sample(&mut self.rng)).collect()
            }
            Init::Const(v) => vec![v; n],
        };
        let tensor = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&tensor)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vars.keys()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn parameter_count_with_prefix(&self, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    pub fn tensors(&self) -> HashMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrites every parameter from `tensors`; names and shapes must match exactly.
    pub fn assign(&self, tensors: &HashMap<String, Tensor>, source: &Path) -> Result<()> {
        if tensors.len() != self.vars.len() {
            return Err(Error::format(
                source,
                format!("expected {} tensors, found {}", self.vars.len(), tensors.len()),
            ));
        }
        for (name, var) in &self.vars {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::format(source, format!("missing tensor {name}")))?;
            if t.dims() != var.dims() {
                return Err(Error::format(
                    source,
                    format!("tensor {name} has shape {:?}, expected {:?}", t.dims(), var.dims()),
                ));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        candle_core::safetensors::save(&self.tensors(), path)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &self.device)
            .map_err(|e| Error::format(path, e.to_string()))?;
        self.assign(&tensors, path)
    }
}

/// Prefix helper for hierarchical parameter names.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// 2-D convolution with square kernel.
#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        Ok(Self {
            weight: params.create(
                &join(name, "weight"),
                &[out_channels, in_channels, kernel, kernel],
                Init::FanIn(fan_in),
            )?,
            bias: params.create(&join(name, "bias"), &[out_channels], Init::FanIn(fan_in))?,
            stride,
            padding,
        })
    }

    /// Same as [`Conv2d::new`] but with the bias set to `bias`.
    pub fn with_bias(
        params: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        bias: f64,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        Ok(Self {
            weight: params.create(
                &join(name, "weight"),
                &[out_channels, in_channels, kernel, kernel],
                Init::FanIn(fan_in),
            )?,
            bias: params.create(&join(name, "bias"), &[out_channels], Init::Const(bias))?,
            stride: 1,
            padding: kernel / 2,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim(0).unwrap_or(0)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let b = self.bias.reshape((1, self.bias.dim(0)?, 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

/// Transposed 2-D convolution with square kernel.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel / (stride * stride).max(1);
        Ok(Self {
            weight: params.create(
                &join(name, "weight"),
                &[in_channels, out_channels, kernel, kernel],
                Init::FanIn(fan_in),
            )?,
            bias: params.create(&join(name, "bias"), &[out_channels], Init::FanIn(fan_in))?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        let b = self.bias.reshape((1, self.bias.dim(0)?, 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

pub fn relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.relu()?)
}

/// Per-sample, per-channel standardization over the spatial dimensions.
pub fn instance_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
    Ok(centered.broadcast_div(&(var + eps)?.sqrt()?)?)
}

/// Resizes an `n × c × h × w` tensor by integer factors: area averaging when shrinking,
/// nearest-neighbor replication when growing.
pub fn resize(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (height, width) {
        return Ok(x.clone());
    }
    if h >= height && w >= width && h % height == 0 && w % width == 0 {
        let (fh, fw) = (h / height, w / width);
        return Ok(x.avg_pool2d_with_stride((fh, fw), (fh, fw))?);
    }
    if height >= h && width >= w && height % h == 0 && width % w == 0 {
        return Ok(x.upsample_nearest2d(height, width)?);
    }
    Err(Error::domain(format!(
        "cannot resize {h}x{w} to {height}x{width} by integer factors"
    )))
}

/// Adam with bias correction. Moment estimates are kept per parameter name.
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    slots: Vec<AdamSlot>,
}

struct AdamSlot {
    name: String,
    var: Var,
    m: Tensor,
    v: Tensor,
}

impl Adam {
    pub fn new(params: &ParamStore, learning_rate: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let slots = params
            .iter()
            .map(|(name, var)| {
                Ok(AdamSlot {
                    name: name.clone(),
                    var: var.clone(),
                    m: var.zeros_like()?,
                    v: var.zeros_like()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            slots,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update using whatever gradients `grads` holds for our parameters.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let correct1 = 1.0 - self.beta1.powi(t);
        let correct2 = 1.0 - self.beta2.powi(t);
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            slot.m = ((&slot.m * self.beta1)? + (g * (1.0 - self.beta1))?)?;
            slot.v = ((&slot.v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&slot.m / correct1)?;
            let v_hat = (&slot.v / correct2)?;
            let update = m_hat.div(&(v_hat.sqrt()? + self.eps)?)?;
            let next = slot.var.as_tensor().sub(&(update * self.learning_rate)?)?;
            slot.var.set(&next)?;
        }
        Ok(())
    }

    /// Moment tensors keyed `m.<param>` / `v.<param>`.
    pub fn state_tensors(&self) -> HashMap<String, Tensor> {
        let mut out = HashMap::new();
        for s in &self.slots {
            out.insert(format!("m.{}", s.name), s.m.clone());
            out.insert(format!("v.{}", s.name), s.v.clone());
        }
        out
    }

    pub fn restore(&mut self, step: u64, tensors: &HashMap<String, Tensor>, source: &Path) -> Result<()> {
        for s in &mut self.slots {
            for (key, dst) in [("m", &mut s.m), ("v", &mut s.v)] {
                let name = format!("{key}.{}", s.name);
                let t = tensors
                    .get(&name)
                    .ok_or_else(|| Error::format(source, format!("missing optimizer tensor {name}")))?;
                if t.dims() != dst.dims() {
                    return Err(Error::format(source, format!("optimizer tensor {name} has wrong shape")));
                }
                *dst = t.to_dtype(dst.dtype())?;
            }
        }
        self.step = step;
        Ok(())
    }
}
