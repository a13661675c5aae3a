//! Trunks and heads shared by the four networks.

use rand::Rng;

use crate::error::Result;
use crate::models::ArchConfig;
use crate::nn::layers::{
    global_average_pool, global_average_pool_backward, relu, relu_backward, BatchNormCache, ConvCache, DenseCache,
    MaxPoolCache,
};
use crate::nn::{softmax, softmax_backward, BatchNorm, Conv2d, Ctx, Dense, MaxPool2d, ParameterStore, Tensor};

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm,
    pool: MaxPool2d,
}

#[derive(Debug)]
struct ConvBlockCache {
    conv: ConvCache,
    bn: BatchNormCache,
    act: Tensor,
    pool: MaxPoolCache,
}

impl ConvBlock {
    fn forward(&self, store: &ParameterStore, x: &Tensor, ctx: &mut Ctx) -> Result<(Tensor, ConvBlockCache)> {
        let (z, conv) = self.conv.forward(store, x)?;
        let (n, bn) = self.bn.forward(store, &z, ctx)?;
        let act = relu(&n);
        let (y, pool) = self.pool.forward(&act)?;
        Ok((y, ConvBlockCache { conv, bn, act, pool }))
    }

    fn backward(
        &self,
        store: &mut ParameterStore,
        cache: &ConvBlockCache,
        grad: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let g = self.pool.backward(&cache.pool, grad)?;
        let g = relu_backward(&cache.act, &g)?;
        let g = self.bn.backward(store, &cache.bn, &g)?;
        self.conv.backward(store, &cache.conv, &g, need_input_grad)
    }
}

/// Convolutional appearance trunk: three conv -> BN -> ReLU -> max-pool
/// blocks followed by global average pooling.
#[derive(Debug, Clone)]
pub struct CanTrunk {
    blocks: Vec<ConvBlock>,
    pub features: usize,
}

#[derive(Debug)]
pub struct CanTrunkCache {
    blocks: Vec<ConvBlockCache>,
    map_shape: Vec<usize>,
}

#[derive(Debug)]
pub struct CanTrunkOutput {
    /// GAP output `[N, C]`.
    pub features: Tensor,
    /// The map that feeds GAP, `[N, C, h, w]`; used for class activation maps.
    pub maps: Tensor,
    pub cache: CanTrunkCache,
}

impl CanTrunk {
    pub fn new(cfg: &ArchConfig) -> Self {
        let filters = cfg.filters();
        let mut channels = cfg.in_channels;
        let blocks = (0..3)
            .map(|b| {
                let prefix = format!("can.block{}", b + 1);
                let block = ConvBlock {
                    conv: Conv2d::new(
                        &format!("{prefix}.conv"),
                        channels,
                        filters[b],
                        (cfg.kernels[b], cfg.kernels[b]),
                        cfg.strides[b],
                    ),
                    bn: BatchNorm::new(&format!("{prefix}.bn"), filters[b], cfg.bn_eps, cfg.bn_momentum),
                    pool: MaxPool2d::new(cfg.pool_size, cfg.pool_stride),
                };
                channels = filters[b];
                block
            })
            .collect();
        Self {
            blocks,
            features: filters[2],
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        for b in &self.blocks {
            b.conv.init(store, rng);
            b.bn.init(store);
        }
    }

    pub fn forward(&self, store: &ParameterStore, images: &Tensor, ctx: &mut Ctx) -> Result<CanTrunkOutput> {
        let mut x = images.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(store, &x, ctx)?;
            caches.push(c);
            x = y;
        }
        let features = global_average_pool(&x)?;
        Ok(CanTrunkOutput {
            features,
            cache: CanTrunkCache {
                blocks: caches,
                map_shape: x.shape().to_vec(),
            },
            maps: x,
        })
    }

    /// Backpropagates from the GAP features; the image gradient is not formed.
    pub fn backward(&self, store: &mut ParameterStore, cache: &CanTrunkCache, grad_features: &Tensor) -> Result<()> {
        let mut g = global_average_pool_backward(&cache.map_shape, grad_features)?;
        for (i, (b, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            match b.backward(store, c, &g, i > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(())
    }
}

/// Geometry trunk: two dense -> BN -> ReLU hidden layers.
#[derive(Debug, Clone)]
pub struct DgnTrunk {
    layers: Vec<(Dense, BatchNorm)>,
    pub features: usize,
}

#[derive(Debug)]
pub struct DgnTrunkCache {
    layers: Vec<(DenseCache, BatchNormCache, Tensor)>,
}

impl DgnTrunk {
    pub fn new(cfg: &ArchConfig) -> Self {
        let mut inputs = cfg.dgn_input();
        let layers = cfg
            .dgn_hidden
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let prefix = format!("dgn.hidden{}", i + 1);
                let l = (
                    Dense::new(&format!("{prefix}.fc"), inputs, w),
                    BatchNorm::new(&format!("{prefix}.bn"), w, cfg.bn_eps, cfg.bn_momentum),
                );
                inputs = w;
                l
            })
            .collect();
        Self {
            layers,
            features: cfg.dgn_hidden[1],
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        for (d, bn) in &self.layers {
            d.init(store, rng);
            bn.init(store);
        }
    }

    /// Returns the second hidden layer's activations.
    pub fn forward(&self, store: &ParameterStore, x: &Tensor, ctx: &mut Ctx) -> Result<(Tensor, DgnTrunkCache)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (d, bn) in &self.layers {
            let (z, dc) = d.forward(store, &h)?;
            let (n, bc) = bn.forward(store, &z, ctx)?;
            h = relu(&n);
            caches.push((dc, bc, h.clone()));
        }
        Ok((h, DgnTrunkCache { layers: caches }))
    }

    pub fn backward(&self, store: &mut ParameterStore, cache: &DgnTrunkCache, grad: &Tensor) -> Result<()> {
        let mut g = grad.clone();
        for (i, ((d, bn), (dc, bc, act))) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let ga = relu_backward(act, &g)?;
            let gz = bn.backward(store, bc, &ga)?;
            match d.backward(store, dc, &gz, i > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(())
    }
}

/// Dense layer followed by softmax.
#[derive(Debug, Clone)]
pub struct ClassHead {
    pub dense: Dense,
}

#[derive(Debug)]
pub struct ClassHeadCache {
    dense: DenseCache,
    probs: Tensor,
}

impl ClassHead {
    pub fn new(prefix: &str, inputs: usize, classes: usize) -> Self {
        Self {
            dense: Dense::new(prefix, inputs, classes),
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.dense.init(store, rng);
    }

    pub fn forward(&self, store: &ParameterStore, x: &Tensor) -> Result<(Tensor, ClassHeadCache)> {
        let (logits, dense) = self.dense.forward(store, x)?;
        let probs = softmax(&logits)?;
        Ok((
            probs.clone(),
            ClassHeadCache { dense, probs },
        ))
    }

    pub fn backward(
        &self,
        store: &mut ParameterStore,
        cache: &ClassHeadCache,
        grad_probs: &Tensor,
    ) -> Result<Tensor> {
        let gz = softmax_backward(&cache.probs, grad_probs)?;
        Ok(self.dense.backward(store, &cache.dense, &gz, true)?.expect("input grad requested"))
    }

    /// Like [`ClassHead::backward`] but skips the input gradient.
    pub fn backward_params(&self, store: &mut ParameterStore, cache: &ClassHeadCache, grad_probs: &Tensor) -> Result<()> {
        let gz = softmax_backward(&cache.probs, grad_probs)?;
        self.dense.backward(store, &cache.dense, &gz, false)?;
        Ok(())
    }
}

/// Linear age regressor: `offset + scale * (w . f + b)` years.
#[derive(Debug, Clone)]
pub struct AgeHead {
    pub dense: Dense,
    pub offset: f64,
    pub scale: f64,
}

impl AgeHead {
    pub fn new(prefix: &str, inputs: usize, cfg: &ArchConfig) -> Self {
        Self {
            dense: Dense::new(prefix, inputs, 1),
            offset: cfg.age_offset,
            scale: cfg.age_scale,
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.dense.init(store, rng);
    }

    pub fn forward(&self, store: &ParameterStore, x: &Tensor) -> Result<(Vec<f64>, DenseCache)> {
        let (y, cache) = self.dense.forward(store, x)?;
        Ok((y.data().iter().map(|v| self.offset + self.scale * v).collect(), cache))
    }

    pub fn backward(&self, store: &mut ParameterStore, cache: &DenseCache, grad_age: &[f64]) -> Result<Tensor> {
        let g = Tensor::new(&[grad_age.len(), 1], grad_age.iter().map(|g| g * self.scale).collect())?;
        Ok(self.dense.backward(store, cache, &g, true)?.expect("input grad requested"))
    }
}
