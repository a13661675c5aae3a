//! The layer set used by the appearance and geometry networks: valid
//! convolution, batch normalization, ReLU, max pooling, global average
//! pooling and dense layers.
//!
//! Layers hold only the names of their parameters. `forward` reads from a
//! shared [`ParameterStore`] and returns a cache; `backward` consumes the
//! cache, accumulates parameter gradients into the store and returns the
//! gradient with respect to the layer input.

use rand::Rng;

use crate::error::{ensure, MgaError, Result};
use crate::nn::gemm::gemm;
use crate::nn::{BufferUpdates, ParameterStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-pass context: the batch-norm mode and the running-statistics updates a
/// training pass wants to commit.
#[derive(Debug)]
pub struct Ctx {
    pub mode: Mode,
    pub updates: BufferUpdates,
}

impl Ctx {
    pub fn train() -> Self {
        Self {
            mode: Mode::Train,
            updates: BufferUpdates::default(),
        }
    }

    pub fn infer() -> Self {
        Self {
            mode: Mode::Infer,
            updates: BufferUpdates::default(),
        }
    }
}

fn he_uniform(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: String,
    pub bias: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
}

#[derive(Debug)]
pub struct ConvCache {
    input: Tensor,
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn new(prefix: &str, in_channels: usize, out_channels: usize, kernel: (usize, usize), stride: usize) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        let fan_in = self.patch_len();
        let w = he_uniform(rng, fan_in, self.out_channels * fan_in);
        store.insert_param(
            &self.weight,
            Tensor::new(&[self.out_channels, self.in_channels, self.kernel.0, self.kernel.1], w)
                .expect("conv weight shape"),
        );
        store.insert_param(&self.bias, Tensor::zeros(&[self.out_channels]));
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        ensure!(self.stride >= 1, Dimension, "conv stride must be at least 1");
        ensure!(
            kh <= h && kw <= w,
            Dimension,
            "kernel {kh}x{kw} does not fit a {h}x{w} input"
        );
        Ok(((h - kh) / self.stride + 1, (w - kw) / self.stride + 1))
    }

    /// Unfolds one `[C, H, W]` plane stack into `[C*kh*kw, ho*wo]` columns.
    fn im2col(&self, plane: &[f64], h: usize, w: usize, (ho, wo): (usize, usize), cols: &mut [f64]) {
        let (kh, kw) = self.kernel;
        let p = ho * wo;
        for ci in 0..self.in_channels {
            let chan = &plane[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (ci * kh + ky) * kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..ho {
                        let src = &chan[(oy * self.stride + ky) * w..];
                        let d = &mut dst[oy * wo..(oy + 1) * wo];
                        if self.stride == 1 {
                            d.copy_from_slice(&src[kx..kx + wo]);
                        } else {
                            for (ox, v) in d.iter_mut().enumerate() {
                                *v = src[ox * self.stride + kx];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, (ho, wo): (usize, usize), plane: &mut [f64]) {
        let (kh, kw) = self.kernel;
        let p = ho * wo;
        for ci in 0..self.in_channels {
            let chan = &mut plane[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (ci * kh + ky) * kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..ho {
                        let base = (oy * self.stride + ky) * w + kx;
                        let s = &src[oy * wo..(oy + 1) * wo];
                        if self.stride == 1 {
                            for (d, v) in chan[base..base + wo].iter_mut().zip(s) {
                                *d += v;
                            }
                        } else {
                            for (ox, v) in s.iter().enumerate() {
                                chan[base + ox * self.stride] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, store: &ParameterStore, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        let s = x.shape();
        ensure!(s.len() == 4, Dimension, "conv2d expects [N, C, H, W], got {s:?}");
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        ensure!(
            c == self.in_channels,
            Dimension,
            "conv2d input has {c} channels, filters expect {}",
            self.in_channels
        );
        let (ho, wo) = self.output_hw(h, w)?;
        let weight = store.get(&self.weight)?.data();
        let b = store.get(&self.bias)?.data();
        let plen = self.patch_len();
        let p = ho * wo;
        let k = self.out_channels;

        // Columns are built one sample at a time so the buffer stays cache sized.
        let mut cols = vec![0.0; plen * p];
        let mut out = vec![0.0; n * k * p];
        let xd = x.data();
        for ni in 0..n {
            self.im2col(&xd[ni * c * h * w..(ni + 1) * c * h * w], h, w, (ho, wo), &mut cols);
            let dst = &mut out[ni * k * p..(ni + 1) * k * p];
            gemm(k, plen, p, 1.0, weight, false, &cols, false, 0.0, dst);
            for (ki, row) in dst.chunks_exact_mut(p).enumerate() {
                for v in row {
                    *v += b[ki];
                }
            }
        }
        let y = Tensor::new(&[n, k, ho, wo], out)?;
        Ok((
            y,
            ConvCache {
                input: x.clone(),
                out_hw: (ho, wo),
            },
        ))
    }

    pub fn backward(
        &self,
        store: &mut ParameterStore,
        cache: &ConvCache,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let s = cache.input.shape();
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = cache.out_hw;
        let k = self.out_channels;
        let p = ho * wo;
        ensure!(
            grad_out.shape() == [n, k, ho, wo],
            Dimension,
            "conv2d grad_out shape {:?}",
            grad_out.shape()
        );
        let g = grad_out.data();
        let xd = cache.input.data();
        let plen = self.patch_len();
        let want_w = !store.is_frozen(&self.weight);
        let want_b = !store.is_frozen(&self.bias);

        if want_b {
            let mut db = vec![0.0; k];
            for ni in 0..n {
                for (ki, d) in db.iter_mut().enumerate() {
                    *d += g[(ni * k + ki) * p..(ni * k + ki + 1) * p].iter().sum::<f64>();
                }
            }
            store.accumulate_grad(&self.bias, &db)?;
        }
        if !want_w && !need_input_grad {
            return Ok(None);
        }
        let weight = store.get(&self.weight)?.data().to_vec();
        let mut cols = vec![0.0; plen * p];
        let mut dw = vec![0.0; if want_w { k * plen } else { 0 }];
        let mut dx = vec![0.0; if need_input_grad { n * c * h * w } else { 0 }];
        for ni in 0..n {
            let gn = &g[ni * k * p..(ni + 1) * k * p];
            if want_w {
                self.im2col(&xd[ni * c * h * w..(ni + 1) * c * h * w], h, w, (ho, wo), &mut cols);
                gemm(k, p, plen, 1.0, gn, false, &cols, true, 1.0, &mut dw);
            }
            if need_input_grad {
                gemm(plen, k, p, 1.0, &weight, true, gn, false, 0.0, &mut cols);
                self.col2im(&cols, h, w, (ho, wo), &mut dx[ni * c * h * w..(ni + 1) * c * h * w]);
            }
        }
        if want_w {
            store.accumulate_grad(&self.weight, &dw)?;
        }
        if !need_input_grad {
            return Ok(None);
        }
        Ok(Some(Tensor::new(&[n, c, h, w], dx)?))
    }
}

/// Batch normalization over axis 1 of `[N, C, ...]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: String,
    pub beta: String,
    pub running_mean: String,
    pub running_var: String,
    pub tracked: String,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(prefix: &str, channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: format!("{prefix}.gamma"),
            beta: format!("{prefix}.beta"),
            running_mean: format!("{prefix}.running_mean"),
            running_var: format!("{prefix}.running_var"),
            tracked: format!("{prefix}.tracked"),
            channels,
            eps,
            momentum,
        }
    }

    pub fn init(&self, store: &mut ParameterStore) {
        store.insert_param(&self.gamma, Tensor::full(&[self.channels], 1.0));
        store.insert_param(&self.beta, Tensor::zeros(&[self.channels]));
        store.insert_buffer(&self.running_mean, Tensor::zeros(&[self.channels]));
        store.insert_buffer(&self.running_var, Tensor::full(&[self.channels], 1.0));
        store.insert_buffer(&self.tracked, Tensor::scalar(0.0));
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = x.shape();
        ensure!(
            s.len() >= 2 && s[1] == self.channels,
            Dimension,
            "batch_norm over {} channels got input {s:?}",
            self.channels
        );
        Ok((s[0], s[2..].iter().product()))
    }

    pub fn forward(&self, store: &ParameterStore, x: &Tensor, ctx: &mut Ctx) -> Result<(Tensor, BatchNormCache)> {
        let (n, spatial) = self.layout(x)?;
        let c = self.channels;
        let gamma = store.get(&self.gamma)?.data();
        let beta = store.get(&self.beta)?.data();
        ensure!(
            gamma.len() == c && beta.len() == c,
            Dimension,
            "gamma/beta extents must equal {c}"
        );
        let xd = x.data();
        let m = (n * spatial) as f64;
        let idx = |ni: usize, ci: usize| (ni * c + ci) * spatial;

        let (mean, var) = match ctx.mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ci in 0..c {
                    let mut s = 0.0;
                    for ni in 0..n {
                        s += xd[idx(ni, ci)..idx(ni, ci) + spatial].iter().sum::<f64>();
                    }
                    let mu = s / m;
                    let mut v = 0.0;
                    for ni in 0..n {
                        v += xd[idx(ni, ci)..idx(ni, ci) + spatial]
                            .iter()
                            .map(|x| (x - mu) * (x - mu))
                            .sum::<f64>();
                    }
                    mean[ci] = mu;
                    var[ci] = v / m;
                }
                let rm = store.get(&self.running_mean)?.data();
                let rv = store.get(&self.running_var)?.data();
                let tracked = store.get(&self.tracked)?.data()[0];
                let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                let mo = self.momentum;
                let new_mean = (0..c).map(|i| mo * rm[i] + (1.0 - mo) * mean[i]).collect();
                let new_var = (0..c).map(|i| mo * rv[i] + (1.0 - mo) * var[i] * unbias).collect();
                ctx.updates.push(&self.running_mean, new_mean);
                ctx.updates.push(&self.running_var, new_var);
                ctx.updates.push(&self.tracked, vec![tracked + 1.0]);
                (mean, var)
            }
            Mode::Infer => {
                let tracked = store.get(&self.tracked)?.data()[0];
                if tracked <= 0.0 {
                    return Err(MgaError::State(format!(
                        "batch norm `{}` has no running statistics; train before inference",
                        self.gamma.trim_end_matches(".gamma")
                    )));
                }
                (
                    store.get(&self.running_mean)?.data().to_vec(),
                    store.get(&self.running_var)?.data().to_vec(),
                )
            }
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        let mut y = vec![0.0; xd.len()];
        for ni in 0..n {
            for ci in 0..c {
                let r = idx(ni, ci)..idx(ni, ci) + spatial;
                for j in r {
                    let h = (xd[j] - mean[ci]) * inv_std[ci];
                    xhat[j] = h;
                    y[j] = gamma[ci] * h + beta[ci];
                }
            }
        }
        Ok((
            Tensor::new(x.shape(), y)?,
            BatchNormCache {
                xhat,
                inv_std,
                shape: x.shape().to_vec(),
                mode: ctx.mode,
            },
        ))
    }

    pub fn backward(&self, store: &mut ParameterStore, cache: &BatchNormCache, grad_out: &Tensor) -> Result<Tensor> {
        ensure!(
            grad_out.shape() == cache.shape.as_slice(),
            Dimension,
            "batch_norm grad_out shape {:?}",
            grad_out.shape()
        );
        let c = self.channels;
        let n = cache.shape[0];
        let spatial: usize = cache.shape[2..].iter().product();
        let m = (n * spatial) as f64;
        let g = grad_out.data();
        let gamma = store.get(&self.gamma)?.data().to_vec();
        let idx = |ni: usize, ci: usize| (ni * c + ci) * spatial;

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for ni in 0..n {
            for ci in 0..c {
                for j in idx(ni, ci)..idx(ni, ci) + spatial {
                    dgamma[ci] += g[j] * cache.xhat[j];
                    dbeta[ci] += g[j];
                }
            }
        }
        let mut dx = vec![0.0; g.len()];
        for ci in 0..c {
            let scale = gamma[ci] * cache.inv_std[ci];
            match cache.mode {
                Mode::Infer => {
                    for ni in 0..n {
                        for j in idx(ni, ci)..idx(ni, ci) + spatial {
                            dx[j] = g[j] * scale;
                        }
                    }
                }
                Mode::Train => {
                    // dL/dx = gamma * inv_std / M * (M*dy - sum(dy) - xhat * sum(dy*xhat))
                    let (sum_dy, sum_dy_xhat) = (dbeta[ci], dgamma[ci]);
                    for ni in 0..n {
                        for j in idx(ni, ci)..idx(ni, ci) + spatial {
                            dx[j] = scale / m * (m * g[j] - sum_dy - cache.xhat[j] * sum_dy_xhat);
                        }
                    }
                }
            }
        }
        store.accumulate_grad(&self.gamma, &dgamma)?;
        store.accumulate_grad(&self.beta, &dbeta)?;
        Tensor::new(&cache.shape, dx)
    }
}

/// ReLU with derivative 0 at exactly 0.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Backward of [`relu`] given its output.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    ensure!(
        output.shape() == grad_out.shape(),
        Dimension,
        "relu grad shape mismatch"
    );
    let d = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(output.shape(), d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub size: usize,
    pub stride: usize,
}

#[derive(Debug)]
pub struct MaxPoolCache {
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
}

impl MaxPool2d {
    pub const fn new(size: usize, stride: usize) -> Self {
        Self { size, stride }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        ensure!(
            self.size <= h && self.size <= w,
            Dimension,
            "{}x{} pooling window does not fit a {h}x{w} map",
            self.size,
            self.size
        );
        Ok(((h - self.size) / self.stride + 1, (w - self.size) / self.stride + 1))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        let s = x.shape();
        ensure!(s.len() == 4, Dimension, "max_pool expects [N, C, H, W], got {s:?}");
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = self.output_hw(h, w)?;
        let xd = x.data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = base;
                    for ky in 0..self.size {
                        let row = base + (oy * self.stride + ky) * w + ox * self.stride;
                        for (kx, &v) in xd[row..row + self.size].iter().enumerate() {
                            if v > best {
                                best = v;
                                best_i = row + kx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
        Ok((
            Tensor::new(&[n, c, ho, wo], out)?,
            MaxPoolCache {
                argmax,
                in_shape: s.to_vec(),
            },
        ))
    }

    pub fn backward(&self, cache: &MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
        ensure!(
            grad_out.len() == cache.argmax.len(),
            Dimension,
            "max_pool grad_out has {} values, expected {}",
            grad_out.len(),
            cache.argmax.len()
        );
        let mut dx = vec![0.0; cache.in_shape.iter().product()];
        for (&i, &g) in cache.argmax.iter().zip(grad_out.data()) {
            dx[i] += g;
        }
        Tensor::new(&cache.in_shape, dx)
    }
}

/// Per-channel spatial mean: `[N, C, H, W] -> [N, C]`.
pub fn global_average_pool(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    ensure!(s.len() == 4, Dimension, "global_average_pool expects [N, C, H, W], got {s:?}");
    let hw = s[2] * s[3];
    let out = x.data().chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
    Tensor::new(&[s[0], s[1]], out)
}

pub fn global_average_pool_backward(in_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    ensure!(
        in_shape.len() == 4 && grad_out.shape() == [in_shape[0], in_shape[1]],
        Dimension,
        "global_average_pool grad shape mismatch"
    );
    let hw = in_shape[2] * in_shape[3];
    let scale = 1.0 / hw as f64;
    let mut dx = Vec::with_capacity(grad_out.len() * hw);
    for &g in grad_out.data() {
        dx.extend(std::iter::repeat(g * scale).take(hw));
    }
    Tensor::new(in_shape, dx)
}

/// Fully connected layer `y = x W^T + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: String,
    pub bias: String,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug)]
pub struct DenseCache {
    input: Tensor,
}

impl Dense {
    pub fn new(prefix: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            inputs,
            outputs,
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        let w = he_uniform(rng, self.inputs, self.inputs * self.outputs);
        store.insert_param(
            &self.weight,
            Tensor::new(&[self.outputs, self.inputs], w).expect("dense weight shape"),
        );
        store.insert_param(&self.bias, Tensor::zeros(&[self.outputs]));
    }

    pub fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    pub fn forward(&self, store: &ParameterStore, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let s = x.shape();
        ensure!(
            s.len() == 2 && s[1] == self.inputs,
            Dimension,
            "dense layer expects [N, {}], got {s:?}",
            self.inputs
        );
        let n = s[0];
        let w = store.get(&self.weight)?;
        let b = store.get(&self.bias)?.data();
        let mut y = vec![0.0; n * self.outputs];
        for i in 0..n {
            y[i * self.outputs..(i + 1) * self.outputs].copy_from_slice(b);
        }
        gemm(n, self.inputs, self.outputs, 1.0, x.data(), false, w.data(), true, 1.0, &mut y);
        Ok((Tensor::new(&[n, self.outputs], y)?, DenseCache { input: x.clone() }))
    }

    pub fn backward(
        &self,
        store: &mut ParameterStore,
        cache: &DenseCache,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let n = cache.input.rows();
        ensure!(
            grad_out.shape() == [n, self.outputs],
            Dimension,
            "dense grad_out shape {:?}",
            grad_out.shape()
        );
        let g = grad_out.data();
        if !store.is_frozen(&self.weight) {
            let mut dw = vec![0.0; self.outputs * self.inputs];
            gemm(self.outputs, n, self.inputs, 1.0, g, true, cache.input.data(), false, 0.0, &mut dw);
            store.accumulate_grad(&self.weight, &dw)?;
        }
        if !store.is_frozen(&self.bias) {
            let mut db = vec![0.0; self.outputs];
            for row in g.chunks(self.outputs) {
                db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
            }
            store.accumulate_grad(&self.bias, &db)?;
        }
        if !need_input_grad {
            return Ok(None);
        }
        let w = store.get(&self.weight)?;
        let mut dx = vec![0.0; n * self.inputs];
        gemm(n, self.outputs, self.inputs, 1.0, g, false, w.data(), false, 0.0, &mut dx);
        Ok(Some(Tensor::new(&[n, self.inputs], dx)?))
    }
}
