use crate::error::{ensure, MgaError, Result};

/// Dense row-major n-dimensional array of `f64` with an optional gradient
/// buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        ensure!(
            shape.iter().all(|&d| d > 0),
            Dimension,
            "tensor extents must be positive, got {shape:?}"
        );
        let expected: usize = shape.iter().product();
        ensure!(
            expected == data.len(),
            Dimension,
            "shape {shape:?} needs {expected} values, got {}",
            data.len()
        );
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(&[1], value)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        ensure!(!rows.is_empty(), Dimension, "from_rows needs at least one row");
        let cols = rows[0].len();
        ensure!(
            rows.iter().all(|r| r.len() == cols),
            Dimension,
            "ragged rows"
        );
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        ensure!(
            delta.len() == self.data.len(),
            Dimension,
            "gradient of length {} for tensor of shape {:?}",
            delta.len(),
            self.shape
        );
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Tensor> {
        self.grad.take().map(|g| Tensor {
            shape: self.shape.clone(),
            data: g,
            grad: None,
        })
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        ensure!(
            n == self.data.len(),
            Dimension,
            "cannot reshape {:?} into {shape:?}",
            self.shape
        );
        self.shape = shape.to_vec();
        if self.grad.is_some() {
            self.grad = None;
        }
        Ok(self)
    }

    /// Leading (batch) extent.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of values per leading index.
    pub fn row_len(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.row_len();
        &mut self.data[i * w..(i + 1) * w]
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        ensure!(!items.is_empty(), Dimension, "cannot stack zero tensors");
        let inner = items[0].shape.clone();
        ensure!(
            items.iter().all(|t| t.shape == inner),
            Dimension,
            "stack requires identical shapes"
        );
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&inner);
        let mut data = Vec::with_capacity(items.len() * items[0].len());
        for t in items {
            data.extend_from_slice(&t.data);
        }
        Tensor::new(&shape, data)
    }

    /// Concatenates two `[N, a]` and `[N, b]` matrices into `[N, a + b]`.
    pub fn concat_cols(left: &Tensor, right: &Tensor) -> Result<Tensor> {
        ensure!(
            left.shape.len() == 2 && right.shape.len() == 2 && left.shape[0] == right.shape[0],
            Dimension,
            "concat_cols needs [N, a] and [N, b], got {:?} and {:?}",
            left.shape,
            right.shape
        );
        let (n, a, b) = (left.shape[0], left.shape[1], right.shape[1]);
        let mut data = Vec::with_capacity(n * (a + b));
        for i in 0..n {
            data.extend_from_slice(left.row(i));
            data.extend_from_slice(right.row(i));
        }
        Tensor::new(&[n, a + b], data)
    }

    /// Inverse of [`Tensor::concat_cols`].
    pub fn split_cols(&self, at: usize) -> Result<(Tensor, Tensor)> {
        ensure!(
            self.shape.len() == 2 && at > 0 && at < self.shape[1],
            Dimension,
            "split_cols({at}) on {:?}",
            self.shape
        );
        let (n, w) = (self.shape[0], self.shape[1]);
        let mut left = Vec::with_capacity(n * at);
        let mut right = Vec::with_capacity(n * (w - at));
        for i in 0..n {
            let r = self.row(i);
            left.extend_from_slice(&r[..at]);
            right.extend_from_slice(&r[at..]);
        }
        Ok((Tensor::new(&[n, at], left)?, Tensor::new(&[n, w - at], right)?))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
            grad: None,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Single-precision copy of the values, for inference consumers.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(MgaError::Dimension(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}
