//! Dense row-major tensor substrate: shapes, elementwise math, contractions,
//! reductions, and the activations every other module composes.
//!
//! Everything is double precision and every operation checks shapes
//! explicitly; boundary and shape bugs are the dominant failure mode in
//! strip indexing, so nothing here broadcasts implicitly.

use rand::Rng;
use thiserror::Error;

/// Errors produced by tensor construction and operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: zero extent in shape {shape:?}; all extents must be positive")]
    ZeroExtent { op: &'static str, shape: Vec<usize> },
    #[error("{op}: data length {got} does not match shape {shape:?} (expected {expected})")]
    DataLength {
        op: &'static str,
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op}: shape mismatch, left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: zero-norm vector; cosine similarity is undefined")]
    ZeroNorm { op: &'static str },
    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
}

pub type TensorResult<T> = Result<T, TensorError>;

/// Dense n-dimensional real array with explicit shape, row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Construct a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> TensorResult<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(TensorError::ZeroExtent {
                op: "Tensor::new",
                shape,
            });
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                op: "Tensor::new",
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> TensorResult<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; n])
    }

    pub fn filled(shape: &[usize], value: f64) -> TensorResult<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n])
    }

    /// Build a tensor by evaluating `f` at every flat (row-major) index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> TensorResult<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    /// Uniform samples in `[lo, hi)` from the supplied generator.
    pub fn random_uniform(
        shape: &[usize],
        lo: f64,
        hi: f64,
        rng: &mut impl Rng,
    ) -> TensorResult<Self> {
        Self::from_fn(shape, |_| rng.gen_range(lo..hi))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Row-major flat offset of a multi-index. Panics on out-of-range
    /// coordinates; callers validate shapes up front.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, (&x, &e)) in idx.iter().zip(self.shape.iter()).enumerate() {
            debug_assert!(x < e, "index {x} out of range at axis {i} (extent {e})");
            off = off * e + x;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&self, shape: &[usize]) -> TensorResult<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Tensor) -> TensorResult<Self> {
        self.zip_with(other, "Tensor::add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> TensorResult<Self> {
        self.zip_with(other, "Tensor::sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> TensorResult<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> TensorResult<Self> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        // i-k-j order keeps the inner accumulation over k in ascending order
        // per output element while streaming rows of `other`.
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        Self::new(vec![m, n], out)
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2d(&self) -> TensorResult<Self> {
        let (m, n) = self.dims2("transpose2d")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::new(vec![n, m], out)
    }

    /// Row-wise softmax of a rank-2 tensor, computed with max-subtraction so
    /// large magnitudes cannot overflow.
    pub fn softmax_rows(&self) -> TensorResult<Self> {
        let (m, n) = self.dims2("softmax_rows")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out_row = &mut out[i * n..(i + 1) * n];
            let mut sum = 0.0;
            for (o, &v) in out_row.iter_mut().zip(row.iter()) {
                let e = (v - max).exp();
                *o = e;
                sum += e;
            }
            for o in out_row.iter_mut() {
                *o /= sum;
            }
        }
        Self::new(vec![m, n], out)
    }

    /// Elementwise logistic sigmoid `1 / (1 + e^{-x})`.
    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid_scalar)
    }

    /// Per-channel mean over the spatial extent of a `[C, H, W]` tensor.
    pub fn gap_spatial(&self) -> TensorResult<Self> {
        let (c, h, w) = self.dims3("gap_spatial")?;
        let hw = h * w;
        let mut out = vec![0.0; c];
        for (ch, o) in out.iter_mut().enumerate() {
            let plane = &self.data[ch * hw..(ch + 1) * hw];
            *o = plane.iter().sum::<f64>() / hw as f64;
        }
        Self::new(vec![c], out)
    }

    pub(crate) fn dims2(&self, op: &'static str) -> TensorResult<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(TensorError::RankMismatch {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    pub(crate) fn dims3(&self, op: &'static str) -> TensorResult<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(TensorError::RankMismatch {
                op,
                expected: 3,
                shape: self.shape.clone(),
            }),
        }
    }

    pub(crate) fn dims5(
        &self,
        op: &'static str,
    ) -> TensorResult<(usize, usize, usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c, d, e] => Ok((a, b, c, d, e)),
            _ => Err(TensorError::RankMismatch {
                op,
                expected: 5,
                shape: self.shape.clone(),
            }),
        }
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cosine similarity `a·b / (‖a‖ ‖b‖)` of two equal-length vectors.
///
/// Zero-norm inputs are an explicit error, never a silent 0.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> TensorResult<f64> {
    if a.shape() != b.shape() || a.rank() != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "cosine_similarity",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data().iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(TensorError::ZeroNorm {
            op: "cosine_similarity",
        });
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Largest absolute elementwise difference between two same-shape tensors.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Neumaier compensated summation in the iteration order of `values`.
///
/// Window averages use this so that parallel evaluation (which computes the
/// per-item values out of order but reduces them in index order) stays
/// equal to serial evaluation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
