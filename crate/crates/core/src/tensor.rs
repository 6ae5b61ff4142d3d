//! Dense row-major `f64` tensors and the feature pyramids built from them.
//!
//! Images are rank-2 `(row, col)` or rank-3 `(row, col, channel)`; feature
//! stacks are always rank-3 with the channel index fastest.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        ensure!(
            expected == data.len(),
            Error::InvalidShape {
                shape,
                len: data.len()
            }
        );
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds a 2-D image by evaluating `f(row, col)`.
    pub fn from_fn2(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    /// Channel count under the image convention: rank 2 is one channel.
    pub fn channels(&self) -> usize {
        match self.shape.len() {
            0..=2 => 1,
            _ => self.shape[2..].iter().product(),
        }
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<()> {
        ensure!(
            self.shape == other.shape,
            Error::ShapeMismatch {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            }
        );
        Ok(())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        ensure!(self.is_finite(), Error::NonFinite(context.into()));
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Tensor {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        axpy(1.0, other, self)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        axpy(-1.0, other, self)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.ensure_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn norm_sq(&self) -> f64 {
        dot_slices(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn count_zeros(&self) -> usize {
        self.data.iter().filter(|&&v| v == 0.0).count()
    }

    /// Extracts channel `c` of a rank-3 tensor as a 2-D image.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        let k = self.channels();
        ensure!(
            c < k,
            Error::ChannelMismatch {
                expected: k,
                actual: c + 1
            }
        );
        let data = self.data.iter().skip(c).step_by(k).copied().collect();
        Tensor::new(vec![self.rows(), self.cols()], data)
    }

    /// Interleaves images (or stacks) along the channel axis.
    pub fn stack_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("nothing to stack".into()))?;
        let (rows, cols) = first.spatial();
        for p in parts {
            ensure!(
                p.spatial() == (rows, cols),
                Error::ShapeMismatch {
                    expected: vec![rows, cols],
                    actual: p.shape.clone(),
                }
            );
        }
        let total: usize = parts.iter().map(|p| p.channels()).sum();
        let mut data = Vec::with_capacity(rows * cols * total);
        for px in 0..rows * cols {
            for p in parts {
                let k = p.channels();
                data.extend_from_slice(&p.data[px * k..(px + 1) * k]);
            }
        }
        Tensor::new(vec![rows, cols, total], data)
    }

    /// Splits a rank-3 tensor into consecutive channel groups of the given widths.
    pub fn split_channels(&self, widths: &[usize]) -> Result<Vec<Tensor>> {
        let k = self.channels();
        let total: usize = widths.iter().sum();
        ensure!(
            total == k,
            Error::ChannelMismatch {
                expected: k,
                actual: total
            }
        );
        let (rows, cols) = self.spatial();
        let mut out: Vec<Vec<f64>> = widths
            .iter()
            .map(|w| Vec::with_capacity(rows * cols * w))
            .collect();
        for px in 0..rows * cols {
            let mut offset = px * k;
            for (buf, &w) in out.iter_mut().zip(widths) {
                buf.extend_from_slice(&self.data[offset..offset + w]);
                offset += w;
            }
        }
        out.into_iter()
            .zip(widths)
            .map(|(d, &w)| {
                let shape = if w == 1 {
                    vec![rows, cols]
                } else {
                    vec![rows, cols, w]
                };
                Tensor::new(shape, d)
            })
            .collect()
    }
}

/// Inner product `Σ a_i b_i`.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    Ok(dot_slices(&a.data, &b.data))
}

/// `Σ a_i·b_i` over equal-length slices with four interleaved partial sums
/// (a fixed order, so results are reproducible).
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Returns `alpha * x + y`.
pub fn axpy(alpha: f64, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    x.ensure_same_shape(y)?;
    Ok(Tensor {
        shape: y.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&y.data)
            .map(|(a, b)| alpha * a + b)
            .collect(),
    })
}

/// Multi-resolution feature maps, finest level first. Single-scale
/// features are a one-level pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    levels: Vec<Tensor>,
}

impl Features {
    pub fn new(levels: Vec<Tensor>) -> Result<Self> {
        ensure!(
            !levels.is_empty(),
            Error::PyramidMismatch("a pyramid needs at least one level".into())
        );
        Ok(Self { levels })
    }

    pub fn single(level: Tensor) -> Self {
        Self {
            levels: vec![level],
        }
    }

    /// Zero pyramid with the given full-resolution dims and per-level widths.
    pub fn zeros(rows: usize, cols: usize, widths: &[usize]) -> Self {
        let levels = widths
            .iter()
            .enumerate()
            .map(|(l, &k)| Tensor::zeros(&[rows >> l, cols >> l, k]))
            .collect();
        Self { levels }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            levels: self
                .levels
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn levels(&self) -> &[Tensor] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Tensor] {
        &mut self.levels
    }

    pub fn into_levels(self) -> Vec<Tensor> {
        self.levels
    }

    pub fn level(&self, l: usize) -> &Tensor {
        &self.levels[l]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn ensure_same_shape(&self, other: &Features) -> Result<()> {
        ensure!(
            self.levels.len() == other.levels.len(),
            Error::PyramidMismatch(format!(
                "{} levels vs {} levels",
                self.levels.len(),
                other.levels.len()
            ))
        );
        for (a, b) in self.levels.iter().zip(&other.levels) {
            a.ensure_same_shape(b)?;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Features) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let mut acc = 0.0;
        for (a, b) in self.levels.iter().zip(&other.levels) {
            acc += dot(a, b)?;
        }
        Ok(acc)
    }

    pub fn axpy(alpha: f64, x: &Features, y: &Features) -> Result<Features> {
        x.ensure_same_shape(y)?;
        let levels = x
            .levels
            .iter()
            .zip(&y.levels)
            .map(|(a, b)| axpy(alpha, a, b))
            .collect::<Result<_>>()?;
        Ok(Features { levels })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Features {
        Features {
            levels: self.levels.iter().map(|t| t.map(&f)).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Features {
        self.map(|v| alpha * v)
    }

    pub fn norm_sq(&self) -> f64 {
        self.levels.iter().map(Tensor::norm_sq).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    pub fn l1_norm(&self) -> f64 {
        self.levels.iter().map(Tensor::l1_norm).sum()
    }

    pub fn count_zeros(&self) -> usize {
        self.levels.iter().map(Tensor::count_zeros).sum()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.levels.iter().all(Tensor::is_finite)
    }

    /// Applies the same channel permutation to every level.
    pub fn permute_channels(&self, perm: &[usize]) -> Result<Features> {
        let levels = self
            .levels
            .iter()
            .map(|t| {
                let k = t.channels();
                ensure!(
                    perm.len() == k,
                    Error::ChannelMismatch {
                        expected: k,
                        actual: perm.len()
                    }
                );
                let mut data = vec![0.0; t.len()];
                for px in 0..t.rows() * t.cols() {
                    for (dst, &src) in perm.iter().enumerate() {
                        data[px * k + dst] = t.data[px * k + src];
                    }
                }
                Tensor::new(t.shape.clone(), data)
            })
            .collect::<Result<_>>()?;
        Ok(Features { levels })
    }
}

impl From<Tensor> for Features {
    fn from(t: Tensor) -> Self {
        Features::single(t)
    }
}
