use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// `K` square filters of odd side `n`, each mapping one feature channel
/// onto `p` output channels.
///
/// Weights are stored as `[K][p][n][n]`. Synthesis is a zero-padded "same"
/// convolution summed over the feature channels; analysis is its exact
/// adjoint (a correlation).
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryBank {
    size: usize,
    features: usize,
    outputs: usize,
    weights: Vec<f64>,
}

impl DictionaryBank {
    pub fn new(size: usize, features: usize, outputs: usize, weights: Vec<f64>) -> Result<Self> {
        ensure!(
            size % 2 == 1,
            Error::InvalidParameter(alloc::format!("filter side must be odd, got {size}"))
        );
        ensure!(
            features > 0 && outputs > 0,
            Error::InvalidParameter("bank needs at least one channel".into())
        );
        let len = features * outputs * size * size;
        ensure!(
            weights.len() == len,
            Error::InvalidShape {
                shape: vec![features, outputs, size, size],
                len: weights.len(),
            }
        );
        Ok(Self {
            size,
            features,
            outputs,
            weights,
        })
    }

    pub fn zeros(size: usize, features: usize, outputs: usize) -> Result<Self> {
        Self::new(
            size,
            features,
            outputs,
            vec![0.0; features * outputs * size * size],
        )
    }

    /// Every filter is a centered unit impulse on every output channel.
    pub fn delta(size: usize, features: usize, outputs: usize) -> Result<Self> {
        let mut bank = Self::zeros(size, features, outputs)?;
        let r = size / 2;
        for k in 0..features {
            for c in 0..outputs {
                *bank.weight_mut(k, c, r, r) = 1.0;
            }
        }
        Ok(bank)
    }

    /// Gaussian filters, each rescaled to unit Frobenius norm.
    pub fn random<R: Rng + ?Sized>(
        size: usize,
        features: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let len = features * outputs * size * size;
        let weights = (0..len)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut bank = Self::new(size, features, outputs, weights)?;
        for k in 0..features {
            let norm = bank.filter_norm(k);
            if norm > 0.0 {
                bank.filter_mut(k).iter_mut().for_each(|w| *w /= norm);
            }
        }
        Ok(bank)
    }

    /// Builds a bank from a `[K, p, n, n]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        ensure!(
            s.len() == 4 && s[2] == s[3],
            Error::InvalidParameter(alloc::format!(
                "bank tensor must be [K, p, n, n], got {s:?}"
            ))
        );
        Self::new(s[2], s[0], s[1], t.data().to_vec())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.features, self.outputs, self.size, self.size],
            self.weights.clone(),
        )
        .expect("bank dims are consistent")
    }

    /// Filter side `n`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Feature channel count `K`.
    pub fn features(&self) -> usize {
        self.features
    }

    /// Output channel count `p`.
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn filter_len(&self) -> usize {
        self.outputs * self.size * self.size
    }

    #[inline]
    fn index(&self, k: usize, c: usize, i: usize, j: usize) -> usize {
        ((k * self.outputs + c) * self.size + i) * self.size + j
    }

    pub fn weight(&self, k: usize, c: usize, i: usize, j: usize) -> f64 {
        self.weights[self.index(k, c, i, j)]
    }

    pub fn weight_mut(&mut self, k: usize, c: usize, i: usize, j: usize) -> &mut f64 {
        let idx = self.index(k, c, i, j);
        &mut self.weights[idx]
    }

    /// All `p·n·n` coefficients of filter `k`.
    pub fn filter(&self, k: usize) -> &[f64] {
        let len = self.filter_len();
        &self.weights[k * len..(k + 1) * len]
    }

    pub fn filter_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.filter_len();
        &mut self.weights[k * len..(k + 1) * len]
    }

    pub fn filter_norm(&self, k: usize) -> f64 {
        libm::sqrt(self.filter(k).iter().map(|w| w * w).sum())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= alpha);
        out
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.ensure_same_layout(other)?;
        let mut out = self.clone();
        for (w, g) in out.weights.iter_mut().zip(&other.weights) {
            *w += alpha * g;
        }
        Ok(out)
    }

    pub fn ensure_same_layout(&self, other: &Self) -> Result<()> {
        ensure!(
            (self.size, self.features, self.outputs) == (other.size, other.features, other.outputs),
            Error::ShapeMismatch {
                expected: vec![self.features, self.outputs, self.size, self.size],
                actual: vec![other.features, other.outputs, other.size, other.size],
            }
        );
        Ok(())
    }

    /// Concatenates two banks along the output channels: filter `k` of the
    /// result is filter `k` of `top` followed by filter `k` of `bottom`.
    pub fn stack_outputs(top: &Self, bottom: &Self) -> Result<Self> {
        ensure!(
            top.size == bottom.size && top.features == bottom.features,
            Error::ShapeMismatch {
                expected: vec![top.features, top.size],
                actual: vec![bottom.features, bottom.size],
            }
        );
        let mut weights = Vec::with_capacity(top.weights.len() + bottom.weights.len());
        for k in 0..top.features {
            weights.extend_from_slice(top.filter(k));
            weights.extend_from_slice(bottom.filter(k));
        }
        Self::new(
            top.size,
            top.features,
            top.outputs + bottom.outputs,
            weights,
        )
    }

    /// Reorders filters so that filter `k` of the result is filter `perm[k]`.
    pub fn permute_filters(&self, perm: &[usize]) -> Result<Self> {
        ensure!(
            perm.len() == self.features,
            Error::ChannelMismatch {
                expected: self.features,
                actual: perm.len()
            }
        );
        let mut weights = Vec::with_capacity(self.weights.len());
        for &src in perm {
            weights.extend_from_slice(self.filter(src));
        }
        Self::new(self.size, self.features, self.outputs, weights)
    }

    /// Rescales every filter whose norm exceeds one back onto the unit sphere.
    pub fn project_unit_ball(&self) -> Self {
        let mut out = self.clone();
        for k in 0..out.features {
            let norm = out.filter_norm(k);
            if norm > 1.0 {
                out.filter_mut(k).iter_mut().for_each(|w| *w /= norm);
            }
        }
        out
    }

    fn check_features(&self, features: &Tensor) -> Result<()> {
        ensure!(
            features.rank() == 2 || features.rank() == 3,
            Error::InvalidParameter(alloc::format!(
                "feature stack must be 2-D or 3-D, got shape {:?}",
                features.shape()
            ))
        );
        ensure!(
            features.channels() == self.features,
            Error::ChannelMismatch {
                expected: self.features,
                actual: features.channels()
            }
        );
        Ok(())
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        ensure!(
            image.rank() == 2 || image.rank() == 3,
            Error::InvalidParameter(alloc::format!(
                "image must be 2-D or 3-D, got shape {:?}",
                image.shape()
            ))
        );
        ensure!(
            image.channels() == self.outputs,
            Error::ChannelMismatch {
                expected: self.outputs,
                actual: image.channels()
            }
        );
        Ok(())
    }

    pub(crate) fn image_shape(&self, rows: usize, cols: usize) -> Vec<usize> {
        if self.outputs == 1 {
            vec![rows, cols]
        } else {
            vec![rows, cols, self.outputs]
        }
    }
}

/// Range of `y` in `0..len` for which `y + shift` also lies in `0..len`.
fn tap_range(len: usize, shift: isize) -> core::ops::Range<usize> {
    let len = len as isize;
    let lo = (-shift).clamp(0, len);
    let hi = (len - shift).clamp(lo, len);
    lo as usize..hi as usize
}

impl DictionaryBank {
    /// Weights reordered as `[i][j][c][k]` so the feature axis is contiguous.
    fn tap_major(&self) -> Vec<f64> {
        let (kk, p, n) = (self.features, self.outputs, self.size);
        let mut out = vec![0.0; self.weights.len()];
        for k in 0..kk {
            for c in 0..p {
                for i in 0..n {
                    for j in 0..n {
                        out[((i * n + j) * p + c) * kk + k] =
                            self.weights[((k * p + c) * n + i) * n + j];
                    }
                }
            }
        }
        out
    }
}

/// `Σ_k filter_k ⊗ feature_k` with zero-padded same-size output.
pub fn synthesize(bank: &DictionaryBank, features: &Tensor) -> Result<Tensor> {
    bank.check_features(features)?;
    let (rows, cols) = features.spatial();
    let (kk, p, n) = (bank.features, bank.outputs, bank.size);
    let r = n / 2;
    let src = features.data();
    let wt = bank.tap_major();
    let mut out = vec![0.0; rows * cols * p];
    for i in 0..n {
        // output (y, x) reads feature (y + r - i, x + r - j)
        let dy = r as isize - i as isize;
        for j in 0..n {
            let dx = r as isize - j as isize;
            let xs = tap_range(cols, dx);
            let w = &wt[(i * n + j) * p * kk..(i * n + j + 1) * p * kk];
            for y in tap_range(rows, dy) {
                let sy = (y as isize + dy) as usize;
                let sx0 = (xs.start as isize + dx) as usize;
                let srow = &src[(sy * cols + sx0) * kk..(sy * cols + sx0 + xs.len()) * kk];
                let drow = &mut out[(y * cols + xs.start) * p..(y * cols + xs.end) * p];
                for (d, f) in drow.chunks_exact_mut(p).zip(srow.chunks_exact(kk)) {
                    for (dc, wc) in d.iter_mut().zip(w.chunks_exact(kk)) {
                        *dc += wc.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
    }
    Tensor::new(bank.image_shape(rows, cols), out)
}

/// Adjoint of [`synthesize`]: correlates the image with every filter.
pub fn analyze(bank: &DictionaryBank, image: &Tensor) -> Result<Tensor> {
    bank.check_image(image)?;
    let (rows, cols) = image.spatial();
    let (kk, p, n) = (bank.features, bank.outputs, bank.size);
    let r = n / 2;
    let src = image.data();
    let wt = bank.tap_major();
    let mut out = vec![0.0; rows * cols * kk];
    for i in 0..n {
        // output (y, x) reads image (y + i - r, x + j - r)
        let dy = i as isize - r as isize;
        for j in 0..n {
            let dx = j as isize - r as isize;
            let xs = tap_range(cols, dx);
            let w = &wt[(i * n + j) * p * kk..(i * n + j + 1) * p * kk];
            for y in tap_range(rows, dy) {
                let sy = (y as isize + dy) as usize;
                let sx0 = (xs.start as isize + dx) as usize;
                let srow = &src[(sy * cols + sx0) * p..(sy * cols + sx0 + xs.len()) * p];
                let drow = &mut out[(y * cols + xs.start) * kk..(y * cols + xs.end) * kk];
                for (d, v) in drow.chunks_exact_mut(kk).zip(srow.chunks_exact(p)) {
                    for (&vc, wc) in v.iter().zip(w.chunks_exact(kk)) {
                        for (dk, &wk) in d.iter_mut().zip(wc) {
                            *dk += wk * vc;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![rows, cols, kk], out)
}

/// Gradient of `½‖residual − Σ_k d_k ⊗ c_k‖²` with respect to every filter
/// coefficient, where `residual` is the current misfit `target − synthesize`.
pub fn dict_gradient(
    bank: &DictionaryBank,
    features: &Tensor,
    residual: &Tensor,
) -> Result<DictionaryBank> {
    bank.check_features(features)?;
    bank.check_image(residual)?;
    ensure!(
        features.spatial() == residual.spatial(),
        Error::ShapeMismatch {
            expected: features.shape().to_vec(),
            actual: residual.shape().to_vec(),
        }
    );
    let (rows, cols) = features.spatial();
    let (kk, p, n) = (bank.features, bank.outputs, bank.size);
    let r = n / 2;
    let f = features.data();
    let res = residual.data();
    let mut grad = DictionaryBank::zeros(n, kk, p)?;
    let mut acc = vec![0.0; p * kk];
    for i in 0..n {
        let dy = r as isize - i as isize;
        for j in 0..n {
            let dx = r as isize - j as isize;
            let xs = tap_range(cols, dx);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for y in tap_range(rows, dy) {
                let sy = (y as isize + dy) as usize;
                let sx0 = (xs.start as isize + dx) as usize;
                let frow = &f[(sy * cols + sx0) * kk..(sy * cols + sx0 + xs.len()) * kk];
                let rrow = &res[(y * cols + xs.start) * p..(y * cols + xs.end) * p];
                for (fv, rv) in frow.chunks_exact(kk).zip(rrow.chunks_exact(p)) {
                    for (&b, ac) in rv.iter().zip(acc.chunks_exact_mut(kk)) {
                        for (a, &v) in ac.iter_mut().zip(fv) {
                            *a += v * b;
                        }
                    }
                }
            }
            for c in 0..p {
                for k in 0..kk {
                    grad.weights[((k * p + c) * n + i) * n + j] = -acc[c * kk + k];
                }
            }
        }
    }
    Ok(grad)
}

/// Channel `k` of `features` moved by tap `(i, j)` of an `n × n` filter:
/// the synthesis output of a bank whose only nonzero weight is a unit
/// coefficient at `(k, ·, i, j)`.
pub(crate) fn shifted_channel(
    features: &Tensor,
    k: usize,
    i: usize,
    j: usize,
    n: usize,
) -> Vec<f64> {
    let (rows, cols) = features.spatial();
    let kk = features.channels();
    let r = n / 2;
    let src = features.data();
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        let sy = y + r;
        if sy < i || sy - i >= rows {
            continue;
        }
        let sy = sy - i;
        for x in 0..cols {
            let sx = x + r;
            if sx < j || sx - j >= cols {
                continue;
            }
            out[y * cols + x] = src[((sy * cols) + sx - j) * kk + k];
        }
    }
    out
}

/// Places `coarse` on the even grid of a `2×` larger zero tensor.
pub(crate) fn zero_insert(coarse: &Tensor) -> Tensor {
    let (rows, cols) = coarse.spatial();
    let k = coarse.channels();
    let mut shape = coarse.shape().to_vec();
    shape[0] = rows * 2;
    shape[1] = cols * 2;
    let mut out = vec![0.0; rows * cols * 4 * k];
    let src = coarse.data();
    for y in 0..rows {
        for x in 0..cols {
            let d = ((2 * y) * (2 * cols) + 2 * x) * k;
            out[d..d + k].copy_from_slice(&src[(y * cols + x) * k..(y * cols + x + 1) * k]);
        }
    }
    Tensor::new(shape, out).expect("consistent dims")
}

/// Keeps the even grid of `fine`; adjoint of [`zero_insert`].
pub(crate) fn decimate(fine: &Tensor) -> Tensor {
    let (rows, cols) = fine.spatial();
    let k = fine.channels();
    let (hr, hc) = (rows / 2, cols / 2);
    let mut shape = fine.shape().to_vec();
    shape[0] = hr;
    shape[1] = hc;
    let mut out = Vec::with_capacity(hr * hc * k);
    let src = fine.data();
    for y in 0..hr {
        for x in 0..hc {
            let s = ((2 * y) * cols + 2 * x) * k;
            out.extend_from_slice(&src[s..s + k]);
        }
    }
    Tensor::new(shape, out).expect("consistent dims")
}

/// Stride-2 transposed convolution: zero insertion followed by [`synthesize`].
pub fn synthesize_up(bank: &DictionaryBank, coarse: &Tensor) -> Result<Tensor> {
    bank.check_features(coarse)?;
    synthesize(bank, &zero_insert(coarse))
}

/// Stride-2 convolution: [`analyze`] followed by decimation. Adjoint of
/// [`synthesize_up`].
pub fn analyze_down(bank: &DictionaryBank, fine: &Tensor) -> Result<Tensor> {
    ensure!(
        fine.rows().is_multiple_of(2) && fine.cols().is_multiple_of(2),
        Error::PyramidMismatch(alloc::format!(
            "cannot halve spatial dims {:?}",
            fine.spatial()
        ))
    );
    Ok(decimate(&analyze(bank, fine)?))
}
