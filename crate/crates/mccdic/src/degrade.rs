//! Forward degradations: cartesian undersampling and k-space center
//! cropping, both built on an orthonormal 2-D FFT.
//!
//! Spectra are kept in centered layout: the DC coefficient sits at
//! `(rows / 2, cols / 2)`.

use mccdic_core::sampling::SamplingMask;
use mccdic_core::{Error as ModelError, Tensor};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::Result;

/// Complex spectrum stored as real and imaginary planes, centered layout.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpace {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl KSpace {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn get(&self, r: usize, c: usize) -> Complex<f64> {
        let i = r * self.cols + c;
        Complex::new(self.re[i], self.im[i])
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex<f64>) {
        let i = r * self.cols + c;
        self.re[i] = v.re;
        self.im[i] = v.im;
    }

    pub fn energy(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v * v).sum()
    }

    /// Multiplies every coefficient by the matching mask entry.
    pub fn masked(&self, mask: &Tensor) -> Result<KSpace> {
        if mask.spatial() != (self.rows, self.cols) || mask.channels() != 1 {
            return Err(ModelError::ShapeMismatch {
                expected: vec![self.rows, self.cols],
                actual: mask.shape().to_vec(),
            }
            .into());
        }
        let mut out = self.clone();
        for (i, &m) in mask.data().iter().enumerate() {
            out.re[i] *= m;
            out.im[i] *= m;
        }
        Ok(out)
    }

    fn to_complex(&self) -> Vec<Complex<f64>> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&re, &im)| Complex::new(re, im))
            .collect()
    }

    fn from_complex(rows: usize, cols: usize, data: &[Complex<f64>]) -> Self {
        Self {
            rows,
            cols,
            re: data.iter().map(|c| c.re).collect(),
            im: data.iter().map(|c| c.im).collect(),
        }
    }
}

/// Moves index `i` of a standard FFT ordering to the centered ordering.
fn shift_index(i: usize, n: usize) -> usize {
    (i + n / 2) % n
}

fn fftshift(data: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[shift_index(r, rows) * cols + shift_index(c, cols)] = data[r * cols + c];
        }
    }
    out
}

fn ifftshift(data: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = data[shift_index(r, rows) * cols + shift_index(c, cols)];
        }
    }
    out
}

/// In-place separable 2-D transform with orthonormal scaling.
fn transform(data: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (
            planner.plan_fft_inverse(cols),
            planner.plan_fft_inverse(rows),
        )
    } else {
        (
            planner.plan_fft_forward(cols),
            planner.plan_fft_forward(rows),
        )
    };
    for row in data.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= scale);
}

fn check_2d(image: &Tensor) -> Result<()> {
    if image.rank() != 2 {
        return Err(ModelError::InvalidParameter(format!(
            "expected a 2-D image, got shape {:?}",
            image.shape()
        ))
        .into());
    }
    Ok(())
}

/// Orthonormal 2-D DFT of a real image, centered.
pub fn fft2(image: &Tensor) -> Result<KSpace> {
    check_2d(image)?;
    let (rows, cols) = image.spatial();
    let mut data: Vec<Complex<f64>> = image.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    transform(&mut data, rows, cols, false);
    Ok(KSpace::from_complex(
        rows,
        cols,
        &fftshift(&data, rows, cols),
    ))
}

/// Inverse of [`fft2`], returning real and imaginary parts.
pub fn ifft2_complex(k: &KSpace) -> (Tensor, Tensor) {
    let mut data = ifftshift(&k.to_complex(), k.rows, k.cols);
    transform(&mut data, k.rows, k.cols, true);
    let re = Tensor::new(vec![k.rows, k.cols], data.iter().map(|c| c.re).collect());
    let im = Tensor::new(vec![k.rows, k.cols], data.iter().map(|c| c.im).collect());
    (re.expect("consistent dims"), im.expect("consistent dims"))
}

/// Real part of the inverse transform.
pub fn ifft2(k: &KSpace) -> Tensor {
    ifft2_complex(k).0
}

/// Zero-filled reconstruction `ifft2(mask ⊙ fft2(image))`.
pub fn undersample(image: &Tensor, mask: &SamplingMask) -> Result<Tensor> {
    let k = fft2(image)?;
    Ok(ifft2(&k.masked(mask.tensor())?))
}

fn check_scale(rows: usize, cols: usize, scale: usize) -> Result<()> {
    if scale == 0 || !rows.is_multiple_of(scale) || !cols.is_multiple_of(scale) {
        return Err(ModelError::InvalidParameter(format!(
            "{rows}x{cols} is not divisible by scale {scale}"
        ))
        .into());
    }
    Ok(())
}

/// Offset of the centered `small` block inside a centered `big` axis.
fn block_offset(big: usize, small: usize) -> usize {
    big / 2 - small / 2
}

/// Low-resolution image from the central `(rows/s) × (cols/s)` block of the
/// spectrum, scaled so the mean intensity is preserved.
pub fn kspace_center_crop_lr(image: &Tensor, scale: usize) -> Result<Tensor> {
    check_2d(image)?;
    let (rows, cols) = image.spatial();
    check_scale(rows, cols, scale)?;
    let k = fft2(image)?;
    let (lr, lc) = (rows / scale, cols / scale);
    let (r0, c0) = (block_offset(rows, lr), block_offset(cols, lc));
    let mut small = KSpace::zeros(lr, lc);
    for r in 0..lr {
        for c in 0..lc {
            small.set(r, c, k.get(r0 + r, c0 + c));
        }
    }
    Ok(ifft2(&small).scaled(1.0 / scale as f64))
}

/// Embeds the spectrum of `lr` in the center of a `scale×` larger zero
/// spectrum and transforms back, preserving mean intensity.
pub fn upsample_zero_pad(lr: &Tensor, scale: usize) -> Result<Tensor> {
    check_2d(lr)?;
    if scale == 0 {
        return Err(ModelError::InvalidParameter("scale must be >= 1".into()).into());
    }
    let (lr_rows, lr_cols) = lr.spatial();
    let (rows, cols) = (lr_rows * scale, lr_cols * scale);
    let k = fft2(lr)?;
    let (r0, c0) = (block_offset(rows, lr_rows), block_offset(cols, lr_cols));
    let mut big = KSpace::zeros(rows, cols);
    for r in 0..lr_rows {
        for c in 0..lr_cols {
            big.set(r0 + r, c0 + c, k.get(r, c));
        }
    }
    Ok(ifft2(&big).scaled(scale as f64))
}

/// Which degradation the target goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Super-resolution: k-space center crop, then zero-padded back to full size.
    SuperResolution,
    /// Reconstruction: cartesian undersampling, zero-filled.
    Reconstruction,
}

impl std::str::FromStr for Task {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sr" => Ok(Task::SuperResolution),
            "recon" => Ok(Task::Reconstruction),
            other => Err(crate::error::Error::Config(format!(
                "unknown mode {other:?} (expected sr or recon)"
            ))),
        }
    }
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::SuperResolution => "sr",
            Task::Reconstruction => "recon",
        }
    }
}

/// Parameters of one degradation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Degradation {
    pub task: Task,
    pub scale: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub seed: u64,
}

impl Default for Degradation {
    fn default() -> Self {
        Self {
            task: Task::SuperResolution,
            scale: 4,
            acceleration: 4.0,
            center_fraction: mccdic_core::sampling::DEFAULT_CENTER_FRACTION,
            seed: 0,
        }
    }
}

/// Result of [`Degradation::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    /// Full-resolution solver input (zero-padded or zero-filled).
    pub full: Tensor,
    /// Low-resolution image for super-resolution.
    pub low_res: Option<Tensor>,
    /// Sampling mask for reconstruction.
    pub mask: Option<SamplingMask>,
}

impl Degradation {
    pub fn apply(&self, image: &Tensor) -> Result<Degraded> {
        match self.task {
            Task::SuperResolution => {
                let lr = kspace_center_crop_lr(image, self.scale)?;
                Ok(Degraded {
                    full: upsample_zero_pad(&lr, self.scale)?,
                    low_res: Some(lr),
                    mask: None,
                })
            }
            Task::Reconstruction => {
                check_2d(image)?;
                let (rows, cols) = image.spatial();
                let mask = mccdic_core::sampling::make_cartesian_mask(
                    rows,
                    cols,
                    self.acceleration,
                    self.center_fraction,
                    self.seed,
                )?;
                Ok(Degraded {
                    full: undersample(image, &mask)?,
                    low_res: None,
                    mask: Some(mask),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mccdic_core::sampling::make_cartesian_mask;

    fn ramp(rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn2(rows, cols, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0)
    }

    #[test]
    fn constant_image_has_single_dc_coefficient() {
        let img = Tensor::from_fn2(8, 6, |_, _| 0.5);
        let k = fft2(&img).unwrap();
        let dc = k.get(4, 3);
        assert!((dc.re - 0.5 * 48f64.sqrt()).abs() < 1e-12);
        assert!(dc.im.abs() < 1e-12);
        let rest: f64 = k.energy() - dc.norm_sqr();
        assert!(rest.abs() < 1e-20);
    }

    #[test]
    fn parseval() {
        let img = ramp(12, 10);
        let k = fft2(&img).unwrap();
        assert!((k.energy() - img.norm_sq()).abs() < 1e-10 * img.norm_sq());
    }

    #[test]
    fn roundtrip_odd_sizes() {
        let img = ramp(7, 9);
        let (re, im) = ifft2_complex(&fft2(&img).unwrap());
        assert!(re.sub(&img).unwrap().norm() < 1e-12 * img.norm());
        assert!(im.norm() < 1e-8);
    }

    #[test]
    fn non_2d_rejected() {
        assert!(fft2(&Tensor::zeros(&[4, 4, 2])).is_err());
    }

    #[test]
    fn identity_and_zero_masks() {
        let img = ramp(16, 16);
        let ones = mccdic_core::sampling::SamplingMask::from_tensor(
            Tensor::from_fn2(16, 16, |_, _| 1.0),
            1.0,
            0.08,
        )
        .unwrap();
        assert!(undersample(&img, &ones).unwrap().sub(&img).unwrap().norm() < 1e-10 * img.norm());
        let zeros =
            mccdic_core::sampling::SamplingMask::from_tensor(Tensor::zeros(&[16, 16]), 1.0, 0.08)
                .unwrap();
        assert!(undersample(&img, &zeros).unwrap().norm() < 1e-14);
    }

    #[test]
    fn masking_is_idempotent() {
        let img = ramp(32, 32);
        let mask = make_cartesian_mask(32, 32, 4.0, 0.08, 5).unwrap();
        let once = undersample(&img, &mask).unwrap();
        let twice = undersample(&once, &mask).unwrap();
        assert!(twice.sub(&once).unwrap().norm() < 1e-10 * once.norm());
        assert!(once.norm() <= img.norm());
    }

    #[test]
    fn mask_shape_mismatch() {
        let mask = make_cartesian_mask(8, 8, 2.0, 0.1, 5).unwrap();
        assert!(undersample(&ramp(8, 10), &mask).is_err());
    }

    #[test]
    fn crop_scale_one_is_identity() {
        let img = ramp(10, 12);
        let lr = kspace_center_crop_lr(&img, 1).unwrap();
        assert!(lr.sub(&img).unwrap().norm() < 1e-12);
        let up = upsample_zero_pad(&img, 1).unwrap();
        assert!(up.sub(&img).unwrap().norm() < 1e-12);
    }

    #[test]
    fn constants_survive_resampling() {
        let img = Tensor::from_fn2(16, 16, |_, _| 0.3);
        let lr = kspace_center_crop_lr(&img, 4).unwrap();
        assert_eq!(lr.shape(), &[4, 4]);
        assert!(lr.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        let hr = upsample_zero_pad(&lr, 4).unwrap();
        assert!(hr.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn non_divisible_crop_rejected() {
        assert!(kspace_center_crop_lr(&ramp(10, 12), 4).is_err());
    }
}
