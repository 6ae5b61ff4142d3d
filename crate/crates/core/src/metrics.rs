//! PSNR, RMSE and SSIM.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// SSIM window side.
pub const SSIM_WINDOW: usize = 11;
/// SSIM Gaussian window standard deviation.
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse(x: &Tensor, reference: &Tensor) -> Result<f64> {
    x.ensure_same_shape(reference)?;
    ensure!(!x.is_empty(), Error::InvalidParameter("empty image".into()));
    let sum: f64 = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// `10·log10(peak² / MSE)` in dB; `f64::INFINITY` for identical images.
pub fn psnr(x: &Tensor, reference: &Tensor, peak: f64) -> Result<f64> {
    ensure!(
        peak > 0.0 && peak.is_finite(),
        Error::InvalidParameter(alloc::format!("peak must be > 0, got {peak}"))
    );
    let err = mse(x, reference)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(peak * peak / err))
}

pub fn rmse(x: &Tensor, reference: &Tensor) -> Result<f64> {
    mse(x, reference).map(libm::sqrt)
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut taps: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(data: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let w = taps.len();
    let (orows, ocols) = (rows - w + 1, cols - w + 1);
    let mut horiz = vec![0.0; rows * ocols];
    for r in 0..rows {
        for c in 0..ocols {
            horiz[r * ocols + c] = taps
                .iter()
                .enumerate()
                .map(|(j, t)| t * data[r * cols + c + j])
                .sum();
        }
    }
    let mut out = vec![0.0; orows * ocols];
    for r in 0..orows {
        for c in 0..ocols {
            out[r * ocols + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(r + i) * ocols + c])
                .sum();
        }
    }
    out
}

/// Mean local SSIM over every fully contained 11×11 Gaussian window, for
/// images on a unit dynamic range.
pub fn ssim(x: &Tensor, reference: &Tensor) -> Result<f64> {
    x.ensure_same_shape(reference)?;
    ensure!(
        x.channels() == 1,
        Error::InvalidParameter("ssim expects single-channel images".into())
    );
    let (rows, cols) = x.spatial();
    ensure!(
        rows >= SSIM_WINDOW && cols >= SSIM_WINDOW,
        Error::InvalidParameter(alloc::format!(
            "image {rows}x{cols} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        ))
    );
    let taps = gaussian_window();
    let a = x.data();
    let b = reference.data();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
    };
    let mu_x = filter_valid(a, rows, cols, &taps);
    let mu_y = filter_valid(b, rows, cols, &taps);
    let xx = filter_valid(&prod(&|p, _| p * p), rows, cols, &taps);
    let yy = filter_valid(&prod(&|_, q| q * q), rows, cols, &taps);
    let xy = filter_valid(&prod(&|p, q| p * q), rows, cols, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        total +=
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn2(n, n, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn identical_images() {
        let x = random_image(16, 1);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let x = random_image(16, 2);
        let y = x.map(|v| v + 0.1);
        assert!((psnr(&y, &x, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!((rmse(&y, &x).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn inverted_binary_image_has_negative_ssim() {
        let x = Tensor::from_fn2(
            32,
            32,
            |r, c| if (r / 4 + c / 4) % 2 == 0 { 1.0 } else { 0.0 },
        );
        let y = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &y).unwrap() < 0.0);
    }

    #[test]
    fn errors() {
        let x = random_image(8, 3);
        assert!(ssim(&x, &x).is_err());
        assert!(psnr(&x, &x, 0.0).is_err());
        assert!(rmse(&x, &random_image(9, 3)).is_err());
    }

    #[test]
    fn window_is_normalized() {
        let w = gaussian_window();
        assert_eq!(w.len(), 11);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
