//! Cartesian k-space sampling masks.
//!
//! Masks are laid out in centered k-space order (DC at `(rows/2, cols/2)`)
//! and select whole columns: a fully sampled band around the center plus
//! columns drawn uniformly at random until the acceleration budget is met.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_CENTER_FRACTION: f64 = 0.08;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    mask: Tensor,
    acceleration: f64,
    center_fraction: f64,
}

impl SamplingMask {
    /// Wraps an existing binary mask.
    pub fn from_tensor(mask: Tensor, acceleration: f64, center_fraction: f64) -> Result<Self> {
        ensure!(
            mask.rank() == 2 && mask.data().iter().all(|&v| v == 0.0 || v == 1.0),
            Error::InvalidParameter("mask must be a binary 2-D tensor".into())
        );
        Ok(Self {
            mask,
            acceleration,
            center_fraction,
        })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.mask
    }

    pub fn into_tensor(self) -> Tensor {
        self.mask
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction
    }

    pub fn density(&self) -> f64 {
        self.mask.mean()
    }

    pub fn sampled_columns(&self) -> Vec<usize> {
        let cols = self.mask.cols();
        (0..cols).filter(|&c| self.mask.data()[c] == 1.0).collect()
    }
}

/// Minimum number of columns in the fully sampled center band.
pub fn center_columns(cols: usize, center_fraction: f64) -> usize {
    libm::ceil(center_fraction * cols as f64) as usize
}

/// Column mirrored through DC (`k ↦ −k`) in centered layout.
pub fn mirror_column(cols: usize, c: usize) -> usize {
    (2 * (cols / 2) + cols - c) % cols
}

/// Column-wise random cartesian mask with a fully sampled center band.
///
/// The selection is symmetric under `k ↦ −k`, so masking the spectrum of
/// a real image keeps it Hermitian and the zero-filled image stays real.
/// The center band is the smallest symmetric band holding at least
/// `⌈center_fraction · cols⌉` columns; the remaining budget of
/// `round(cols / acceleration)` columns is filled with random mirror pairs
/// (plus the self-mirrored Nyquist column when one slot is left over).
pub fn make_cartesian_mask(
    rows: usize,
    cols: usize,
    acceleration: f64,
    center_fraction: f64,
    seed: u64,
) -> Result<SamplingMask> {
    ensure!(
        acceleration >= 1.0 && acceleration.is_finite(),
        Error::InvalidParameter(alloc::format!(
            "acceleration must be >= 1, got {acceleration}"
        ))
    );
    ensure!(
        center_fraction > 0.0 && center_fraction < 1.0,
        Error::InvalidParameter(alloc::format!(
            "center fraction must lie in (0, 1), got {center_fraction}"
        ))
    );
    ensure!(
        rows > 0 && cols > 0,
        Error::InvalidParameter("mask must have positive size".into())
    );
    if acceleration > 1.0 {
        ensure!(
            center_fraction * (cols as f64) < cols as f64 / acceleration,
            Error::InvalidParameter(alloc::format!(
                "center fraction {center_fraction} exceeds the 1/{acceleration} sampling budget"
            ))
        );
    }
    let budget = libm::round(cols as f64 / acceleration) as usize;
    let mut selected = vec![false; cols];
    if budget >= cols {
        selected.iter_mut().for_each(|s| *s = true);
    } else {
        let dc = cols / 2;
        let half = center_columns(cols, center_fraction) / 2;
        for offset in 0..=half.min(dc) {
            selected[dc - offset] = true;
            selected[mirror_column(cols, dc - offset)] = true;
        }
        let used = selected.iter().filter(|&&s| s).count();
        let mut left = budget.saturating_sub(used);
        // one representative per mirror pair, excluding self-mirrored columns
        let candidates: Vec<usize> = (0..dc)
            .filter(|&c| !selected[c] && mirror_column(cols, c) != c)
            .collect();
        let pairs = (left / 2).min(candidates.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in index::sample(&mut rng, candidates.len(), pairs) {
            let c = candidates[i];
            selected[c] = true;
            selected[mirror_column(cols, c)] = true;
        }
        left -= 2 * pairs;
        if left > 0 && cols.is_multiple_of(2) && !selected[0] {
            selected[0] = true;
        }
    }
    let mask = Tensor::from_fn2(rows, cols, |_, c| if selected[c] { 1.0 } else { 0.0 });
    SamplingMask::from_tensor(mask, acceleration, center_fraction)
}
