//! Synthetic two-contrast ellipse phantoms.
//!
//! Both contrasts share every ellipse's geometry but carry their own
//! intensity per ellipse; ellipses flagged [`Presence::ReferenceOnly`] or
//! [`Presence::TargetOnly`] show up in one contrast only. Ellipses are
//! painted in list order, later ones covering earlier ones.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Presence {
    Both,
    ReferenceOnly,
    TargetOnly,
}

/// Ellipse in normalized coordinates: the image spans `[-1, 1]` on both
/// axes, `x` to the right and `y` downwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    /// Rotation in radians.
    pub angle: f64,
    /// Intensity in the reference and in the target contrast.
    pub intensity: [f64; 2],
    pub presence: Presence,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = libm::sincos(self.angle);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let (a, b) = self.axes;
        (u / a) * (u / a) + (v / b) * (v / b) <= 1.0
    }

    fn visible_in(&self, contrast: usize) -> bool {
        matches!(
            (self.presence, contrast),
            (Presence::Both, _) | (Presence::ReferenceOnly, 0) | (Presence::TargetOnly, 1)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub rows: usize,
    pub cols: usize,
    pub ellipses: Vec<Ellipse>,
    pub seed: u64,
}

/// Pixel center in normalized coordinates.
pub fn pixel_coords(rows: usize, cols: usize, r: usize, c: usize) -> (f64, f64) {
    (
        (2 * c + 1) as f64 / cols as f64 - 1.0,
        (2 * r + 1) as f64 / rows as f64 - 1.0,
    )
}

impl PhantomSpec {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            ellipses: Vec::new(),
            seed: 0,
        }
    }

    /// A head-like outline with `n_ellipses - 1` random interior ellipses;
    /// with `inconsistent` one more ellipse appears in the reference only.
    ///
    /// The reference-only ellipse is redrawn (up to a fixed number of tries)
    /// until it sits on plain head background, so the two contrasts differ
    /// by that ellipse alone and it stays clear of every shared edge.
    pub fn random(size: usize, n_ellipses: usize, inconsistent: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ellipses = Vec::with_capacity(n_ellipses + 1);
        if n_ellipses > 0 {
            ellipses.push(Ellipse {
                center: (0.0, 0.0),
                axes: (rng.random_range(0.78..0.9), rng.random_range(0.85..0.95)),
                angle: rng.random_range(-0.1..0.1),
                intensity: [rng.random_range(0.3..0.5), rng.random_range(0.3..0.5)],
                presence: Presence::Both,
            });
        }
        let interior = |rng: &mut ChaCha8Rng, presence| Ellipse {
            center: (rng.random_range(-0.45..0.45), rng.random_range(-0.5..0.5)),
            axes: (rng.random_range(0.08..0.3), rng.random_range(0.08..0.3)),
            angle: rng.random_range(0.0..core::f64::consts::PI),
            intensity: [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
            presence,
        };
        for _ in 1..n_ellipses {
            ellipses.push(interior(&mut rng, Presence::Both));
        }
        if inconsistent {
            let mut extra = interior(&mut rng, Presence::ReferenceOnly);
            for _ in 1..PLACEMENT_TRIES {
                if !overlaps_interior(&extra, &ellipses, size) {
                    break;
                }
                extra = interior(&mut rng, Presence::ReferenceOnly);
            }
            extra.intensity[1] = 0.0;
            extra.intensity[0] = rng.random_range(0.75..0.95);
            ellipses.push(extra);
        }
        Self {
            rows: size,
            cols: size,
            ellipses,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.rows > 0 && self.cols > 0,
            Error::InvalidParameter("phantom must have positive size".into())
        );
        for e in &self.ellipses {
            ensure!(
                e.intensity.iter().all(|v| (0.0..=1.0).contains(v)),
                Error::InvalidParameter("ellipse intensities must lie in [0, 1]".into())
            );
            ensure!(
                e.axes.0 > 0.0 && e.axes.1 > 0.0,
                Error::InvalidParameter("ellipse axes must be positive".into())
            );
        }
        Ok(())
    }

    /// Mask of pixels covered by any single-contrast ellipse.
    pub fn inconsistent_mask(&self) -> Tensor {
        let odd: Vec<&Ellipse> = self
            .ellipses
            .iter()
            .filter(|e| e.presence != Presence::Both)
            .collect();
        Tensor::from_fn2(self.rows, self.cols, |r, c| {
            let (x, y) = pixel_coords(self.rows, self.cols, r, c);
            if odd.iter().any(|e| e.contains(x, y)) {
                1.0
            } else {
                0.0
            }
        })
    }
}

const PLACEMENT_TRIES: usize = 100;

const PLACEMENT_MARGIN: usize = 2;

/// Whether `e`, grown by a few pixels, touches an interior ellipse or
/// leaves the head.
fn overlaps_interior(e: &Ellipse, ellipses: &[Ellipse], size: usize) -> bool {
    let m = PLACEMENT_MARGIN;
    let inside: Vec<bool> = (0..size * size)
        .map(|i| {
            let (x, y) = pixel_coords(size, size, i / size, i % size);
            e.contains(x, y)
        })
        .collect();
    (0..size * size).any(|i| {
        let (r, c) = (i / size, i % size);
        let near = (r.saturating_sub(m)..(r + m + 1).min(size)).any(|rr| {
            (c.saturating_sub(m)..(c + m + 1).min(size)).any(|cc| inside[rr * size + cc])
        });
        if !near {
            return false;
        }
        let (x, y) = pixel_coords(size, size, r, c);
        ellipses.iter().skip(1).any(|o| o.contains(x, y))
            || !ellipses.first().is_some_and(|h| h.contains(x, y))
    })
}

fn render(spec: &PhantomSpec, contrast: usize) -> Tensor {
    Tensor::from_fn2(spec.rows, spec.cols, |r, c| {
        let (x, y) = pixel_coords(spec.rows, spec.cols, r, c);
        spec.ellipses
            .iter()
            .rev()
            .find(|e| e.visible_in(contrast) && e.contains(x, y))
            .map_or(0.0, |e| e.intensity[contrast])
    })
}

/// Renders `(reference, target)` with values in `[0, 1]`.
pub fn make_phantom_pair(spec: &PhantomSpec) -> Result<(Tensor, Tensor)> {
    spec.validate()?;
    Ok((render(spec, 0), render(spec, 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn empty_spec_is_black() {
        let (a, b) = make_phantom_pair(&PhantomSpec::empty(8, 8)).unwrap();
        assert_eq!(a, Tensor::zeros(&[8, 8]));
        assert_eq!(b, Tensor::zeros(&[8, 8]));
    }

    #[test]
    fn equal_intensities_give_equal_contrasts() {
        let spec = PhantomSpec {
            rows: 16,
            cols: 16,
            ellipses: vec![Ellipse {
                center: (0.1, -0.2),
                axes: (0.5, 0.3),
                angle: 0.4,
                intensity: [0.6, 0.6],
                presence: Presence::Both,
            }],
            seed: 0,
        };
        let (a, b) = make_phantom_pair(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.max() == 0.6 && a.min() == 0.0);
    }

    #[test]
    fn regeneration_is_bitwise_identical() {
        let s1 = PhantomSpec::random(32, 6, true, 7);
        let s2 = PhantomSpec::random(32, 6, true, 7);
        assert_eq!(s1, s2);
        assert_eq!(
            make_phantom_pair(&s1).unwrap(),
            make_phantom_pair(&s2).unwrap()
        );
    }

    #[test]
    fn values_in_unit_range() {
        for seed in 0..5 {
            let (a, b) = make_phantom_pair(&PhantomSpec::random(32, 8, true, seed)).unwrap();
            for img in [a, b] {
                assert!(img.min() >= 0.0 && img.max() <= 1.0);
            }
        }
    }

    #[test]
    fn reference_only_ellipse_is_missing_from_target() {
        let spec = PhantomSpec {
            rows: 16,
            cols: 16,
            ellipses: vec![Ellipse {
                center: (0.0, 0.0),
                axes: (0.4, 0.4),
                angle: 0.0,
                intensity: [0.5, 0.5],
                presence: Presence::ReferenceOnly,
            }],
            seed: 0,
        };
        let (a, b) = make_phantom_pair(&spec).unwrap();
        assert!(a.max() > 0.0);
        assert_eq!(b, Tensor::zeros(&[16, 16]));
        assert_eq!(
            spec.inconsistent_mask(),
            a.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
        );
    }

    #[test]
    fn reference_only_ellipse_sits_on_background() {
        for seed in 0..8 {
            let spec = PhantomSpec::random(64, 6, true, seed);
            let (extra, rest) = spec.ellipses.split_last().unwrap();
            assert!(!overlaps_interior(extra, rest, 64), "seed {seed}");
        }
    }

    #[test]
    fn invalid_intensity_rejected() {
        let mut spec = PhantomSpec::random(8, 2, false, 1);
        spec.ellipses[0].intensity[0] = 1.5;
        assert!(make_phantom_pair(&spec).is_err());
    }
}
