use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::bank::{
    analyze, analyze_down, dict_gradient, shifted_channel, synthesize, synthesize_up, zero_insert,
};
use super::DictionaryBank;
use crate::error::{ensure, Error, Result};
use crate::tensor::{Features, Tensor};

/// Linear U-Net style synthesis operator over a feature pyramid.
///
/// `banks[0]` maps the finest features (`K_0` channels) onto the image;
/// `banks[l]` for `l >= 1` is a stride-2 transposed convolution from the
/// `K_l` channels at level `l` onto the `K_{l-1}` channels one level up.
/// Decoding starts at the coarsest level, upsamples and adds the next
/// level's features until full resolution is reached. There is no bias or
/// nonlinearity anywhere, so the encoder ([`ms_analyze`]) is the exact
/// adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleDictionary {
    banks: Vec<DictionaryBank>,
}

impl MultiScaleDictionary {
    pub fn new(banks: Vec<DictionaryBank>) -> Result<Self> {
        ensure!(
            !banks.is_empty(),
            Error::PyramidMismatch("need at least one level".into())
        );
        for l in 1..banks.len() {
            ensure!(
                banks[l].outputs() == banks[l - 1].features(),
                Error::PyramidMismatch(format!(
                    "level {l} emits {} channels but level {} expects {}",
                    banks[l].outputs(),
                    l - 1,
                    banks[l - 1].features()
                ))
            );
        }
        Ok(Self { banks })
    }

    pub fn single(bank: DictionaryBank) -> Self {
        Self {
            banks: alloc::vec![bank],
        }
    }

    /// Random unit-norm banks with the given per-level widths.
    pub fn random<R: Rng + ?Sized>(
        size: usize,
        widths: &[usize],
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        ensure!(
            !widths.is_empty(),
            Error::PyramidMismatch("need at least one level".into())
        );
        let mut banks = Vec::with_capacity(widths.len());
        for (l, &k) in widths.iter().enumerate() {
            let out = if l == 0 { outputs } else { widths[l - 1] };
            banks.push(DictionaryBank::random(size, k, out, rng)?);
        }
        Self::new(banks)
    }

    pub fn banks(&self) -> &[DictionaryBank] {
        &self.banks
    }

    pub fn banks_mut(&mut self) -> &mut [DictionaryBank] {
        &mut self.banks
    }

    pub fn levels(&self) -> usize {
        self.banks.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.banks.iter().map(DictionaryBank::features).collect()
    }

    pub fn outputs(&self) -> usize {
        self.banks[0].outputs()
    }

    pub fn size(&self) -> usize {
        self.banks[0].size()
    }

    pub fn map_banks(&self, f: impl Fn(&DictionaryBank) -> DictionaryBank) -> Self {
        Self {
            banks: self.banks.iter().map(f).collect(),
        }
    }

    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        ensure!(
            self.levels() == other.levels(),
            Error::PyramidMismatch("level count differs".into())
        );
        let banks = self
            .banks
            .iter()
            .zip(&other.banks)
            .map(|(a, b)| a.axpy(alpha, b))
            .collect::<Result<_>>()?;
        Ok(Self { banks })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map_banks(|b| b.scaled(alpha))
    }

    pub fn project_unit_ball(&self) -> Self {
        self.map_banks(DictionaryBank::project_unit_ball)
    }

    /// Copy with every coefficient of `banks[level]` set to zero.
    pub fn with_zero_level(&self, level: usize) -> Self {
        let mut out = self.clone();
        let b = &mut out.banks[level];
        b.weights_mut().iter_mut().for_each(|w| *w = 0.0);
        out
    }

    /// Squared Frobenius norm of all coefficients.
    pub fn coeff_norm_sq(&self) -> f64 {
        self.banks
            .iter()
            .flat_map(|b| b.weights())
            .map(|w| w * w)
            .sum()
    }

    /// Checks that `rows × cols` can carry this pyramid.
    pub fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        let div = 1usize << (self.levels() - 1);
        ensure!(
            rows.is_multiple_of(div) && cols.is_multiple_of(div),
            Error::PyramidMismatch(format!(
                "{rows}x{cols} is not divisible by {div} for {} levels",
                self.levels()
            ))
        );
        Ok(())
    }

    fn check_features(&self, features: &Features) -> Result<(usize, usize)> {
        ensure!(
            features.depth() == self.levels(),
            Error::PyramidMismatch(format!(
                "expected {} levels, got {}",
                self.levels(),
                features.depth()
            ))
        );
        let (rows, cols) = features.level(0).spatial();
        self.check_dims(rows, cols)?;
        for (l, (t, b)) in features.levels().iter().zip(&self.banks).enumerate() {
            ensure!(
                t.spatial() == (rows >> l, cols >> l),
                Error::PyramidMismatch(format!(
                    "level {l} is {:?}, expected {:?}",
                    t.spatial(),
                    (rows >> l, cols >> l)
                ))
            );
            ensure!(
                t.channels() == b.features(),
                Error::ChannelMismatch {
                    expected: b.features(),
                    actual: t.channels()
                }
            );
        }
        Ok((rows, cols))
    }

    /// Decoder pass that also returns the merged feature map entering each
    /// level's bank (needed for filter gradients).
    fn decode(&self, features: &Features) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_features(features)?;
        let depth = self.levels();
        let mut merged: Vec<Tensor> = Vec::with_capacity(depth);
        let mut z = features.level(depth - 1).clone();
        merged.push(z.clone());
        for l in (1..depth).rev() {
            let up = synthesize_up(&self.banks[l], &z)?;
            let up = up.reshape(features.level(l - 1).shape().to_vec())?;
            z = features.level(l - 1).add(&up)?;
            merged.push(z.clone());
        }
        merged.reverse();
        Ok((synthesize(&self.banks[0], &z)?, merged))
    }
}

/// Decoder: coarsest level upsampled and merged (by addition) level by level.
pub fn ms_synthesize(msd: &MultiScaleDictionary, features: &Features) -> Result<Tensor> {
    msd.decode(features).map(|(out, _)| out)
}

/// Encoder: the exact adjoint of [`ms_synthesize`].
pub fn ms_analyze(msd: &MultiScaleDictionary, image: &Tensor) -> Result<Features> {
    let (rows, cols) = image.spatial();
    msd.check_dims(rows, cols)?;
    let mut levels = Vec::with_capacity(msd.levels());
    let mut a = analyze(&msd.banks[0], image)?;
    for bank in &msd.banks[1..] {
        let next = analyze_down(bank, &a)?;
        levels.push(a);
        a = next;
    }
    levels.push(a);
    Features::new(levels)
}

/// Gradient of `½‖target − ms_synthesize(msd, features)‖²` with respect to
/// every bank, given `residual = target − ms_synthesize(msd, features)`.
pub fn ms_filter_gradients(
    msd: &MultiScaleDictionary,
    features: &Features,
    residual: &Tensor,
) -> Result<MultiScaleDictionary> {
    let (_, merged) = msd.decode(features)?;
    let mut grads = Vec::with_capacity(msd.levels());
    grads.push(dict_gradient(&msd.banks[0], &merged[0], residual)?);
    // back-propagated residual arriving at the output of bank l
    let mut signal = analyze(&msd.banks[0], residual)?;
    for l in 1..msd.levels() {
        let input = zero_insert(&merged[l]);
        grads.push(dict_gradient(&msd.banks[l], &input, &signal)?);
        signal = analyze_down(&msd.banks[l], &signal)?;
    }
    Ok(MultiScaleDictionary { banks: grads })
}

/// Derivative of `ms_synthesize(msd, features)` with respect to every
/// coefficient of `banks[level]`, in weight order. The synthesis is linear
/// in each single bank, so `Σ_θ w_θ·image_θ` plus the synthesis with that
/// bank zeroed reproduces the full output.
pub fn ms_coefficient_images(
    msd: &MultiScaleDictionary,
    features: &Features,
    level: usize,
) -> Result<Vec<Tensor>> {
    ensure!(
        level < msd.levels(),
        Error::PyramidMismatch(format!(
            "no level {level} in a {}-level pyramid",
            msd.levels()
        ))
    );
    let (_, merged) = msd.decode(features)?;
    let bank = &msd.banks[level];
    let (kk, p, n) = (bank.features(), bank.outputs(), bank.size());
    let input = if level == 0 {
        merged[0].clone()
    } else {
        zero_insert(&merged[level])
    };
    let (rows, cols) = input.spatial();
    let mut images = Vec::with_capacity(bank.weights().len());
    for k in 0..kk {
        for c in 0..p {
            for i in 0..n {
                for j in 0..n {
                    let plane = shifted_channel(&input, k, i, j, n);
                    let mut data = alloc::vec![0.0; rows * cols * p];
                    for (d, v) in data.chunks_exact_mut(p).zip(&plane) {
                        d[c] = *v;
                    }
                    if level == 0 {
                        images.push(Tensor::new(bank.image_shape(rows, cols), data)?);
                        continue;
                    }
                    let mut t = Tensor::new(alloc::vec![rows, cols, p], data)?;
                    for m in (1..level).rev() {
                        t = synthesize_up(&msd.banks[m], &t)?;
                    }
                    images.push(synthesize(&msd.banks[0], &t)?);
                }
            }
        }
    }
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_level_matches_bank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bank = DictionaryBank::random(3, 3, 1, &mut rng).unwrap();
        let msd = MultiScaleDictionary::single(bank.clone());
        let f = Tensor::new(
            alloc::vec![6, 6, 3],
            (0..108).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let img = Tensor::from_fn2(6, 6, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(
            ms_synthesize(&msd, &Features::single(f.clone())).unwrap(),
            synthesize(&bank, &f).unwrap()
        );
        assert_eq!(
            ms_analyze(&msd, &img).unwrap().level(0),
            &analyze(&bank, &img).unwrap()
        );
    }

    #[test]
    fn zero_pyramid_synthesizes_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let msd = MultiScaleDictionary::random(3, &[4, 6], 1, &mut rng).unwrap();
        let f = Features::zeros(8, 8, &[4, 6]);
        assert_eq!(ms_synthesize(&msd, &f).unwrap(), Tensor::zeros(&[8, 8]));
        let back = ms_analyze(&msd, &Tensor::zeros(&[8, 8])).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_bad_pyramids() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let msd = MultiScaleDictionary::random(3, &[4, 6], 1, &mut rng).unwrap();
        assert!(ms_synthesize(&msd, &Features::zeros(8, 8, &[4])).is_err());
        assert!(ms_synthesize(&msd, &Features::zeros(8, 8, &[4, 5])).is_err());
        assert!(ms_analyze(&msd, &Tensor::zeros(&[7, 8])).is_err());
        let bad = Features::new(alloc::vec![
            Tensor::zeros(&[8, 8, 4]),
            Tensor::zeros(&[3, 4, 6])
        ])
        .unwrap();
        assert!(ms_synthesize(&msd, &bad).is_err());
    }

    #[test]
    fn mismatched_level_widths_rejected() {
        let a = DictionaryBank::zeros(3, 4, 1).unwrap();
        let b = DictionaryBank::zeros(3, 6, 5).unwrap();
        assert!(MultiScaleDictionary::new(alloc::vec![a, b]).is_err());
    }
}
