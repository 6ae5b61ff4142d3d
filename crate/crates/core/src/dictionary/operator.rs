use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ms_analyze, ms_synthesize, DictionaryBank, MultiScaleDictionary};
use super::{POWER_ITERATION_MAX, POWER_ITERATION_TOL};
use crate::error::{ensure, Error, Result};
use crate::tensor::{Features, Tensor};

/// A linear synthesis operator from a feature pyramid onto an image,
/// together with the analysis operator used in its place for adjoint
/// products.
pub trait ConvOperator {
    fn synthesize(&self, features: &Features) -> Result<Tensor>;
    fn analyze(&self, image: &Tensor) -> Result<Features>;
    /// Feature channels per pyramid level.
    fn widths(&self) -> Vec<usize>;
    /// Image channels.
    fn outputs(&self) -> usize;

    fn zero_features(&self, rows: usize, cols: usize) -> Features {
        Features::zeros(rows, cols, &self.widths())
    }
}

impl ConvOperator for DictionaryBank {
    fn synthesize(&self, features: &Features) -> Result<Tensor> {
        ensure!(
            features.depth() == 1,
            Error::PyramidMismatch("single-scale bank takes one level".into())
        );
        super::synthesize(self, features.level(0))
    }

    fn analyze(&self, image: &Tensor) -> Result<Features> {
        super::analyze(self, image).map(Features::single)
    }

    fn widths(&self) -> Vec<usize> {
        vec![self.features()]
    }

    fn outputs(&self) -> usize {
        DictionaryBank::outputs(self)
    }
}

impl ConvOperator for MultiScaleDictionary {
    fn synthesize(&self, features: &Features) -> Result<Tensor> {
        ms_synthesize(self, features)
    }

    fn analyze(&self, image: &Tensor) -> Result<Features> {
        ms_analyze(self, image)
    }

    fn widths(&self) -> Vec<usize> {
        MultiScaleDictionary::widths(self)
    }

    fn outputs(&self) -> usize {
        MultiScaleDictionary::outputs(self)
    }
}

/// A synthesis dictionary with its own analysis dictionary. When tied the
/// two are identical and `analyze` is the exact adjoint of `synthesize`.
#[derive(Debug, Clone, PartialEq)]
pub struct UntiedPair {
    synthesis: MultiScaleDictionary,
    analysis: MultiScaleDictionary,
}

impl UntiedPair {
    pub fn tied(synthesis: MultiScaleDictionary) -> Self {
        Self {
            analysis: synthesis.clone(),
            synthesis,
        }
    }

    pub fn from_bank(bank: DictionaryBank) -> Self {
        Self::tied(MultiScaleDictionary::single(bank))
    }

    pub fn new(synthesis: MultiScaleDictionary, analysis: MultiScaleDictionary) -> Result<Self> {
        ensure!(
            synthesis.levels() == analysis.levels(),
            Error::PyramidMismatch("synthesis and analysis depths differ".into())
        );
        for (s, a) in synthesis.banks().iter().zip(analysis.banks()) {
            s.ensure_same_layout(a)?;
        }
        Ok(Self {
            synthesis,
            analysis,
        })
    }

    pub fn synthesis(&self) -> &MultiScaleDictionary {
        &self.synthesis
    }

    pub fn analysis(&self) -> &MultiScaleDictionary {
        &self.analysis
    }

    pub fn is_tied(&self) -> bool {
        self.synthesis == self.analysis
    }

    /// Replaces the synthesis side; a tied pair stays tied.
    pub fn with_synthesis(&self, synthesis: MultiScaleDictionary, tied: bool) -> Result<Self> {
        if tied {
            Ok(Self::tied(synthesis))
        } else {
            Self::new(synthesis, self.analysis.clone())
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            synthesis: self.synthesis.scaled(alpha),
            analysis: self.analysis.scaled(alpha),
        }
    }

    pub fn permute_filters(&self, perm: &[usize]) -> Result<Self> {
        ensure!(
            self.synthesis.levels() == 1,
            Error::PyramidMismatch("channel permutation is defined for single-scale pairs".into())
        );
        let s = self.synthesis.banks()[0].permute_filters(perm)?;
        let a = self.analysis.banks()[0].permute_filters(perm)?;
        Self::new(
            MultiScaleDictionary::single(s),
            MultiScaleDictionary::single(a),
        )
    }
}

impl ConvOperator for UntiedPair {
    fn synthesize(&self, features: &Features) -> Result<Tensor> {
        ms_synthesize(&self.synthesis, features)
    }

    fn analyze(&self, image: &Tensor) -> Result<Features> {
        ms_analyze(&self.analysis, image)
    }

    fn widths(&self) -> Vec<usize> {
        self.synthesis.widths()
    }

    fn outputs(&self) -> usize {
        self.synthesis.outputs()
    }
}

/// Two operators sharing one feature pyramid, their outputs stacked along
/// the channel axis. With single-scale banks this is the bank built by
/// [`DictionaryBank::stack_outputs`].
#[derive(Debug, Clone, Copy)]
pub struct StackedPair<'a> {
    pub top: &'a UntiedPair,
    pub bottom: &'a UntiedPair,
}

impl ConvOperator for StackedPair<'_> {
    fn synthesize(&self, features: &Features) -> Result<Tensor> {
        let a = self.top.synthesize(features)?;
        let b = self.bottom.synthesize(features)?;
        Tensor::stack_channels(&[&a, &b])
    }

    fn analyze(&self, image: &Tensor) -> Result<Features> {
        let parts = image.split_channels(&[self.top.outputs(), self.bottom.outputs()])?;
        let a = self.top.analyze(&parts[0])?;
        let b = self.bottom.analyze(&parts[1])?;
        Features::axpy(1.0, &a, &b)
    }

    fn widths(&self) -> Vec<usize> {
        self.top.widths()
    }

    fn outputs(&self) -> usize {
        self.top.outputs() + self.bottom.outputs()
    }
}

/// Largest singular value of the synthesis operator on `rows × cols`
/// images, estimated by power iteration on `analyze ∘ synthesize`.
pub fn operator_norm<O: ConvOperator + ?Sized>(op: &O, rows: usize, cols: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = op.zero_features(rows, cols).map(|_| 0.0);
    for level in v.levels_mut() {
        level
            .data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATION_MAX {
        let norm = v.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = v.scaled(1.0 / norm);
        let w = op.analyze(&op.synthesize(&v)?)?;
        let next = w.norm();
        let done = (next - estimate).abs() <= POWER_ITERATION_TOL * next;
        estimate = next;
        v = w;
        if done {
            break;
        }
    }
    Ok(libm::sqrt(estimate))
}
