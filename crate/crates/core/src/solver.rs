//! Alternating proximal-gradient decomposition of a reference image `x1`
//! and a degraded target `x2` into common features `C` and unique features
//! `U` (reference) and `V` (target):
//!
//! ```text
//! x1 ≈ Dc⊗C + Du⊗U        x2 ≈ Hc⊗C + Hv⊗V
//! ```
//!
//! Each block updates `U`, then `V`, then `C` against the two-channel
//! residual `M = [x1 − Du⊗U, x2 − Hv⊗V]` using the stacked operator
//! `Lc = [Dc; Hc]`. The restored target is `Qc⊗C + Qv⊗V`.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{
    operator_norm, ConvOperator, MultiScaleDictionary, StackedPair, UntiedPair,
};
use crate::error::{ensure, Error, Result};
use crate::prox::{Prox, ProxKind};
use crate::tensor::{Features, Tensor};

/// Fraction of `1/L` used for automatic step sizes.
pub const AUTO_STEP_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `0.99 / ‖op‖²` from power iteration.
    Auto,
    Fixed(f64),
}

impl StepSize {
    fn resolve<O: ConvOperator + ?Sized>(self, op: &O, rows: usize, cols: usize) -> Result<f64> {
        match self {
            StepSize::Fixed(eta) => Ok(eta),
            StepSize::Auto => {
                let norm = operator_norm(op, rows, cols)?;
                Ok(if norm > 0.0 {
                    AUTO_STEP_FRACTION / (norm * norm)
                } else {
                    1.0
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Number of U/V/C blocks (stages).
    pub stages: usize,
    pub step_u: StepSize,
    pub step_v: StepSize,
    pub step_c: StepSize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_c: f64,
    pub prox: ProxKind,
    pub tied: bool,
    pub scale_levels: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            stages: 4,
            step_u: StepSize::Auto,
            step_v: StepSize::Auto,
            step_c: StepSize::Auto,
            lambda_u: 1e-3,
            lambda_v: 1e-3,
            lambda_c: 1e-3,
            prox: ProxKind::SoftThreshold,
            tied: true,
            scale_levels: 1,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_u = lambda;
        self.lambda_v = lambda;
        self.lambda_c = lambda;
        self
    }

    pub fn with_stages(mut self, stages: usize) -> Self {
        self.stages = stages;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, step) in [("u", self.step_u), ("v", self.step_v), ("c", self.step_c)] {
            if let StepSize::Fixed(eta) = step {
                ensure!(
                    eta > 0.0 && eta.is_finite(),
                    Error::InvalidParameter(alloc::format!("step size eta_{name} must be > 0"))
                );
            }
        }
        for (name, lambda) in [
            ("u", self.lambda_u),
            ("v", self.lambda_v),
            ("c", self.lambda_c),
        ] {
            ensure!(
                lambda >= 0.0 && lambda.is_finite(),
                Error::InvalidParameter(alloc::format!("lambda_{name} must be >= 0"))
            );
        }
        ensure!(
            self.scale_levels >= 1,
            Error::InvalidParameter("scale_levels must be >= 1".into())
        );
        Ok(())
    }
}

/// The seven operators of the model. `Lc` is not stored: it is always the
/// output stack of `Dc` and `Hc`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDictionaries {
    pub dc: UntiedPair,
    pub du: UntiedPair,
    pub hc: UntiedPair,
    pub hv: UntiedPair,
    pub qc: UntiedPair,
    pub qv: UntiedPair,
}

/// Names used for the banks in serialized form, in field order.
pub const DICTIONARY_NAMES: [&str; 6] = ["Dc", "Du", "Hc", "Hv", "Qc", "Qv"];

impl ModelDictionaries {
    pub fn new(
        dc: UntiedPair,
        du: UntiedPair,
        hc: UntiedPair,
        hv: UntiedPair,
        qc: UntiedPair,
        qv: UntiedPair,
    ) -> Result<Self> {
        let dicts = Self {
            dc,
            du,
            hc,
            hv,
            qc,
            qv,
        };
        dicts.validate()?;
        Ok(dicts)
    }

    /// Random unit-norm Gaussian filters from a fixed seed.
    pub fn random(size: usize, widths: &[usize], tied: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || -> Result<UntiedPair> {
            let msd = MultiScaleDictionary::random(size, widths, 1, &mut rng)?;
            if tied {
                Ok(UntiedPair::tied(msd))
            } else {
                UntiedPair::new(msd.clone(), msd)
            }
        };
        Self::new(next()?, next()?, next()?, next()?, next()?, next()?)
    }

    pub fn validate(&self) -> Result<()> {
        let widths = self.dc.widths();
        for (name, pair) in self.iter() {
            ensure!(
                pair.widths() == widths,
                Error::PyramidMismatch(alloc::format!(
                    "{name} has widths {:?}, expected {widths:?}",
                    pair.widths()
                ))
            );
            ensure!(
                pair.outputs() == 1,
                Error::ChannelMismatch {
                    expected: 1,
                    actual: pair.outputs()
                }
            );
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &UntiedPair)> {
        DICTIONARY_NAMES
            .into_iter()
            .zip([&self.dc, &self.du, &self.hc, &self.hv, &self.qc, &self.qv])
    }

    pub fn get(&self, name: &str) -> Option<&UntiedPair> {
        self.iter().find(|(n, _)| *n == name).map(|(_, p)| p)
    }

    pub fn lc(&self) -> StackedPair<'_> {
        StackedPair {
            top: &self.dc,
            bottom: &self.hc,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.dc.widths()
    }

    pub fn levels(&self) -> usize {
        self.dc.synthesis().levels()
    }

    pub fn is_tied(&self) -> bool {
        self.iter().all(|(_, p)| p.is_tied())
    }

    /// Applies one channel permutation to every single-scale dictionary.
    pub fn permute_filters(&self, perm: &[usize]) -> Result<Self> {
        Self::new(
            self.dc.permute_filters(perm)?,
            self.du.permute_filters(perm)?,
            self.hc.permute_filters(perm)?,
            self.hv.permute_filters(perm)?,
            self.qc.permute_filters(perm)?,
            self.qv.permute_filters(perm)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureState {
    /// `C`
    pub common: Features,
    /// `U`, unique to the reference.
    pub unique_ref: Features,
    /// `V`, unique to the target.
    pub unique_target: Features,
    pub iteration: usize,
}

impl FeatureState {
    pub fn zeros(rows: usize, cols: usize, widths: &[usize]) -> Self {
        let z = Features::zeros(rows, cols, widths);
        Self {
            common: z.clone(),
            unique_ref: z.clone(),
            unique_target: z,
            iteration: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.common.is_finite() && self.unique_ref.is_finite() && self.unique_target.is_finite()
    }

    pub fn permute_channels(&self, perm: &[usize]) -> Result<Self> {
        Ok(Self {
            common: self.common.permute_channels(perm)?,
            unique_ref: self.unique_ref.permute_channels(perm)?,
            unique_target: self.unique_target.permute_channels(perm)?,
            iteration: self.iteration,
        })
    }
}

/// Breakdown of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub total: f64,
    /// `½‖x1 − Dc⊗C − Du⊗U‖²`
    pub fid1: f64,
    /// `½‖x2 − Hc⊗C − Hv⊗V‖²`
    pub fid2: f64,
    pub l1_c: f64,
    pub l1_u: f64,
    pub l1_v: f64,
}

impl Objective {
    pub fn fidelity(&self) -> f64 {
        self.fid1 + self.fid2
    }
}

fn check_pair(x1: &Tensor, x2: &Tensor) -> Result<()> {
    ensure!(
        x1.spatial() == x2.spatial() && x1.channels() == 1 && x2.channels() == 1,
        Error::ShapeMismatch {
            expected: x1.shape().to_vec(),
            actual: x2.shape().to_vec(),
        }
    );
    Ok(())
}

fn as_image(t: Tensor, like: &Tensor) -> Result<Tensor> {
    t.reshape(like.shape().to_vec())
}

/// `U0 = Du^T x1`, `V0 = Hv^T x2`, `C0 = Lc^T [x1, x2]`.
pub fn init_features(dicts: &ModelDictionaries, x1: &Tensor, x2: &Tensor) -> Result<FeatureState> {
    check_pair(x1, x2)?;
    let stacked = Tensor::stack_channels(&[x1, x2])?;
    Ok(FeatureState {
        common: dicts.lc().analyze(&stacked)?,
        unique_ref: dicts.du.analyze(x1)?,
        unique_target: dicts.hv.analyze(x2)?,
        iteration: 0,
    })
}

/// `Du^T (Dc⊗C + Du⊗U − x1)`.
pub fn grad_u(state: &FeatureState, dicts: &ModelDictionaries, x1: &Tensor) -> Result<Features> {
    let fit = dicts
        .dc
        .synthesize(&state.common)?
        .add(&dicts.du.synthesize(&state.unique_ref)?)?;
    let misfit = fit.sub(&as_image(x1.clone(), &fit)?)?;
    dicts.du.analyze(&misfit)
}

/// `Hv^T (Hc⊗C + Hv⊗V − x2)`.
pub fn grad_v(state: &FeatureState, dicts: &ModelDictionaries, x2: &Tensor) -> Result<Features> {
    let fit = dicts
        .hc
        .synthesize(&state.common)?
        .add(&dicts.hv.synthesize(&state.unique_target)?)?;
    let misfit = fit.sub(&as_image(x2.clone(), &fit)?)?;
    dicts.hv.analyze(&misfit)
}

/// `M = [x1 − Du⊗U, x2 − Hv⊗V]` as a two-channel image.
pub fn build_stacked_residual(
    state: &FeatureState,
    dicts: &ModelDictionaries,
    x1: &Tensor,
    x2: &Tensor,
) -> Result<Tensor> {
    check_pair(x1, x2)?;
    let r1 = x1.sub(&as_image(dicts.du.synthesize(&state.unique_ref)?, x1)?)?;
    let r2 = x2.sub(&as_image(dicts.hv.synthesize(&state.unique_target)?, x2)?)?;
    Tensor::stack_channels(&[&r1, &r2])
}

/// `Lc^T (Lc⊗C − M)`.
pub fn grad_c(
    state: &FeatureState,
    dicts: &ModelDictionaries,
    residual: &Tensor,
) -> Result<Features> {
    let lc = dicts.lc();
    let misfit = lc.synthesize(&state.common)?.sub(residual)?;
    lc.analyze(&misfit)
}

/// `Qc⊗C + Qv⊗V`.
pub fn reconstruct(state: &FeatureState, dicts: &ModelDictionaries) -> Result<Tensor> {
    dicts
        .qc
        .synthesize(&state.common)?
        .add(&dicts.qv.synthesize(&state.unique_target)?)
}

/// The four synthesized components `(Dc⊗C, Du⊗U, Hc⊗C, Hv⊗V)`.
pub fn components(state: &FeatureState, dicts: &ModelDictionaries) -> Result<[Tensor; 4]> {
    Ok([
        dicts.dc.synthesize(&state.common)?,
        dicts.du.synthesize(&state.unique_ref)?,
        dicts.hc.synthesize(&state.common)?,
        dicts.hv.synthesize(&state.unique_target)?,
    ])
}

/// Joint objective with L1 regularizers.
pub fn objective_value(
    state: &FeatureState,
    dicts: &ModelDictionaries,
    x1: &Tensor,
    x2: &Tensor,
    cfg: &SolverConfig,
) -> Result<Objective> {
    check_pair(x1, x2)?;
    let [dc, du, hc, hv] = components(state, dicts)?;
    let r1 = as_image(dc.add(&du)?, x1)?.sub(x1)?;
    let r2 = as_image(hc.add(&hv)?, x2)?.sub(x2)?;
    let fid1 = 0.5 * r1.norm_sq();
    let fid2 = 0.5 * r2.norm_sq();
    let l1_c = state.common.l1_norm();
    let l1_u = state.unique_ref.l1_norm();
    let l1_v = state.unique_target.l1_norm();
    Ok(Objective {
        total: fid1 + fid2 + cfg.lambda_c * l1_c + cfg.lambda_u * l1_u + cfg.lambda_v * l1_v,
        fid1,
        fid2,
        l1_c,
        l1_u,
        l1_v,
    })
}

/// Step sizes resolved for one image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub u: f64,
    pub v: f64,
    pub c: f64,
}

impl StepSizes {
    pub fn resolve(
        dicts: &ModelDictionaries,
        cfg: &SolverConfig,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        Ok(Self {
            u: cfg.step_u.resolve(&dicts.du, rows, cols)?,
            v: cfg.step_v.resolve(&dicts.hv, rows, cols)?,
            c: cfg.step_c.resolve(&dicts.lc(), rows, cols)?,
        })
    }
}

/// Runs the alternating updates for one image size with resolved steps.
pub struct Solver<'a> {
    dicts: &'a ModelDictionaries,
    cfg: SolverConfig,
    steps: StepSizes,
    prox: &'a dyn Prox,
}

impl<'a> Solver<'a> {
    pub fn new(
        dicts: &'a ModelDictionaries,
        cfg: &SolverConfig,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        dicts.validate()?;
        ensure!(
            dicts.levels() == cfg.scale_levels,
            Error::PyramidMismatch(alloc::format!(
                "dictionaries have {} levels, config asks for {}",
                dicts.levels(),
                cfg.scale_levels
            ))
        );
        dicts.dc.synthesis().check_dims(rows, cols)?;
        let steps = StepSizes::resolve(dicts, cfg, rows, cols)?;
        Ok(Self {
            dicts,
            cfg: cfg.clone(),
            steps,
            prox: cfg.prox.operator(),
        })
    }

    /// Uses precomputed step sizes instead of resolving them from `cfg`.
    pub fn with_steps(
        dicts: &'a ModelDictionaries,
        cfg: &SolverConfig,
        steps: StepSizes,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            dicts,
            cfg: cfg.clone(),
            steps,
            prox: cfg.prox.operator(),
        })
    }

    /// Swaps in a custom proximal operator.
    pub fn with_prox(mut self, prox: &'a dyn Prox) -> Self {
        self.prox = prox;
        self
    }

    pub fn steps(&self) -> StepSizes {
        self.steps
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn prox_step(
        &self,
        x: &Features,
        grad: &Features,
        eta: f64,
        lambda: f64,
        what: &str,
    ) -> Result<Features> {
        let moved = Features::axpy(-eta, grad, x)?;
        let out = self.prox.apply_features(&moved, eta * lambda)?;
        ensure!(out.is_finite(), Error::NonFinite(what.into()));
        Ok(out)
    }

    /// One proximal-gradient step on `U`.
    pub fn update_u(&self, state: &FeatureState, x1: &Tensor) -> Result<Features> {
        let g = grad_u(state, self.dicts, x1)?;
        self.prox_step(
            &state.unique_ref,
            &g,
            self.steps.u,
            self.cfg.lambda_u,
            "update_u",
        )
    }

    /// One proximal-gradient step on `V`.
    pub fn update_v(&self, state: &FeatureState, x2: &Tensor) -> Result<Features> {
        let g = grad_v(state, self.dicts, x2)?;
        self.prox_step(
            &state.unique_target,
            &g,
            self.steps.v,
            self.cfg.lambda_v,
            "update_v",
        )
    }

    /// One proximal-gradient step on `C` against the stacked residual.
    pub fn update_c(&self, state: &FeatureState, residual: &Tensor) -> Result<Features> {
        let g = grad_c(state, self.dicts, residual)?;
        self.prox_step(
            &state.common,
            &g,
            self.steps.c,
            self.cfg.lambda_c,
            "update_c",
        )
    }

    /// One block: `U`, then `V`, then `C` from the already updated `U`, `V`.
    pub fn block(&self, mut state: FeatureState, x1: &Tensor, x2: &Tensor) -> Result<FeatureState> {
        state.unique_ref = self.update_u(&state, x1)?;
        state.unique_target = self.update_v(&state, x2)?;
        let residual = build_stacked_residual(&state, self.dicts, x1, x2)?;
        state.common = self.update_c(&state, &residual)?;
        state.iteration += 1;
        Ok(state)
    }

    pub fn objective(&self, state: &FeatureState, x1: &Tensor, x2: &Tensor) -> Result<Objective> {
        objective_value(state, self.dicts, x1, x2, &self.cfg)
    }

    /// Runs `blocks` blocks from `state`, returning the final state and the
    /// objective after every block (including the starting point).
    pub fn run_from(
        &self,
        mut state: FeatureState,
        x1: &Tensor,
        x2: &Tensor,
        blocks: usize,
    ) -> Result<(FeatureState, Vec<Objective>)> {
        let mut trace = Vec::with_capacity(blocks + 1);
        trace.push(self.objective(&state, x1, x2)?);
        for _ in 0..blocks {
            state = self.block(state, x1, x2)?;
            trace.push(self.objective(&state, x1, x2)?);
        }
        Ok((state, trace))
    }

    /// Initialization followed by the configured number of blocks.
    pub fn iterate(&self, x1: &Tensor, x2: &Tensor) -> Result<(FeatureState, Vec<Objective>)> {
        let state = init_features(self.dicts, x1, x2)?;
        ensure!(state.is_finite(), Error::NonFinite("init_features".into()));
        self.run_from(state, x1, x2, self.cfg.stages)
    }
}

/// Initialization plus `cfg.stages` blocks with built-in prox and steps.
pub fn iterate(
    dicts: &ModelDictionaries,
    x1: &Tensor,
    x2: &Tensor,
    cfg: &SolverConfig,
) -> Result<(FeatureState, Vec<Objective>)> {
    check_pair(x1, x2)?;
    Solver::new(dicts, cfg, x1.rows(), x1.cols())?.iterate(x1, x2)
}
