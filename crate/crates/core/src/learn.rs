//! Alternating dictionary learning over a corpus of co-registered pairs.
//!
//! Every epoch infers features for each pair with the current dictionaries,
//! then refits the synthesis filters with the features held fixed:
//! `(Dc, Du)` against the references, `(Hc, Hv)` against the targets and
//! `(Qc, Qv)` against the ground truth. With features fixed each fit is a
//! least-squares problem in the coefficients of one pyramid level, so it
//! is assembled once as a quadratic and minimized by `dict_iterations`
//! projected gradient steps. Steps are chosen by backtracking (halving
//! until sufficient decrease) and every filter is projected back onto the
//! unit ball.

use alloc::vec;
use alloc::vec::Vec;

use crate::dictionary::{
    ms_coefficient_images, ms_synthesize, ConvOperator, MultiScaleDictionary, UntiedPair,
};
use crate::error::{ensure, Error, Result};
use crate::solver::{
    init_features, objective_value, FeatureState, ModelDictionaries, Solver, SolverConfig,
    StepSizes,
};
use crate::tensor::{dot_slices, Features, Tensor};

/// Halvings tried before a step is abandoned.
pub const MAX_BACKTRACKS: usize = 60;

/// Default projected gradient iterations per dictionary fit and epoch.
pub const DEFAULT_DICT_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub reference: Tensor,
    pub target: Tensor,
    /// Clean target the reconstruction banks are fitted against.
    pub ground_truth: Tensor,
}

impl TrainingPair {
    /// A pair whose target is its own ground truth.
    pub fn new(reference: Tensor, target: Tensor) -> Self {
        Self {
            ground_truth: target.clone(),
            reference,
            target,
        }
    }

    pub fn with_ground_truth(reference: Tensor, target: Tensor, ground_truth: Tensor) -> Self {
        Self {
            reference,
            target,
            ground_truth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DictStep {
    /// Backtracking line search (halving until sufficient decrease)
    /// starting from the given step; the next epoch starts from twice the
    /// last accepted step.
    Backtracking { initial: f64 },
    /// Fixed step without line search.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub epochs: usize,
    pub step: DictStep,
    pub solver: SolverConfig,
    /// Pairs per dictionary step; `0` means the whole corpus.
    pub batch_size: usize,
    pub seed: u64,
    /// Continue from the previous epoch's features instead of re-initializing.
    pub warm_start: bool,
    pub filter_size: usize,
    pub widths: Vec<usize>,
    /// Projected gradient iterations per dictionary fit and epoch.
    pub dict_iterations: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            step: DictStep::Backtracking { initial: 1.0 },
            solver: SolverConfig::default(),
            batch_size: 0,
            seed: 0,
            warm_start: false,
            filter_size: 3,
            widths: vec![8],
            dict_iterations: DEFAULT_DICT_ITERATIONS,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.epochs >= 1,
            Error::InvalidParameter("epochs must be >= 1".into())
        );
        match self.step {
            DictStep::Backtracking { initial } => ensure!(
                initial > 0.0 && initial.is_finite(),
                Error::InvalidParameter("initial dictionary step must be > 0".into())
            ),
            DictStep::Fixed(gamma) => ensure!(
                gamma >= 0.0 && gamma.is_finite(),
                Error::InvalidParameter("dictionary step must be >= 0".into())
            ),
        }
        ensure!(
            self.widths.len() == self.solver.scale_levels,
            Error::PyramidMismatch(alloc::format!(
                "{} widths for {} scale levels",
                self.widths.len(),
                self.solver.scale_levels
            ))
        );
        self.solver.validate()
    }

    pub fn initial_dictionaries(&self) -> Result<ModelDictionaries> {
        ModelDictionaries::random(self.filter_size, &self.widths, self.solver.tied, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sum of the joint objective over the corpus after the dictionary step.
    pub objective: f64,
    /// Sum of the two fidelity terms after the dictionary step.
    pub fidelity: f64,
    /// `Σ ½‖gt − Qc⊗C − Qv⊗V‖²` after the reconstruction step.
    pub recon_loss: f64,
    /// Finest-level steps accepted for the reference, target and
    /// reconstruction fits.
    pub step_ref: f64,
    pub step_target: f64,
    pub step_recon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub dictionaries: ModelDictionaries,
    pub log: Vec<EpochLog>,
}

/// Runs `f(i)` for `i in 0..n` and collects the results in index order.
pub trait PairExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send;
}

/// In-order single-threaded execution.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl PairExecutor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// `½‖t − Σ_θ q_θ·J_θ‖²` summed over a corpus, kept as `½qᵀGq − bᵀq + c`
/// in the coefficients `q` of one pyramid level of a group of synthesis
/// dictionaries (the other levels are held fixed and folded into `t`).
#[derive(Debug, Clone)]
struct LevelQuadratic {
    dim: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    constant: f64,
}

impl LevelQuadratic {
    fn build(
        group: &[(&MultiScaleDictionary, &Features)],
        target: &Tensor,
        level: usize,
    ) -> Result<Self> {
        let mut columns: Vec<Tensor> = Vec::new();
        let mut t = target.clone();
        for (msd, features) in group {
            columns.extend(ms_coefficient_images(msd, features, level)?);
            let rest = ms_synthesize(&msd.with_zero_level(level), features)?;
            t = t.sub(&rest.reshape(target.shape().to_vec())?)?;
        }
        let dim = columns.len();
        let mut gram = vec![0.0; dim * dim];
        for a in 0..dim {
            let ca = columns[a].data();
            for b in a..dim {
                let v = dot_slices(ca, columns[b].data());
                gram[a * dim + b] = v;
                gram[b * dim + a] = v;
            }
        }
        let rhs = columns
            .iter()
            .map(|c| dot_slices(c.data(), t.data()))
            .collect();
        Ok(Self {
            dim,
            gram,
            rhs,
            constant: 0.5 * t.norm_sq(),
        })
    }

    fn accumulate(&mut self, other: &Self) {
        self.gram
            .iter_mut()
            .zip(&other.gram)
            .for_each(|(a, b)| *a += b);
        self.rhs
            .iter_mut()
            .zip(&other.rhs)
            .for_each(|(a, b)| *a += b);
        self.constant += other.constant;
    }

    fn apply(&self, q: &[f64]) -> Vec<f64> {
        self.gram
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(q).map(|(g, v)| g * v).sum())
            .collect()
    }

    #[cfg(test)]
    fn value(&self, q: &[f64]) -> f64 {
        let gq = self.apply(q);
        let quad: f64 = gq.iter().zip(q).map(|(a, b)| a * b).sum();
        let lin: f64 = self.rhs.iter().zip(q).map(|(a, b)| a * b).sum();
        0.5 * quad - lin + self.constant
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let mut g = self.apply(q);
        g.iter_mut().zip(&self.rhs).for_each(|(a, b)| *a -= b);
        g
    }
}

/// Coefficients of `banks[level]` of every dictionary in a group, in order.
fn level_coefficients(group: &[MultiScaleDictionary], level: usize) -> Vec<f64> {
    group
        .iter()
        .flat_map(|m| m.banks()[level].weights().iter().copied())
        .collect()
}

/// Writes `q` back into `banks[level]` and projects every filter onto the
/// unit ball.
fn set_level(group: &mut [MultiScaleDictionary], level: usize, q: &[f64]) {
    let mut offset = 0;
    for m in group.iter_mut() {
        let bank = &mut m.banks_mut()[level];
        let len = bank.weights().len();
        bank.weights_mut().copy_from_slice(&q[offset..offset + len]);
        *bank = bank.project_unit_ball();
        offset += len;
    }
}

/// Projected gradient iterations on one level of a group. Returns the
/// last step used (0 when nothing could be accepted).
fn minimize_level(
    group: &mut [MultiScaleDictionary],
    level: usize,
    quad: &LevelQuadratic,
    step: DictStep,
    iterations: usize,
) -> f64 {
    let mut q = level_coefficients(group, level);
    let mut gamma = match step {
        DictStep::Fixed(gamma) if gamma == 0.0 => return 0.0,
        DictStep::Fixed(gamma) => gamma,
        DictStep::Backtracking { initial } => initial,
    };
    for _ in 0..iterations {
        let g = quad.gradient(&q);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let moved: Vec<f64> = q.iter().zip(&g).map(|(v, d)| v - gamma * d).collect();
            set_level(group, level, &moved);
            let next = level_coefficients(group, level);
            if matches!(step, DictStep::Fixed(_)) {
                accepted = Some(next);
                break;
            }
            // for a quadratic f(q + d) − f(q) − ⟨∇f, d⟩ = ½dᵀGd exactly
            let d: Vec<f64> = next.iter().zip(&q).map(|(a, b)| a - b).collect();
            let curvature: f64 = quad.apply(&d).iter().zip(&d).map(|(a, b)| a * b).sum();
            let dist: f64 = d.iter().map(|v| v * v).sum();
            if curvature * gamma <= dist {
                accepted = Some(next);
                break;
            }
            gamma *= 0.5;
        }
        match accepted {
            Some(next) => {
                let moved = next.iter().zip(&q).any(|(a, b)| a != b);
                q = next;
                if !moved {
                    break;
                }
            }
            None => {
                set_level(group, level, &q);
                return 0.0;
            }
        }
    }
    set_level(group, level, &q);
    gamma
}

/// Fits one group of synthesis dictionaries, level by level, to the
/// targets with features held fixed. Returns the fitted dictionaries and
/// the step accepted on each level.
fn fit_group<E: PairExecutor>(
    group: &[&MultiScaleDictionary],
    features: &[Vec<&Features>],
    targets: &[&Tensor],
    steps: &[DictStep],
    iterations: usize,
    exec: &E,
) -> Result<(Vec<MultiScaleDictionary>, Vec<f64>)> {
    let mut current: Vec<MultiScaleDictionary> = group.iter().map(|m| (*m).clone()).collect();
    let mut used = Vec::with_capacity(steps.len());
    for (level, &step) in steps.iter().enumerate() {
        if step == DictStep::Fixed(0.0) {
            used.push(0.0);
            continue;
        }
        let parts = exec.map(targets.len(), |i| {
            let members: Vec<_> = current
                .iter()
                .zip(&features[i])
                .map(|(m, f)| (m, *f))
                .collect();
            LevelQuadratic::build(&members, targets[i], level)
        })?;
        let mut parts = parts.into_iter();
        let mut quad = parts.next().ok_or(Error::EmptyCorpus)?;
        for p in parts {
            quad.accumulate(&p);
        }
        used.push(minimize_level(&mut current, level, &quad, step, iterations));
    }
    Ok((current, used))
}

fn recon_loss(
    qc: &MultiScaleDictionary,
    qv: &MultiScaleDictionary,
    pairs: &[TrainingPair],
    states: &[FeatureState],
) -> Result<f64> {
    let mut total = 0.0;
    for (pair, s) in pairs.iter().zip(states) {
        let rec = qc
            .synthesize(&s.common)?
            .add(&qv.synthesize(&s.unique_target)?)?;
        total += 0.5
            * rec
                .reshape(pair.ground_truth.shape().to_vec())?
                .sub(&pair.ground_truth)?
                .norm_sq();
    }
    Ok(total)
}

/// Feature inference for every pair with fixed step sizes.
pub fn infer_features<E: PairExecutor>(
    dicts: &ModelDictionaries,
    pairs: &[TrainingPair],
    cfg: &SolverConfig,
    warm: Option<&[FeatureState]>,
    exec: &E,
) -> Result<Vec<FeatureState>> {
    let first = pairs.first().ok_or(Error::EmptyCorpus)?;
    let (rows, cols) = first.target.spatial();
    for p in pairs {
        ensure!(
            p.reference.spatial() == (rows, cols)
                && p.target.spatial() == (rows, cols)
                && p.ground_truth.spatial() == (rows, cols),
            Error::ShapeMismatch {
                expected: alloc::vec![rows, cols],
                actual: p.reference.shape().to_vec(),
            }
        );
    }
    let steps = StepSizes::resolve(dicts, cfg, rows, cols)?;
    exec.map(pairs.len(), |i| {
        let solver = Solver::with_steps(dicts, cfg, steps)?;
        let pair = &pairs[i];
        let start = match warm {
            Some(states) => states[i].clone(),
            None => init_features(dicts, &pair.reference, &pair.target)?,
        };
        let (state, _) = solver.run_from(start, &pair.reference, &pair.target, cfg.stages)?;
        Ok(state)
    })
}

/// Sum of the joint objective over the corpus at the given features.
pub fn corpus_objective(
    dicts: &ModelDictionaries,
    pairs: &[TrainingPair],
    states: &[FeatureState],
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut fidelity = 0.0;
    for (pair, s) in pairs.iter().zip(states) {
        let obj = objective_value(s, dicts, &pair.reference, &pair.target, cfg)?;
        total += obj.total;
        fidelity += obj.fidelity();
    }
    Ok((total, fidelity))
}

/// Step state of the three dictionary fits, one entry per pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct DictSteps {
    /// `Dc, Du` against the reference.
    pub reference: Vec<DictStep>,
    /// `Hc, Hv` against the target.
    pub target: Vec<DictStep>,
    /// `Qc, Qv` against the ground truth.
    pub recon: Vec<DictStep>,
}

impl DictSteps {
    pub fn uniform(step: DictStep, levels: usize) -> Self {
        Self {
            reference: vec![step; levels],
            target: vec![step; levels],
            recon: vec![step; levels],
        }
    }

    /// Steps for the next epoch given the ones accepted in this one.
    fn advance(&self, used: &DictSteps) -> Self {
        let next = |s: &[DictStep], u: &[DictStep]| {
            s.iter()
                .zip(u)
                .map(|(&s, &u)| match (s, u) {
                    (DictStep::Backtracking { initial }, DictStep::Fixed(g)) => {
                        DictStep::Backtracking {
                            initial: if g > 0.0 { 2.0 * g } else { initial },
                        }
                    }
                    _ => s,
                })
                .collect()
        };
        Self {
            reference: next(&self.reference, &used.reference),
            target: next(&self.target, &used.target),
            recon: next(&self.recon, &used.recon),
        }
    }
}

/// Projected gradient fits of `(Dc, Du)` to the references, `(Hc, Hv)` to
/// the targets and `(Qc, Qv)` to the ground truths, with features held
/// fixed. Returns the new dictionaries and the accepted steps (as
/// `DictStep::Fixed`).
pub fn dictionary_step<E: PairExecutor>(
    dicts: &ModelDictionaries,
    pairs: &[TrainingPair],
    states: &[FeatureState],
    cfg: &LearnConfig,
    steps: &DictSteps,
    exec: &E,
) -> Result<(ModelDictionaries, DictSteps)> {
    ensure!(!pairs.is_empty(), Error::EmptyCorpus);
    ensure!(
        pairs.len() == states.len(),
        Error::InvalidParameter("one feature state per pair required".into())
    );
    let shape = |t: &Tensor| -> Result<Tensor> { t.clone().reshape(vec![t.rows(), t.cols()]) };
    let refs: Vec<Tensor> = pairs
        .iter()
        .map(|p| shape(&p.reference))
        .collect::<Result<_>>()?;
    let tgts: Vec<Tensor> = pairs
        .iter()
        .map(|p| shape(&p.target))
        .collect::<Result<_>>()?;
    let gts: Vec<Tensor> = pairs
        .iter()
        .map(|p| shape(&p.ground_truth))
        .collect::<Result<_>>()?;
    let fit = |a: &UntiedPair,
               b: &UntiedPair,
               fa: fn(&FeatureState) -> &Features,
               fb: fn(&FeatureState) -> &Features,
               targets: &[Tensor],
               steps: &[DictStep]| {
        let features: Vec<Vec<&Features>> = states.iter().map(|s| vec![fa(s), fb(s)]).collect();
        let targets: Vec<&Tensor> = targets.iter().collect();
        fit_group(
            &[a.synthesis(), b.synthesis()],
            &features,
            &targets,
            steps,
            cfg.dict_iterations,
            exec,
        )
    };
    fn common(s: &FeatureState) -> &Features {
        &s.common
    }
    fn unique_ref(s: &FeatureState) -> &Features {
        &s.unique_ref
    }
    fn unique_target(s: &FeatureState) -> &Features {
        &s.unique_target
    }
    let (d, used_ref) = fit(
        &dicts.dc,
        &dicts.du,
        common,
        unique_ref,
        &refs,
        &steps.reference,
    )?;
    let (h, used_tgt) = fit(
        &dicts.hc,
        &dicts.hv,
        common,
        unique_target,
        &tgts,
        &steps.target,
    )?;
    let (q, used_rec) = fit(
        &dicts.qc,
        &dicts.qv,
        common,
        unique_target,
        &gts,
        &steps.recon,
    )?;

    let tied = cfg.solver.tied;
    let mut fitted = d.into_iter().chain(h).chain(q);
    let mut next_pair =
        |old: &UntiedPair| old.with_synthesis(fitted.next().expect("six dictionaries"), tied);
    let updated = ModelDictionaries::new(
        next_pair(&dicts.dc)?,
        next_pair(&dicts.du)?,
        next_pair(&dicts.hc)?,
        next_pair(&dicts.hv)?,
        next_pair(&dicts.qc)?,
        next_pair(&dicts.qv)?,
    )?;
    let as_steps = |u: Vec<f64>| u.into_iter().map(DictStep::Fixed).collect();
    Ok((
        updated,
        DictSteps {
            reference: as_steps(used_ref),
            target: as_steps(used_tgt),
            recon: as_steps(used_rec),
        },
    ))
}

/// Learns dictionaries starting from `initial`.
pub fn learn_from<E: PairExecutor>(
    initial: ModelDictionaries,
    corpus: &[TrainingPair],
    cfg: &LearnConfig,
    exec: &E,
) -> Result<LearnOutcome> {
    ensure!(!corpus.is_empty(), Error::EmptyCorpus);
    cfg.validate()?;
    let batch = if cfg.batch_size == 0 {
        corpus.len()
    } else {
        cfg.batch_size
    };
    let mut dicts = initial;
    let mut states: Vec<Option<Vec<FeatureState>>> = corpus.chunks(batch).map(|_| None).collect();
    let mut steps = DictSteps::uniform(cfg.step, cfg.widths.len());
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (mut objective, mut fidelity, mut recon) = (0.0, 0.0, 0.0);
        let mut used = DictSteps::uniform(DictStep::Fixed(0.0), cfg.widths.len());
        for (chunk, warm) in corpus.chunks(batch).zip(states.iter_mut()) {
            let start = if cfg.warm_start {
                warm.as_deref()
            } else {
                None
            };
            let feats = infer_features(&dicts, chunk, &cfg.solver, start, exec)?;
            let (next, accepted) = dictionary_step(&dicts, chunk, &feats, cfg, &steps, exec)?;
            steps = steps.advance(&accepted);
            used = accepted;
            dicts = next;
            let (obj, fid) = corpus_objective(&dicts, chunk, &feats, &cfg.solver)?;
            objective += obj;
            fidelity += fid;
            recon += recon_loss(dicts.qc.synthesis(), dicts.qv.synthesis(), chunk, &feats)?;
            ensure!(objective.is_finite(), Error::NonFinite("learn".into()));
            *warm = Some(feats);
        }
        let finest = |s: &[DictStep]| match s.first() {
            Some(DictStep::Fixed(g)) => *g,
            _ => 0.0,
        };
        log.push(EpochLog {
            epoch,
            objective,
            fidelity,
            recon_loss: recon,
            step_ref: finest(&used.reference),
            step_target: finest(&used.target),
            step_recon: finest(&used.recon),
        });
    }
    Ok(LearnOutcome {
        dictionaries: dicts,
        log,
    })
}

/// Learns dictionaries from random initial filters drawn from `cfg.seed`.
pub fn learn<E: PairExecutor>(
    corpus: &[TrainingPair],
    cfg: &LearnConfig,
    exec: &E,
) -> Result<LearnOutcome> {
    ensure!(!corpus.is_empty(), Error::EmptyCorpus);
    cfg.validate()?;
    learn_from(cfg.initial_dictionaries()?, corpus, cfg, exec)
}
