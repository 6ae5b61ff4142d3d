//! End-to-end experiment: phantom → degrade → learn → solve → eval.
//!
//! Configured by a key=value file (see [`PipelineConfig`] for the keys and
//! defaults). Every output lands in `out_dir`; if any stage fails, the
//! files written so far are removed again.

use std::path::{Path, PathBuf};

use mccdic_core::learn::{learn, DictStep, LearnConfig, PairExecutor, TrainingPair};
use mccdic_core::phantom::{make_phantom_pair, PhantomSpec};
use mccdic_core::prox::ProxKind;
use mccdic_core::solver::{components, reconstruct, ModelDictionaries, Solver, SolverConfig};
use mccdic_core::Tensor;

use crate::degrade::{Degradation, Task};
use crate::dictdir::save_dictionaries;
use crate::error::{Error, Result};
use crate::io::{
    read_image, write_learn_csv, write_mct, write_pgm, write_report_csv, write_trace_csv, Quality,
};
use crate::keyvalue::KeyValues;
use crate::manifest::{RunManifest, RUN_PREFIX};

/// Names of the four dumped components, in [`components`] order.
pub const COMPONENT_NAMES: [&str; 4] =
    ["common_ref", "unique_ref", "common_target", "unique_target"];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Test pair from files instead of a phantom.
    pub reference: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub size: usize,
    pub n_ellipses: usize,
    pub inconsistent: bool,
    pub seed: u64,
    pub degradation: Degradation,
    /// Phantom pairs for dictionary learning; 0 skips learning.
    pub train_pairs: usize,
    pub train_seed: u64,
    pub learn: LearnConfig,
}

const KEYS: &[&str] = &[
    "out_dir",
    "reference",
    "target",
    "size",
    "n_ellipses",
    "inconsistent",
    "seed",
    "task",
    "scale",
    "accel",
    "center_frac",
    "mask_seed",
    "train_pairs",
    "train_seed",
    "epochs",
    "dict_iterations",
    "dict_step",
    "batch_size",
    "warm_start",
    "dict_seed",
    "filter_size",
    "widths",
    "stages",
    "lambda",
    "lambda_u",
    "lambda_v",
    "lambda_c",
    "prox",
    "tied",
];

impl Default for PipelineConfig {
    fn default() -> Self {
        let learn = LearnConfig {
            epochs: 5,
            ..LearnConfig::default()
        };
        Self {
            out_dir: PathBuf::from("out"),
            reference: None,
            target: None,
            size: 64,
            n_ellipses: 6,
            inconsistent: true,
            seed: 0,
            degradation: Degradation::default(),
            train_pairs: 4,
            train_seed: 100,
            learn,
        }
    }
}

impl PipelineConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(KEYS, &[RUN_PREFIX])?;
        let d = Self::default();
        let path = |key: &str| kv.get(key).map(PathBuf::from);
        let lambda: f64 = kv.parse_or("lambda", d.learn.solver.lambda_c)?;
        let widths = kv.list_or("widths", d.learn.widths.clone())?;
        let solver = SolverConfig {
            stages: kv.parse_or("stages", d.learn.solver.stages)?,
            lambda_u: kv.parse_or("lambda_u", lambda)?,
            lambda_v: kv.parse_or("lambda_v", lambda)?,
            lambda_c: kv.parse_or("lambda_c", lambda)?,
            prox: kv.parse_or::<ProxKind>("prox", d.learn.solver.prox)?,
            tied: kv.parse_or("tied", d.learn.solver.tied)?,
            scale_levels: widths.len(),
            ..d.learn.solver
        };
        let learn = LearnConfig {
            epochs: kv.parse_or("epochs", d.learn.epochs)?,
            step: DictStep::Backtracking {
                initial: kv.parse_or("dict_step", 1.0)?,
            },
            batch_size: kv.parse_or("batch_size", d.learn.batch_size)?,
            seed: kv.parse_or("dict_seed", d.learn.seed)?,
            warm_start: kv.parse_or("warm_start", d.learn.warm_start)?,
            filter_size: kv.parse_or("filter_size", d.learn.filter_size)?,
            dict_iterations: kv.parse_or("dict_iterations", d.learn.dict_iterations)?,
            widths,
            solver,
        };
        let degradation = Degradation {
            task: kv.parse_or::<Task>("task", d.degradation.task)?,
            scale: kv.parse_or("scale", d.degradation.scale)?,
            acceleration: kv.parse_or("accel", d.degradation.acceleration)?,
            center_fraction: kv.parse_or("center_frac", d.degradation.center_fraction)?,
            seed: kv.parse_or("mask_seed", d.degradation.seed)?,
        };
        let cfg = Self {
            out_dir: path("out_dir").unwrap_or(d.out_dir),
            reference: path("reference"),
            target: path("target"),
            size: kv.parse_or("size", d.size)?,
            n_ellipses: kv.parse_or("n_ellipses", d.n_ellipses)?,
            inconsistent: kv.parse_or("inconsistent", d.inconsistent)?,
            seed: kv.parse_or("seed", d.seed)?,
            degradation,
            train_pairs: kv.parse_or("train_pairs", d.train_pairs)?,
            train_seed: kv.parse_or("train_seed", d.train_seed)?,
            learn,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reference.is_some() != self.target.is_some() {
            return Err(Error::Config(
                "reference and target must be given together".into(),
            ));
        }
        if self.size == 0 {
            return Err(Error::Config("size must be positive".into()));
        }
        self.learn.solver.validate()?;
        if self.train_pairs > 0 {
            self.learn.validate()?;
        }
        Ok(())
    }

    /// Every setting, resolved, in the config file syntax.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let s = &self.learn.solver;
        kv.insert("out_dir", self.out_dir.display());
        if let (Some(r), Some(t)) = (&self.reference, &self.target) {
            kv.insert("reference", r.display());
            kv.insert("target", t.display());
        }
        kv.insert("size", self.size);
        kv.insert("n_ellipses", self.n_ellipses);
        kv.insert("inconsistent", self.inconsistent);
        kv.insert("seed", self.seed);
        kv.insert("task", self.degradation.task.name());
        kv.insert("scale", self.degradation.scale);
        kv.insert("accel", self.degradation.acceleration);
        kv.insert("center_frac", self.degradation.center_fraction);
        kv.insert("mask_seed", self.degradation.seed);
        kv.insert("train_pairs", self.train_pairs);
        kv.insert("train_seed", self.train_seed);
        kv.insert("epochs", self.learn.epochs);
        kv.insert("dict_iterations", self.learn.dict_iterations);
        if let DictStep::Backtracking { initial } = self.learn.step {
            kv.insert("dict_step", initial);
        }
        kv.insert("batch_size", self.learn.batch_size);
        kv.insert("warm_start", self.learn.warm_start);
        kv.insert("dict_seed", self.learn.seed);
        kv.insert("filter_size", self.learn.filter_size);
        kv.insert(
            "widths",
            self.learn
                .widths
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("stages", s.stages);
        kv.insert("lambda_u", s.lambda_u);
        kv.insert("lambda_v", s.lambda_v);
        kv.insert("lambda_c", s.lambda_c);
        kv.insert("prox", s.prox.name());
        kv.insert("tied", s.tied);
        kv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub out_dir: PathBuf,
    /// Baseline first, then the model reconstruction.
    pub report: Vec<Quality>,
    pub files: Vec<PathBuf>,
}

/// Files written so far; removed again unless the run completes.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let mut out = Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            dirs: Vec::new(),
            committed: false,
        };
        out.mkdir(dir)?;
        Ok(out)
    }

    fn mkdir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn image(&mut self, name: &str, t: &Tensor) -> Result<()> {
        let mct = self.path(&format!("{name}.mct"));
        write_mct(&mct, t)?;
        let pgm = self.path(&format!("{name}.pgm"));
        write_pgm(&pgm, t).map(|_| ())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}

fn check_finite(stage: &str, tensors: &[&Tensor]) -> Result<()> {
    if tensors
        .iter()
        .all(|t| t.data().iter().all(|v| v.is_finite()))
    {
        Ok(())
    } else {
        Err(Error::NonFinite(stage.to_string()))
    }
}

/// A degraded training pair rendered from `seed`.
fn training_pair(cfg: &PipelineConfig, seed: u64) -> Result<TrainingPair> {
    let spec = PhantomSpec::random(cfg.size, cfg.n_ellipses, cfg.inconsistent, seed);
    let (x1, gt) = make_phantom_pair(&spec)?;
    let degraded = cfg.degradation.apply(&gt)?;
    Ok(TrainingPair::with_ground_truth(x1, degraded.full, gt))
}

fn baseline_label(task: Task) -> &'static str {
    match task {
        Task::SuperResolution => "zero_pad",
        Task::Reconstruction => "zero_fill",
    }
}

/// Runs every stage; on failure no output of this run is left behind.
pub fn run_pipeline<E: PairExecutor>(cfg: &PipelineConfig, exec: &E) -> Result<PipelineSummary> {
    cfg.validate()?;
    let mut manifest = RunManifest::start("pipeline");
    manifest.params = cfg.to_key_values();
    manifest
        .seed("phantom", cfg.seed)
        .seed("mask", cfg.degradation.seed)
        .seed("train", cfg.train_seed)
        .seed("dictionary", cfg.learn.seed);
    let mut out = Outputs::new(&cfg.out_dir)?;

    // phantom
    let (x1, gt) = match (&cfg.reference, &cfg.target) {
        (Some(r), Some(t)) => {
            manifest.input(r).input(t);
            (read_image(r)?, read_image(t)?)
        }
        _ => {
            let spec = PhantomSpec::random(cfg.size, cfg.n_ellipses, cfg.inconsistent, cfg.seed);
            make_phantom_pair(&spec)?
        }
    };
    check_finite("phantom", &[&x1, &gt])?;
    out.image("x1", &x1)?;
    out.image("x2", &gt)?;

    // degrade
    let degraded = cfg.degradation.apply(&gt)?;
    check_finite("degrade", &[&degraded.full])?;
    out.image("x2_degraded", &degraded.full)?;
    if let Some(lr) = &degraded.low_res {
        let p = out.path("x2_lr.mct");
        write_mct(&p, lr)?;
    }
    if let Some(mask) = &degraded.mask {
        let p = out.path("mask.mct");
        write_mct(&p, mask.tensor())?;
    }

    // learn
    let dicts = if cfg.train_pairs > 0 {
        let corpus = (0..cfg.train_pairs as u64)
            .map(|i| training_pair(cfg, cfg.train_seed + i))
            .collect::<Result<Vec<_>>>()?;
        let outcome = learn(&corpus, &cfg.learn, exec)?;
        let p = out.path("learn.csv");
        write_learn_csv(&p, &outcome.log)?;
        outcome.dictionaries
    } else {
        ModelDictionaries::random(
            cfg.learn.filter_size,
            &cfg.learn.widths,
            cfg.learn.solver.tied,
            cfg.learn.seed,
        )?
    };
    let dict_dir = cfg.out_dir.join("dict");
    out.mkdir(&dict_dir)?;
    save_dictionaries(&dict_dir, &dicts)?;

    // solve
    let (rows, cols) = x1.spatial();
    let solver = Solver::new(&dicts, &cfg.learn.solver, rows, cols)?;
    let (state, trace) = solver.iterate(&x1, &degraded.full)?;
    if !state.is_finite() {
        return Err(Error::NonFinite("solve".into()));
    }
    let rec = reconstruct(&state, &dicts)?.reshape(gt.shape().to_vec())?;
    check_finite("solve", &[&rec])?;
    out.image("x2_rec", &rec)?;
    let p = out.path("trace.csv");
    write_trace_csv(&p, &trace)?;
    let comps = components(&state, &dicts)?;
    let comp_dir = cfg.out_dir.join("components");
    out.mkdir(&comp_dir)?;
    for (name, c) in COMPONENT_NAMES.iter().zip(&comps) {
        let c = c.clone().reshape(gt.shape().to_vec())?;
        out.image(&format!("components/{name}"), &c)?;
    }

    // eval
    let report = vec![
        Quality::measure(baseline_label(cfg.degradation.task), &degraded.full, &gt)?,
        Quality::measure("mccdic", &rec, &gt)?,
    ];
    if report
        .iter()
        .any(|q| !(q.ssim.is_finite() && q.rmse.is_finite()) || q.psnr.is_nan())
    {
        return Err(Error::NonFinite("eval".into()));
    }
    let p = out.path("report.csv");
    write_report_csv(&p, &report)?;

    for f in &out.files {
        manifest.output(f);
    }
    manifest.output(&dict_dir);
    let p = out.path("manifest.txt");
    manifest.write(&p)?;
    out.committed = true;
    Ok(PipelineSummary {
        out_dir: cfg.out_dir.clone(),
        report,
        files: out.files.clone(),
    })
}
