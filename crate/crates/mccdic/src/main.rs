use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mccdic::degrade::{Degradation, Task};
use mccdic::exec::{RayonExecutor, THREADS_ENV};
use mccdic::io::{
    read_image, write_learn_csv, write_mct, write_pgm, write_report_csv, write_trace_csv, Quality,
};
use mccdic::manifest::{manifest_path, RunManifest};
use mccdic::pipeline::{run_pipeline, PipelineConfig, COMPONENT_NAMES};
use mccdic::{corpus, dictdir};
use mccdic_core::learn::{learn, DictStep, LearnConfig, DEFAULT_DICT_ITERATIONS};
use mccdic_core::phantom::{make_phantom_pair, PhantomSpec};
use mccdic_core::prox::ProxKind;
use mccdic_core::sampling::DEFAULT_CENTER_FRACTION;
use mccdic_core::solver::{components, reconstruct, ModelDictionaries, Solver, SolverConfig};

/// Multi-contrast convolutional dictionary decomposition and restoration.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a two-contrast ellipse phantom.
    Phantom(PhantomArgs),
    /// Simulate a low-resolution or undersampled acquisition.
    Degrade(DegradeArgs),
    /// Learn dictionaries from a corpus directory.
    Learn(LearnArgs),
    /// Decompose a reference/target pair and reconstruct the target.
    Solve(SolveArgs),
    /// Compare a reconstruction against ground truth.
    Eval(EvalArgs),
    /// Run phantom, degrade, learn, solve and eval from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 6)]
    n_ellipses: usize,
    /// Add one ellipse that only appears in the reference.
    #[arg(long)]
    inconsistent: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<prefix>_x1.mct` (reference) and `<prefix>_x2.mct` (target).
    #[arg(long)]
    out_prefix: PathBuf,
    /// Also write PGM previews.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long, value_parser = parse_task, default_value = "sr")]
    mode: Task,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    #[arg(long, default_value_t = 4.0)]
    accel: f64,
    #[arg(long, default_value_t = DEFAULT_CENTER_FRACTION)]
    center_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "in")]
    input: PathBuf,
    /// Full-resolution solver input (zero-padded or zero-filled).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mask_out: Option<PathBuf>,
    /// Low-resolution image (sr mode).
    #[arg(long)]
    lr_out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Number of stages.
    #[arg(long = "T", default_value_t = 4)]
    stages: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda_u: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda_v: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda_c: f64,
    #[arg(long, value_parser = parse_prox, default_value = "soft")]
    prox: ProxKind,
    /// Let analysis operators differ from the synthesis adjoints.
    #[arg(long, conflicts_with = "tied")]
    untied: bool,
    /// Analysis operators are the synthesis adjoints (default).
    #[arg(long)]
    tied: bool,
}

impl SolverArgs {
    fn config(&self, scale_levels: usize) -> SolverConfig {
        SolverConfig {
            stages: self.stages,
            lambda_u: self.lambda_u,
            lambda_v: self.lambda_v,
            lambda_c: self.lambda_c,
            prox: self.prox,
            tied: !self.untied,
            scale_levels,
            ..SolverConfig::default()
        }
    }

    fn record(&self, m: &mut RunManifest) {
        m.param("stages", self.stages)
            .param("lambda_u", self.lambda_u)
            .param("lambda_v", self.lambda_v)
            .param("lambda_c", self.lambda_c)
            .param("prox", self.prox.name())
            .param("tied", !self.untied);
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Directory of `<stem>_ref.mct` / `<stem>_target.mct` [/ `<stem>_gt.mct`].
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    filter_size: usize,
    /// Channels per pyramid level, finest first.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    widths: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_DICT_ITERATIONS)]
    dict_iterations: usize,
    /// Initial dictionary step for the backtracking search.
    #[arg(long, default_value_t = 1.0)]
    dict_step: f64,
    /// Pairs per dictionary step (0 = whole corpus).
    #[arg(long, default_value_t = 0)]
    batch_size: usize,
    #[arg(long)]
    warm_start: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Dictionary directory; random dictionaries from `--seed` when absent.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Channels per level for random dictionaries.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    widths: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write Dc⊗C, Du⊗U, Hc⊗C and Hv⊗V (MCT1 and PGM) into this directory.
    #[arg(long)]
    dump_components: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    rec: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: mccdic::Error| e.to_string())
}

fn parse_prox(s: &str) -> Result<ProxKind, String> {
    s.parse().map_err(|e: mccdic_core::Error| e.to_string())
}

fn finish(m: &mut RunManifest, main_output: &Path) -> anyhow::Result<()> {
    let path = manifest_path(main_output);
    m.write(&path)?;
    Ok(())
}

fn cmd_phantom(a: &PhantomArgs) -> anyhow::Result<()> {
    let spec = PhantomSpec::random(a.size, a.n_ellipses, a.inconsistent, a.seed);
    let (x1, x2) = make_phantom_pair(&spec)?;
    let prefix = a.out_prefix.display().to_string();
    let mut m = RunManifest::start("phantom");
    m.param("size", a.size)
        .param("n_ellipses", a.n_ellipses)
        .param("inconsistent", a.inconsistent)
        .seed("phantom", a.seed);
    for (suffix, t) in [("x1", &x1), ("x2", &x2)] {
        let p = PathBuf::from(format!("{prefix}_{suffix}.mct"));
        write_mct(&p, t)?;
        m.output(&p);
        if a.pgm {
            let q = p.with_extension("pgm");
            write_pgm(&q, t)?;
            m.output(&q);
        }
    }
    finish(&mut m, &PathBuf::from(format!("{prefix}_x1.mct")))
}

fn cmd_degrade(a: &DegradeArgs) -> anyhow::Result<()> {
    let hr = read_image(&a.input)?;
    let deg = Degradation {
        task: a.mode,
        scale: a.scale,
        acceleration: a.accel,
        center_fraction: a.center_frac,
        seed: a.seed,
    };
    let out = deg.apply(&hr)?;
    let mut m = RunManifest::start("degrade");
    m.param("mode", a.mode.name())
        .param("scale", a.scale)
        .param("accel", a.accel)
        .param("center_frac", a.center_frac)
        .seed("mask", a.seed)
        .input(&a.input);
    write_mct(&a.out, &out.full)?;
    m.output(&a.out);
    if let Some(p) = &a.mask_out {
        match &out.mask {
            Some(mask) => write_mct(p, mask.tensor())?,
            None => bail!("--mask-out needs --mode recon"),
        }
        m.output(p);
    }
    if let Some(p) = &a.lr_out {
        match &out.low_res {
            Some(lr) => write_mct(p, lr)?,
            None => bail!("--lr-out needs --mode sr"),
        }
        m.output(p);
    }
    finish(&mut m, &a.out)
}

fn cmd_learn(a: &LearnArgs, exec: &RayonExecutor) -> anyhow::Result<()> {
    let pairs = corpus::load_corpus(&a.corpus)?;
    let cfg = LearnConfig {
        epochs: a.epochs,
        step: DictStep::Backtracking {
            initial: a.dict_step,
        },
        solver: a.solver.config(a.widths.len()),
        batch_size: a.batch_size,
        seed: a.seed,
        warm_start: a.warm_start,
        filter_size: a.filter_size,
        widths: a.widths.clone(),
        dict_iterations: a.dict_iterations,
    };
    let outcome = learn(&pairs, &cfg, exec)?;
    dictdir::save_dictionaries(&a.out, &outcome.dictionaries)?;
    let mut m = RunManifest::start("learn");
    a.solver.record(&mut m);
    m.param("epochs", a.epochs)
        .param("filter_size", a.filter_size)
        .param("widths", join(&a.widths))
        .param("dict_iterations", a.dict_iterations)
        .param("dict_step", a.dict_step)
        .param("batch_size", a.batch_size)
        .param("warm_start", a.warm_start)
        .param("pairs", pairs.len())
        .seed("dictionary", a.seed)
        .input(&a.corpus)
        .output(&a.out);
    if let Some(log) = &a.log {
        write_learn_csv(log, &outcome.log)?;
        m.output(log);
    }
    if let Some(last) = outcome.log.last() {
        eprintln!(
            "epoch {}: objective {:.6e}, reconstruction loss {:.6e}",
            last.epoch, last.objective, last.recon_loss
        );
    }
    finish(&mut m, &a.out.join(dictdir::MANIFEST))
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn cmd_solve(a: &SolveArgs) -> anyhow::Result<()> {
    let x1 = read_image(&a.reference)?;
    let x2 = read_image(&a.target)?;
    let mut m = RunManifest::start("solve");
    m.input(&a.reference).input(&a.target);
    let dicts = match &a.dict {
        Some(dir) => {
            m.input(dir);
            dictdir::load_dictionaries(dir)
                .with_context(|| format!("loading dictionaries from {}", dir.display()))?
        }
        None => {
            m.param("widths", join(&a.widths))
                .seed("dictionary", a.seed);
            ModelDictionaries::random(3, &a.widths, !a.solver.untied, a.seed)?
        }
    };
    let cfg = a.solver.config(dicts.levels());
    a.solver.record(&mut m);
    let (rows, cols) = x1.spatial();
    let solver = Solver::new(&dicts, &cfg, rows, cols)?;
    let (state, trace) = solver.iterate(&x1, &x2)?;
    let rec = reconstruct(&state, &dicts)?.reshape(x2.shape().to_vec())?;
    if !rec.data().iter().all(|v| v.is_finite()) {
        bail!("reconstruction is not finite");
    }
    write_mct(&a.out, &rec)?;
    m.output(&a.out);
    if let Some(p) = &a.trace {
        write_trace_csv(p, &trace)?;
        m.output(p);
    }
    if let Some(dir) = &a.dump_components {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
        for (name, c) in COMPONENT_NAMES.iter().zip(components(&state, &dicts)?) {
            let c = c.reshape(x2.shape().to_vec())?;
            write_mct(&dir.join(format!("{name}.mct")), &c)?;
            write_pgm(&dir.join(format!("{name}.pgm")), &c)?;
        }
        m.output(dir);
    }
    if let Some(last) = trace.last() {
        eprintln!("objective {:.6e} -> {:.6e}", trace[0].total, last.total);
    }
    finish(&mut m, &a.out)
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let rec = read_image(&a.rec)?;
    let gt = read_image(&a.gt)?;
    let q = Quality::measure("rec", &rec, &gt)?;
    write_report_csv(&a.report, std::slice::from_ref(&q))?;
    println!(
        "psnr {:.3} dB, ssim {:.4}, rmse {:.5} (x100: {:.3})",
        q.psnr,
        q.ssim,
        q.rmse,
        100.0 * q.rmse
    );
    let mut m = RunManifest::start("eval");
    m.input(&a.rec).input(&a.gt).output(&a.report);
    finish(&mut m, &a.report)
}

fn cmd_pipeline(a: &PipelineArgs, exec: &RayonExecutor) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::read(&a.config)?;
    if let Some(dir) = &a.out_dir {
        cfg.out_dir = dir.clone();
    }
    let summary = run_pipeline(&cfg, exec)?;
    for q in &summary.report {
        println!(
            "{:<10} psnr {:.3} dB, ssim {:.4}, rmse x100 {:.3}",
            q.label,
            q.psnr,
            q.ssim,
            100.0 * q.rmse
        );
    }
    println!("outputs in {}", summary.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = RayonExecutor::new(cli.threads)?;
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Degrade(a) => cmd_degrade(a),
        Command::Learn(a) => cmd_learn(a, &exec),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Pipeline(a) => cmd_pipeline(a, &exec).context("pipeline failed"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
