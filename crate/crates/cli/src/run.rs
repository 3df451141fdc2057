//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use swd_core::evaldata::{frechet_gaussian, gaussian_fit, sample_toy, value_surface, surface_coord, ToyDatasetSpec, ToyKind};
use swd_core::models::{mlp_forward, Model, ModelKind, StepReport, Trainer};
use swd_core::sliced_ot::{
    dkw_bound, dkw_check, dkw_floor, dkw_violation_frequency, idt_transfer, Deviation, mc_swd_with, ProjectionSet};
use swd_core::{DenseMatrix, Error as CoreError, RngStream};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::metrics::{MetricsRow, MetricsWriter};

/// Stream ids for evaluation draws. Training uses ids 1 and 2.
const REAL_STREAM: u64 = 3;
const GEN_STREAM: u64 = 4;
const LATENT_STREAM: u64 = 5;
const PRIOR_STREAM: u64 = 6;
const PROJ_STREAM: u64 = 7;
const IDT_STREAM: u64 = 8;

/// Projections used by the `swd` metric.
pub const SWD_PROJECTIONS: usize = 512;
pub const MIN_EVAL_SAMPLES: usize = 100;

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt_{step:08}.swd"))
}

pub const CONFIG_ECHO: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub final_checkpoint: PathBuf,
    pub last_report: Option<StepReport>,
}

fn core_to_cli(step: u64) -> impl Fn(CoreError) -> CliError {
    move |e| match e {
        CoreError::NonFiniteLoss { term } => CliError::NonFinite { step, term },
        other => CliError::Core(other),
    }
}

/// Trains for `run.train.steps` steps in total, starting fresh or from a
/// checkpoint. A resumed run keeps the checkpoint's training settings and
/// only takes the step target and output plumbing from `run`.
pub fn run_train(run: &RunConfig, resume: Option<&Path>) -> CliResult<TrainOutcome> {
    run.validate()?;
    let (mut trainer, fresh) = match resume {
        Some(path) => {
            let mut t = Checkpoint::load(path)?.to_trainer()?;
            if t.step > run.train.steps {
                return Err(CliError::Config(format!(
                    "checkpoint is at step {} but only {} steps were requested",
                    t.step, run.train.steps
                )));
            }
            t.config.steps = run.train.steps;
            (t, false)
        }
        None => (Trainer::new(run.train.clone()).map_err(|e| CliError::Config(e.to_string()))?, true),
    };
    let effective = RunConfig {
        train: trainer.config.clone(),
        ..run.clone()
    };
    let dir = &effective.out_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_ECHO), effective.to_text())?;
    let mut metrics = MetricsWriter::open(&dir.join(METRICS_FILE))?;

    let mut final_checkpoint = checkpoint_path(dir, trainer.step);
    if fresh {
        Checkpoint::from_trainer(&trainer).save(&final_checkpoint)?;
    }
    let start = Instant::now();
    let total = effective.train.steps;
    let mut last_report = None;
    let mut evaluator = None;
    while trainer.step < total {
        let report = trainer.train_step().map_err(core_to_cli(trainer.step + 1))?;
        last_report = Some(report);
        let step = trainer.step;
        let last = step == total;
        let eval_due = step % effective.eval_every == 0 || last;
        if step % effective.log_every == 0 || eval_due {
            let mut row = MetricsRow {
                step,
                loss_g: Some(report.loss_g),
                loss_d: report.loss_d,
                penalty1: report.penalty1,
                penalty2: report.penalty2,
                ..Default::default()
            };
            if eval_due {
                if evaluator.is_none() {
                    evaluator = Some(Evaluator::new(&trainer, effective.eval_samples, trainer.config.seed)?);
                }
                let ev = evaluator.as_mut().expect("created above");
                let scores = ev.evaluate(&trainer, &Metric::applicable(trainer.config.kind))?;
                row.fid = scores.fid;
                row.fid_latent = scores.fid_latent;
                row.swd = scores.swd;
                log::info!(
                    "step {step}: loss_g {:.5} fid {:?} fid_latent {:?} swd {:?}",
                    report.loss_g,
                    row.fid,
                    row.fid_latent,
                    row.swd
                );
            }
            row.wall_ms = start.elapsed().as_millis() as u64;
            metrics.write(&row)?;
        }
        if step % effective.checkpoint_every == 0 || last {
            final_checkpoint = checkpoint_path(dir, step);
            Checkpoint::from_trainer(&trainer).save(&final_checkpoint)?;
        }
    }
    Ok(TrainOutcome {
        trainer,
        final_checkpoint,
        last_report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Fid,
    FidLatent,
    Swd,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Fid => "fid",
            Metric::FidLatent => "fid-latent",
            Metric::Swd => "swd",
        }
    }

    /// Every metric defined for `kind`.
    pub fn applicable(kind: ModelKind) -> Vec<Metric> {
        match kind {
            ModelKind::Swae => vec![Metric::Fid, Metric::FidLatent, Metric::Swd],
            _ => vec![Metric::Fid, Metric::Swd],
        }
    }
}

impl FromStr for Metric {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "fid" => Ok(Metric::Fid),
            "fid-latent" | "fid_latent" => Ok(Metric::FidLatent),
            "swd" => Ok(Metric::Swd),
            _ => Err(CliError::Config(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub fid: Option<f64>,
    pub fid_latent: Option<f64>,
    pub swd: Option<f64>,
}

/// Real samples and projections drawn once and reused across evaluations,
/// so metric changes during training reflect the model only.
pub struct Evaluator {
    spec: ToyDatasetSpec,
    n: usize,
    seed: u64,
    real: DenseMatrix,
    real_fit: swd_core::evaldata::GaussianFit,
    dirs: ProjectionSet,
}

impl Evaluator {
    pub fn new(trainer: &Trainer, n: usize, seed: u64) -> swd_core::Result<Self> {
        Self::for_dataset(trainer.dataset(), n, seed)
    }

    pub fn for_dataset(spec: ToyDatasetSpec, n: usize, seed: u64) -> swd_core::Result<Self> {
        let real = sample_toy(&spec, n, &mut RngStream::with_stream(seed, REAL_STREAM))?;
        let real_fit = gaussian_fit(&real)?;
        let dirs = ProjectionSet::sample(real.rows(), SWD_PROJECTIONS, &mut RngStream::with_stream(seed, PROJ_STREAM))?;
        Ok(Self {
            spec,
            n,
            seed,
            real,
            real_fit,
            dirs,
        })
    }

    pub fn real(&self) -> &DenseMatrix {
        &self.real
    }

    pub fn evaluate(&self, trainer: &Trainer, metrics: &[Metric]) -> CliResult<EvalReport> {
        let kind = trainer.config.kind;
        if let Some(m) = metrics.iter().find(|m| !Metric::applicable(kind).contains(m)) {
            return Err(CliError::Inapplicable(format!(
                "metric `{}` is not defined for {} models",
                m.name(),
                kind.name()
            )));
        }
        let mut report = EvalReport::default();
        let needs_samples = metrics.iter().any(|m| matches!(m, Metric::Fid | Metric::Swd));
        let generated = if needs_samples {
            Some(trainer.generate(self.n, &mut RngStream::with_stream(self.seed, GEN_STREAM))?)
        } else {
            None
        };
        for m in metrics {
            match m {
                Metric::Fid => {
                    let g = generated.as_ref().expect("drawn above");
                    report.fid = Some(frechet_gaussian(&gaussian_fit(g)?, &self.real_fit)?);
                }
                Metric::Swd => {
                    let g = generated.as_ref().expect("drawn above");
                    report.swd = Some(mc_swd_with(g, &self.real, &self.dirs, 1.0)?);
                }
                Metric::FidLatent => {
                    let latents = trainer.latents(&self.real, &mut RngStream::with_stream(self.seed, LATENT_STREAM))?;
                    let prior = RngStream::with_stream(self.seed, PRIOR_STREAM).gaussian_matrix(latents.rows(), self.n);
                    report.fid_latent = Some(frechet_gaussian(&gaussian_fit(&latents)?, &gaussian_fit(&prior)?)?);
                }
            }
        }
        Ok(report)
    }

    pub fn spec(&self) -> &ToyDatasetSpec {
        &self.spec
    }
}

/// Evaluates a checkpoint. The dataset defaults to the one it was trained
/// on; an empty metric list means every metric defined for the model.
pub fn run_eval(
    checkpoint: &Path,
    dataset: Option<ToyKind>,
    metrics: &[Metric],
    n: usize,
    seed: Option<u64>,
) -> CliResult<(Trainer, EvalReport)> {
    if n < MIN_EVAL_SAMPLES {
        return Err(CliError::Config(format!("need at least {MIN_EVAL_SAMPLES} samples, got {n}")));
    }
    let trainer = Checkpoint::load(checkpoint)?.to_trainer()?;
    let kind = dataset.unwrap_or(trainer.config.dataset);
    let seed = seed.unwrap_or(trainer.config.seed);
    let all = Metric::applicable(trainer.config.kind);
    let metrics = if metrics.is_empty() { &all[..] } else { metrics };
    let ev = Evaluator::for_dataset(ToyDatasetSpec::default_for(kind), n, seed)?;
    let report = ev.evaluate(&trainer, metrics)?;
    Ok((trainer, report))
}

pub const EVAL_HEADER: [&str; 7] = ["checkpoint", "dataset", "step", "n", "fid", "fid_latent", "swd"];

/// Appends one evaluation row to `path`, writing the header for a new file.
pub fn append_eval_row(path: &Path, checkpoint: &Path, dataset: ToyKind, step: u64, n: usize, r: &EvalReport) -> CliResult<()> {
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(EVAL_HEADER)?;
    }
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        checkpoint.display().to_string(),
        dataset.name().to_string(),
        step.to_string(),
        n.to_string(),
        cell(r.fid),
        cell(r.fid_latent),
        cell(r.swd),
    ])?;
    w.flush()?;
    Ok(())
}

/// Writes a critic value surface as `x,y,value` rows, `y` major.
pub fn write_surface(
    critic: impl Fn(&DenseMatrix) -> swd_core::Result<Vec<f64>>,
    range: (f64, f64),
    g: usize,
    out: impl Write,
) -> CliResult<DenseMatrix> {
    let surface = value_surface(critic, range, g)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"])?;
    for i in 0..g {
        let y = surface_coord(range, g, i);
        for j in 0..g {
            let x = surface_coord(range, g, j);
            w.write_record([x.to_string(), y.to_string(), surface[(i, j)].to_string()])?;
        }
    }
    w.flush()?;
    Ok(surface)
}

/// Value surface of a checkpoint's critic. The range defaults to a square
/// enclosing the training data.
pub fn export_surface(checkpoint: &Path, g: usize, range: Option<(f64, f64)>, out: impl Write) -> CliResult<DenseMatrix> {
    let trainer = Checkpoint::load(checkpoint)?.to_trainer()?;
    if !trainer.config.kind.has_critic() {
        return Err(CliError::Inapplicable(format!(
            "{} models have no critic to draw",
            trainer.config.kind.name()
        )));
    }
    let range = range.unwrap_or_else(|| {
        let b = trainer.dataset().bounding_box();
        (-b, b)
    });
    write_surface(|x| trainer.critic(x), range, g, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DkwRow {
    pub b: usize,
    pub eps: f64,
    pub trials: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Three binomial standard errors at the bound.
    pub slack: f64,
    /// `eps` is under [`dkw_floor`]; the frequency is measured but the
    /// bound carries no guarantee there.
    pub below_floor: bool,
}

impl DkwRow {
    pub fn within(&self) -> bool {
        self.frequency <= self.bound + self.slack
    }
}

/// Empirical one-sided tail frequencies for every `(b, ε)` pair. Each
/// pair draws from its own stream. Pairs below the validity floor are still
/// measured and flagged.
pub fn run_dkw(bs: &[usize], epss: &[f64], trials: usize, seed: u64) -> CliResult<Vec<DkwRow>> {
    let mut rows = Vec::new();
    for (i, &b) in bs.iter().enumerate() {
        for (j, &eps) in epss.iter().enumerate() {
            let stream = (i * epss.len() + j) as u64;
            let mut rng = RngStream::with_stream(seed, stream);
            let below_floor = eps < dkw_floor(b);
            let frequency = if below_floor {
                if b == 0 || trials < 1000 {
                    return Err(CliError::Config(format!("need b ≥ 1 and at least 1000 trials, got b = {b}, {trials}")));
                }
                dkw_violation_frequency(b, eps, trials, Deviation::OneSided, &mut rng)
            } else {
                dkw_check(b, eps, trials, &mut rng).map_err(|e| CliError::Config(e.to_string()))?
            };
            let bound = dkw_bound(b, eps);
            let p = bound.min(1.0);
            rows.push(DkwRow {
                b,
                eps,
                trials,
                frequency,
                bound,
                slack: 3.0 * (p * (1.0 - p) / trials as f64).sqrt(),
                below_floor,
            });
        }
    }
    Ok(rows)
}

pub fn write_dkw(rows: &[DkwRow], out: impl Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["b", "eps", "trials", "frequency", "bound", "slack", "within", "below_floor"])?;
    for r in rows {
        w.write_record([
            r.b.to_string(),
            r.eps.to_string(),
            r.trials.to_string(),
            r.frequency.to_string(),
            r.bound.to_string(),
            r.slack.to_string(),
            r.within().to_string(),
            r.below_floor.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Where the IDT baseline takes its source points from.
#[derive(Debug, Clone, PartialEq)]
pub enum IdtSource {
    /// Raw toy samples.
    Dataset(ToyKind),
    /// Toy samples passed through the linear encoder of an SWAE checkpoint,
    /// before any transport block.
    Encoded(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdtReport {
    pub swd_before: f64,
    pub swd_after: f64,
    pub source: DenseMatrix,
    pub transferred: DenseMatrix,
}

impl IdtReport {
    pub fn reduction(&self) -> f64 {
        1.0 - self.swd_after / self.swd_before
    }
}

/// Moves `n` source points toward a standard Gaussian batch with `blocks`
/// random-rotation IDT blocks. Distances are measured against that same
/// batch with a fixed set of projections.
pub fn run_idt(source: &IdtSource, n: usize, blocks: usize, seed: u64) -> CliResult<IdtReport> {
    if n < 2 {
        return Err(CliError::Config("need at least 2 samples".into()));
    }
    let data_rng = &mut RngStream::with_stream(seed, REAL_STREAM);
    let x = match source {
        IdtSource::Dataset(kind) => sample_toy(&ToyDatasetSpec::default_for(*kind), n, data_rng)?,
        IdtSource::Encoded(path) => {
            let trainer = Checkpoint::load(path)?.to_trainer()?;
            let Model::Swae(m) = &trainer.model else {
                return Err(CliError::Inapplicable(format!(
                    "{} checkpoints have no encoder",
                    trainer.config.kind.name()
                )));
            };
            let data = sample_toy(&trainer.dataset(), n, data_rng)?;
            mlp_forward(&m.encoder, &data)?
        }
    };
    let r = x.rows();
    let target = RngStream::with_stream(seed, PRIOR_STREAM).gaussian_matrix(r, n);
    let dirs = ProjectionSet::sample(r, SWD_PROJECTIONS, &mut RngStream::with_stream(seed, PROJ_STREAM))?;
    let swd_before = mc_swd_with(&x, &target, &dirs, 1.0)?;
    let moved = idt_transfer(&x, &target, blocks, &mut RngStream::with_stream(seed, IDT_STREAM))
        .map_err(|e| match e {
            CoreError::Precondition(msg) => CliError::Config(msg),
            other => CliError::Core(other),
        })?;
    let swd_after = mc_swd_with(&moved, &target, &dirs, 1.0)?;
    Ok(IdtReport {
        swd_before,
        swd_after,
        source: x,
        transferred: moved,
    })
}

/// Writes the transferred points, one column per dimension.
pub fn write_points(points: &DenseMatrix, out: impl Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (0..points.rows()).map(|d| format!("x{d}")).collect();
    w.write_record(&header)?;
    for j in 0..points.cols() {
        w.write_record(points.column(j).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
