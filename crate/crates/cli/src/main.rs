use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use swd_core::evaldata::ToyKind;
use swd_lab::config::{parse_assignments, parse_dataset, parse_override, RunConfig};
use swd_lab::run::{
    append_eval_row, export_surface, run_dkw, run_eval, run_idt, run_train, write_dkw, write_points, IdtSource, Metric,
};
use swd_lab::CliResult;

/// Sliced Wasserstein generative models on toy data.
#[derive(Parser)]
#[command(name = "swd", version)]
struct Cli {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for `train`; output directory for other commands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, writing metrics and checkpoints to the run directory.
    Train(TrainArgs),
    /// Score a checkpoint against fresh toy data.
    Eval(EvalArgs),
    /// Export the critic value surface of a GAN checkpoint as CSV.
    Surface(SurfaceArgs),
    /// Check empirical CDF tail frequencies against their exponential bound.
    Dkw(DkwArgs),
    /// Run the iterative distribution transfer baseline toward N(0, I).
    Idt(IdtArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// swae, swgan, wgan-gp-baseline
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    /// Any config key, e.g. `--set lr=1e-4 --set model.r=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    /// Defaults to the dataset the checkpoint was trained on.
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated subset of fid, fid-latent, swd. Defaults to all
    /// metrics defined for the model.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Args)]
struct SurfaceArgs {
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[arg(long, allow_negative_numbers = true, requires = "hi")]
    lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "lo")]
    hi: Option<f64>,
}

#[derive(Args)]
struct DkwArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [100, 1000])]
    samples: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2])]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

#[derive(Args)]
struct IdtArgs {
    /// Toy dataset used as the source.
    #[arg(long, conflicts_with = "checkpoint")]
    dataset: Option<String>,
    /// SWAE checkpoint whose encoder produces the source points.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    blocks: usize,
    #[arg(long, default_value_t = 2048)]
    samples: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(ref args) => train(&cli, args),
        Command::Eval(ref args) => eval(&cli, args),
        Command::Surface(ref args) => surface(&cli, args),
        Command::Dkw(ref args) => dkw(&cli, args),
        Command::Idt(ref args) => idt(&cli, args),
    }
}

fn output_file(dir: &Option<PathBuf>, name: &str) -> CliResult<Option<PathBuf>> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Ok(Some(d.join(name)))
        }
        None => Ok(None),
    }
}

fn train(cli: &Cli, args: &TrainArgs) -> CliResult<()> {
    let mut pairs = match &cli.config {
        Some(path) => parse_assignments(&std::fs::read_to_string(path)?)?,
        None => Vec::new(),
    };
    let flag = |k: &str, v: String| (k.to_string(), v);
    pairs.extend(args.model.clone().map(|v| flag("train.kind", v)));
    pairs.extend(args.dataset.clone().map(|v| flag("train.dataset", v)));
    pairs.extend(args.steps.map(|v| flag("train.steps", v.to_string())));
    pairs.extend(cli.seed.map(|v| flag("train.seed", v.to_string())));
    pairs.extend(cli.out.as_ref().map(|v| flag("run.out_dir", v.display().to_string())));
    for o in &args.overrides {
        pairs.push(parse_override(o)?);
    }
    let run = RunConfig::from_assignments(&pairs)?;
    info!(
        "training {} on {} for {} steps into {}",
        run.train.kind.name(),
        run.train.dataset.name(),
        run.train.steps,
        run.out_dir.display()
    );
    let outcome = run_train(&run, args.resume.as_deref())?;
    println!("final checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}

fn eval(cli: &Cli, args: &EvalArgs) -> CliResult<()> {
    let dataset = args.dataset.as_deref().map(parse_dataset).transpose()?;
    let metrics = args
        .metrics
        .iter()
        .map(|m| m.parse())
        .collect::<CliResult<Vec<Metric>>>()?;
    let (trainer, report) = run_eval(&args.checkpoint, dataset, &metrics, args.samples, cli.seed)?;
    let kind = dataset.unwrap_or(trainer.config.dataset);
    for (name, v) in [("fid", report.fid), ("fid_latent", report.fid_latent), ("swd", report.swd)] {
        if let Some(v) = v {
            println!("{name} = {v}");
        }
    }
    if let Some(path) = output_file(&cli.out, "eval.csv")? {
        append_eval_row(&path, &args.checkpoint, kind, trainer.step, args.samples, &report)?;
    }
    Ok(())
}

fn surface(cli: &Cli, args: &SurfaceArgs) -> CliResult<()> {
    let range = args.lo.zip(args.hi);
    match output_file(&cli.out, "surface.csv")? {
        Some(path) => {
            export_surface(&args.checkpoint, args.grid, range, File::create(&path)?)?;
            println!("surface written to {}", path.display());
        }
        None => {
            export_surface(&args.checkpoint, args.grid, range, io::stdout().lock())?;
        }
    }
    Ok(())
}

fn dkw(cli: &Cli, args: &DkwArgs) -> CliResult<()> {
    let rows = run_dkw(&args.samples, &args.eps, args.trials, cli.seed.unwrap_or(0))?;
    let mut out = io::stdout().lock();
    for r in &rows {
        writeln!(
            out,
            "b = {:5}  eps = {:.3}  frequency = {:.5}  bound = {:.5}  {}{}",
            r.b,
            r.eps,
            r.frequency,
            r.bound,
            if r.within() { "ok" } else { "EXCEEDED" },
            if r.below_floor { "  (below validity floor)" } else { "" }
        )?;
    }
    if let Some(path) = output_file(&cli.out, "dkw.csv")? {
        write_dkw(&rows, File::create(path)?)?;
    }
    Ok(())
}

fn idt(cli: &Cli, args: &IdtArgs) -> CliResult<()> {
    let source = match (&args.checkpoint, &args.dataset) {
        (Some(p), _) => IdtSource::Encoded(p.clone()),
        (None, Some(d)) => IdtSource::Dataset(parse_dataset(d)?),
        (None, None) => IdtSource::Dataset(ToyKind::SwissRoll),
    };
    let rep = run_idt(&source, args.samples, args.blocks, cli.seed.unwrap_or(0))?;
    println!(
        "swd before = {}  after = {}  reduction = {:.2}%",
        rep.swd_before,
        rep.swd_after,
        100.0 * rep.reduction()
    );
    if let Some(path) = output_file(&cli.out, "idt.csv")? {
        write_points(&rep.transferred, File::create(&path)?)?;
    }
    Ok(())
}
