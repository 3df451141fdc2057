//! Run configuration and its line-oriented text format.
//!
//! ```text
//! # comment
//! [train]
//! kind = swgan
//! dataset = gaussians-ring-8
//! [optim]
//! lr = 0.0003
//! ```
//!
//! A key inside `[section]` is addressed as `section.key`. Every key name is
//! unique across sections, so the bare name works too (`--set lr=1e-4`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use swd_core::evaldata::ToyKind;
use swd_core::models::{ModelKind, TrainConfig};
use swd_core::sliced_ot::RescaleGrad;
use swd_core::stiefel::TangentRule;

use crate::error::{CliError, CliResult};

/// Every addressable key, grouped by section, in echo order.
const KEYS: &[(&str, &[&str])] = &[
    ("train", &["kind", "dataset", "seed", "steps"]),
    (
        "model",
        &["r", "m", "bins", "alpha", "hidden_width", "hidden_layers", "noise_dim", "rescale_grad"],
    ),
    ("optim", &["lr", "beta1", "beta2", "batch_size", "disc_iters", "tangent_rule"]),
    ("loss", &["lambda1", "lambda2", "k", "k_prime", "gp_lambda"]),
    ("run", &["out_dir", "log_every", "eval_every", "checkpoint_every", "eval_samples"]),
];

/// The section holding output plumbing rather than training settings.
const RUN_SECTION: &str = "run";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub log_every: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    /// Generated and real samples per periodic evaluation.
    pub eval_samples: usize,
}

impl RunConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        Self {
            train: TrainConfig::default_for(kind),
            out_dir: PathBuf::from("runs/default"),
            log_every: 10,
            eval_every: 1000,
            checkpoint_every: 1000,
            eval_samples: 10_000,
        }
    }

    /// Builds a config from `key = value` assignments applied in order.
    /// The model kind is resolved first since it selects the defaults.
    pub fn from_assignments(pairs: &[(String, String)]) -> CliResult<Self> {
        let mut kind = ModelKind::Swgan;
        let mut resolved = Vec::with_capacity(pairs.len());
        for (key, value) in pairs {
            let key = canonical_key(key)?;
            if key == "train.kind" {
                kind = parse(&key, value)?;
            }
            resolved.push((key, value.as_str()));
        }
        let mut cfg = Self::default_for(kind);
        for (key, value) in resolved {
            cfg.set(&key, value)?;
        }
        Ok(cfg)
    }

    pub fn parse_text(text: &str) -> CliResult<Self> {
        Self::from_assignments(&parse_assignments(text)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse_text(&fs::read_to_string(path)?)
    }

    /// Sets one key, given canonically or bare.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = canonical_key(key)?;
        let key = key.as_str();
        let t = &mut self.train;
        match key {
            "train.kind" => t.kind = parse(key, value)?,
            "train.dataset" => t.dataset = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "train.steps" => t.steps = parse(key, value)?,
            "run.out_dir" => self.out_dir = PathBuf::from(value),
            "run.log_every" => self.log_every = parse(key, value)?,
            "run.eval_every" => self.eval_every = parse(key, value)?,
            "run.checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "run.eval_samples" => self.eval_samples = parse(key, value)?,
            "model.r" => t.r = parse(key, value)?,
            "model.m" => t.m = parse(key, value)?,
            "model.bins" => t.bins = parse(key, value)?,
            "model.alpha" => t.alpha = parse(key, value)?,
            "model.hidden_width" => t.hidden_width = parse(key, value)?,
            "model.hidden_layers" => t.hidden_layers = parse(key, value)?,
            "model.noise_dim" => t.noise_dim = parse(key, value)?,
            "model.rescale_grad" => t.rescale_grad = parse_rescale(value)?,
            "optim.lr" => t.lr = parse(key, value)?,
            "optim.beta1" => t.beta1 = parse(key, value)?,
            "optim.beta2" => t.beta2 = parse(key, value)?,
            "optim.batch_size" => t.batch_size = parse(key, value)?,
            "optim.disc_iters" => t.disc_iters = parse(key, value)?,
            "optim.tangent_rule" => t.tangent_rule = parse_tangent(value)?,
            "loss.lambda1" => t.loss.lambda1 = parse(key, value)?,
            "loss.lambda2" => t.loss.lambda2 = parse(key, value)?,
            "loss.k" => t.loss.k = parse(key, value)?,
            "loss.k_prime" => t.loss.k_prime = parse(key, value)?,
            "loss.gp_lambda" => t.gp_lambda = parse(key, value)?,
            _ => unreachable!("canonical_key only returns listed keys"),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let t = &self.train;
        match key {
            "train.kind" => t.kind.name().to_string(),
            "train.dataset" => t.dataset.name().to_string(),
            "train.seed" => t.seed.to_string(),
            "train.steps" => t.steps.to_string(),
            "run.out_dir" => self.out_dir.display().to_string(),
            "run.log_every" => self.log_every.to_string(),
            "run.eval_every" => self.eval_every.to_string(),
            "run.checkpoint_every" => self.checkpoint_every.to_string(),
            "run.eval_samples" => self.eval_samples.to_string(),
            "model.r" => t.r.to_string(),
            "model.m" => t.m.to_string(),
            "model.bins" => t.bins.to_string(),
            "model.alpha" => t.alpha.to_string(),
            "model.hidden_width" => t.hidden_width.to_string(),
            "model.hidden_layers" => t.hidden_layers.to_string(),
            "model.noise_dim" => t.noise_dim.to_string(),
            "model.rescale_grad" => rescale_name(t.rescale_grad).to_string(),
            "optim.lr" => t.lr.to_string(),
            "optim.beta1" => t.beta1.to_string(),
            "optim.beta2" => t.beta2.to_string(),
            "optim.batch_size" => t.batch_size.to_string(),
            "optim.disc_iters" => t.disc_iters.to_string(),
            "optim.tangent_rule" => tangent_name(t.tangent_rule).to_string(),
            "loss.lambda1" => t.loss.lambda1.to_string(),
            "loss.lambda2" => t.loss.lambda2.to_string(),
            "loss.k" => t.loss.k.to_string(),
            "loss.k_prime" => t.loss.k_prime.to_string(),
            "loss.gp_lambda" => t.gp_lambda.to_string(),
            _ => unreachable!("only listed keys are echoed"),
        }
    }

    /// The full config in the text format. Parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        self.render(true)
    }

    /// Only the settings that determine training, without output plumbing.
    /// This is what checkpoints record.
    pub fn train_text(&self) -> String {
        self.render(false)
    }

    fn render(&self, with_run: bool) -> String {
        let mut out = String::new();
        let sections = KEYS.iter().filter(|(s, _)| with_run || *s != RUN_SECTION);
        for (i, (section, keys)) in sections.enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{section}]");
            for key in keys.iter() {
                let _ = writeln!(out, "{key} = {}", self.get(&format!("{section}.{key}")));
            }
        }
        out
    }

    pub fn validate(&self) -> CliResult<()> {
        for (name, v) in [
            ("log_every", self.log_every),
            ("eval_every", self.eval_every),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        if self.eval_samples < 100 {
            return Err(CliError::Config(format!(
                "eval_samples must be at least 100, got {}",
                self.eval_samples
            )));
        }
        if self.train.kind == ModelKind::Idt {
            return Err(CliError::Config(
                "the IDT baseline is not trained; use the `idt` subcommand".into(),
            ));
        }
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Splits config text into `(key, value)` pairs with section prefixes applied.
pub fn parse_assignments(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {}: unterminated section header", n + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim();
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        out.push((full, value.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> CliResult<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{s}` is not of the form key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn canonical_key(key: &str) -> CliResult<String> {
    let (section, name) = match key.split_once('.') {
        Some((s, n)) => (Some(s), n),
        None => (None, key),
    };
    for (sec, keys) in KEYS {
        if section.is_some_and(|s| s != *sec) {
            continue;
        }
        if let Some(k) = keys.iter().find(|k| **k == name) {
            return Ok(format!("{sec}.{k}"));
        }
    }
    Err(CliError::Config(format!("unknown config key `{key}`")))
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_rescale(value: &str) -> CliResult<RescaleGrad> {
    match value {
        "flow" => Ok(RescaleGrad::Flow),
        "stop" => Ok(RescaleGrad::Stop),
        _ => Err(CliError::Config(format!("rescale_grad must be `flow` or `stop`, got `{value}`"))),
    }
}

fn rescale_name(r: RescaleGrad) -> &'static str {
    match r {
        RescaleGrad::Flow => "flow",
        RescaleGrad::Stop => "stop",
    }
}

fn parse_tangent(value: &str) -> CliResult<TangentRule> {
    match value {
        "reflected" => Ok(TangentRule::Reflected),
        "symmetric" => Ok(TangentRule::Symmetric),
        _ => Err(CliError::Config(format!(
            "tangent_rule must be `reflected` or `symmetric`, got `{value}`"
        ))),
    }
}

fn tangent_name(r: TangentRule) -> &'static str {
    match r {
        TangentRule::Reflected => "reflected",
        TangentRule::Symmetric => "symmetric",
    }
}

/// Dataset names accepted on the command line.
pub fn parse_dataset(s: &str) -> CliResult<ToyKind> {
    s.parse().map_err(|e: swd_core::Error| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default_for(ModelKind::Swae);
        cfg.set("lr", "0.00012345678901234").unwrap();
        cfg.set("loss.k", "1e-7").unwrap();
        cfg.set("tangent_rule", "symmetric").unwrap();
        cfg.set("out_dir", "/tmp/some run").unwrap();
        let text = cfg.to_text();
        assert_eq!(RunConfig::parse_text(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_comments_and_bare_keys() {
        let text = "# header\n[train]\nkind = swae  # trailing\ndataset = 8gaussians\n\n[optim]\nlr = 1e-3\nbins = 16\n";
        let cfg = RunConfig::parse_text(text);
        // `bins` lives in [model], so `optim.bins` is unknown.
        assert!(matches!(cfg, Err(CliError::Config(_))));
        let text = "[train]\nkind = swae\ndataset = 8gaussians\n[optim]\nlr = 1e-3\n[model]\nbins = 16\nr = 3\n";
        let cfg = RunConfig::parse_text(text).unwrap();
        assert_eq!(cfg.train.kind, ModelKind::Swae);
        assert_eq!(cfg.train.dataset, ToyKind::GaussiansRing8);
        assert_eq!((cfg.train.lr, cfg.train.bins, cfg.train.r), (1e-3, 16, 3));
    }

    #[test]
    fn kind_selects_defaults_wherever_it_appears() {
        let pairs = vec![("r".to_string(), "5".to_string()), ("kind".to_string(), "swae".to_string())];
        let cfg = RunConfig::from_assignments(&pairs).unwrap();
        assert_eq!((cfg.train.kind, cfg.train.r), (ModelKind::Swae, 5));
        let swgan = RunConfig::from_assignments(&[]).unwrap();
        assert_eq!(swgan.train.r, 128);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in ["[train\nkind = swae", "kind swae", "nonsense = 1", "steps = -3", "tangent_rule = other"] {
            assert!(matches!(RunConfig::parse_text(text), Err(CliError::Config(_))), "{text}");
        }
        let mut cfg = RunConfig::default_for(ModelKind::Swae);
        cfg.log_every = 0;
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse_text("bins = 1").unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
