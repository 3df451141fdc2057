//! Named-array checkpoint container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "SWD1" | u32 version | u32 count | count × array
//! array = u16 name_len | name (UTF-8) | u8 ndim | ndim × u64 dims | Π dims × f64
//! ```
//!
//! Byte strings (the RNG state, the config echo) are stored as 1-D arrays
//! holding one byte value per element.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use swd_core::models::{assign_param, param_names, Parameterized, Trainer};
use swd_core::numerics::RNG_ALGORITHM;
use swd_core::{DenseMatrix, RngStream};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"SWD1";
pub const VERSION: u32 = 1;

pub const CONFIG_ARRAY: &str = "config";
pub const STEP_ARRAY: &str = "step";
pub const RNG_ARRAY: &str = "rng_state";
const PARAM_PREFIX: &str = "param.";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("invalid data at byte offset {offset}: {msg}")]
    Invalid { offset: usize, msg: String },
    #[error("array `{name}`: {msg}")]
    Content { name: String, msg: String },
    #[error("missing array `{0}`")]
    Missing(String),
}

fn content(name: &str, msg: impl Into<String>) -> FormatError {
    FormatError::Content {
        name: name.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<u64>,
    /// Row-major values.
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn matrix(name: impl Into<String>, m: &DenseMatrix) -> Self {
        Self {
            name: name.into(),
            dims: vec![m.rows() as u64, m.cols() as u64],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        Self {
            name: name.into(),
            dims: vec![1],
            data: vec![v],
        }
    }

    pub fn bytes(name: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            name: name.into(),
            dims: vec![bytes.len() as u64],
            data: bytes.iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DenseMatrix, FormatError> {
        match self.dims[..] {
            [r, c] => DenseMatrix::new(r as usize, c as usize, self.data.clone())
                .map_err(|e| content(&self.name, e.to_string())),
            _ => Err(content(&self.name, format!("expected 2 dims, got {}", self.dims.len()))),
        }
    }

    pub fn to_scalar(&self) -> Result<f64, FormatError> {
        match self.data[..] {
            [v] => Ok(v),
            _ => Err(content(&self.name, "expected a single value")),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        self.data
            .iter()
            .map(|&v| {
                if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(content(&self.name, format!("{v} is not a byte value")))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    fn require(&self, name: &str) -> Result<&NamedArray, FormatError> {
        self.get(name).ok_or_else(|| FormatError::Missing(name.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.arrays.len()).map_err(|_| content("", "too many arrays"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for a in &self.arrays {
            let name_len = u16::try_from(a.name.len()).map_err(|_| content(&a.name, "name too long"))?;
            let ndim = u8::try_from(a.dims.len()).map_err(|_| content(&a.name, "too many dims"))?;
            let len = a.dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d));
            if len != Some(a.data.len() as u64) {
                return Err(content(&a.name, "dims do not match the data length"));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(ndim);
            for d in &a.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::Version(version));
        }
        let count = r.u32()?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let start = r.pos;
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| FormatError::Invalid {
                    offset: start + 2,
                    msg: e.to_string(),
                })?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let dims = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            let dims_at = r.pos;
            let len = dims
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .and_then(|n| usize::try_from(n).ok())
                .filter(|n| n.checked_mul(8).is_some())
                .ok_or_else(|| FormatError::Invalid {
                    offset: dims_at,
                    msg: format!("array `{name}` has an impossible size"),
                })?;
            let raw = r.take(len * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push(NamedArray { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(FormatError::Invalid {
                offset: r.pos,
                msg: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Self { arrays })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint under the final name.
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(Self::from_bytes(&fs::read(path)?)?)
    }

    /// Snapshot of everything needed to continue `trainer` bit-identically.
    pub fn from_trainer(trainer: &Trainer) -> Self {
        let echo = RunConfig {
            train: trainer.config.clone(),
            ..RunConfig::default_for(trainer.config.kind)
        };
        let mut arrays = vec![
            NamedArray::bytes(CONFIG_ARRAY, echo.train_text().as_bytes()),
            NamedArray::scalar(STEP_ARRAY, trainer.step as f64),
            NamedArray::bytes(RNG_ARRAY, &rng_bytes(&trainer.rng)),
        ];
        trainer.model.visit("", &mut |name, p| {
            arrays.push(NamedArray::matrix(format!("{PARAM_PREFIX}{name}"), p.matrix()));
        });
        for (opt, name, state) in optimizer_states(trainer) {
            arrays.push(NamedArray::matrix(format!("{opt}.{name}.m1"), &state.first_moment));
            arrays.push(NamedArray::matrix(format!("{opt}.{name}.m2"), &state.second_moment));
            arrays.push(NamedArray::scalar(format!("{opt}.{name}.t"), state.step as f64));
        }
        Self { arrays }
    }

    /// Training config echoed into the checkpoint, with default plumbing.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let bytes = self.require(CONFIG_ARRAY)?.to_bytes()?;
        let text = String::from_utf8(bytes).map_err(|e| content(CONFIG_ARRAY, e.to_string()))?;
        RunConfig::parse_text(&text)
    }

    /// Rebuilds the trainer. Arrays with unknown names are reported and
    /// skipped; every array the trainer needs must be present.
    pub fn to_trainer(&self) -> CliResult<Trainer> {
        let run = self.run_config()?;
        let mut trainer = Trainer::new(run.train).map_err(|e| CliError::Config(e.to_string()))?;
        let step = self.require(STEP_ARRAY)?.to_scalar()?;
        if !(step >= 0.0 && step.fract() == 0.0 && step < 2f64.powi(53)) {
            return Err(content(STEP_ARRAY, format!("invalid step {step}")).into());
        }
        trainer.step = step as u64;
        trainer.rng = parse_rng(&self.require(RNG_ARRAY)?.to_bytes()?)?;

        let mut expected: HashSet<String> = param_names(&trainer.model, "")
            .into_iter()
            .map(|n| format!("{PARAM_PREFIX}{n}"))
            .collect();
        let mut opt_slots = Vec::new();
        for (opt, name, _) in optimizer_states(&trainer) {
            for suffix in ["m1", "m2", "t"] {
                let full = format!("{opt}.{name}.{suffix}");
                expected.insert(full);
            }
            opt_slots.push((opt, name));
        }

        for a in &self.arrays {
            if matches!(a.name.as_str(), CONFIG_ARRAY | STEP_ARRAY | RNG_ARRAY) {
                continue;
            }
            if !expected.remove(&a.name) {
                log::warn!("ignoring unknown checkpoint array `{}`", a.name);
                continue;
            }
            if let Some(param) = a.name.strip_prefix(PARAM_PREFIX) {
                if !assign_param(&mut trainer.model, "", param, &a.to_matrix()?)? {
                    return Err(content(&a.name, "no such parameter").into());
                }
                continue;
            }
            let (slot, suffix) = a.name.rsplit_once('.').expect("optimizer arrays carry a suffix");
            let index = opt_slots
                .iter()
                .position(|(opt, name)| format!("{opt}.{name}") == slot)
                .expect("expected names come from the slot list");
            let state = nth_state_mut(&mut trainer, index);
            match suffix {
                "m1" | "m2" => {
                    let m = a.to_matrix()?;
                    let target = if suffix == "m1" {
                        &mut state.first_moment
                    } else {
                        &mut state.second_moment
                    };
                    if m.shape() != target.shape() {
                        return Err(content(&a.name, "shape does not match the parameter").into());
                    }
                    *target = m;
                }
                _ => {
                    let t = a.to_scalar()?;
                    if !(t >= 0.0 && t.fract() == 0.0) {
                        return Err(content(&a.name, format!("invalid step count {t}")).into());
                    }
                    state.step = t as u64;
                }
            }
        }
        if let Some(missing) = expected.into_iter().min() {
            return Err(FormatError::Missing(missing).into());
        }
        Ok(trainer)
    }
}

/// `(optimizer name, parameter name, state)` for every optimizer slot, in
/// canonical order. Optimizers own consecutive runs of the model's
/// parameters.
fn optimizer_states(trainer: &Trainer) -> Vec<(&'static str, String, &swd_core::stiefel::AdamState)> {
    let names = param_names(&trainer.model, "");
    let mut names = names.into_iter();
    let mut out = Vec::new();
    for (opt, o) in trainer.optimizer_list() {
        for state in &o.states {
            let name = names.next().expect("optimizers cover the model's parameters");
            out.push((opt, name, state));
        }
    }
    out
}

fn nth_state_mut(trainer: &mut Trainer, mut index: usize) -> &mut swd_core::stiefel::AdamState {
    for (_, o) in trainer.optimizer_list_mut() {
        if index < o.states.len() {
            return &mut o.states[index];
        }
        index -= o.states.len();
    }
    unreachable!("index comes from optimizer_states")
}

/// Algorithm id, a zero byte, then the generator's own state bytes.
fn rng_bytes(rng: &RngStream) -> Vec<u8> {
    let mut out = rng.algorithm_id().as_bytes().to_vec();
    out.push(0);
    out.extend(rng.state_bytes());
    out
}

fn parse_rng(bytes: &[u8]) -> Result<RngStream, FormatError> {
    let split = bytes
        .iter()
        .position(|&b| b == 0)
        .ok_or_else(|| content(RNG_ARRAY, "missing algorithm id"))?;
    let id = &bytes[..split];
    if id != RNG_ALGORITHM.as_bytes() {
        return Err(content(
            RNG_ARRAY,
            format!("unsupported generator `{}`", String::from_utf8_lossy(id)),
        ));
    }
    RngStream::from_state_bytes(&bytes[split + 1..]).map_err(|e| content(RNG_ARRAY, e.to_string()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(FormatError::Truncated { offset: self.bytes.len() })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
