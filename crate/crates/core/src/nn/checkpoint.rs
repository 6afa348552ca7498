use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{DenoiserConfig, DenoiserModel, ParamSpec};
use super::train::{TrainerConfig, TrainerState};
use crate::error::{Error, Result};

const MAGIC: &str = "SBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Which diffusion process a network was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Bridge,
    Ddpm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    process: ProcessKind,
    schedule_steps: usize,
    model: DenoiserConfig,
    trainer: TrainerConfig,
    step: u64,
    epoch: u64,
    lr: f64,
    best_val: Option<f64>,
    bad_epochs: usize,
    tensors: Vec<ParamSpec>,
}

/// Model, optimiser state and provenance of a training run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub process: ProcessKind,
    pub schedule_steps: usize,
    pub trainer: TrainerConfig,
    pub model: DenoiserModel<f32>,
    pub state: TrainerState,
}

impl PartialEq for Checkpoint {
    fn eq(&self, other: &Self) -> bool {
        self.process == other.process
            && self.schedule_steps == other.schedule_steps
            && self.trainer == other.trainer
            && self.model.config() == other.model.config()
            && self.model.params == other.model.params
            && self.state == other.state
    }
}

/// Text magic line, one JSON header line, then parameters, EMA, and both
/// Adam moments as little-endian f64 in header tensor order.
pub fn write_checkpoint(ck: &Checkpoint, mut out: impl Write) -> std::io::Result<()> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        process: ck.process,
        schedule_steps: ck.schedule_steps,
        model: ck.model.config().clone(),
        trainer: ck.trainer.clone(),
        step: ck.state.step,
        epoch: ck.state.epoch,
        lr: ck.state.lr,
        best_val: ck.state.best_val,
        bad_epochs: ck.state.bad_epochs,
        tensors: ck.model.specs().to_vec(),
    };
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )?;
    let mut buf = Vec::with_capacity(ck.model.num_parameters() * 32);
    for set in [&ck.model.params, &ck.state.ema, &ck.state.m, &ck.state.v] {
        for t in set {
            for &v in t {
                buf.extend_from_slice(&(v as f64).to_le_bytes());
            }
        }
    }
    out.write_all(&buf)
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_checkpoint(ck, &mut bytes).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |d: &str| Error::format("checkpoint", d.to_string());
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing magic line"))?;
    if &bytes[..nl] != MAGIC.as_bytes() {
        return Err(bad("bad magic"));
    }
    let rest = &bytes[nl + 1..];
    let nl2 = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header"))?;
    let header: Header = serde_json::from_slice(&rest[..nl2]).map_err(|e| bad(&e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let payload = &rest[nl2 + 1..];
    let total: usize = header.tensors.iter().map(|s| s.len()).sum();
    if payload.len() != total * 4 * 8 {
        return Err(Error::PayloadMismatch {
            expected: total * 32,
            found: payload.len(),
        });
    }
    let mut vals = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32);
    let mut take = || -> Vec<Vec<f32>> {
        header
            .tensors
            .iter()
            .map(|s| (&mut vals).take(s.len()).collect())
            .collect()
    };
    let (params, ema, m, v) = (take(), take(), take(), take());
    let model = DenoiserModel::from_params(header.model.clone(), params)?;
    if model.specs() != header.tensors.as_slice() {
        return Err(Error::ConfigMismatch(
            "tensor list does not match the config".into(),
        ));
    }
    Ok(Checkpoint {
        process: header.process,
        schedule_steps: header.schedule_steps,
        trainer: header.trainer,
        model,
        state: TrainerState {
            step: header.step,
            epoch: header.epoch,
            lr: header.lr,
            m,
            v,
            ema,
            best_val: header.best_val,
            bad_epochs: header.bad_epochs,
        },
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

/// Load and require a specific network shape and process.
pub fn load_checkpoint_expecting(
    path: impl AsRef<Path>,
    config: &DenoiserConfig,
    process: ProcessKind,
) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.model.config() != config {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint network {:?} differs from requested {:?}",
            ck.model.config(),
            config
        )));
    }
    if ck.process != process {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint trained for {:?}, requested {:?}",
            ck.process, process
        )));
    }
    Ok(ck)
}
