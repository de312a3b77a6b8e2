//! Checkpoint file format.
//!
//! ```text
//! "MYOSEG01"            8 bytes
//! header length         u32, little endian
//! header                UTF-8 JSON (config, tensor directory, optimizer scalars)
//! payload               f32 little endian, tensors in directory order
//! ```
//!
//! Directory offsets are byte offsets from the start of the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Network, NetworkConfig};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MYOSEG01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),
    #[error("truncated checkpoint: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint contents inconsistent with its configuration: {0}")]
    Inconsistent(String),
}

impl CheckpointError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CheckpointError::Io(_) => "io",
            CheckpointError::BadMagic => "bad-magic",
            CheckpointError::CorruptHeader(_) => "corrupt-header",
            CheckpointError::Truncated { .. } => "truncated",
            CheckpointError::VersionMismatch { .. } => "version-mismatch",
            CheckpointError::Inconsistent(_) => "inconsistent",
        }
    }
}

/// Network, optimizer and training progress.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub optimizer: AdamState<f32>,
    /// Number of completed epochs.
    pub epoch: u64,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    #[serde(flatten)]
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    config: NetworkConfig,
    /// Softmax channel index of each class.
    classes: Vec<String>,
    epoch: u64,
    seed: u64,
    optimizer: OptimizerHeader,
    tensors: Vec<TensorEntry>,
}

const CLASSES: [&str; 2] = ["myocardium", "background"];

impl Checkpoint {
    pub fn new(network: Network<f32>, optimizer: AdamState<f32>, epoch: u64, seed: u64) -> Self {
        Self {
            network,
            optimizer,
            epoch,
            seed,
        }
    }

    fn named(&self) -> Vec<(String, &Tensor<f32>)> {
        let mut v = self.network.named_tensors();
        let names = self.network.parameter_names();
        for (n, t) in names.iter().zip(&self.optimizer.m) {
            v.push((format!("adam.m.{n}"), t));
        }
        for (n, t) in names.iter().zip(&self.optimizer.v) {
            v.push((format!("adam.v.{n}"), t));
        }
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let named = self.named();
        let mut offset = 0u64;
        let tensors = named
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.len() as u64;
                e
            })
            .collect();
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.network.config().clone(),
            classes: CLASSES.iter().map(|s| s.to_string()).collect(),
            epoch: self.epoch,
            seed: self.seed,
            optimizer: OptimizerHeader {
                config: self.optimizer.config.clone(),
                step: self.optimizer.step,
            },
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + json.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 12 {
            return Err(CheckpointError::Truncated {
                expected: 12,
                actual: bytes.len() as u64,
            });
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() < hlen {
            return Err(CheckpointError::Truncated {
                expected: 12 + hlen as u64,
                actual: bytes.len() as u64,
            });
        }
        let raw: serde_json::Value = serde_json::from_slice(&body[..hlen])
            .map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CheckpointError::CorruptHeader("missing version".into()))?;
        if version != CHECKPOINT_VERSION as u64 {
            return Err(CheckpointError::VersionMismatch {
                found: version as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
        if header.classes != CLASSES {
            return Err(CheckpointError::Inconsistent(format!(
                "unexpected class order {:?}",
                header.classes
            )));
        }
        header
            .config
            .validate()
            .map_err(|e| CheckpointError::Inconsistent(e.to_string()))?;
        let payload = &body[hlen..];

        let mut network = Network::<f32>::build(&header.config, &mut RngStream::new(0))
            .map_err(|e| CheckpointError::Inconsistent(e.to_string()))?
            .zeros_like();
        let param_names = network.parameter_names();
        let has_moments = header.tensors.len() > network.named_tensors().len();
        let mut optimizer = AdamState::new(header.optimizer.config.clone());
        optimizer.step = header.optimizer.step;
        if has_moments {
            optimizer.m = network.parameters().into_iter().map(|t| t.zeros_like()).collect();
            optimizer.v = optimizer.m.clone();
        }

        let mut expected: Vec<(String, Vec<usize>)> = network
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if has_moments {
            for prefix in ["adam.m", "adam.v"] {
                for (n, t) in param_names.iter().zip(network.parameters()) {
                    expected.push((format!("{prefix}.{n}"), t.shape().to_vec()));
                }
            }
        }
        if expected.len() != header.tensors.len() {
            return Err(CheckpointError::Inconsistent(format!(
                "directory lists {} tensors, configuration needs {}",
                header.tensors.len(),
                expected.len()
            )));
        }
        let mut offset = 0u64;
        for (entry, (name, shape)) in header.tensors.iter().zip(&expected) {
            if &entry.name != name || &entry.shape != shape || entry.offset != offset {
                return Err(CheckpointError::Inconsistent(format!(
                    "directory entry {} {:?} @{} does not match expected {name} {shape:?} @{offset}",
                    entry.name, entry.shape, entry.offset
                )));
            }
            offset += 4 * shape.iter().product::<usize>() as u64;
        }
        if (payload.len() as u64) < offset {
            return Err(CheckpointError::Truncated {
                expected: 12 + hlen as u64 + offset,
                actual: bytes.len() as u64,
            });
        }
        if payload.len() as u64 > offset {
            return Err(CheckpointError::CorruptHeader(format!(
                "{} trailing bytes after payload",
                payload.len() as u64 - offset
            )));
        }

        let mut cursor = 0usize;
        let mut fill = |t: &mut Tensor<f32>| {
            for v in t.data_mut() {
                *v = f32::from_le_bytes(payload[cursor..cursor + 4].try_into().expect("4 bytes"));
                cursor += 4;
            }
        };
        for t in network.all_tensors_mut() {
            fill(t);
        }
        for t in optimizer.m.iter_mut().chain(optimizer.v.iter_mut()) {
            fill(t);
        }
        Ok(Self {
            network,
            optimizer,
            epoch: header.epoch,
            seed: header.seed,
        })
    }
}

/// Write atomically (temporary file, then rename).
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let bytes = checkpoint.to_bytes();
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
