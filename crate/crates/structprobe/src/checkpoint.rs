//! The `SPP1` probe checkpoint.
//!
//! ```text
//! "SPP1" | version u32 | header_len u32 | header JSON | B as f32, row-major | crc32(B bytes) u32
//! ```
//!
//! `B` is stored in single precision, so a checkpoint round-trips exactly
//! only for projections whose entries are representable as `f32`. Kernel
//! hyperparameters stay in the JSON header at full precision.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structprobe_core::{Kernel, Matrix, OptimizerKind, ProbeParams, RbfMode};

pub const MAGIC: [u8; 4] = *b"SPP1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic {0:?}, expected \"SPP1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint: need {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("bad header: {0}")]
    Header(String),
    #[error("invalid probe: {0}")]
    Probe(#[from] structprobe_core::ProbeError),
}

/// How the checkpointed probe was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub seed: u64,
    pub layer: usize,
    pub optimizer: OptimizerKind,
    pub initial_lr: f64,
    pub batch_size: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    pub lr_decays: usize,
    pub stopped_early: bool,
    pub model_name: String,
    pub contextual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ProbeParams,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kernel: Kernel,
    rank: usize,
    dim: usize,
    poly_shift: f64,
    poly_degree: u32,
    rbf_sigma: f64,
    rbf_mode: RbfMode,
    sigmoid_scale: f64,
    sigmoid_offset: f64,
    training: TrainingMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let p = &self.params;
        p.validate()?;
        let header = Header {
            kernel: p.kernel,
            rank: p.rank(),
            dim: p.dim(),
            poly_shift: p.poly_shift,
            poly_degree: p.poly_degree,
            rbf_sigma: p.rbf_sigma,
            rbf_mode: p.rbf_mode,
            sigmoid_scale: p.sigmoid_scale,
            sigmoid_offset: p.sigmoid_offset,
            training: self.meta.clone(),
        };
        let header =
            serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let weights: Vec<u8> = p
            .projection
            .as_slice()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();

        let mut out = Vec::with_capacity(12 + header.len() + weights.len() + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&weights);
        out.extend_from_slice(&crc32fast::hash(&weights).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let found = bytes.len() as u64;
        if bytes.len() < 4 {
            return Err(CheckpointError::Truncated {
                expected: 12,
                found,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        if bytes.len() < 12 {
            return Err(CheckpointError::Truncated {
                expected: 12,
                found,
            });
        }
        let version = read_u32(bytes, 4);
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let header_end = 12 + read_u32(bytes, 8) as usize;
        if bytes.len() < header_end {
            return Err(CheckpointError::Truncated {
                expected: header_end as u64,
                found,
            });
        }
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        if header.rank == 0 || header.dim == 0 {
            return Err(CheckpointError::Header(
                "rank and dim must be positive".into(),
            ));
        }
        let weights_end = header_end as u64 + 4 * header.rank as u64 * header.dim as u64;
        let total = weights_end + 4;
        if found < total {
            return Err(CheckpointError::Truncated {
                expected: total,
                found,
            });
        }
        if found > total {
            return Err(CheckpointError::Header(format!(
                "{} trailing bytes after checksum",
                found - total
            )));
        }
        let weights = &bytes[header_end..weights_end as usize];
        let stored = read_u32(bytes, weights_end as usize);
        let computed = crc32fast::hash(weights);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed });
        }
        let data = weights
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();

        let mut params = ProbeParams::new(
            header.kernel,
            Matrix::from_vec(header.rank, header.dim, data),
        );
        params.poly_shift = header.poly_shift;
        params.poly_degree = header.poly_degree;
        params.rbf_sigma = header.rbf_sigma;
        params.rbf_mode = header.rbf_mode;
        params.sigmoid_scale = header.sigmoid_scale;
        params.sigmoid_offset = header.sigmoid_offset;
        params.validate()?;
        Ok(Self {
            params,
            meta: header.training,
        })
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn write_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let bytes = checkpoint.to_bytes()?;
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}
