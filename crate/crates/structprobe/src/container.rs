//! The `SPB1` embedding container.
//!
//! ```text
//! "SPB1" | version u32 | header_len u32 | header JSON | payload | crc32(payload) u32
//! ```
//!
//! Integers are little-endian. The payload holds each sentence in header
//! order as `num_layers × token_count × dim` little-endian `f32` values
//! (layer-major, then token, then component). Each header entry records the
//! byte offset of its sentence from the start of the payload.
//!
//! Sentences an extractor had to drop are listed in an optional sidecar
//! `<container>.skipped`, one `sent_id<TAB>reason` per line.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structprobe_core::Vectors;

pub const MAGIC: [u8; 4] = *b"SPB1";
pub const VERSION: u32 = 1;

const LAYER_INDEXING: &str =
    "layer l is the output of transformer block l+1; the embedding layer is excluded";

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic {0:?}, expected \"SPB1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated container: need {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("payload checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("sentence {sent_id}: non-finite value at layer {layer}, token {token}")]
    NonFinite {
        sent_id: String,
        layer: usize,
        token: usize,
    },
    #[error("bad header: {0}")]
    Header(String),
}

fn header_err(msg: impl Into<String>) -> ContainerError {
    ContainerError::Header(msg.into())
}

/// One sentence's vectors, `num_layers × token_count × dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbeddings {
    pub sent_id: String,
    pub token_count: usize,
    pub vectors: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedSentence {
    pub sent_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub model_name: String,
    pub num_layers: usize,
    pub dim: usize,
    pub contextual: bool,
    pub include_special_tokens_in_pooling: bool,
    pub sentences: Vec<SentenceEmbeddings>,
    /// Read from and written to the sidecar, not the container itself.
    pub skipped: Vec<SkippedSentence>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model_name: String,
    num_layers: usize,
    dim: usize,
    contextual: bool,
    #[serde(default)]
    include_special_tokens_in_pooling: bool,
    #[serde(default)]
    layer_indexing: String,
    sentences: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    sent_id: String,
    token_count: usize,
    offset: u64,
}

impl EmbeddingSet {
    pub fn new(
        model_name: impl Into<String>,
        num_layers: usize,
        dim: usize,
        contextual: bool,
    ) -> Self {
        Self {
            model_name: model_name.into(),
            num_layers,
            dim,
            contextual,
            include_special_tokens_in_pooling: false,
            sentences: Vec::new(),
            skipped: Vec::new(),
        }
    }

    /// Floats per token per layer times layers.
    fn sentence_len(&self, token_count: usize) -> usize {
        self.num_layers * token_count * self.dim
    }

    /// Checks shapes, unique ids and finiteness.
    pub fn validate(&self) -> Result<(), ContainerError> {
        if self.num_layers == 0 || self.dim == 0 {
            return Err(header_err("num_layers and dim must be positive"));
        }
        let mut seen = HashSet::new();
        for s in &self.sentences {
            if !seen.insert(s.sent_id.as_str()) {
                return Err(header_err(format!("duplicate sent_id {}", s.sent_id)));
            }
            if s.vectors.len() != self.sentence_len(s.token_count) {
                return Err(header_err(format!(
                    "sentence {}: {} values for {} layers × {} tokens × {} dims",
                    s.sent_id,
                    s.vectors.len(),
                    self.num_layers,
                    s.token_count,
                    self.dim
                )));
            }
            check_finite(s, self.dim)?;
        }
        Ok(())
    }

    pub fn get(&self, sent_id: &str) -> Option<&SentenceEmbeddings> {
        self.sentences.iter().find(|s| s.sent_id == sent_id)
    }

    /// Zero-copy `token_count × dim` view of one layer of a sentence.
    pub fn layer<'a>(&self, sentence: &'a SentenceEmbeddings, layer: usize) -> Vectors<'a> {
        assert!(layer < self.num_layers, "layer {layer} out of range");
        let stride = sentence.token_count * self.dim;
        Vectors::new(
            &sentence.vectors[layer * stride..(layer + 1) * stride],
            self.dim,
        )
    }

    /// Container bytes. Identical sets give identical bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        self.validate()?;
        let mut offset = 0u64;
        let mut index = Vec::with_capacity(self.sentences.len());
        for s in &self.sentences {
            index.push(IndexEntry {
                sent_id: s.sent_id.clone(),
                token_count: s.token_count,
                offset,
            });
            offset += 4 * s.vectors.len() as u64;
        }
        let header = Header {
            model_name: self.model_name.clone(),
            num_layers: self.num_layers,
            dim: self.dim,
            contextual: self.contextual,
            include_special_tokens_in_pooling: self.include_special_tokens_in_pooling,
            layer_indexing: LAYER_INDEXING.to_string(),
            sentences: index,
        };
        let header = serde_json::to_vec(&header).map_err(|e| header_err(e.to_string()))?;

        let mut payload = Vec::with_capacity(offset as usize);
        for s in &self.sentences {
            for v in &s.vectors {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(12 + header.len() + payload.len() + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let found = bytes.len() as u64;
        if bytes.len() < 4 {
            return Err(ContainerError::Truncated {
                expected: 12,
                found,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(ContainerError::BadMagic(magic));
        }
        if bytes.len() < 12 {
            return Err(ContainerError::Truncated {
                expected: 12,
                found,
            });
        }
        let version = read_u32(bytes, 4);
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let header_len = read_u32(bytes, 8) as usize;
        let header_end = 12 + header_len;
        if bytes.len() < header_end {
            return Err(ContainerError::Truncated {
                expected: header_end as u64,
                found,
            });
        }
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| header_err(e.to_string()))?;
        if header.num_layers == 0 || header.dim == 0 {
            return Err(header_err("num_layers and dim must be positive"));
        }

        let mut expected_offset = 0u64;
        for entry in &header.sentences {
            if entry.offset != expected_offset {
                return Err(header_err(format!(
                    "sentence {}: offset {} but previous sentences end at {}",
                    entry.sent_id, entry.offset, expected_offset
                )));
            }
            let floats = header.num_layers as u64 * entry.token_count as u64 * header.dim as u64;
            expected_offset += 4 * floats;
        }
        let payload_end = header_end as u64 + expected_offset;
        let total = payload_end + 4;
        if found < total {
            return Err(ContainerError::Truncated {
                expected: total,
                found,
            });
        }
        if found > total {
            return Err(header_err(format!(
                "{} trailing bytes after checksum",
                found - total
            )));
        }
        let payload = &bytes[header_end..payload_end as usize];
        let stored = read_u32(bytes, payload_end as usize);
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(ContainerError::ChecksumMismatch { stored, computed });
        }

        let mut set = EmbeddingSet {
            model_name: header.model_name,
            num_layers: header.num_layers,
            dim: header.dim,
            contextual: header.contextual,
            include_special_tokens_in_pooling: header.include_special_tokens_in_pooling,
            sentences: Vec::with_capacity(header.sentences.len()),
            skipped: Vec::new(),
        };
        let mut seen = HashSet::new();
        for entry in header.sentences {
            if !seen.insert(entry.sent_id.clone()) {
                return Err(header_err(format!("duplicate sent_id {}", entry.sent_id)));
            }
            let start = entry.offset as usize;
            let len = set.sentence_len(entry.token_count);
            let vectors = payload[start..start + 4 * len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let s = SentenceEmbeddings {
                sent_id: entry.sent_id,
                token_count: entry.token_count,
                vectors,
            };
            check_finite(&s, set.dim)?;
            set.sentences.push(s);
        }
        Ok(set)
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn check_finite(s: &SentenceEmbeddings, dim: usize) -> Result<(), ContainerError> {
    match s.vectors.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(pos) => {
            let per_layer = s.token_count * dim;
            Err(ContainerError::NonFinite {
                sent_id: s.sent_id.clone(),
                layer: pos / per_layer,
                token: pos % per_layer / dim,
            })
        }
    }
}

pub fn skip_log_path(container: &Path) -> PathBuf {
    let mut name = container.as_os_str().to_owned();
    name.push(".skipped");
    PathBuf::from(name)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ContainerError + '_ {
    move |source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads and fully validates a container, plus its skip log if present.
pub fn read_container(path: &Path) -> Result<EmbeddingSet, ContainerError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut set = EmbeddingSet::from_bytes(&bytes)?;
    let log = skip_log_path(path);
    match fs::read_to_string(&log) {
        Ok(text) => set.skipped = parse_skip_log(&text),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(&log)(e)),
    }
    Ok(set)
}

/// Writes the container, and the skip log when `set.skipped` is non-empty.
pub fn write_container(set: &EmbeddingSet, path: &Path) -> Result<(), ContainerError> {
    let bytes = set.to_bytes()?;
    fs::write(path, bytes).map_err(io_err(path))?;
    let log = skip_log_path(path);
    if set.skipped.is_empty() {
        match fs::remove_file(&log) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(io_err(&log)(e)),
            _ => {}
        }
    } else {
        let text: String = set
            .skipped
            .iter()
            .map(|s| format!("{}\t{}\n", s.sent_id, s.reason))
            .collect();
        fs::write(&log, text).map_err(io_err(&log))?;
    }
    Ok(())
}

fn parse_skip_log(text: &str) -> Vec<SkippedSentence> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.split_once('\t') {
            Some((id, reason)) => SkippedSentence {
                sent_id: id.to_string(),
                reason: reason.to_string(),
            },
            None => SkippedSentence {
                sent_id: l.to_string(),
                reason: String::new(),
            },
        })
        .collect()
}
