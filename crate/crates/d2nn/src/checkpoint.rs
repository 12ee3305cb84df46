//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "D2NN" | u32 version | u32 header length | header (UTF-8 JSON)
//!        | masks as f64, row-major, declaration order
//!        | when header.optimizer is present: Adam m, then Adam v, same order
//! ```

use std::io::Write;
use std::path::Path;

use d2nn_core::network::{build_model, ArchConfig, MultiTaskD2NN};
use d2nn_core::train::{AdamState, GradientSet, TrainConfig, UpdateRule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"D2NN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub epochs: usize,
    pub update_rule: UpdateRule,
    /// SHA-256 of the training config's JSON, hex.
    pub cfg_hash: String,
    pub train: Option<TrainConfig>,
}

impl Metadata {
    pub fn untrained() -> Self {
        Self {
            epochs: 0,
            update_rule: UpdateRule::default(),
            cfg_hash: String::new(),
            train: None,
        }
    }

    pub fn for_training(cfg: &TrainConfig, epochs: usize) -> Self {
        Self {
            epochs,
            update_rule: cfg.update_rule,
            cfg_hash: config_hash(cfg),
            train: Some(cfg.clone()),
        }
    }
}

pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: ArchConfig,
    mask_shapes: Vec<(usize, usize)>,
    metadata: Metadata,
    optimizer: Option<OptimizerHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MultiTaskD2NN,
    pub metadata: Metadata,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(model: MultiTaskD2NN, metadata: Metadata) -> Self {
        Self {
            model,
            metadata,
            optimizer: None,
        }
    }
}

fn push_f64s<'a>(out: &mut Vec<u8>, values: impl Iterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let model = &ckpt.model;
    let header = Header {
        arch: model.arch(0),
        mask_shapes: model.masks().map(|m| m.shape()).collect(),
        metadata: ckpt.metadata.clone(),
        optimizer: ckpt.optimizer.as_ref().map(|s| OptimizerHeader { step: s.step }),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * model.parameter_count() * 3);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header exceeds 4 GiB".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    push_f64s(&mut out, model.masks().flat_map(|m| m.theta()));
    if let Some(state) = &ckpt.optimizer {
        if !state.m.matches(model) || !state.v.matches(model) {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        push_f64s(&mut out, state.m.layers().flatten());
        push_f64s(&mut out, state.v.layers().flatten());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                self.at,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, at: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let len = cur.u32("header length")? as usize;
    let header: Header = serde_json::from_slice(cur.take(len, "header")?)?;

    let mut model = build_model(&header.arch)?;
    let shapes: Vec<(usize, usize)> = model.masks().map(|m| m.shape()).collect();
    if shapes != header.mask_shapes {
        return Err(Error::Checkpoint(format!(
            "architecture implies mask shapes {shapes:?} but the header lists {:?}",
            header.mask_shapes
        )));
    }
    let n = model.parameter_count();
    let read_set = |cur: &mut Cursor<'_>, what: &str| -> Result<Vec<f64>> {
        let v = cur.f64s(n, what)?;
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Checkpoint(format!("non-finite value in {what} at parameter {i}")));
        }
        Ok(v)
    };
    let theta = read_set(&mut cur, "masks")?;
    let optimizer = match &header.optimizer {
        Some(h) => {
            let m = read_set(&mut cur, "adam first moment")?;
            let v = read_set(&mut cur, "adam second moment")?;
            let mut state = AdamState::new(&model);
            fill(&mut state.m, &m);
            fill(&mut state.v, &v);
            state.step = h.step;
            Some(state)
        }
        None => None,
    };
    if cur.at != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after offset {}",
            bytes.len() - cur.at,
            cur.at
        )));
    }
    let mut offset = 0;
    for mask in model.masks_mut() {
        let k = mask.theta().len();
        mask.theta_mut().copy_from_slice(&theta[offset..offset + k]);
        offset += k;
    }
    Ok(Checkpoint {
        model,
        metadata: header.metadata,
        optimizer,
    })
}

fn fill(set: &mut GradientSet, values: &[f64]) {
    let mut offset = 0;
    for layer in set.layers_mut() {
        let k = layer.len();
        layer.copy_from_slice(&values[offset..offset + k]);
        offset += k;
    }
}

/// Writes via a temporary file and rename so readers never see a partial file.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(ckpt)?;
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
