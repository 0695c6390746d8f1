//! Checkpoint text format.
//!
//! A single JSON document:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "meta": {"seed": 0, "training_epochs": 0, "tag": ""},
//!   "specs": [{"in_dim": 2, "out_dim": 2, "activation": "identity"}],
//!   "layers": [{"w": "<base64>", "b": "<base64>"}]
//! }
//! ```
//!
//! `w` and `b` are base64 (standard alphabet, padded) of little-endian
//! IEEE-754 doubles, `w` in row-major order.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, LayerSpec, LayerWeights, Meta};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaRepr {
    seed: u64,
    training_epochs: u64,
    tag: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRepr {
    w: String,
    b: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRepr {
    format_version: u64,
    meta: MetaRepr,
    specs: Vec<LayerSpec>,
    layers: Vec<LayerRepr>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str, what: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Corrupt(format!("{what}: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Corrupt(format!(
            "{what}: {} bytes is not a whole number of doubles",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Corrupt(format!("{what}: non-finite value")));
    }
    Ok(values)
}

pub fn checkpoint_to_string(ckpt: &Checkpoint) -> String {
    let repr = FileRepr {
        format_version: ckpt.meta.format_version,
        meta: MetaRepr {
            seed: ckpt.meta.seed,
            training_epochs: ckpt.meta.training_epochs,
            tag: ckpt.meta.tag.clone(),
        },
        specs: ckpt.specs.clone(),
        layers: ckpt
            .layers
            .iter()
            .map(|l| LayerRepr {
                w: encode(l.w.data()),
                b: encode(&l.b),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&repr).expect("plain data serializes");
    s.push('\n');
    s
}

/// Parses a checkpoint document. The version is checked before anything
/// else so a future format is reported as such rather than as corruption.
pub fn checkpoint_from_str(text: &str) -> Result<Checkpoint> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Corrupt("missing format_version".into()))?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let repr: FileRepr = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    if repr.specs.len() != repr.layers.len() {
        return Err(Error::SpecMismatch(format!(
            "{} specs but {} layers",
            repr.specs.len(),
            repr.layers.len()
        )));
    }

    let mut layers = Vec::with_capacity(repr.layers.len());
    for (l, (spec, layer)) in repr.specs.iter().zip(&repr.layers).enumerate() {
        let w = decode(&layer.w, &format!("layer {l} w"))?;
        let b = decode(&layer.b, &format!("layer {l} b"))?;
        if w.len() != spec.out_dim * spec.in_dim || b.len() != spec.out_dim {
            return Err(Error::SpecMismatch(format!(
                "layer {l}: {} weights / {} biases for a {}x{} spec",
                w.len(),
                b.len(),
                spec.out_dim,
                spec.in_dim
            )));
        }
        let w = Matrix::new(spec.out_dim, spec.in_dim, w)
            .map_err(|e| Error::SpecMismatch(format!("layer {l}: {e}")))?;
        layers.push(LayerWeights { w, b });
    }
    Checkpoint::new(
        repr.specs,
        layers,
        Meta {
            format_version: version,
            seed: repr.meta.seed,
            training_epochs: repr.meta.training_epochs,
            tag: repr.meta.tag,
        },
    )
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Corrupt(e.to_string()))?;
    checkpoint_from_str(&text)
}
