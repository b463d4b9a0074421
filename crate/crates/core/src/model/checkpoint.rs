//! Checkpoint file: magic `AGCK`, a little-endian u32 header length, a JSON
//! header (architecture, vocabulary, tensor names and shapes) and then every
//! tensor as raw little-endian f32 values in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::attributes::AttributeVocabulary;
use crate::error::{Error, Result};
use crate::nn::{ParamSet, Real};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AGCK";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: AttributeVocabulary,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint<F: Real>(model: &Model<F>, path: &Path) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        tensors: model.params.tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * model.params.scalar_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &model.params.tensors {
        for &v in &t.data {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Model<F>> {
    let bytes = fs::read(path)?;
    let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    let mut model = Model::new(header.config, header.vocab.clone())?;
    if header.tensors.len() != model.params.len() {
        return Err(bad("tensor count does not match architecture"));
    }
    let mut params = ParamSet::new();
    let mut offset = 8 + len;
    for (entry, fresh) in header.tensors.iter().zip(&model.params.tensors) {
        if entry.name != fresh.name || entry.shape != fresh.shape {
            return Err(Error::Shape {
                expected: format!("{}{:?}", fresh.name, fresh.shape),
                got: format!("{}{:?}", entry.name, entry.shape),
            });
        }
        let n: usize = entry.shape.iter().product();
        let raw = bytes.get(offset..offset + 4 * n).ok_or_else(|| bad("truncated tensor data"))?;
        let data = raw.chunks_exact(4).map(|c| F::of_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect();
        params.add(&entry.name, entry.shape.clone(), data);
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    model = model.with_params(params)?;
    Ok(model)
}
