//! `MRN1` checkpoints: 4-byte magic, u32 LE manifest length, JSON manifest,
//! then every parameter as raw little-endian `f32` in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::Model;
use crate::error::{Error, Result};
use crate::ndsignal::{Grid, Real, Shape};

const MAGIC: &[u8; 4] = b"MRN1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    /// `(batch, length, channels)` of the stored grid.
    pub shape: [usize; 3],
    /// Byte offset from the start of the data section.
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dtype: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    /// Free-form run information (training config, epoch count, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn write_checkpoint<T: Real, W: Write>(mut w: W, model: &Model<T>, meta: serde_json::Value) -> Result<()> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for p in model.params().iter() {
        let s = p.value.shape();
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: [s.batch, s.len, s.channels],
            offset,
            trainable: p.trainable,
        });
        offset += 4 * p.value.numel();
    }
    let manifest = Manifest {
        dtype: "f32".into(),
        config: model.config().clone(),
        tensors,
        meta,
    };
    let json = serde_json::to_vec(&manifest)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("manifest larger than 4 GiB".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for p in model.params().iter() {
        for v in p.value.data() {
            let v = v.to_f32().expect("finite parameter");
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Model<f32>, Manifest)> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)
        .map_err(|_| Error::Checkpoint("file shorter than the 8-byte header".into()))?;
    if &head[..4] != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {:?}, expected \"MRN1\"", &head[..4])));
    }
    let len = u32::from_le_bytes(head[4..].try_into().unwrap()) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| Error::Checkpoint(format!("manifest truncated (declared {len} bytes)")))?;
    let manifest: Manifest =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    if manifest.dtype != "f32" {
        return Err(Error::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    let mut model = Model::<f32>::new(manifest.config.clone(), 0)?;
    if model.params().len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, the configured model has {}",
            manifest.tensors.len(),
            model.params().len()
        )));
    }
    for t in &manifest.tensors {
        let param = model
            .params_mut()
            .by_name_mut(&t.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{}`", t.name)))?;
        let shape = Shape::new(t.shape[0], t.shape[1], t.shape[2]);
        if shape != param.value.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` has shape {shape}, model expects {}",
                t.name,
                param.value.shape()
            )));
        }
        let end = t.offset + 4 * shape.numel();
        let bytes = data.get(t.offset..end).ok_or_else(|| {
            Error::Checkpoint(format!("tensor `{}` bytes {}..{end} past end of file", t.name, t.offset))
        })?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        param.value = Grid::new(shape, values).map_err(|_| Error::Checkpoint(format!("tensor `{}` holds NaN/Inf", t.name)))?;
    }
    Ok((model, manifest))
}

pub fn save_checkpoint<T: Real>(path: &Path, model: &Model<T>, meta: serde_json::Value) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, Manifest)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
