//! Checkpoint layout (little-endian):
//!
//! ```text
//! b"RHYCKPT1"
//! u32 config_len, config text (key = value lines)
//! u32 tensor_count
//! per tensor: u32 name_len, name, u32 ndim, u32 dims[ndim], f32 data[Π dims]
//! ```

use std::path::Path;

use super::config::ExperimentConfig;
use super::model::Model;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RHYCKPT1";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in a u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    let config = model.config.to_text();
    put_u32(&mut out, config.len())?;
    out.extend_from_slice(config.as_bytes());
    put_u32(&mut out, model.store.len())?;
    for (name, tensor) in model.store.iter() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, tensor.shape().len())?;
        for &d in tensor.shape() {
            put_u32(&mut out, d)?;
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(self.path, format!("truncated {what}")));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")) as usize)
    }

    fn text(&mut self, n: usize, what: &str) -> Result<&'a str> {
        let b = self.take(n, what)?;
        std::str::from_utf8(b).map_err(|_| Error::format(self.path, format!("{what} is not utf-8")))
    }
}

/// Rebuilds the model described by the stored config and loads its
/// parameters. `path` is only used in error messages.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let n = r.u32("config length")?;
    let config = ExperimentConfig::from_text(r.text(n, "config")?)?;
    let (Some(dim), Some(classes)) = (config.input_dim, config.n_classes) else {
        return Err(Error::format(path, "config lacks input_dim or n_classes"));
    };
    let mut model = Model::new(&config, dim, classes)?;

    let count = r.u32("tensor count")?;
    if count != model.store.len() {
        return Err(Error::format(path, format!("{count} tensors stored, model has {}", model.store.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let len = r.u32("tensor name length")?;
        let name = r.text(len, "tensor name")?;
        if name != model.store.names()[i] {
            return Err(Error::format(path, format!("tensor {i} is '{name}', expected '{}'", model.store.names()[i])));
        }
        let ndim = r.u32("tensor rank")?;
        let shape: Vec<usize> = (0..ndim).map(|_| r.u32("tensor shape")).collect::<Result<_>>()?;
        let elems = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let Some(elems) = elems.filter(|e| e.checked_mul(4).is_some()) else {
            return Err(Error::format(path, format!("tensor '{name}' shape overflows")));
        };
        let data =
            r.take(elems * 4, "tensor data")?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| Error::format(path, e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after the last tensor"));
    }
    model.store.load_tensors(tensors).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
