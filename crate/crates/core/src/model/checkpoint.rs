//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic   4 bytes  b"MGCK"
//! version u32      currently 1
//! hdr_len u32      byte length of the JSON-encoded ModelConfig
//! header  hdr_len  serde_json of ModelConfig
//! n       u32      tensor count
//! n times:
//!   name_len u32, name bytes (UTF-8)
//!   rows u32, cols u32
//!   rows*cols f32 values, little-endian, row-major
//! ```
//! Values are stored as f32; in-memory math is f64, so a save/load round
//! trip quantizes parameters to f32 precision.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Model, ModelConfig, ModelParams};

const MAGIC: &[u8; 4] = b"MGCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt header: {0}")]
    Header(String),
    #[error("tensor {name}: expected {want_rows}x{want_cols}, found {rows}x{cols}")]
    TensorShape {
        name: String,
        want_rows: usize,
        want_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("tensor list does not match the configuration (at {0})")]
    TensorList(String),
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Write a model to disk.
pub fn save(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let header = serde_json::to_vec(&model.config)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    write_u32(&mut w, header.len() as u32)?;
    w.write_all(&header)?;
    let tensors = model.params.tensors();
    write_u32(&mut w, tensors.len() as u32)?;
    for (name, mat) in tensors {
        write_u32(&mut w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        write_u32(&mut w, mat.rows as u32)?;
        write_u32(&mut w, mat.cols as u32)?;
        let mut bytes = Vec::with_capacity(mat.len() * 4);
        for &v in mat.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a model from disk.
pub fn load(path: &Path) -> Result<Model, CheckpointError> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let hdr_len = read_u32(&mut r)? as usize;
    let mut header = vec![0u8; hdr_len];
    r.read_exact(&mut header)?;
    let config: ModelConfig = serde_json::from_slice(&header)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    config
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut params = ModelParams::zeros(&config);
    let n = read_u32(&mut r)? as usize;
    let expected = params.tensors().len();
    if n != expected {
        return Err(CheckpointError::TensorList(format!(
            "expected {expected} tensors, file has {n}"
        )));
    }
    let mut views = params.tensors_mut();
    for (slot_name, mat) in views.iter_mut() {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name =
            String::from_utf8(name).map_err(|_| CheckpointError::TensorList("name".into()))?;
        if &name != slot_name {
            return Err(CheckpointError::TensorList(format!(
                "expected tensor {slot_name}, found {name}"
            )));
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        if rows != mat.rows || cols != mat.cols {
            return Err(CheckpointError::TensorShape {
                name,
                want_rows: mat.rows,
                want_cols: mat.cols,
                rows,
                cols,
            });
        }
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes)?;
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            mat.data[i] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        }
    }
    drop(views);
    Ok(Model { config, params })
}

/// Quantize parameters to f32 and back, matching a save/load round trip
/// without touching disk. Used to keep in-memory training state consistent
/// with what a reloaded checkpoint would contain.
pub fn quantize_f32(params: &mut ModelParams) {
    for (_, m) in params.tensors_mut() {
        for v in m.data.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domains, stream_rng};

    #[test]
    fn save_load_round_trip() {
        let cfg = ModelConfig::tiny(12);
        let model = Model::new(cfg, &mut stream_rng(3, domains::INIT, 0)).unwrap();
        let dir = std::env::temp_dir().join(format!("mofgen-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ckpt");
        save(&model, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        let mut quantized = model.clone();
        quantize_f32(&mut quantized.params);
        assert_eq!(loaded.params, quantized.params);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join(format!("mofgen-ckpt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::BadMagic)));
        std::fs::remove_dir_all(&dir).ok();
    }
}
