//! Checkpoint serialization.
//!
//! Layout, all little-endian, byte-identical across platforms:
//!
//! ```text
//! magic    4 bytes  "HWCK"
//! version  u16      1
//! config   7 × u32  obs_dim, feat_dim, encoder_hidden, tcn_filters,
//!                   tcn_layers, kernel_size, num_steps
//! step     u64      optimizer step counter
//! params   f64 …    row-major, declared parameter order
//! adam m   f64 …    same order
//! adam v   f64 …    same order
//! ```

use std::path::Path;

use crate::autodiff::{AdamState, Matrix};

use super::{ModelConfig, ModelError, ModelState};

const MAGIC: &[u8; 4] = b"HWCK";
const VERSION: u16 = 1;

fn push_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint(state: &ModelState, path: &Path) -> Result<(), ModelError> {
    let cfg = &state.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for field in [
        cfg.obs_dim,
        cfg.feat_dim,
        cfg.encoder_hidden,
        cfg.tcn_filters,
        cfg.tcn_layers,
        cfg.kernel_size,
        cfg.num_steps,
    ] {
        buf.extend_from_slice(&(field as u32).to_le_bytes());
    }
    buf.extend_from_slice(&state.adam.step.to_le_bytes());
    for p in &state.params {
        push_matrix(&mut buf, p);
    }
    for m in &state.adam.m {
        push_matrix(&mut buf, m);
    }
    for v in &state.adam.v {
        push_matrix(&mut buf, v);
    }
    std::fs::write(path, buf)?;
    Ok(())
}

fn read_f64s(bytes: &[u8], pos: &mut usize, count: usize) -> Result<Vec<f64>, ModelError> {
    let need = count * 8;
    if *pos + need > bytes.len() {
        return Err(ModelError::Checkpoint("truncated parameter data".into()));
    }
    let out = bytes[*pos..*pos + need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *pos += need;
    Ok(out)
}

fn read_matrices(
    bytes: &[u8],
    pos: &mut usize,
    shapes: &[(usize, usize)],
) -> Result<Vec<Matrix>, ModelError> {
    shapes
        .iter()
        .map(|&(rows, cols)| {
            let values = read_f64s(bytes, pos, rows * cols)?;
            Matrix::from_shape_vec((rows, cols), values)
                .map_err(|e| ModelError::Checkpoint(e.to_string()))
        })
        .collect()
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState, ModelError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 + 2 + 7 * 4 + 8 {
        return Err(ModelError::Checkpoint("file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut fields = [0usize; 7];
    for (i, field) in fields.iter_mut().enumerate() {
        let off = 6 + i * 4;
        *field = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    }
    let config = ModelConfig {
        obs_dim: fields[0],
        feat_dim: fields[1],
        encoder_hidden: fields[2],
        tcn_filters: fields[3],
        tcn_layers: fields[4],
        kernel_size: fields[5],
        num_steps: fields[6],
    };
    config
        .validate()
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut pos = 6 + 7 * 4;
    let step = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
    pos += 8;
    let shapes = config.param_shapes();
    let params = read_matrices(&bytes, &mut pos, &shapes)?;
    let m = read_matrices(&bytes, &mut pos, &shapes)?;
    let v = read_matrices(&bytes, &mut pos, &shapes)?;
    if pos != bytes.len() {
        return Err(ModelError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - pos
        )));
    }
    Ok(ModelState {
        config,
        params,
        adam: AdamState { step, m, v },
    })
}
