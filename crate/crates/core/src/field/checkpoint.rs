//! Binary checkpoint of network parameters.
//!
//! Layout (little-endian): magic `MVASCKPT`, u32 version, u32 layer count,
//! u32 hidden width, u32 skip layer (`u32::MAX` for none), u32 frequency
//! count, f64 softplus beta, f64 init radius, u32 count of layer records,
//! per layer u32 input and u32 output width, u64 parameter count, then the
//! parameters as f64 in declared layer order (weights row-major, then bias).

use std::fs;
use std::path::Path;

use super::mlp::{Architecture, FieldParams};
use crate::error::{Error, Result};
use crate::io::ByteReader;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MVASCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const NO_SKIP: u32 = u32::MAX;

pub fn encode_checkpoint(params: &FieldParams) -> Vec<u8> {
    let arch = params.architecture();
    let dims = arch.layer_dims();
    let mut out = Vec::with_capacity(64 + dims.len() * 8 + params.len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        arch.layers as u32,
        arch.hidden_width as u32,
        arch.skip_layer.map_or(NO_SKIP, |s| s as u32),
        arch.frequencies as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&arch.beta.to_le_bytes());
    out.extend_from_slice(&arch.init_radius.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for (i, o) in dims {
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(o as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params.as_slice() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<FieldParams, String> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let layers = r.u32()? as usize;
    let hidden_width = r.u32()? as usize;
    let skip = r.u32()?;
    let frequencies = r.u32()? as usize;
    let beta = r.f64()?;
    let init_radius = r.f64()?;
    let arch = Architecture {
        hidden_width,
        layers,
        skip_layer: (skip != NO_SKIP).then_some(skip as usize),
        frequencies,
        beta,
        init_radius,
    };
    arch.validate().map_err(|e| e.to_string())?;
    let record_count = r.u32()? as usize;
    let expected = arch.layer_dims();
    if record_count != expected.len() {
        return Err(format!("{record_count} layer records for {layers} layers"));
    }
    for (l, (i, o)) in expected.into_iter().enumerate() {
        let (ri, ro) = (r.u32()? as usize, r.u32()? as usize);
        if (ri, ro) != (i, o) {
            return Err(format!(
                "layer {l} is {ri}x{ro}, architecture implies {i}x{o}"
            ));
        }
    }
    let count = r.u64()? as usize;
    if count != arch.parameter_count() {
        return Err(format!(
            "{count} parameters, architecture implies {}",
            arch.parameter_count()
        ));
    }
    let data = (0..count)
        .map(|_| r.f64())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    r.finish()?;
    FieldParams::from_vec(arch, data).map_err(|e| e.to_string())
}

pub fn write_checkpoint(path: &Path, params: &FieldParams) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<FieldParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|m| Error::format(path, m))
}
