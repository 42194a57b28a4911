//! Binary model checkpoint.
//!
//! Layout, all integers `u64` and all floats `f64`, little endian:
//! magic, variant byte, input/hidden/layers/kernel sizes, normalization
//! mean and std (length `D` each), tensor count, then per tensor its rows,
//! cols and row-major values.

use std::fs;
use std::path::Path;

use tempseg_core::embednet::{Architecture, ModelParams, Normalization, Variant};
use tempseg_core::Matrix;

use crate::error::{CliError, Result};

pub const CHECKPOINT_NAME: &str = "model.bin";
const MAGIC: &[u8; 8] = b"TSEGMDL\x01";

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Ssten => 0,
        Variant::Tcn => 1,
        Variant::Mlp => 2,
    }
}

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let arch = params.arch();
    let norm = params.normalization();
    let mut out = Vec::with_capacity(64 + 8 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.push(variant_code(arch.variant));
    for n in [arch.input_dim, arch.hidden_dim, arch.layers_per_stage, arch.kernel_size, norm.mean.len()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in norm.mean.iter().chain(&norm.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(params.tensors().len() as u64).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| format!("size {v} does not fit in memory"))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ModelParams, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err("not a model checkpoint (bad magic)".into());
    }
    let variant = match r.take(1)?[0] {
        0 => Variant::Ssten,
        1 => Variant::Tcn,
        2 => Variant::Mlp,
        other => return Err(format!("unknown variant code {other}")),
    };
    let arch = Architecture {
        variant,
        input_dim: r.u64()?,
        hidden_dim: r.u64()?,
        layers_per_stage: r.u64()?,
        kernel_size: r.u64()?,
    };
    let d = r.u64()?;
    let norm = Normalization { mean: r.f64s(d)?, std: r.f64s(d)? };
    let count = r.u64()?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let (rows, cols) = (r.u64()?, r.u64()?);
        let data = r.f64s(rows.checked_mul(cols).ok_or("size overflow")?)?;
        tensors.push(Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())?);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    ModelParams::from_parts(arch, norm, tensors).map_err(|e| e.to_string())
}

pub fn save_model(path: &Path, params: &ModelParams) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, encode(params)).map_err(|e| CliError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::format(path, m))
}
