//! Binary model files: `PDEF`, version u16, activation u8, layer count u8,
//! layer sizes as u32, then per layer the row-major weights and the bias as
//! little-endian f64. All integers are little-endian.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PDEF";
const VERSION: u16 = 1;

pub fn to_bytes(net: &Mlp) -> Vec<u8> {
    let sizes = net.layer_sizes();
    let mut out = Vec::with_capacity(8 + 4 * sizes.len() + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(net.activation().tag());
    out.push(sizes.len() as u8);
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    let mut flat = Vec::new();
    net.write_params(&mut flat);
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Mlp> {
    let bad = |msg: &str| Error::format(path, msg);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing PDEF magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let activation = Activation::from_tag(bytes[6]).ok_or_else(|| bad("unknown activation tag"))?;
    let n_layers = bytes[7] as usize;
    let mut pos = 8;
    if n_layers < 2 || bytes.len() < pos + 4 * n_layers {
        return Err(bad("truncated layer table"));
    }
    let sizes: Vec<usize> = (0..n_layers)
        .map(|i| u32::from_le_bytes(bytes[pos + 4 * i..pos + 4 * i + 4].try_into().unwrap()) as usize)
        .collect();
    pos += 4 * n_layers;
    let count = super::mlp::param_count(&sizes);
    if bytes.len() != pos + 8 * count {
        return Err(bad(&format!("expected {} parameter bytes, found {}", 8 * count, bytes.len() - pos)));
    }
    let flat: Vec<f64> = bytes[pos..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut k = 0;
    for l in 0..n_layers - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        weights.push(DMatrix::from_row_slice(fan_out, fan_in, &flat[k..k + fan_in * fan_out]));
        k += fan_in * fan_out;
        biases.push(DVector::from_column_slice(&flat[k..k + fan_out]));
        k += fan_out;
    }
    Mlp::from_parts(sizes, weights, biases, activation).map_err(|e| bad(&e.to_string()))
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
