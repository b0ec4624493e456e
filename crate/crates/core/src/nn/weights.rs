//! Self-describing weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "LPCNNWTS"
//! version    u8       WEIGHTS_VERSION
//! desc_len   u32
//! desc       desc_len bytes of JSON: {"architecture": ..., "rng_seed": ...}
//! n_tensors  u32      two per parameterised layer (weight, bias)
//! per tensor u32 element count, then that many f32 values
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use super::real::Real;
use super::NnError;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"LPCNNWTS";
pub const WEIGHTS_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Descriptor {
    architecture: Architecture,
    rng_seed: u64,
}

pub fn encode_weights<T: Real>(net: &Network<T>) -> Vec<u8> {
    let desc = serde_json::to_vec(&Descriptor {
        architecture: net.architecture().clone(),
        rng_seed: net.rng_seed,
    })
    .expect("descriptor serialises");
    let mut out = Vec::with_capacity(16 + desc.len() + 4 * net.num_params());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(&desc);
    let tensors: Vec<&[T]> = net
        .layers
        .iter()
        .filter_map(|l| l.params())
        .flat_map(|(w, b)| [w, b])
        .collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u32).to_le_bytes());
        for v in t {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| NnError::CorruptFile(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_weights<T: Real>(bytes: &[u8]) -> Result<Network<T>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != WEIGHTS_MAGIC {
        return Err(NnError::CorruptFile("bad magic".into()));
    }
    let version = r.take(1)?[0];
    if version != WEIGHTS_VERSION {
        return Err(NnError::CorruptFile(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let desc: Descriptor =
        serde_json::from_slice(r.take(len)?).map_err(|e| NnError::CorruptFile(format!("descriptor: {e}")))?;
    let mut net = Network::<T>::new(desc.architecture, desc.rng_seed)
        .map_err(|e| NnError::CorruptFile(format!("descriptor: {e}")))?;
    let expected = net.layers.iter().filter(|l| l.params().is_some()).count() * 2;
    let count = r.u32()? as usize;
    if count != expected {
        return Err(NnError::ArchMismatch(format!(
            "file holds {count} parameter tensors, descriptor implies {expected}"
        )));
    }
    let mut index = 0;
    for layer in &mut net.layers {
        let Some((w, b, _, _)) = layer.params_and_grads_mut() else {
            continue;
        };
        for dst in [w, b] {
            let n = r.u32()? as usize;
            if n != dst.len() {
                return Err(NnError::ArchMismatch(format!(
                    "tensor {index} has {n} values, descriptor implies {}",
                    dst.len()
                )));
            }
            let raw = r.take(4 * n)?;
            for (d, c) in dst.iter_mut().zip(raw.chunks_exact(4)) {
                *d = T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
            }
            index += 1;
        }
    }
    if r.pos != bytes.len() {
        return Err(NnError::CorruptFile(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(net)
}

pub fn save_weights<T: Real>(net: &Network<T>, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, encode_weights(net))?;
    Ok(())
}

pub fn load_weights<T: Real>(path: &Path) -> Result<Network<T>, NnError> {
    decode_weights(&std::fs::read(path)?)
}

/// Loads weights and insists they were saved for `expected`.
pub fn load_weights_expecting<T: Real>(path: &Path, expected: &Architecture) -> Result<Network<T>, NnError> {
    let net = load_weights(path)?;
    let got = net.architecture();
    if got != expected {
        let what = if got.input != expected.input {
            format!("input {:?} vs expected {:?}", got.input, expected.input)
        } else if got.preprocessing != expected.preprocessing {
            format!(
                "pre-processing {:?} vs expected {:?}",
                got.preprocessing, expected.preprocessing
            )
        } else {
            format!("{} layers vs expected {}", got.layers.len(), expected.layers.len())
        };
        return Err(NnError::ArchMismatch(what));
    }
    Ok(net)
}
