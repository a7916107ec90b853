//! Binary weight files.
//!
//! Layout, all integers unsigned 32-bit little-endian:
//!
//! ```text
//! "UAVW" | version | tensor count | { name len | name utf-8 | rank | dims.. | f32 le data.. }*
//! ```

use serde::{Deserialize, Serialize};

use crate::{NnError, Parametrized, Real, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"UAVW";
pub const VERSION: u32 = 1;

/// JSON document stored next to a weight file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub architecture: serde_json::Value,
    pub init: String,
    #[serde(default)]
    pub optimizer: serde_json::Value,
}

impl Sidecar {
    pub fn new(architecture: serde_json::Value, optimizer: serde_json::Value) -> Self {
        Self {
            format_version: VERSION,
            architecture,
            init: "uniform(+-1/sqrt(fan_in)); lstm forget bias 1.0".into(),
            optimizer,
        }
    }
}

pub fn encode(tensors: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
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
    fn take(&mut self, n: usize, tensor: &str) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Truncated {
                offset: self.bytes.len(),
                tensor: tensor.to_string(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, tensor: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, tensor)?.try_into().unwrap()))
    }
}

/// Decodes a weight stream. `expected` names, when given, label tensors that
/// are missing from a truncated stream.
pub fn decode(bytes: &[u8], expected: Option<&[String]>) -> Result<Vec<(String, Tensor<f32>)>> {
    let label = |i: usize| {
        expected
            .and_then(|e| e.get(i).cloned())
            .unwrap_or_else(|| format!("#{i}"))
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "<header>").map_err(|_| NnError::BadMagic { offset: 0 })? != MAGIC {
        return Err(NnError::BadMagic { offset: 0 });
    }
    let version = r.u32("<header>")?;
    if version != VERSION {
        return Err(NnError::BadVersion { offset: 4, found: version });
    }
    let count = r.u32("<header>")? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let lab = label(i);
        let len = r.u32(&lab)? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len, &lab)?)
            .map_err(|_| NnError::BadName { offset: at })?
            .to_string();
        let rank = r.u32(&name)? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32(&name)? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let at = r.pos;
        let t = Tensor::new(dims, data).map_err(|_| NnError::BadName { offset: at })?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_weights<F: Real, P: Parametrized<F> + ?Sized>(net: &P) -> Vec<u8> {
    let named: Vec<(String, Tensor<f32>)> = net
        .param_names()
        .into_iter()
        .zip(net.params())
        .map(|(n, t)| (n, t.cast::<f32>()))
        .collect();
    encode(&named)
}

/// Overwrites the parameters of `net` with the contents of a weight stream,
/// checking names, order and dims.
pub fn load_weights_into<F: Real, P: Parametrized<F> + ?Sized>(net: &mut P, bytes: &[u8]) -> Result<()> {
    let names = net.param_names();
    let tensors = decode(bytes, Some(&names))?;
    if tensors.len() != names.len() {
        return Err(NnError::CountMismatch {
            expected: names.len(),
            found: tensors.len(),
        });
    }
    for ((expected, p), (found, t)) in names.iter().zip(net.params()).zip(&tensors) {
        if expected != found {
            return Err(NnError::NameMismatch {
                expected: expected.clone(),
                found: found.clone(),
            });
        }
        if p.dims() != t.dims() {
            return Err(NnError::DimMismatch {
                layer: expected.clone(),
                expected: p.dims().to_vec(),
                got: t.dims().to_vec(),
            });
        }
    }
    for (p, (_, t)) in net.params_mut().into_iter().zip(tensors) {
        *p = t.cast();
    }
    Ok(())
}
