//! Versioned binary format for trained model parameters.
//!
//! Layout (little-endian): magic `AFNN`, format version (u32), model kind
//! (length-prefixed UTF-8), layer descriptors (kind, activation, fan-in,
//! fan-out), normalization running statistics, then named parameter tensors.
//! Loading validates the magic, version, expected model kind, positivity of
//! running variances, and that the payload ends exactly at the last tensor,
//! so truncated files and files from a different architecture fail with a
//! format error instead of silently mis-slotting weights.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::tape::ActKind;
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"AFNN";
const VERSION: u32 = 1;

/// Structural layer kinds recorded in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Norm,
    Lstm,
}

impl LayerKind {
    fn code(self) -> u8 {
        match self {
            LayerKind::Dense => 0,
            LayerKind::Norm => 1,
            LayerKind::Lstm => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => LayerKind::Dense,
            1 => LayerKind::Norm,
            2 => LayerKind::Lstm,
            other => return Err(Error::format(format!("unknown layer kind code {other}"))),
        })
    }
}

/// One layer's structural description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub activation: ActKind,
    pub fan_in: u32,
    pub fan_out: u32,
}

/// Running statistics of one normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// A serialized model: architecture descriptors plus named parameter
/// tensors and normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub model_kind: String,
    pub layers: Vec<LayerDesc>,
    pub norms: Vec<BnStats>,
    pub tensors: Vec<(String, Tensor)>,
}

impl NetworkParams {
    /// Looks up a tensor by name.
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| {
                Error::format(format!(
                    "model {:?} has no tensor named {name:?}",
                    self.model_kind
                ))
            })
    }

    pub fn validate(&self) -> Result<()> {
        for bn in &self.norms {
            if bn.mean.len() != bn.var.len() {
                return Err(Error::format(
                    "normalization mean and variance lengths differ",
                ));
            }
            if bn.var.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::format("running variance must be positive"));
            }
            if bn.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("running mean must be finite"));
            }
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes model parameters.
pub fn save_params(params: &NetworkParams) -> Result<Vec<u8>> {
    params.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, &params.model_kind);
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for l in &params.layers {
        out.push(l.kind.code());
        out.push(l.activation.code());
        out.extend_from_slice(&l.fan_in.to_le_bytes());
        out.extend_from_slice(&l.fan_out.to_le_bytes());
    }
    out.extend_from_slice(&(params.norms.len() as u32).to_le_bytes());
    for bn in &params.norms {
        put_f64s(&mut out, &bn.mean);
        put_f64s(&mut out, &bn.var);
    }
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for (name, t) in &params.tensors {
        put_str(&mut out, name);
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(format!(
                "truncated model file: needed {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(8 * n, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let b = self.take(len, what)?;
        core::str::from_utf8(b)
            .map(|s| s.into())
            .map_err(|_| Error::format(format!("{what}: invalid UTF-8")))
    }
}

/// Deserializes model parameters, checking the file is of `expected_kind`.
pub fn load_params(bytes: &[u8], expected_kind: &str) -> Result<NetworkParams> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(format!(
            "bad magic {magic:?}: not a model parameter file"
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported model format version {version} (expected {VERSION})"
        )));
    }
    let model_kind = r.string("model kind")?;
    if model_kind != expected_kind {
        return Err(Error::format(format!(
            "model kind mismatch: file holds {model_kind:?}, expected {expected_kind:?}"
        )));
    }
    let n_layers = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let kind = LayerKind::from_code(r.u8(&format!("layer {i} kind"))?)?;
        let activation = ActKind::from_code(r.u8(&format!("layer {i} activation"))?)?;
        let fan_in = r.u32(&format!("layer {i} fan-in"))?;
        let fan_out = r.u32(&format!("layer {i} fan-out"))?;
        layers.push(LayerDesc {
            kind,
            activation,
            fan_in,
            fan_out,
        });
    }
    let n_norms = r.u32("norm count")? as usize;
    let mut norms = Vec::with_capacity(n_norms);
    for i in 0..n_norms {
        let n_mean = r.u32(&format!("norm {i} mean length"))? as usize;
        let mean = r.f64s(n_mean, &format!("norm {i} means"))?;
        let n_var = r.u32(&format!("norm {i} var length"))? as usize;
        let var = r.f64s(n_var, &format!("norm {i} vars"))?;
        norms.push(BnStats { mean, var });
    }
    let n_tensors = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for i in 0..n_tensors {
        let name = r.string(&format!("tensor {i} name"))?;
        let rows = r.u32(&format!("tensor {i} rows"))? as usize;
        let cols = r.u32(&format!("tensor {i} cols"))? as usize;
        let values = r.f64s(rows * cols, &format!("tensor {name:?} values"))?;
        tensors.push((name, Tensor { rows, cols, values }));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after model payload",
            bytes.len() - r.pos
        )));
    }
    let params = NetworkParams {
        model_kind,
        layers,
        norms,
        tensors,
    };
    params.validate()?;
    Ok(params)
}
