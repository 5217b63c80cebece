//! Binary checkpoint serialization.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic            7 bytes  "DNDNET1"
//! layer_count      u32
//! per layer        u32 in_dim, u32 out_dim, u8 activation (0 relu, 1 identity)
//! embed_dim        u32
//! num_identities   u32
//! parameters       f64 arrays: per layer the row-major weight then the bias,
//!                  then the row-major head weight
//! ```
//!
//! Serialization preserves every bit of every parameter, so a load followed
//! by a save reproduces the file exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{Activation, EmbeddingNet, Layer};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"DNDNET1";

impl EmbeddingNet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.param_count() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.layers().len() as u32).to_le_bytes());
        for layer in self.layers() {
            out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
            out.push(match layer.activation {
                Activation::Relu => 0,
                Activation::Identity => 1,
            });
        }
        out.extend_from_slice(&(self.embed_dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.num_identities().to_le_bytes());
        for layer in self.layers() {
            for v in layer.weight.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in &layer.bias {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in self.head_weight().data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::parse(bytes, "<memory>")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::parse(&bytes, &path.display().to_string())
    }

    fn parse(bytes: &[u8], path: &str) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        let magic = r.take(CHECKPOINT_MAGIC.len(), "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(r.bad_at(0, format!("expected magic {CHECKPOINT_MAGIC:?}")));
        }
        let layer_count = r.u32("layer count")? as usize;
        if layer_count == 0 {
            return Err(r.bad("layer count must be positive".into()));
        }
        if layer_count > MAX_LAYERS {
            return Err(r.bad(format!("layer count {layer_count} exceeds limit {MAX_LAYERS}")));
        }
        let mut shapes = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let in_dim = r.u32("layer in_dim")? as usize;
            let out_dim = r.u32("layer out_dim")? as usize;
            let act = match r.u8("activation tag")? {
                0 => Activation::Relu,
                1 => Activation::Identity,
                other => return Err(r.bad(format!("unknown activation tag {other}"))),
            };
            if in_dim == 0 || out_dim == 0 {
                return Err(r.bad("layer dimensions must be positive".into()));
            }
            shapes.push((in_dim, out_dim, act));
        }
        let embed_dim = r.u32("embed_dim")? as usize;
        let num_identities = r.u32("num_identities")?;
        if embed_dim != shapes[layer_count - 1].1 {
            return Err(r.bad(format!(
                "embed_dim {embed_dim} does not match final layer width {}",
                shapes[layer_count - 1].1
            )));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for &(in_dim, out_dim, act) in &shapes {
            let weight = Matrix::from_vec(out_dim, in_dim, r.f64s(in_dim * out_dim, "layer weight")?);
            let bias = r.f64s(out_dim, "layer bias")?;
            layers.push(Layer {
                weight,
                bias,
                activation: act,
            });
        }
        let head = Matrix::from_vec(
            num_identities as usize,
            embed_dim,
            r.f64s(num_identities as usize * embed_dim, "head weight")?,
        );
        if !r.is_empty() {
            return Err(r.bad(format!("{} trailing bytes", r.remaining())));
        }
        EmbeddingNet::new(layers, head)
    }
}

const MAX_LAYERS: usize = 1024;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], path: &'a str) -> Self {
        Reader { bytes, pos: 0, path }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.bad(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(n * 8, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn bad(&self, reason: String) -> Error {
        self.bad_at(self.pos as u64, reason)
    }

    pub fn bad_at(&self, offset: u64, reason: String) -> Error {
        Error::Format {
            path: self.path.to_string(),
            offset,
            reason,
        }
    }
}
