//! Binary checkpoint persistence.
//!
//! A checkpoint carries everything needed to score features later: the
//! network parameters, the standardization statistics fitted during
//! training, and the similarity threshold the model was trained with.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic              8 bytes  "RELZSL01"
//! encoder layers     u32
//! decoder layers     u32
//! per layer          u32 in_dim, u32 out_dim, u8 activation tag,
//!                    in*out f64 weights (row-major), out f64 biases
//! feature stats      u32 dim, dim f64 means, dim f64 stds
//! attribute stats    u32 dim, dim f64 means, dim f64 stds
//! tau                f64
//! ```
//!
//! Encoder layers come first, then decoder layers. Round trips are
//! lossless: floats are stored as raw 64-bit payloads.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Activation, Dense, LayerSpec, Network};
use crate::numkit::{ColumnStats, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RELZSL01";

/// Standardization fitted at training time. Feature statistics come from
/// training-split rows only; attribute statistics from seen-class
/// embeddings only. The same transforms are applied at test time.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub features: ColumnStats,
    pub attributes: ColumnStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub stats: NormStats,
    pub tau: f64,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut buf, ckpt.network.encoder().len())?;
    put_u32(&mut buf, ckpt.network.decoder().len())?;
    for layer in ckpt.network.encoder().iter().chain(ckpt.network.decoder()) {
        put_u32(&mut buf, layer.spec.in_dim)?;
        put_u32(&mut buf, layer.spec.out_dim)?;
        buf.push(layer.spec.activation.tag());
        for w in layer.weights.data() {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    for stats in [&ckpt.stats.features, &ckpt.stats.attributes] {
        put_u32(&mut buf, stats.mean.len())?;
        for v in stats.mean.iter().chain(&stats.std) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend_from_slice(&ckpt.tau.to_le_bytes());
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadCheckpoint(format!(
            "bad magic {:?} in {}",
            &magic[..magic.len().min(8)],
            path.display()
        )));
    }
    let enc_count = r.u32()? as usize;
    let dec_count = r.u32()? as usize;
    let mut read_layer = || -> Result<Dense> {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let activation = Activation::from_tag(r.u8()?)?;
        let n = in_dim
            .checked_mul(out_dim)
            .ok_or_else(|| Error::BadCheckpoint("layer size overflows".to_string()))?;
        let weights = Matrix::from_vec(in_dim, out_dim, r.f64s(n)?)?;
        let bias = r.f64s(out_dim)?;
        Dense::new(
            LayerSpec {
                in_dim,
                out_dim,
                activation,
            },
            weights,
            bias,
        )
    };
    let encoder: Vec<Dense> = (0..enc_count)
        .map(|_| read_layer())
        .collect::<Result<_>>()?;
    let decoder: Vec<Dense> = (0..dec_count)
        .map(|_| read_layer())
        .collect::<Result<_>>()?;
    let mut read_stats = || -> Result<ColumnStats> {
        let dim = r.u32()? as usize;
        Ok(ColumnStats {
            mean: r.f64s(dim)?,
            std: r.f64s(dim)?,
        })
    };
    let features = read_stats()?;
    let attributes = read_stats()?;
    let tau = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    if r.pos != bytes.len() {
        return Err(Error::BadCheckpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    let network = Network::from_parts(encoder, decoder)
        .map_err(|e| Error::BadCheckpoint(format!("inconsistent layers: {e}")))?;
    Ok(Checkpoint {
        network,
        stats: NormStats {
            features,
            attributes,
        },
        tau,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| Error::BadCheckpoint(format!("count {v} exceeds u32 range")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::BadCheckpoint(format!(
                "truncated: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
