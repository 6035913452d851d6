//! Checkpoint layout: 8-byte magic, little-endian u64 header length, JSON
//! header (config + tensor manifest), then raw little-endian f32 payloads
//! in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{layout, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"LRCKPT\0\0";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Offset in f32 elements from the start of the payload.
    offset: usize,
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    let mut offset = 0;
    let tensors = params
        .names()
        .into_iter()
        .zip(params.tensors())
        .map(|(name, t)| {
            let e = Entry {
                name,
                shape: t.shape().to_vec(),
                offset,
            };
            offset += t.numel();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: *params.config(),
        tensors,
    })?;
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    for t in params.tensors() {
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("<checkpoint>", e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(hlen))
        .ok_or_else(|| Error::Format("checkpoint truncated in header".into()))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint format version {}",
            header.format_version
        )));
    }
    header.config.validate()?;
    let specs = layout(&header.config);
    if specs.len() != header.tensors.len() {
        return Err(Error::Format("tensor manifest does not match config".into()));
    }
    let payload = &bytes[16 + hlen..];
    let mut expected_offset = 0;
    let mut tensors = Vec::with_capacity(specs.len());
    for (spec, e) in specs.iter().zip(&header.tensors) {
        if spec.name != e.name || spec.shape != e.shape || e.offset != expected_offset {
            return Err(Error::Format(format!("manifest entry {} does not match config", e.name)));
        }
        let n: usize = e.shape.iter().product();
        let raw = payload
            .get(e.offset * 4..(e.offset + n) * 4)
            .ok_or_else(|| Error::Format(format!("checkpoint truncated in tensor {}", e.name)))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor::new(e.shape.clone(), data)?);
        expected_offset += n;
    }
    if payload.len() != expected_offset * 4 {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    ModelParams::from_tensors(header.config, tensors)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        let cfg = ModelConfig {
            n_layers: 2,
            d_model: 4,
            n_heads: 2,
            d_ff: 8,
            vocab_size: 12,
            max_len: 10,
            type_vocab_size: 2,
            dropout: 0.0,
        };
        ModelParams::init(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), p);
    }

    #[test]
    fn truncation_is_detected() {
        let mut buf = Vec::new();
        write_checkpoint(&params(), &mut buf).unwrap();
        for cut in [4, 12, 40, buf.len() - 1] {
            assert!(read_checkpoint(&buf[..cut]).is_err(), "cut at {cut}");
        }
        buf.push(0);
        assert!(read_checkpoint(&buf[..]).is_err());
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(read_checkpoint(&b"NOTACKPT\0\0\0\0\0\0\0\0"[..]), Err(Error::Format(_))));
    }
}
