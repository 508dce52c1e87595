//! Binary parameter container.
//!
//! Layout, all integers little-endian `u32`:
//! `"TSTB"`, version, config JSON length, config JSON (UTF-8), tensor count,
//! then per tensor: name length, name, rank, dims, `f32` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::network::{BackboneConfig, BackboneParams, ParamTensor};
use super::real::Real;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSTB";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Real>(params: &BackboneParams<T>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&params.config)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize config: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_len(&mut out, json.len())?;
    out.extend_from_slice(&json);
    put_len(&mut out, params.tensors.len())?;
    for t in &params.tensors {
        put_len(&mut out, t.name.len())?;
        out.extend_from_slice(t.name.as_bytes());
        put_len(&mut out, t.dims.len())?;
        for &d in &t.dims {
            put_len(&mut out, d)?;
        }
        for v in &t.data {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint<T: Real>(params: &BackboneParams<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<BackboneParams<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(path, reason),
        other => other,
    })
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<BackboneParams<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("not a TSTB checkpoint"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let json_len = r.u32()? as usize;
    let config: BackboneConfig = serde_json::from_slice(r.take(json_len)?)
        .map_err(|e| bad(&format!("bad config: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("tensor too large"))?;
        let raw = r.take(len.checked_mul(4).ok_or_else(|| bad("tensor too large"))?)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(ParamTensor { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    let params = BackboneParams { config, tensors };
    params.validate()?;
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint contains non-finite parameters".into()));
    }
    Ok(params)
}

fn bad(reason: &str) -> Error {
    Error::Format {
        path: Default::default(),
        reason: reason.to_string(),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{v} does not fit the checkpoint format")))?;
    put_u32(out, v);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> BackboneParams<f32> {
        let cfg = BackboneConfig {
            input_size: (8, 8),
            num_classes: 3,
            stage_channels: vec![4, 6],
            seed: 9,
            ..Default::default()
        };
        BackboneParams::init(&cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tstb");
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&params()).unwrap();
        assert_eq!(&bytes[..4], b"TSTB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cfg: BackboneConfig = serde_json::from_slice(&bytes[12..12 + n]).unwrap();
        assert_eq!(cfg.stage_channels, vec![4, 6]);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = encode_checkpoint(&params()).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode_checkpoint(&wrong), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(decode_checkpoint(&v2).is_err());
    }
}
