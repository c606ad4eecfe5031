//! Model checkpoints: a little-endian `u32` header length, a JSON header
//! (config, rotation bins, tensor names and lengths), then every tensor as
//! little-endian `f32`. Loading widens back to `f64`, so a round trip is
//! exact for parameters that are already `f32`-representable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::pose::RotationBins;

const MAGIC: &str = "cadmatch-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    config: EncoderConfig,
    bins: RotationBins,
    tensors: Vec<(String, usize)>,
}

/// Trainable tensors followed by the fixed normalisation buffers.
fn buffers(p: &EncoderParams) -> (Vec<String>, Vec<&Vec<f64>>) {
    let mut names = p.tensor_names();
    let mut bufs = p.tensors();
    for (s, stream) in [("image", &p.image), ("view", &p.view)] {
        for (i, c) in stream.convs.iter().enumerate() {
            names.push(format!("{s}.conv{i}.shift"));
            names.push(format!("{s}.conv{i}.scale"));
            bufs.push(&c.shift);
            bufs.push(&c.scale);
        }
        names.push(format!("{s}.pool.shift"));
        names.push(format!("{s}.pool.scale"));
        bufs.push(&stream.pool_shift);
        bufs.push(&stream.pool_scale);
    }
    (names, bufs)
}

fn buffers_mut(p: &mut EncoderParams) -> Vec<&mut Vec<f64>> {
    let mut bufs = Vec::new();
    let mut norms = Vec::new();
    let EncoderParams { image, view, heads, .. } = p;
    for s in [image, view] {
        for c in &mut s.convs {
            bufs.push(&mut c.weight);
            bufs.push(&mut c.bias);
            norms.push(&mut c.shift);
            norms.push(&mut c.scale);
        }
        norms.push(&mut s.pool_shift);
        norms.push(&mut s.pool_scale);
        bufs.push(&mut s.embed.weight);
        bufs.push(&mut s.embed.bias);
    }
    for l in [&mut heads.pose_class, &mut heads.delta, &mut heads.center] {
        bufs.push(&mut l.weight);
        bufs.push(&mut l.bias);
    }
    bufs.extend(norms);
    bufs
}

pub fn encode_checkpoint(params: &EncoderParams, bins: &RotationBins) -> Result<Vec<u8>> {
    let (names, bufs) = buffers(params);
    let header = Header {
        magic: MAGIC.into(),
        version: VERSION,
        config: params.config,
        bins: bins.clone(),
        tensors: names.into_iter().zip(bufs.iter().map(|b| b.len())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(4 + json.len() + 4 * params.num_parameters());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for b in bufs {
        for v in b {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(EncoderParams, RotationBins)> {
    let short = || Error::Format("checkpoint is truncated".into());
    let len = u32::from_le_bytes(bytes.get(..4).ok_or_else(short)?.try_into().expect("4 bytes")) as usize;
    let json = bytes.get(4..4 + len).ok_or_else(short)?;
    let header: Header = serde_json::from_slice(json)?;
    if header.magic != MAGIC || header.version != VERSION {
        return Err(Error::Format(format!("not a version {VERSION} checkpoint")));
    }
    header.config.validate()?;
    let mut params = EncoderParams::zeros(header.config)?;
    let (names, _) = buffers(&params);
    let expected: Vec<(String, usize)> = names.into_iter().zip(buffers(&params).1.iter().map(|b| b.len())).collect();
    if expected != header.tensors {
        return Err(Error::Format("checkpoint tensors do not match its config".into()));
    }
    let mut data = &bytes[4 + len..];
    for buf in buffers_mut(&mut params) {
        let n = buf.len() * 4;
        let chunk = data.get(..n).ok_or_else(short)?;
        for (v, c) in buf.iter_mut().zip(chunk.chunks_exact(4)) {
            *v = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
        data = &data[n..];
    }
    if !data.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint tensors", data.len())));
    }
    if !params.is_finite() {
        return Err(Error::Format("checkpoint holds non-finite values".into()));
    }
    Ok((params, header.bins))
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams, bins: &RotationBins) -> Result<()> {
    fs::write(path, encode_checkpoint(params, bins)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderParams, RotationBins)> {
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::geometry::Quaternion;

    fn sample() -> (EncoderParams, RotationBins) {
        let cfg = EncoderConfig { width: 4, input_size: 8, ..EncoderConfig::new(2, 3) };
        let mut p = EncoderParams::init(cfg, [0.95, 0.0, 0.0, 0.0], 3).unwrap();
        p.image.convs[1].shift[2] = 0.25;
        p.view.convs[0].scale[0] = 3.5;
        let q = Quaternion::new(0.9, 0.1, -0.3, 0.2).normalize().unwrap();
        let mut m = BTreeMap::new();
        m.insert(0, vec![Quaternion::IDENTITY, q, q.conj()]);
        m.insert(1, vec![q; 3]);
        (p, RotationBins::from_map(m).unwrap())
    }

    #[test]
    fn round_trip_rounds_to_f32_then_is_exact() {
        let (p, b) = sample();
        let (p2, b2) = decode_checkpoint(&encode_checkpoint(&p, &b).unwrap()).unwrap();
        assert_eq!(b, b2);
        for (x, y) in p.tensors().iter().zip(p2.tensors()) {
            for (a, c) in x.iter().zip(y) {
                assert_eq!(*c, *a as f32 as f64);
            }
        }
        assert_eq!(p2.view.convs[0].scale[0], 3.5);
        let (p3, _) = decode_checkpoint(&encode_checkpoint(&p2, &b).unwrap()).unwrap();
        assert_eq!(p2, p3);
    }

    #[test]
    fn truncated_and_padded_rejected() {
        let (p, b) = sample();
        let bytes = encode_checkpoint(&p, &b).unwrap();
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_checkpoint(&long), Err(Error::Format(_))));
        assert!(decode_checkpoint(&bytes[..2]).is_err());
    }
}
