//! ENC1 encoder and HED1 head checkpoints.
//!
//! ```text
//! ENC1: magic | u32 version=1 | u32 n_layers | n_layers x (u32 out, u32 in)
//!       per layer: W (out x in) row-major f64 LE, then b (out) f64 LE
//! HED1: magic | u32 version=1 | u32 n_classes | u32 d | f64 tau
//!       W (n_classes x d) row-major f64 LE
//! ```

use std::path::Path;

use super::encoder::{Layer, TinyEncoder};
use super::head::LinearHead;
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

const ENC_MAGIC: &[u8; 4] = b"ENC1";
const HEAD_MAGIC: &[u8; 4] = b"HED1";
const VERSION: u32 = 1;

pub fn encode_encoder(enc: &TinyEncoder) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 8 * enc.layers().len() + 8 * enc.param_count());
    out.extend_from_slice(ENC_MAGIC);
    binio::put_u32(&mut out, VERSION);
    binio::put_u32(&mut out, binio::to_u32("layer count", enc.layers().len())?);
    for l in enc.layers() {
        binio::put_u32(&mut out, binio::to_u32("layer out", l.out_dim)?);
        binio::put_u32(&mut out, binio::to_u32("layer in", l.in_dim)?);
    }
    for l in enc.layers() {
        binio::put_f64s(&mut out, &l.weight);
        binio::put_f64s(&mut out, &l.bias);
    }
    Ok(out)
}

pub fn decode_encoder(bytes: &[u8]) -> Result<TinyEncoder> {
    let mut r = Reader::new(bytes);
    r.magic(ENC_MAGIC)?;
    binio::check_version(r.u32()?, VERSION)?;
    let n_layers = r.u32()? as usize;
    if n_layers == 0 {
        return Err(Error::Format("encoder has zero layers".into()));
    }
    r.require_total(12 + 8 * n_layers)?;
    let dims = (0..n_layers)
        .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
        .collect::<Result<Vec<_>>>()?;
    let params: usize = dims.iter().map(|(o, i)| o * i + o).sum();
    r.require_total(12 + 8 * n_layers + 8 * params)?;
    let mut layers = Vec::with_capacity(n_layers);
    for &(out_dim, in_dim) in &dims {
        let weight = r.f64_vec(out_dim * in_dim)?;
        let bias = r.f64_vec(out_dim)?;
        layers.push(Layer::new(in_dim, out_dim, weight, bias)?);
    }
    r.finish()?;
    TinyEncoder::new(layers)
}

pub fn save_encoder(enc: &TinyEncoder, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_encoder(enc)?)
}

pub fn load_encoder(path: impl AsRef<Path>) -> Result<TinyEncoder> {
    decode_encoder(&binio::read_file(path.as_ref())?)
}

pub fn encode_head(head: &LinearHead) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + 8 * head.weight().len());
    out.extend_from_slice(HEAD_MAGIC);
    binio::put_u32(&mut out, VERSION);
    binio::put_u32(&mut out, binio::to_u32("n_classes", head.n_classes())?);
    binio::put_u32(&mut out, binio::to_u32("d", head.d())?);
    binio::put_f64s(&mut out, &[head.tau()]);
    binio::put_f64s(&mut out, head.weight());
    Ok(out)
}

pub fn decode_head(bytes: &[u8]) -> Result<LinearHead> {
    let mut r = Reader::new(bytes);
    r.magic(HEAD_MAGIC)?;
    binio::check_version(r.u32()?, VERSION)?;
    let n_classes = r.u32()? as usize;
    let d = r.u32()? as usize;
    r.require_total(24 + 8 * n_classes * d)?;
    let tau = r.f64()?;
    let weight = r.f64_vec(n_classes * d)?;
    r.finish()?;
    LinearHead::new(n_classes, d, weight, tau)
}

pub fn save_head(head: &LinearHead, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_head(head)?)
}

pub fn load_head(path: impl AsRef<Path>) -> Result<LinearHead> {
    decode_head(&binio::read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_round_trip() {
        let enc = TinyEncoder::random(&[5, 7, 3], 4).unwrap();
        let bytes = encode_encoder(&enc).unwrap();
        assert_eq!(bytes.len(), 12 + 16 + 8 * (35 + 7 + 21 + 3));
        assert_eq!(decode_encoder(&bytes).unwrap(), enc);
    }

    #[test]
    fn encoder_layout() {
        let enc = TinyEncoder::new(vec![Layer::new(2, 1, vec![1.5, -2.0], vec![0.25]).unwrap()]).unwrap();
        let bytes = encode_encoder(&enc).unwrap();
        assert_eq!(&bytes[..4], b"ENC1");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..28], &1.5f64.to_le_bytes());
        assert_eq!(&bytes[36..44], &0.25f64.to_le_bytes());
    }

    #[test]
    fn encoder_corruption() {
        let enc = TinyEncoder::random(&[2, 2], 0).unwrap();
        let bytes = encode_encoder(&enc).unwrap();
        assert!(matches!(decode_encoder(&bytes[..bytes.len() - 3]), Err(Error::Length { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_encoder(&bad), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode_encoder(&extra), Err(Error::Format(_))));
    }

    #[test]
    fn head_round_trip() {
        let head = LinearHead::new(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6], 42.0).unwrap();
        let bytes = encode_head(&head).unwrap();
        assert_eq!(decode_head(&bytes).unwrap(), head);
        assert!(decode_head(&bytes[..30]).is_err());
    }
}
