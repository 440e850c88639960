//! SAE1 checkpoint format.
//!
//! ```text
//! magic "SAE1" | u32 version=1 | u32 d | u32 p | u32 K
//! u8 has_decoder_bias | u8[3] zeros
//! W_e (p x d) row-major f64 LE
//! W_d (d x p) row-major f64 LE
//! [bias (d) f64 LE]
//! ```

use std::path::Path;

use super::SaeModel;
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SAE1";
const VERSION: u32 = 1;

pub fn encode_sae(model: &SaeModel) -> Result<Vec<u8>> {
    let (d, p) = (model.d(), model.p());
    let mut out = Vec::with_capacity(24 + 16 * p * d + 8 * d);
    out.extend_from_slice(MAGIC);
    binio::put_u32(&mut out, VERSION);
    binio::put_u32(&mut out, binio::to_u32("d", d)?);
    binio::put_u32(&mut out, binio::to_u32("p", p)?);
    binio::put_u32(&mut out, binio::to_u32("K", model.k_active())?);
    out.push(u8::from(model.decoder_bias().is_some()));
    out.extend_from_slice(&[0u8; 3]);
    binio::put_f64s(&mut out, model.encoder());
    for i in 0..d {
        for k in 0..p {
            out.extend_from_slice(&model.decoder_column(k)[i].to_le_bytes());
        }
    }
    if let Some(b) = model.decoder_bias() {
        binio::put_f64s(&mut out, b);
    }
    Ok(out)
}

pub fn decode_sae(bytes: &[u8]) -> Result<SaeModel> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    binio::check_version(r.u32()?, VERSION)?;
    let d = r.u32()? as usize;
    let p = r.u32()? as usize;
    let k = r.u32()? as usize;
    let has_bias = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("has_decoder_bias byte is {other}"))),
    };
    r.take(3)?;
    r.require_total(24 + 16 * p * d + if has_bias { 8 * d } else { 0 })?;
    let encoder = r.f64_vec(p * d)?;
    let w_d = r.f64_vec(d * p)?;
    let mut columns = vec![0.0; p * d];
    for i in 0..d {
        for kk in 0..p {
            columns[kk * d + i] = w_d[i * p + kk];
        }
    }
    let bias = if has_bias { Some(r.f64_vec(d)?) } else { None };
    r.finish()?;
    SaeModel::new_unchecked_width(d, p, k, encoder, columns, bias)
}

pub fn save_sae(model: &SaeModel, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_sae(model)?)
}

pub fn load_sae(path: impl AsRef<Path>) -> Result<SaeModel> {
    decode_sae(&binio::read_file(path.as_ref())?)
}
