//! RDS1 representation file format.
//!
//! ```text
//! 0..4    magic "RDS1"
//! 4..8    u32 LE version (1)
//! 8..12   u32 LE n
//! 12..16  u32 LE d
//! 16      u8 has_labels (0/1)
//! 17..20  zero padding
//! 20..    n*d f32 LE, row-major
//!         n i32 LE labels when has_labels = 1
//! ```
//!
//! Values are stored as f32; a set whose entries are f32-representable
//! round-trips bit-exactly.

use std::path::Path;

use super::RepresentationSet;
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RDS1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_representations(set: &RepresentationSet) -> Result<Vec<u8>> {
    let n = binio::to_u32("n", set.n())?;
    let d = binio::to_u32("d", set.d())?;
    let labels = set.labels();
    let mut out = Vec::with_capacity(
        HEADER_LEN + set.data().len() * 4 + labels.map_or(0, |l| l.len() * 4),
    );
    out.extend_from_slice(MAGIC);
    binio::put_u32(&mut out, VERSION);
    binio::put_u32(&mut out, n);
    binio::put_u32(&mut out, d);
    out.push(u8::from(labels.is_some()));
    out.extend_from_slice(&[0u8; 3]);
    for (i, &v) in set.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Data(format!(
                "value {v} at row {}, column {} overflows f32",
                i / set.d(),
                i % set.d()
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    if let Some(labels) = labels {
        for &l in labels {
            let l = i32::try_from(l)
                .map_err(|_| Error::Data(format!("label {l} does not fit in i32")))?;
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_representations(bytes: &[u8]) -> Result<RepresentationSet> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    binio::check_version(r.u32()?, VERSION)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let has_labels = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("has_labels byte is {other}"))),
    };
    r.take(3)?;
    let expected = HEADER_LEN + n * d * 4 + if has_labels { n * 4 } else { 0 };
    r.require_total(expected)?;

    let mut data = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let v = r.f32()?;
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                i / d,
                i % d
            )));
        }
        data.push(f64::from(v));
    }
    let set = RepresentationSet::new(n, d, data)?;
    let set = if has_labels {
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let l = r.i32()?;
            let l = usize::try_from(l)
                .map_err(|_| Error::Data(format!("negative label {l} at row {i}")))?;
            labels.push(l);
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        set.with_labels(labels, n_classes)?
    } else {
        set
    };
    r.finish()?;
    Ok(set)
}

pub fn save_representations(set: &RepresentationSet, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_representations(set)?)
}

pub fn load_representations(path: impl AsRef<Path>) -> Result<RepresentationSet> {
    decode_representations(&binio::read_file(path.as_ref())?)
}
