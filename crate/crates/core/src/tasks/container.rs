//! Binary dataset container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes  "URNNDSET"
//! version      u32      1
//! batch        u64
//! steps        u64
//! input kind   u8       0 = one-hot indices, 1 = dense complex
//! input dim    u64
//! target kind  u8       0 = class indices, 1 = real, 2 = complex
//! target dim   u64
//! has mask     u8       0 or 1
//! inputs       batch·steps u32 indices, or batch·steps·dim (re f64, im f64)
//! targets      u32 indices, f64 reals, or (re f64, im f64) pairs
//! mask         batch·steps f64, when present
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Complex;
use crate::model::{Inputs, SequenceBatch, Targets};

pub const MAGIC: &[u8; 8] = b"URNNDSET";
pub const VERSION: u32 = 1;

pub fn write_dataset<W: Write>(batch: &SequenceBatch, mut w: W) -> Result<()> {
    batch.validate()?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(batch.batch as u64).to_le_bytes())?;
    w.write_all(&(batch.steps as u64).to_le_bytes())?;
    let (ik, idim) = match &batch.inputs {
        Inputs::OneHot { dim, .. } => (0u8, *dim),
        Inputs::Dense { dim, .. } => (1u8, *dim),
    };
    w.write_all(&[ik])?;
    w.write_all(&(idim as u64).to_le_bytes())?;
    let (tk, tdim) = match &batch.targets {
        Targets::Classes { classes, .. } => (0u8, *classes),
        Targets::Real { dim, .. } => (1u8, *dim),
        Targets::Complex { dim, .. } => (2u8, *dim),
    };
    w.write_all(&[tk])?;
    w.write_all(&(tdim as u64).to_le_bytes())?;
    w.write_all(&[batch.mask.is_some() as u8])?;

    match &batch.inputs {
        Inputs::OneHot { index, .. } => write_u32s(&mut w, index)?,
        Inputs::Dense { values, .. } => write_complex(&mut w, values)?,
    }
    match &batch.targets {
        Targets::Classes { index, .. } => write_u32s(&mut w, index)?,
        Targets::Real { values, .. } => write_f64s(&mut w, values)?,
        Targets::Complex { values, .. } => write_complex(&mut w, values)?,
    }
    if let Some(mask) = &batch.mask {
        write_f64s(&mut w, mask)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<SequenceBatch> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset container (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let batch = read_u64(&mut r)? as usize;
    let steps = read_u64(&mut r)? as usize;
    let ik = read_u8(&mut r)?;
    let idim = read_u64(&mut r)? as usize;
    let tk = read_u8(&mut r)?;
    let tdim = read_u64(&mut r)? as usize;
    let has_mask = read_u8(&mut r)?;
    let total = batch
        .checked_mul(steps)
        .ok_or_else(|| Error::Format("dataset dimensions overflow".into()))?;

    let inputs = match ik {
        0 => Inputs::OneHot {
            dim: idim,
            index: read_u32s(&mut r, total)?,
        },
        1 => Inputs::Dense {
            dim: idim,
            values: read_complex(&mut r, total * idim)?,
        },
        k => return Err(Error::Format(format!("unknown input kind {k}"))),
    };
    let targets = match tk {
        0 => Targets::Classes {
            classes: tdim,
            index: read_u32s(&mut r, total)?,
        },
        1 => Targets::Real {
            dim: tdim,
            values: read_f64s(&mut r, total * tdim)?,
        },
        2 => Targets::Complex {
            dim: tdim,
            values: read_complex(&mut r, total * tdim)?,
        },
        k => return Err(Error::Format(format!("unknown target kind {k}"))),
    };
    let mask = match has_mask {
        0 => None,
        1 => Some(read_f64s(&mut r, total)?),
        k => return Err(Error::Format(format!("bad mask flag {k}"))),
    };
    let out = SequenceBatch {
        batch,
        steps,
        inputs,
        targets,
        mask,
    };
    out.validate()?;
    Ok(out)
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count.min(1 << 24));
    let mut b = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn read_u32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        out.push(read_u32(r)?);
    }
    Ok(out)
}

pub(crate) fn read_complex<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex>> {
    let flat = read_f64s(r, 2 * count)?;
    Ok(flat.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_u32s<W: Write>(w: &mut W, values: &[u32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn write_complex<W: Write>(w: &mut W, values: &[Complex]) -> Result<()> {
    for z in values {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::Rng;
    use crate::tasks::copy::gen_copy_batch;
    use crate::tasks::sysid::{gen_sysid_dataset, gen_sysid_system, SystemOrigin};
    use crate::tasks::CopySpec;

    #[test]
    fn round_trips() {
        let copy = gen_copy_batch(&CopySpec { t_delay: 5, batch: 3, seed: 1 }).unwrap();
        let mut rng = Rng::new(2);
        let sys = gen_sysid_system(3, SystemOrigin::Wu, &mut rng);
        let mut sysid = gen_sysid_dataset(&sys, 7, 2, &mut rng).unwrap();
        sysid.mask = Some((0..14).map(|i| (i % 3) as f64).collect());
        for batch in [copy, sysid] {
            let mut buf = Vec::new();
            write_dataset(&batch, &mut buf).unwrap();
            assert_eq!(read_dataset(buf.as_slice()).unwrap(), batch);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let copy = gen_copy_batch(&CopySpec { t_delay: 2, batch: 1, seed: 1 }).unwrap();
        let mut buf = Vec::new();
        write_dataset(&copy, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_dataset(bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_dataset(&buf[..buf.len() - 3]), Err(Error::Format(_))));
    }
}
