//! Versioned binary model checkpoints.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "URNNCKPT"
//! version      u32      1
//! n, m, l      u64 × 3
//! recurrence   u8       0 = restricted, 1 = full
//! real output  u8       0 or 1
//! restricted:  θ as 7n f64 (phase1, refl1 re, refl1 im, phase2, refl2 re, refl2 im, phase3),
//!              then the permutation as n u64
//! full:        W as n·n (re f64, im f64), row-major
//! V            n·m complex, row-major
//! b            n f64
//! U            l·n complex, row-major
//! c            l complex
//! h0           n complex
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::model::{Recurrence, RecurrenceKind, UrnnModel};
use crate::restricted::RestrictedParams;
use crate::stiefel::StiefelPoint;
use crate::tasks::container::{read_complex, read_exact, read_f64s, read_u32, read_u64, read_u8, write_complex, write_f64s};

pub const MAGIC: &[u8; 8] = b"URNNCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &UrnnModel, mut w: W) -> Result<()> {
    model.validate()?;
    let (n, m, l) = (model.n(), model.m(), model.l());
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [n, m, l] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let tag = match model.recurrence.kind() {
        RecurrenceKind::Restricted => 0u8,
        RecurrenceKind::Full => 1u8,
    };
    w.write_all(&[tag, model.real_output as u8])?;
    match &model.recurrence {
        Recurrence::Restricted(p) => {
            write_f64s(&mut w, &p.theta())?;
            for &k in p.perm() {
                w.write_all(&(k as u64).to_le_bytes())?;
            }
        }
        Recurrence::Full(p) => write_complex(&mut w, p.matrix().as_slice())?,
    }
    write_complex(&mut w, model.v.as_slice())?;
    write_f64s(&mut w, &model.b)?;
    write_complex(&mut w, model.u.as_slice())?;
    write_complex(&mut w, &model.c)?;
    write_complex(&mut w, &model.h0)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<UrnnModel> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut dim = || -> Result<usize> {
        let d = read_u64(&mut r)?;
        // anything this large is corruption, not a model
        if d == 0 || d > 1 << 20 {
            return Err(Error::Format(format!("implausible dimension {d}")));
        }
        Ok(d as usize)
    };
    let (n, m, l) = (dim()?, dim()?, dim()?);
    let tag = read_u8(&mut r)?;
    let real_output = match read_u8(&mut r)? {
        0 => false,
        1 => true,
        k => return Err(Error::Format(format!("bad real-output flag {k}"))),
    };
    let recurrence = match tag {
        0 => {
            let theta = read_f64s(&mut r, 7 * n)?;
            let perm = (0..n).map(|_| read_u64(&mut r).map(|k| k as usize)).collect::<Result<Vec<_>>>()?;
            Recurrence::Restricted(RestrictedParams::from_theta(&theta, perm).map_err(as_format)?)
        }
        1 => {
            let w = ComplexMatrix::from_vec(n, n, read_complex(&mut r, n * n)?)?;
            Recurrence::Full(StiefelPoint::new(w).map_err(as_format)?)
        }
        k => return Err(Error::Format(format!("unknown recurrence tag {k}"))),
    };
    let v = ComplexMatrix::from_vec(n, m, read_complex(&mut r, n * m)?)?;
    let b = read_f64s(&mut r, n)?;
    let u = ComplexMatrix::from_vec(l, n, read_complex(&mut r, l * n)?)?;
    let c = read_complex(&mut r, l)?;
    let h0 = read_complex(&mut r, n)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(UrnnModel {
        recurrence,
        v,
        b,
        u,
        c,
        h0,
        real_output,
    })
}

fn as_format(e: Error) -> Error {
    Error::Format(format!("checkpoint payload rejected: {e}"))
}

/// Writes through a temporary sibling and renames, so an interrupted save
/// never clobbers the previous checkpoint.
pub fn save_checkpoint(model: &UrnnModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_checkpoint(model, BufWriter::new(File::create(&tmp)?))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<UrnnModel> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// Converts a model to the requested recurrence kind. Restricted → full
/// materializes `W = compose(θ)`; the reverse direction is not possible in
/// general and is rejected.
pub fn promote(model: UrnnModel, kind: RecurrenceKind) -> Result<UrnnModel> {
    match (&model.recurrence, kind) {
        (r, k) if r.kind() == k => Ok(model),
        (Recurrence::Restricted(p), RecurrenceKind::Full) => {
            let w = StiefelPoint::new(p.compose())?;
            Ok(UrnnModel {
                recurrence: Recurrence::Full(w),
                ..model
            })
        }
        _ => Err(Error::Config("a full-capacity checkpoint cannot be loaded as restricted".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::random_instance;
    use crate::model::{forward, LossKind};

    #[test]
    fn round_trip_is_bit_identical() {
        for kind in [RecurrenceKind::Restricted, RecurrenceKind::Full] {
            for loss in [LossKind::Mse, LossKind::CrossEntropy] {
                let (model, batch) = random_instance(5, 3, 2, 4, 2, kind, loss, 11);
                let mut buf = Vec::new();
                write_checkpoint(&model, &mut buf).unwrap();
                let back = read_checkpoint(buf.as_slice()).unwrap();
                assert_eq!(back, model);
                assert_eq!(forward(&back, &batch).unwrap().1, forward(&model, &batch).unwrap().1);
            }
        }
    }

    #[test]
    fn promotion_composes() {
        let (model, batch) = random_instance(6, 2, 2, 5, 2, RecurrenceKind::Restricted, LossKind::Mse, 2);
        let full = promote(model.clone(), RecurrenceKind::Full).unwrap();
        assert_eq!(full.recurrence.kind(), RecurrenceKind::Full);
        assert!(full.recurrence.unitarity_defect() < 1e-12);
        let (a, b) = (forward(&model, &batch).unwrap().1, forward(&full, &batch).unwrap().1);
        let gap = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-12);
        assert!(promote(full, RecurrenceKind::Restricted).is_err());
    }

    #[test]
    fn rejects_corruption() {
        let (model, _) = random_instance(3, 2, 2, 1, 1, RecurrenceKind::Full, LossKind::Mse, 4);
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[1] ^= 0xff;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));

        let mut bad = buf.clone();
        bad[8] = 2;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));

        assert!(matches!(read_checkpoint(&buf[..buf.len() - 1]), Err(Error::Format(_))));

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_checkpoint(long.as_slice()), Err(Error::Format(_))));

        // W no longer unitary
        let mut bad = buf.clone();
        bad[8 + 4 + 24 + 2 + 7] ^= 0x40;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
    }
}
