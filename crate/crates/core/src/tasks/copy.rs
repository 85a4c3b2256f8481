//! Copy-memory problem.
//!
//! A sequence of length `T + 20` starts with ten symbols, waits through a
//! delay of blanks, shows a delimiter and must then reproduce the ten
//! symbols. Classes are indexed from zero:
//!
//! | index | meaning   |
//! |-------|-----------|
//! | 0..=7 | symbols 1..=8 |
//! | 8     | blank     |
//! | 9     | delimiter |
//!
//! The delimiter never appears as a target, so outputs use 9 classes.

use crate::error::{Error, Result};
use crate::model::{Inputs, SequenceBatch, Targets};
use crate::random::Rng;

pub const SYMBOLS: u32 = 8;
pub const BLANK: u32 = 8;
pub const DELIMITER: u32 = 9;
pub const INPUT_CLASSES: usize = 10;
pub const OUTPUT_CLASSES: usize = 9;
pub const RECALL_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopySpec {
    pub t_delay: usize,
    pub batch: usize,
    pub seed: u64,
}

impl CopySpec {
    pub fn sequence_len(&self) -> usize {
        self.t_delay + 2 * RECALL_LEN
    }
}

/// Expected cross entropy of emitting blanks and then guessing symbols
/// uniformly: `10·ln 8 / (T + 20)`.
pub fn copy_baseline(t_delay: usize) -> f64 {
    RECALL_LEN as f64 * (SYMBOLS as f64).ln() / (t_delay + 2 * RECALL_LEN) as f64
}

pub fn gen_copy_batch(spec: &CopySpec) -> Result<SequenceBatch> {
    gen_copy_sequences(spec.t_delay, spec.batch, &mut Rng::new(spec.seed))
}

/// Draws `count` sequences from an existing generator.
pub fn gen_copy_sequences(t_delay: usize, count: usize, rng: &mut Rng) -> Result<SequenceBatch> {
    check_delay(t_delay)?;
    let len = t_delay + 2 * RECALL_LEN;
    let mut inputs = Vec::with_capacity(count * len);
    let mut targets = Vec::with_capacity(count * len);
    for _ in 0..count {
        push_sequence(t_delay, rng, &mut inputs, &mut targets);
    }
    Ok(assemble(t_delay, count, inputs, targets))
}

/// Sequence `i` of a virtual dataset is drawn from `stream.derive(i)`, so
/// any subset can be materialized on demand and in any order.
pub fn gen_copy_indexed(t_delay: usize, stream: &Rng, indices: &[u64]) -> Result<SequenceBatch> {
    check_delay(t_delay)?;
    let len = t_delay + 2 * RECALL_LEN;
    let mut inputs = Vec::with_capacity(indices.len() * len);
    let mut targets = Vec::with_capacity(indices.len() * len);
    for &i in indices {
        push_sequence(t_delay, &mut stream.derive(i), &mut inputs, &mut targets);
    }
    Ok(assemble(t_delay, indices.len(), inputs, targets))
}

fn check_delay(t_delay: usize) -> Result<()> {
    if t_delay == 0 {
        return Err(Error::Invalid("copy delay must be at least 1".into()));
    }
    Ok(())
}

fn push_sequence(t_delay: usize, rng: &mut Rng, inputs: &mut Vec<u32>, targets: &mut Vec<u32>) {
    let start = inputs.len();
    for _ in 0..RECALL_LEN {
        inputs.push(rng.below(SYMBOLS as usize) as u32);
    }
    inputs.extend(std::iter::repeat(BLANK).take(t_delay - 1));
    inputs.push(DELIMITER);
    inputs.extend(std::iter::repeat(BLANK).take(RECALL_LEN));

    targets.extend(std::iter::repeat(BLANK).take(t_delay + RECALL_LEN));
    targets.extend_from_slice(&inputs[start..start + RECALL_LEN]);
}

fn assemble(t_delay: usize, count: usize, inputs: Vec<u32>, targets: Vec<u32>) -> SequenceBatch {
    SequenceBatch {
        batch: count,
        steps: t_delay + 2 * RECALL_LEN,
        inputs: Inputs::OneHot {
            dim: INPUT_CLASSES,
            index: inputs,
        },
        targets: Targets::Classes {
            classes: OUTPUT_CLASSES,
            index: targets,
        },
        mask: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indices(batch: &SequenceBatch) -> (&[u32], &[u32]) {
        match (&batch.inputs, &batch.targets) {
            (Inputs::OneHot { index: i, .. }, Targets::Classes { index: t, .. }) => (i, t),
            _ => unreachable!(),
        }
    }

    #[test]
    fn shortest_delay_layout() {
        let batch = gen_copy_batch(&CopySpec { t_delay: 1, batch: 2, seed: 3 }).unwrap();
        assert_eq!(batch.steps, 21);
        let (inp, tgt) = indices(&batch);
        let (inp, tgt) = (&inp[..21], &tgt[..21]);
        assert!(inp[..10].iter().all(|&s| s < SYMBOLS));
        assert_eq!(inp[10], DELIMITER);
        assert!(inp[11..].iter().all(|&s| s == BLANK));
        assert!(tgt[..11].iter().all(|&s| s == BLANK));
        assert_eq!(&tgt[11..], &inp[..10]);
    }

    #[test]
    fn general_layout() {
        let t = 37;
        let batch = gen_copy_batch(&CopySpec { t_delay: t, batch: 5, seed: 4 }).unwrap();
        let (inp, tgt) = indices(&batch);
        for s in 0..5 {
            let inp = &inp[s * (t + 20)..(s + 1) * (t + 20)];
            let tgt = &tgt[s * (t + 20)..(s + 1) * (t + 20)];
            assert!(inp[10..t + 9].iter().all(|&x| x == BLANK));
            assert_eq!(inp[t + 9], DELIMITER);
            assert!(inp[t + 10..].iter().all(|&x| x == BLANK));
            let non_blank: Vec<usize> = (0..t + 20).filter(|&i| tgt[i] != BLANK).collect();
            assert!(non_blank.iter().all(|&i| i >= t + 10));
            assert_eq!(&tgt[t + 10..], &inp[..10]);
            // every input is a valid one-hot index
            assert!(inp.iter().all(|&x| (x as usize) < INPUT_CLASSES));
        }
    }

    #[test]
    fn deterministic() {
        let spec = CopySpec { t_delay: 10, batch: 4, seed: 9 };
        assert_eq!(gen_copy_batch(&spec).unwrap(), gen_copy_batch(&spec).unwrap());
    }

    #[test]
    fn indexed_sequences_are_stable_subsets() {
        let stream = Rng::new(5);
        let all = gen_copy_indexed(4, &stream, &[0, 1, 2, 3]).unwrap();
        let some = gen_copy_indexed(4, &stream, &[2, 0]).unwrap();
        assert_eq!(some, all.select(&[2, 0]));
    }

    #[test]
    fn baseline_values() {
        let ln8 = 8f64.ln();
        assert_eq!(copy_baseline(1000), 10.0 * ln8 / 1020.0);
        assert!((copy_baseline(1000) - 0.020).abs() < 5e-4);
        assert!((copy_baseline(2000) - 0.010).abs() < 5e-4);
        assert!((copy_baseline(100) - 0.17329).abs() < 1e-5);
        for t in 1..500 {
            assert!(copy_baseline(t + 1) < copy_baseline(t));
            assert!((copy_baseline(t) * (t + 20) as f64 - 10.0 * ln8).abs() < 1e-12);
        }
    }
}
