//! Unitary discrete Fourier transform.
//!
//! `F_{jk} = n^{-1/2} · exp(−2πi·jk/n)`, so `FᴴF = I`. Power-of-two lengths
//! use an iterative radix-2 Cooley-Tukey transform; other lengths fall back
//! to the direct O(n²) sum.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use crate::linalg::{Complex, ComplexVector, ZERO};

/// Precomputed twiddle factors for one transform length.
#[derive(Debug)]
pub struct DftPlan {
    n: usize,
    /// `exp(−2πi·k/n)` for `k` in `0..n`.
    twiddles: Vec<Complex>,
    bit_reverse: Option<Vec<usize>>,
    scale: f64,
}

impl DftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "DFT length must be positive");
        let twiddles = (0..n)
            .map(|k| {
                let angle = -2.0 * PI * k as f64 / n as f64;
                Complex::new(angle.cos(), angle.sin())
            })
            .collect();
        let bit_reverse = n.is_power_of_two().then(|| {
            let bits = n.trailing_zeros();
            (0..n)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect()
        });
        Self {
            n,
            twiddles,
            bit_reverse,
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn twiddle(&self, k: usize, inverse: bool) -> Complex {
        let w = self.twiddles[k];
        if inverse {
            w.conj()
        } else {
            w
        }
    }

    /// Transforms `data` in place; `scratch` must have the same length.
    pub fn process(&self, data: &mut [Complex], scratch: &mut [Complex], inverse: bool) {
        assert_eq!(data.len(), self.n, "DFT length mismatch");
        match &self.bit_reverse {
            Some(rev) => self.radix2(data, rev, inverse),
            None => self.direct(data, scratch, inverse),
        }
        for z in data.iter_mut() {
            *z *= self.scale;
        }
    }

    fn radix2(&self, data: &mut [Complex], rev: &[usize], inverse: bool) {
        let n = self.n;
        for (i, &j) in rev.iter().enumerate() {
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let w = self.twiddle(j * stride, inverse);
                    let u = data[start + j];
                    let t = data[start + j + half] * w;
                    data[start + j] = u + t;
                    data[start + j + half] = u - t;
                }
            }
            len <<= 1;
        }
    }

    fn direct(&self, data: &mut [Complex], scratch: &mut [Complex], inverse: bool) {
        let n = self.n;
        scratch[..n].copy_from_slice(data);
        for (j, out) in data.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (k, x) in scratch[..n].iter().enumerate() {
                acc += x * self.twiddle((j * k) % n, inverse);
            }
            *out = acc;
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<DftPlan>>> = RefCell::new(HashMap::new());
}

/// Cached plan for length `n` (per thread).
pub fn plan(n: usize) -> Rc<DftPlan> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| Rc::new(DftPlan::new(n)))
            .clone()
    })
}

/// Returns `F·v`, or `Fᴴ·v` when `inverse` is set.
pub fn unitary_dft(v: &ComplexVector, inverse: bool) -> ComplexVector {
    let mut out = v.clone();
    let mut scratch = vec![ZERO; v.len()];
    plan(v.len()).process(out.as_mut_slice(), &mut scratch, inverse);
    out
}
