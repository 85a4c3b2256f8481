//! Seeded random sampling.
//!
//! [`Rng`] wraps the ChaCha8 stream cipher generator from `rand_chacha`,
//! whose output stream is fixed for a given 64-bit seed on every platform.
//! No numeric path draws from system entropy.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{orthonormalize_columns, Complex, ComplexMatrix, ComplexVector};

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sub-stream `index`, derived from the seed
    /// only (not from the current position).
    pub fn derive(&self, index: u64) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(index)))
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Uniform random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// Standard circular complex Gaussian with `E|z|² = 1`.
    pub fn circular_normal(&mut self) -> Complex {
        let re = self.standard_normal();
        let im = self.standard_normal();
        Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// `n` i.i.d. circular complex Gaussians, each `(g₁ + i·g₂)/√2`.
pub fn randn_circular(n: usize, rng: &mut Rng) -> ComplexVector {
    ComplexVector::from_vec((0..n).map(|_| rng.circular_normal()).collect())
}

/// Haar-distributed `n×n` unitary matrix.
///
/// Orthonormalizes a matrix of circular Gaussians; the Gram-Schmidt `R`
/// factor has a positive real diagonal, which makes the result Haar.
pub fn haar_unitary(n: usize, rng: &mut Rng) -> ComplexMatrix {
    loop {
        let z = ComplexMatrix::from_vec(n, n, randn_circular(n * n, rng).into_vec())
            .expect("n*n entries");
        // a Gaussian matrix is singular with probability zero
        if let Ok(q) = orthonormalize_columns(&z) {
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;

    #[test]
    fn circular_moments() {
        let mut rng = Rng::new(42);
        let v = randn_circular(100_000, &mut rng);
        let mean: Complex = v.iter().sum::<Complex>() / 100_000.0;
        let power = v.norm_sqr() / 100_000.0;
        assert!(mean.norm() < 0.02, "mean {mean}");
        assert!((power - 1.0).abs() < 0.02, "power {power}");
    }

    #[test]
    fn same_seed_same_stream() {
        assert_eq!(randn_circular(16, &mut Rng::new(7)), randn_circular(16, &mut Rng::new(7)));
        assert_ne!(randn_circular(16, &mut Rng::new(7)), randn_circular(16, &mut Rng::new(8)));
    }

    #[test]
    fn haar_scalar_on_unit_circle() {
        let q = haar_unitary(1, &mut Rng::new(3));
        assert!((q[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_deterministic_bitwise() {
        let a = haar_unitary(5, &mut Rng::new(99));
        let b = haar_unitary(5, &mut Rng::new(99));
        let bits = |m: &ComplexMatrix| -> Vec<(u64, u64)> {
            m.as_slice().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn haar_unitary_across_sizes() {
        let mut rng = Rng::new(17);
        for n in [1, 2, 8, 16, 128] {
            let d = unitarity_defect(&haar_unitary(n, &mut rng)).unwrap();
            assert!(d < 1e-12, "n={n} defect={d}");
        }
    }

    #[test]
    fn permutation_is_bijection() {
        let mut p = Rng::new(4).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
