//! Unitary recurrent neural networks.
//!
//! Two ways to keep the recurrence matrix unitary are provided:
//!
//! * [`restricted`]: the structured `7N`-parameter product of diagonal
//!   phase, Householder, permutation and Fourier factors. For `N ≥ 8` it
//!   has fewer parameters than U(N) has dimensions, so it cannot reach
//!   every unitary matrix.
//! * [`stiefel`]: full-capacity training of the dense matrix along the
//!   Cayley curve on the Stiefel manifold.
//!
//! [`model`] holds the recurrent network itself with exact
//! backpropagation through time, [`tasks`] the synthetic benchmarks and
//! [`train`] the experiment driver behind the `urnn` binary.

pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod random;
pub mod restricted;
pub mod stiefel;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{Complex, ComplexMatrix, ComplexVector};
pub use random::Rng;
