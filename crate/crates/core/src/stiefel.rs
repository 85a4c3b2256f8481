//! Full-capacity unitary updates on the Stiefel manifold.
//!
//! A step moves `W` along the Cayley curve
//! `Y(λ) = (I + λ/2·A)⁻¹ (I − λ/2·A) W` with a skew-Hermitian `A` built from
//! the Euclidean gradient, so every iterate stays unitary without any
//! projection.
//!
//! Gradients follow the split-real convention `G = ∂L/∂Re(W) + i·∂L/∂Im(W)`,
//! under which `Re tr(Gᴴ ΔW)` is the first-order change of the loss.

use crate::error::{Error, Result};
use crate::linalg::{linear_solve, matmul_adjoint, orthonormalize_columns, unitarity_defect, ComplexMatrix, ONE};

/// Defect above which a point is re-orthonormalized.
pub const DRIFT_THRESHOLD: f64 = 1e-8;

/// Record of a re-orthonormalization triggered by accumulated drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEvent {
    pub defect_before: f64,
    pub defect_after: f64,
}

/// A square unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    w: ComplexMatrix,
}

impl StiefelPoint {
    /// Checks `‖WᴴW − I‖_F < 1e−8`.
    pub fn new(w: ComplexMatrix) -> Result<Self> {
        let defect = unitarity_defect(&w)?;
        if !(defect < DRIFT_THRESHOLD) {
            return Err(Error::Invalid(format!("matrix is not unitary (defect {defect:e})")));
        }
        Ok(Self { w })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.w
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.w
    }

    pub fn n(&self) -> usize {
        self.w.rows()
    }

    /// Mutable access that skips the unitarity check.
    pub(crate) fn matrix_mut_unchecked(&mut self) -> &mut ComplexMatrix {
        &mut self.w
    }

    pub fn defect(&self) -> f64 {
        unitarity_defect(&self.w).expect("square")
    }

    /// Re-orthonormalizes when the defect exceeds [`DRIFT_THRESHOLD`].
    pub fn monitor_drift(&mut self) -> Option<DriftEvent> {
        let before = self.defect();
        if before <= DRIFT_THRESHOLD {
            return None;
        }
        let q = orthonormalize_columns(&self.w).ok()?;
        self.w = q;
        Some(DriftEvent {
            defect_before: before,
            defect_after: self.defect(),
        })
    }
}

/// Skew-Hermitian descent direction `A = G Wᴴ − W Gᴴ`.
///
/// With the left-multiplied Cayley step, `−A W` is the Riemannian gradient
/// direction under the canonical metric and `Re tr(Gᴴ A W) ≥ 0`.
pub fn riemannian_skew(g: &ComplexMatrix, w: &StiefelPoint) -> Result<ComplexMatrix> {
    if g.shape() != w.w.shape() {
        return Err(Error::shape("riemannian_skew", g.shape(), w.w.shape()));
    }
    let b = matmul_adjoint(g, &w.w)?;
    let n = b.rows();
    // A = B − Bᴴ, written entrywise so A is skew-Hermitian bit for bit
    Ok(ComplexMatrix::from_fn(n, n, |i, j| b[(i, j)] - b[(j, i)].conj()))
}

/// `‖A + Aᴴ‖_F`.
pub fn skew_defect(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (a[(i, j)] + a[(j, i)].conj()).norm_sqr();
        }
    }
    s.sqrt()
}

/// Cayley descent step `Y(λ) = (I + λ/2·A)⁻¹ (I − λ/2·A) W`.
pub fn cayley_step(w: &StiefelPoint, a: &ComplexMatrix, lambda: f64) -> Result<StiefelPoint> {
    if a.shape() != w.w.shape() {
        return Err(Error::shape("cayley_step", a.shape(), w.w.shape()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("step size must be positive, got {lambda}")));
    }
    let scale = a.frobenius_norm().max(1.0);
    if skew_defect(a) > 1e-10 * scale {
        return Err(Error::Invalid("direction is not skew-Hermitian".into()));
    }
    let n = a.rows();
    let half = lambda / 2.0;
    let mut lhs = a.scale(half.into());
    for i in 0..n {
        lhs[(i, i)] += ONE;
    }
    // (I + K)⁻¹(I − K) = 2(I + K)⁻¹ − I, so Y = 2X − W with (I + K)X = W
    let x = linear_solve(&lhs, &w.w)?;
    let data = x
        .as_slice()
        .iter()
        .zip(w.w.as_slice())
        .map(|(xi, wi)| xi * 2.0 - wi)
        .collect();
    Ok(StiefelPoint {
        w: ComplexMatrix::from_vec(n, n, data)?,
    })
}

/// Running average of squared gradient norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradScaleState {
    pub running_sq_norm: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl GradScaleState {
    pub fn new(decay: f64, epsilon: f64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) || !(epsilon > 0.0) {
            return Err(Error::Invalid(format!("bad gradient scaling: decay={decay}, epsilon={epsilon}")));
        }
        Ok(Self {
            running_sq_norm: 0.0,
            decay,
            epsilon,
        })
    }
}

impl Default for GradScaleState {
    fn default() -> Self {
        Self::new(0.9, 1e-8).unwrap()
    }
}

/// Divides `g` by the root of the running mean of `‖G‖²_F`.
pub fn scale_gradient(g: &ComplexMatrix, state: GradScaleState) -> (ComplexMatrix, GradScaleState) {
    let mut next = state;
    next.running_sq_norm = state.decay * state.running_sq_norm + (1.0 - state.decay) * g.frobenius_norm_sqr();
    let factor = 1.0 / (next.running_sq_norm + state.epsilon).sqrt();
    (g.scale(factor.into()), next)
}

/// One full-capacity update: optional gradient scaling, then the Cayley step.
///
/// Gradients are never clipped.
pub fn full_step(
    w: &StiefelPoint,
    g: &ComplexMatrix,
    lambda: f64,
    state: Option<GradScaleState>,
) -> Result<(StiefelPoint, Option<GradScaleState>)> {
    if g.shape() != w.w.shape() {
        return Err(Error::shape("full_step", g.shape(), w.w.shape()));
    }
    let (g, state) = match state {
        Some(s) => {
            let (g, s) = scale_gradient(g, s);
            (g, Some(s))
        }
        None => (g.clone(), None),
    };
    let a = riemannian_skew(&g, w)?;
    Ok((cayley_step(w, &a, lambda)?, state))
}
