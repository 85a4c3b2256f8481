//! RMSprop with heavy-ball momentum on the scaled step.
//!
//! ```text
//! r ← (1 − avg)·r + avg·g²
//! s = lr·g / √(r + ε)
//! m ← μ·m + s
//! p ← p − m
//! ```

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub mean_sq: Vec<f64>,
    pub velocity: Vec<f64>,
    pub momentum: f64,
    pub averaging: f64,
    pub epsilon: f64,
}

impl RmspropState {
    pub fn new(len: usize, momentum: f64, averaging: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) || !(averaging > 0.0 && averaging <= 1.0) || !(epsilon > 0.0) {
            return Err(Error::Invalid(format!(
                "bad RMSprop constants: momentum={momentum}, averaging={averaging}, epsilon={epsilon}"
            )));
        }
        Ok(Self {
            mean_sq: vec![0.0; len],
            velocity: vec![0.0; len],
            momentum,
            averaging,
            epsilon,
        })
    }

    /// Momentum 0.9, averaging 0.1, ε = 1e−8.
    pub fn with_defaults(len: usize) -> Self {
        Self::new(len, 0.9, 0.1, 1e-8).unwrap()
    }

    pub fn len(&self) -> usize {
        self.mean_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_sq.is_empty()
    }
}

/// One in-place update. A non-finite gradient aborts before anything is
/// modified.
pub fn rmsprop_update(params: &mut [f64], grads: &[f64], state: &mut RmspropState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::shape("rmsprop_update", (params.len(), grads.len()), (state.len(), 1)));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { context: "rmsprop gradient", index });
    }
    let avg = state.averaging;
    for i in 0..params.len() {
        let g = grads[i];
        let r = (1.0 - avg) * state.mean_sq[i] + avg * g * g;
        state.mean_sq[i] = r;
        let step = lr * g / (r + state.epsilon).sqrt();
        let m = state.momentum * state.velocity[i] + step;
        state.velocity[i] = m;
        params[i] -= m;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.5, -2.0];
        let mut s = RmspropState::with_defaults(2);
        rmsprop_update(&mut p, &[0.0, 0.0], &mut s, 1e-3).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_value() {
        let mut p = vec![0.0];
        let mut s = RmspropState::with_defaults(1);
        rmsprop_update(&mut p, &[1.0], &mut s, 1e-3).unwrap();
        let expected = 1e-3 / (0.1f64 + 1e-8).sqrt();
        assert!((p[0] + expected).abs() < 1e-15);
        assert!((-p[0] - 0.0031623).abs() < 1e-7);
        assert_eq!(s.mean_sq[0], 0.1);
    }

    #[test]
    fn second_step_carries_momentum() {
        let mut p = vec![0.0];
        let mut s = RmspropState::with_defaults(1);
        rmsprop_update(&mut p, &[1.0], &mut s, 1e-3).unwrap();
        rmsprop_update(&mut p, &[1.0], &mut s, 1e-3).unwrap();
        let s1 = 1e-3 / (0.1f64 + 1e-8).sqrt();
        let s2 = 1e-3 / (0.19f64 + 1e-8).sqrt();
        assert!((p[0] + s1 + (0.9 * s1 + s2)).abs() < 1e-15);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, -0.7, 2.0];
            let mut s = RmspropState::with_defaults(3);
            for k in 0..5 {
                let g: Vec<f64> = p.iter().map(|x| x * (k as f64 + 1.0)).collect();
                rmsprop_update(&mut p, &g, &mut s, 1e-2).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = vec![1.0, 2.0];
        let mut s = RmspropState::with_defaults(2);
        let err = rmsprop_update(&mut p, &[0.5, f64::NAN], &mut s, 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s, RmspropState::with_defaults(2));
    }

    #[test]
    fn rejects_bad_constants_and_shapes() {
        assert!(RmspropState::new(1, 1.0, 0.1, 1e-8).is_err());
        assert!(RmspropState::new(1, 0.9, 0.0, 1e-8).is_err());
        assert!(RmspropState::new(1, 0.9, 0.1, 0.0).is_err());
        let mut s = RmspropState::with_defaults(2);
        assert!(rmsprop_update(&mut [0.0], &[0.0], &mut s, 1e-3).is_err());
    }
}
