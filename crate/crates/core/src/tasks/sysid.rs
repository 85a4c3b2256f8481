//! System identification: recover the recurrence of a random unitary RNN
//! from its inputs and outputs.
//!
//! The true system has `V = U = I`, `c = 0`, `h0 = 0`, a bias drawn from
//! `[−0.11, −0.09]` and complex outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Complex, ComplexMatrix, ZERO};
use crate::model::{forward, Inputs, Recurrence, SequenceBatch, Targets, UrnnModel};
use crate::random::{randn_circular, Rng};
use crate::restricted::{sample_wide_unitary, RestrictedParams};
use crate::stiefel::StiefelPoint;

pub const BIAS_RANGE: (f64, f64) = (-0.11, -0.09);

/// Where the true recurrence matrix is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemOrigin {
    /// A single restricted-capacity draw.
    Wu,
    /// Product of two restricted-capacity draws.
    Wg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SysIdSystem {
    pub n: usize,
    pub w_sys: ComplexMatrix,
    pub b_sys: Vec<f64>,
    pub origin: SystemOrigin,
}

pub fn gen_sysid_system(n: usize, origin: SystemOrigin, rng: &mut Rng) -> SysIdSystem {
    let w_sys = match origin {
        SystemOrigin::Wu => RestrictedParams::sample(n, rng).compose(),
        SystemOrigin::Wg => sample_wide_unitary(n, rng),
    };
    let b_sys = (0..n).map(|_| rng.uniform(BIAS_RANGE.0, BIAS_RANGE.1)).collect();
    SysIdSystem { n, w_sys, b_sys, origin }
}

/// `V`, `U`, `c`, `b` and `h0` at their true values around a given recurrence.
pub fn oracle_model(sys: &SysIdSystem, recurrence: Recurrence) -> UrnnModel {
    let n = sys.n;
    UrnnModel {
        recurrence,
        v: ComplexMatrix::identity(n),
        b: sys.b_sys.clone(),
        u: ComplexMatrix::identity(n),
        c: vec![ZERO; n],
        h0: vec![ZERO; n],
        real_output: false,
    }
}

impl SysIdSystem {
    /// The true system as a model.
    pub fn model(&self) -> Result<UrnnModel> {
        Ok(oracle_model(self, Recurrence::Full(StiefelPoint::new(self.w_sys.clone())?)))
    }
}

/// `count` sequences of `t` circular Gaussian input vectors with the
/// system's outputs as complex targets.
pub fn gen_sysid_dataset(sys: &SysIdSystem, t: usize, count: usize, rng: &mut Rng) -> Result<SequenceBatch> {
    let n = sys.n;
    let values = randn_circular(count * t * n, rng).into_vec();
    let mut batch = SequenceBatch {
        batch: count,
        steps: t,
        inputs: Inputs::Dense { dim: n, values },
        targets: Targets::Complex {
            dim: n,
            values: vec![ZERO; count * t * n],
        },
        mask: None,
    };
    let (_, outputs) = forward(&sys.model()?, &batch)?;
    batch.targets = Targets::Complex {
        dim: n,
        values: outputs.values,
    };
    Ok(batch)
}

/// `Σ‖pred − target‖² / Σ‖target‖²`.
pub fn nmse(pred: &[Complex], target: &[Complex]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("nmse", (pred.len(), 1), (target.len(), 1)));
    }
    let energy: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::Invalid("nmse of a zero-energy target".into()));
    }
    let err: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).norm_sqr()).sum();
    Ok(err / energy)
}

/// Complex targets of a batch, or `None` for other target kinds.
pub fn complex_targets(batch: &SequenceBatch) -> Option<&[Complex]> {
    match &batch.targets {
        Targets::Complex { values, .. } => Some(values),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;
    use crate::model::{compute_loss, LossKind};

    #[test]
    fn system_properties() {
        let mut rng = Rng::new(1);
        for origin in [SystemOrigin::Wu, SystemOrigin::Wg] {
            let sys = gen_sysid_system(8, origin, &mut rng);
            assert!(sys.b_sys.iter().all(|b| (BIAS_RANGE.0..=BIAS_RANGE.1).contains(b)));
            assert!(unitarity_defect(&sys.w_sys).unwrap() < 1e-12);
        }
        assert_eq!(
            gen_sysid_system(6, SystemOrigin::Wg, &mut Rng::new(5)),
            gen_sysid_system(6, SystemOrigin::Wg, &mut Rng::new(5))
        );
    }

    #[test]
    fn suppressed_system_outputs_zero() {
        let mut rng = Rng::new(2);
        let mut sys = gen_sysid_system(4, SystemOrigin::Wu, &mut rng);
        sys.b_sys = vec![-1e6; 4];
        let data = gen_sysid_dataset(&sys, 20, 3, &mut rng).unwrap();
        assert!(complex_targets(&data).unwrap().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn output_growth_is_bounded_by_input() {
        let mut rng = Rng::new(3);
        let sys = gen_sysid_system(6, SystemOrigin::Wg, &mut rng);
        let (t, count) = (50, 4);
        let data = gen_sysid_dataset(&sys, t, count, &mut rng).unwrap();
        let Inputs::Dense { values: x, .. } = &data.inputs else { unreachable!() };
        let y = complex_targets(&data).unwrap();
        let norm = |v: &[Complex]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for s in 0..count {
            let mut prev = 0.0;
            for step in 0..t {
                let off = (s * t + step) * 6;
                let cur = norm(&y[off..off + 6]);
                assert!(cur.is_finite());
                assert!(cur <= prev + norm(&x[off..off + 6]) + 1e-12);
                prev = cur;
            }
        }
    }

    #[test]
    fn dataset_deterministic_and_oracle_consistent() {
        let sys = gen_sysid_system(5, SystemOrigin::Wg, &mut Rng::new(4));
        let a = gen_sysid_dataset(&sys, 30, 3, &mut Rng::new(9)).unwrap();
        let b = gen_sysid_dataset(&sys, 30, 3, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let (_, out) = forward(&sys.model().unwrap(), &a).unwrap();
        assert!(nmse(&out.values, complex_targets(&a).unwrap()).unwrap() < 1e-20);
        assert!(compute_loss(&out, &a, LossKind::Mse).unwrap() < 1e-20);
    }

    #[test]
    fn nmse_examples() {
        let t = vec![Complex::new(1.0, -2.0), Complex::new(0.5, 0.25)];
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert!((nmse(&[ZERO, ZERO], &t).unwrap() - 1.0).abs() < 1e-15);
        let doubled: Vec<Complex> = t.iter().map(|z| z * 2.0).collect();
        assert!((nmse(&doubled, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse(&t, &[ZERO, ZERO]).is_err());
    }
}
