//! Central finite-difference check of [`bptt_backward`](crate::model::bptt_backward).

use serde::Serialize;

use crate::error::Result;
use crate::linalg::Complex;
use crate::model::{
    compute_loss, forward, loss_and_gradients, Inputs, LossKind, ParamGroup, Recurrence, RecurrenceKind,
    SequenceBatch, Targets, UrnnModel,
};
use crate::random::{randn_circular, Rng};

/// Absolute error always tolerated, for components near zero.
pub const ABSOLUTE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub group: ParamGroup,
    pub count: usize,
    pub max_abs_error: f64,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|)` among
    /// components above the absolute floor.
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
    pub loss: f64,
    pub groups: Vec<GroupReport>,
    pub passed: bool,
}

/// Compares analytic gradients with `(L(p + h) − L(p − h)) / 2h` for every
/// trainable real. A component passes when
/// `|a − n| ≤ ABSOLUTE_FLOOR + rtol·max(|a|, |n|)`.
pub fn gradcheck(model: &UrnnModel, batch: &SequenceBatch, kind: LossKind, step: f64, rtol: f64) -> Result<GradcheckReport> {
    let (loss, grads) = loss_and_gradients(model, batch, kind)?;
    let eval = |m: &UrnnModel| -> Result<f64> {
        let (_, out) = forward(m, batch)?;
        compute_loss(&out, batch, kind)
    };
    let mut groups = Vec::new();
    for group in ParamGroup::ALL {
        let analytic = grads.group(group);
        let mut report = GroupReport {
            group,
            count: analytic.len(),
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            passed: true,
        };
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            plus.perturb(group, i, step)?;
            let mut minus = model.clone();
            minus.perturb(group, i, -step)?;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
            let err = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            report.max_abs_error = report.max_abs_error.max(err);
            if scale > ABSOLUTE_FLOOR {
                report.max_rel_error = report.max_rel_error.max(err / scale);
            }
            // NaN compares false and fails the group
            if !(err <= ABSOLUTE_FLOOR + rtol * scale) {
                report.passed = false;
            }
        }
        groups.push(report);
    }
    let passed = groups.iter().all(|g| g.passed);
    Ok(GradcheckReport {
        step,
        rtol,
        atol: ABSOLUTE_FLOOR,
        loss,
        groups,
        passed,
    })
}

/// Random model and batch for gradient checking.
///
/// MSE instances use complex inputs, outputs and targets; cross-entropy
/// instances use one-hot inputs and real logits over `l` classes. Biases,
/// `c` and `h0` are randomized so every group carries signal. Data are
/// scaled so the loss stays O(1).
pub fn random_instance(
    n: usize,
    m: usize,
    l: usize,
    steps: usize,
    batch: usize,
    kind: RecurrenceKind,
    loss: LossKind,
    seed: u64,
) -> (UrnnModel, SequenceBatch) {
    let mut rng = Rng::new(seed);
    let real_output = loss == LossKind::CrossEntropy;
    let mut model = UrnnModel::init(Recurrence::sample(kind, n, &mut rng), m, l, real_output, &mut rng);
    model.b = (0..n).map(|_| rng.uniform(-0.3, 0.1)).collect();
    model.c = randn_circular(l, &mut rng).scale(Complex::new(0.1, 0.0)).into_vec();
    model.h0 = randn_circular(n, &mut rng).scale(Complex::new(0.5, 0.0)).into_vec();
    let total = batch * steps;
    // keeps the loss O(1) so finite-difference rounding stays under the floor
    let half = Complex::new(0.5, 0.0);
    let data = match loss {
        LossKind::Mse => SequenceBatch {
            batch,
            steps,
            inputs: Inputs::Dense {
                dim: m,
                values: randn_circular(total * m, &mut rng).scale(half).into_vec(),
            },
            targets: Targets::Complex {
                dim: l,
                values: randn_circular(total * l, &mut rng).scale(half).into_vec(),
            },
            mask: None,
        },
        LossKind::CrossEntropy => SequenceBatch {
            batch,
            steps,
            inputs: Inputs::OneHot {
                dim: m,
                index: (0..total).map(|_| rng.below(m) as u32).collect(),
            },
            targets: Targets::Classes {
                classes: l,
                index: (0..total).map(|_| rng.below(l) as u32).collect(),
            },
            mask: None,
        },
    };
    (model, data)
}
