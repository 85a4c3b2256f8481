//! Parameter updates for a whole model.
//!
//! Unconstrained groups and restricted `θ` use [`rmsprop_update`]; a full
//! recurrence takes a Cayley step with a fixed rate and is re-projected if
//! round-off ever pushes it past [`DRIFT_THRESHOLD`](crate::stiefel::DRIFT_THRESHOLD).

use crate::error::{Error, Result};
use crate::model::{loss_and_gradients, GradientSet, LossKind, ParamGroup, Recurrence, RecurrenceGrad, SequenceBatch, UrnnModel};
use crate::stiefel::{full_step, DriftEvent, GradScaleState};

use super::rmsprop::{rmsprop_update, RmspropState};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub lr: f64,
    pub stiefel_lr: f64,
    pub momentum: f64,
    pub averaging: f64,
    pub epsilon: f64,
    /// Scale full-recurrence gradients by their running norm.
    pub grad_scale: bool,
    /// Groups left untouched.
    pub frozen: Vec<ParamGroup>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            stiefel_lr: 1e-3,
            momentum: 0.9,
            averaging: 0.1,
            epsilon: 1e-8,
            grad_scale: false,
            frozen: vec![ParamGroup::H0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    settings: OptimizerSettings,
    rms: Vec<(ParamGroup, RmspropState)>,
    scale: Option<GradScaleState>,
    drift_events: Vec<DriftEvent>,
}

impl Optimizer {
    pub fn new(model: &UrnnModel, settings: OptimizerSettings) -> Result<Self> {
        if !(settings.lr > 0.0) || !(settings.stiefel_lr > 0.0) {
            return Err(Error::Invalid("learning rates must be positive".into()));
        }
        let mut rms = Vec::new();
        for group in ParamGroup::ALL {
            if settings.frozen.contains(&group) {
                continue;
            }
            if group == ParamGroup::Recurrence && matches!(model.recurrence, Recurrence::Full(_)) {
                continue;
            }
            let state = RmspropState::new(model.group_len(group), settings.momentum, settings.averaging, settings.epsilon)?;
            rms.push((group, state));
        }
        let scale = if settings.grad_scale {
            Some(GradScaleState::new(1.0 - settings.averaging, settings.epsilon)?)
        } else {
            None
        };
        Ok(Self {
            settings,
            rms,
            scale,
            drift_events: Vec::new(),
        })
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    /// Re-projections performed so far.
    pub fn drift_events(&self) -> &[DriftEvent] {
        &self.drift_events
    }

    /// Applies one update to every trainable group.
    pub fn step(&mut self, model: &mut UrnnModel, grads: &GradientSet) -> Result<()> {
        let full_trainable = !self.settings.frozen.contains(&ParamGroup::Recurrence);
        if let (Recurrence::Full(w), RecurrenceGrad::Dense(g), true) = (&model.recurrence, &grads.recurrence, full_trainable) {
            if let Some(index) = g.as_slice().iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite { context: "recurrence gradient", index });
            }
            let (mut next, scale) = full_step(w, g, self.settings.stiefel_lr, self.scale)?;
            self.scale = scale;
            if let Some(event) = next.monitor_drift() {
                self.drift_events.push(event);
            }
            model.recurrence = Recurrence::Full(next);
        }
        for (group, state) in &mut self.rms {
            let mut values = model.group_values(*group);
            rmsprop_update(&mut values, &grads.group(*group), state, self.settings.lr)?;
            model.set_group_values(*group, &values)?;
        }
        Ok(())
    }
}

/// Forward, backward and one update. Returns the loss before the update.
pub fn train_step(model: &mut UrnnModel, batch: &SequenceBatch, kind: LossKind, opt: &mut Optimizer) -> Result<f64> {
    let (loss, grads) = loss_and_gradients(model, batch, kind)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { context: "training loss", index: 0 });
    }
    opt.step(model, &grads)?;
    Ok(loss)
}
