//! Experiment configuration.
//!
//! A run is described by a TOML document. Any key left out takes its value
//! from the selected preset (`desk` unless stated), so a config file only
//! needs the keys it changes:
//!
//! ```toml
//! task = "copymem"
//!
//! [model]
//! n = 32
//! recurrence = "full"
//!
//! [optimizer]
//! iterations = 2000
//!
//! [seeds]
//! data = 3
//! init = 4
//! ```
//!
//! Sections are `model`, `optimizer`, `copymem`, `sysid`, `capacity`,
//! `gradcheck`, `seeds` and `output`; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamGroup, RecurrenceKind};
use crate::tasks::SystemOrigin;

use super::optim::OptimizerSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Copymem,
    Sysid,
    Capacity,
    Gradcheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Copymem => "copymem",
            Task::Sysid => "sysid",
            Task::Capacity => "capacity",
            Task::Gradcheck => "gradcheck",
        }
    }
}

/// Published scale or a laptop-sized version of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    #[default]
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected paper or desk)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub recurrence: RecurrenceKind,
    /// Learn the initial hidden state instead of holding it at zero.
    pub train_h0: bool,
    /// Optional checkpoint to start from instead of a fresh draw.
    pub init_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub stiefel_lr: f64,
    pub momentum: f64,
    pub averaging: f64,
    pub epsilon: f64,
    pub grad_scale: bool,
    pub batch_size: usize,
    /// Update budget for copymem.
    pub iterations: usize,
    /// Passes over the training set for sysid.
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopymemConfig {
    pub t_delay: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Test-set evaluation period in iterations.
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysidConfig {
    pub seq_len: usize,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub origin: SystemOrigin,
    /// Independent initializations; the summary reports the best.
    pub inits: usize,
    /// Train only the recurrence, holding everything else at the true values.
    pub oracle_freeze: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub n_grid: Vec<usize>,
    pub restarts: usize,
    pub iterations: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub l: usize,
    pub steps: usize,
    pub batch: usize,
    pub step: f64,
    pub rtol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Mirror metrics to CSV.
    pub csv: bool,
    /// Record wall-clock milliseconds. Off by default because it breaks
    /// byte-identical reruns.
    pub timing: bool,
    /// Iterations between checkpoints; 0 saves only at the end.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub copymem: CopymemConfig,
    pub sysid: SysidConfig,
    pub capacity: CapacityConfig,
    pub gradcheck: GradcheckConfig,
    pub seeds: Seeds,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn preset(task: Task, preset: Preset) -> Self {
        let paper = preset == Preset::Paper;
        let n = match (task, paper) {
            (Task::Copymem, true) => 128,
            (Task::Copymem, false) => 32,
            _ => 8,
        };
        Self {
            task,
            model: ModelConfig {
                n,
                recurrence: RecurrenceKind::Full,
                train_h0: false,
                init_checkpoint: None,
            },
            optimizer: OptimizerConfig {
                lr: 1e-3,
                stiefel_lr: 1e-3,
                momentum: 0.9,
                averaging: 0.1,
                epsilon: 1e-8,
                grad_scale: false,
                batch_size: match task {
                    Task::Sysid => 50,
                    _ => 20,
                },
                iterations: if paper { 20_000 } else { 10_000 },
                epochs: if paper { 100 } else { 20 },
            },
            copymem: CopymemConfig {
                t_delay: if paper { 1000 } else { 100 },
                train_size: 100_000,
                test_size: if paper { 10_000 } else { 500 },
                eval_every: if paper { 100 } else { 250 },
            },
            sysid: SysidConfig {
                seq_len: 150,
                train_size: if paper { 20_000 } else { 2000 },
                valid_size: if paper { 1000 } else { 200 },
                test_size: if paper { 1000 } else { 200 },
                origin: SystemOrigin::Wg,
                inits: if paper { 6 } else { 3 },
                oracle_freeze: true,
            },
            capacity: CapacityConfig {
                n_grid: if paper { vec![4, 6, 7, 8, 16] } else { vec![8, 16] },
                restarts: 8,
                iterations: 3000,
                lr: 1e-2,
            },
            gradcheck: GradcheckConfig {
                n_grid: vec![2, 4, 8],
                m: 2,
                l: 2,
                steps: 10,
                batch: 3,
                step: 1e-6,
                rtol: 1e-6,
            },
            seeds: Seeds { data: 1, init: 2 },
            output: OutputConfig {
                dir: PathBuf::from("runs").join(task.name()),
                csv: false,
                timing: false,
                checkpoint_every: 1000,
            },
        }
    }

    /// Parses `text` on top of the preset for `task`. A `task` key in the
    /// text must agree with `task`.
    pub fn from_toml_str(text: &str, task: Task, preset: Preset) -> Result<Self> {
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(t) = overlay.get("task") {
            let named = t.as_str().unwrap_or("");
            if named != task.name() {
                return Err(Error::Config(format!("config is for task `{named}`, not `{}`", task.name())));
            }
        }
        let mut base = toml::Table::try_from(Self::preset(task, preset)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let config: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path, task: Task, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, task, preset)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every constraint before any work starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let o = &self.optimizer;
        for (name, v) in [("lr", o.lr), ("stiefel_lr", o.stiefel_lr), ("epsilon", o.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("optimizer.{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return bad(format!("optimizer.momentum must be in [0, 1), got {}", o.momentum));
        }
        if !(o.averaging > 0.0 && o.averaging < 1.0) {
            return bad(format!("optimizer.averaging must be in (0, 1), got {}", o.averaging));
        }
        if o.batch_size == 0 {
            return bad("optimizer.batch_size must be at least 1".into());
        }
        if self.model.n == 0 {
            return bad("model.n must be at least 1".into());
        }
        match self.task {
            Task::Copymem => {
                let c = &self.copymem;
                if c.t_delay == 0 || c.train_size == 0 || c.test_size == 0 || c.eval_every == 0 {
                    return bad("copymem t_delay, train_size, test_size and eval_every must be positive".into());
                }
            }
            Task::Sysid => {
                let s = &self.sysid;
                if s.seq_len == 0 || s.train_size == 0 || s.valid_size == 0 || s.test_size == 0 || s.inits == 0 {
                    return bad("sysid seq_len, dataset sizes and inits must be positive".into());
                }
                if s.train_size < o.batch_size {
                    return bad("sysid.train_size is smaller than one batch".into());
                }
            }
            Task::Capacity => {
                let c = &self.capacity;
                if c.n_grid.is_empty() || c.n_grid.contains(&0) || c.restarts == 0 || !(c.lr > 0.0) {
                    return bad("capacity needs a non-empty n_grid of positive sizes, restarts ≥ 1 and lr > 0".into());
                }
            }
            Task::Gradcheck => {
                let g = &self.gradcheck;
                if g.n_grid.is_empty() || g.n_grid.contains(&0) || g.m == 0 || g.l < 2 || g.steps == 0 || g.batch == 0 {
                    return bad("gradcheck needs positive sizes and at least two output classes".into());
                }
                if !(g.step > 0.0) || !(g.rtol > 0.0) {
                    return bad("gradcheck step and rtol must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn optimizer_settings(&self, frozen: Vec<ParamGroup>) -> OptimizerSettings {
        let o = &self.optimizer;
        OptimizerSettings {
            lr: o.lr,
            stiefel_lr: o.stiefel_lr,
            momentum: o.momentum,
            averaging: o.averaging,
            epsilon: o.epsilon,
            grad_scale: o.grad_scale,
            frozen,
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for task in [Task::Copymem, Task::Sysid, Task::Capacity, Task::Gradcheck] {
            for preset in [Preset::Paper, Preset::Desk] {
                let c = ExperimentConfig::preset(task, preset);
                c.validate().unwrap();
                let back = ExperimentConfig::from_toml_str(&c.to_toml_string(), task, Preset::Desk).unwrap();
                assert_eq!(back, c);
            }
        }
    }

    #[test]
    fn paper_preset_values() {
        let s = ExperimentConfig::preset(Task::Sysid, Preset::Paper);
        assert_eq!((s.sysid.train_size, s.sysid.valid_size, s.sysid.test_size), (20_000, 1000, 1000));
        assert_eq!((s.sysid.inits, s.optimizer.epochs, s.optimizer.batch_size), (6, 100, 50));
        assert_eq!(s.optimizer.lr, 1e-3);
        let d = ExperimentConfig::preset(Task::Sysid, Preset::Desk);
        assert_eq!(d.sysid.inits, 3);
    }

    #[test]
    fn overlay_keeps_unspecified_keys() {
        let c = ExperimentConfig::from_toml_str(
            "task = \"copymem\"\n[model]\nn = 16\n[seeds]\ndata = 9\n",
            Task::Copymem,
            Preset::Desk,
        )
        .unwrap();
        assert_eq!(c.model.n, 16);
        assert_eq!(c.seeds, Seeds { data: 9, init: 2 });
        assert_eq!(c.copymem.t_delay, 100);
    }

    #[test]
    fn rejects_unknown_keys_wrong_task_and_bad_values() {
        let err = |s: &str| ExperimentConfig::from_toml_str(s, Task::Copymem, Preset::Desk).unwrap_err();
        assert!(matches!(err("[model]\nhidden = 3\n"), Error::Config(_)));
        assert!(matches!(err("task = \"sysid\"\n"), Error::Config(_)));
        assert!(matches!(err("[model\n"), Error::Config(_)));
        let mut c = ExperimentConfig::preset(Task::Copymem, Preset::Desk);
        c.optimizer.lr = 0.0;
        assert!(c.validate().is_err());
        c.optimizer.lr = 1e-3;
        c.optimizer.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn preset_names_parse() {
        assert_eq!("paper".parse::<Preset>().unwrap(), Preset::Paper);
        assert!("huge".parse::<Preset>().is_err());
    }
}
