//! Experiment orchestration: optimizers, configuration, metrics,
//! checkpoints and the task runners behind the `urnn` binary.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod optim;
pub mod rmsprop;

pub use checkpoint::{load_checkpoint, promote, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{ExperimentConfig, Preset, Task};
pub use experiment::{run_experiment, CopySession, Summary};
pub use metrics::{read_metrics, write_metrics, MetricsRecord, MetricsWriter, Split};
pub use optim::{train_step, Optimizer, OptimizerSettings};
pub use rmsprop::{rmsprop_update, RmspropState};
