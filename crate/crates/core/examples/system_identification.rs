//! Learns the recurrence of a random unitary RNN from input/output pairs,
//! once with each recurrence kind, holding everything else at the truth.

use urnn::model::RecurrenceKind;
use urnn::train::{run_experiment, ExperimentConfig, Preset, Summary, Task};

fn main() -> urnn::Result<()> {
    for kind in [RecurrenceKind::Restricted, RecurrenceKind::Full] {
        let mut config = ExperimentConfig::preset(Task::Sysid, Preset::Desk);
        config.model.recurrence = kind;
        config.sysid.train_size = 500;
        config.sysid.inits = 2;
        config.optimizer.epochs = 5;
        config.output.dir = std::env::temp_dir().join(format!("urnn-sysid-{kind:?}").to_lowercase());

        let Summary::Sysid(s) = run_experiment(&config)? else { unreachable!() };
        println!("{kind:?}: best test NMSE {:.4} (init seed {})", s.best_test_nmse, s.best_init);
        for r in &s.inits {
            println!(
                "    seed {}  start {:.4}  best {:.4}  final {:.4}",
                r.seed, r.initial_test_nmse, r.best_test_nmse, r.final_test_nmse
            );
        }
    }
    Ok(())
}
