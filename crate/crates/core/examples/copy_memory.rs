//! Trains a full-capacity uRNN on the copy-memory task and compares the
//! test cross entropy with the memoryless baseline.
//!
//! ```sh
//! cargo run --release --example copy_memory -- 300
//! ```

use urnn::train::{run_experiment, ExperimentConfig, Preset, Summary, Task};

fn main() -> urnn::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let mut config = ExperimentConfig::preset(Task::Copymem, Preset::Desk);
    config.optimizer.iterations = iterations;
    config.copymem.eval_every = 50;
    config.output.dir = std::env::temp_dir().join("urnn-copy-memory");

    let Summary::Copymem(s) = run_experiment(&config)? else { unreachable!() };
    println!("n = {}, {} trainable reals, T = {}", s.n, s.trainable_params, s.t_delay);
    println!("baseline cross entropy {:.4}", s.baseline);
    for e in &s.evals {
        println!("iter {:>5}  test CE {:.4}  accuracy {:.3}", e.iteration, e.loss, e.accuracy);
    }
    println!("max unitarity defect {:.2e}", s.max_unitarity_defect);
    println!("artifacts in {}", config.output.dir.display());
    Ok(())
}
