//! Compares backpropagation through time against central differences for
//! both recurrence kinds and both losses.

use urnn::gradcheck::{gradcheck, random_instance};
use urnn::model::{LossKind, RecurrenceKind};

fn main() -> urnn::Result<()> {
    for kind in [RecurrenceKind::Restricted, RecurrenceKind::Full] {
        for loss in [LossKind::Mse, LossKind::CrossEntropy] {
            let (model, batch) = random_instance(4, 2, 3, 10, 3, kind, loss, 42);
            let report = gradcheck(&model, &batch, loss, 1e-6, 1e-6)?;
            println!("{kind:?} / {loss:?}: loss {:.4}, passed {}", report.loss, report.passed);
            for g in &report.groups {
                println!(
                    "    {:<10} {:>4} reals  max abs {:.1e}  max rel {:.1e}",
                    g.group.name(),
                    g.count,
                    g.max_abs_error,
                    g.max_rel_error
                );
            }
        }
    }

    // a coarse step is visibly wrong
    let (model, batch) = random_instance(4, 2, 3, 10, 3, RecurrenceKind::Full, LossKind::Mse, 42);
    let coarse = gradcheck(&model, &batch, LossKind::Mse, 1e-1, 1e-6)?;
    println!("step 1e-1: passed {}", coarse.passed);
    Ok(())
}
