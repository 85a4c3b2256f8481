//! Full-capacity optimization: pull a unitary matrix toward a target with
//! Cayley steps and watch the iterate stay on the unitary group.

use urnn::linalg::{unitarity_defect, ComplexMatrix};
use urnn::random::{haar_unitary, Rng};
use urnn::stiefel::{full_step, StiefelPoint};

fn main() -> urnn::Result<()> {
    let n = 32;
    let mut rng = Rng::new(3);
    let target = haar_unitary(n, &mut rng);
    let mut w = StiefelPoint::new(haar_unitary(n, &mut rng))?;

    // f(W) = ½‖W − T‖², so G = W − T
    let lambda = 0.05;
    for it in 0..=400 {
        let g: ComplexMatrix = w.matrix().sub(&target)?;
        if it % 50 == 0 {
            println!(
                "iter {it:>3}  ‖W − T‖ = {:.6}  defect = {:.2e}",
                g.frobenius_norm(),
                unitarity_defect(w.matrix())?
            );
        }
        w = full_step(&w, &g, lambda, None)?.0;
    }
    Ok(())
}
