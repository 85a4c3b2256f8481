//! Fits the restricted parameterization to two kinds of targets: one drawn
//! from its own image, and a product of two draws, which generically lies
//! outside it once n ≥ 8.

use urnn::random::Rng;
use urnn::restricted::{capacity_verdict, fit_to_target, sample_wide_unitary, FitOptions, RestrictedParams};

fn main() -> urnn::Result<()> {
    let mut targets = Rng::new(1);
    let mut starts = Rng::new(2);
    // a lighter budget than the default so the example finishes quickly
    let budget = |perm| FitOptions {
        restarts: 4,
        iters: 1500,
        lr: 1e-2,
        perm,
    };
    println!("  n  restricted  in-image residual  product residual");
    for n in [4, 8, 16] {
        let truth = RestrictedParams::sample(n, &mut targets);
        let wide = sample_wide_unitary(n, &mut targets);
        let inside = fit_to_target(&truth.compose(), &budget(Some(truth.perm().to_vec())), &mut starts)?;
        let outside = fit_to_target(&wide, &budget(None), &mut starts)?;
        println!(
            "{n:>3}  {:>10}  {:>17.3e}  {:>16.3e}",
            capacity_verdict(n).provably_restricted,
            inside.residual,
            outside.residual
        );
    }
    Ok(())
}
