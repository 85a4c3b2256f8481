//! Builds a restricted-capacity recurrence matrix, applies it in
//! O(n log n), and prints where the parameter count falls short of U(n).

use urnn::linalg::unitarity_defect;
use urnn::random::{randn_circular, Rng};
use urnn::restricted::{capacity_verdict, RestrictedParams};

fn main() -> urnn::Result<()> {
    let mut rng = Rng::new(7);
    let params = RestrictedParams::sample(16, &mut rng);
    let w = params.compose();
    println!("n = 16, unitarity defect of W(θ) = {:.2e}", unitarity_defect(&w)?);

    // factor-by-factor application agrees with the dense matrix
    let x = randn_circular(16, &mut rng);
    let fast = params.apply(&x)?;
    let dense = w.matvec(x.as_slice())?;
    println!("‖fast − dense‖ = {:.2e}, ‖Wx‖/‖x‖ = {:.15}", fast.distance(&dense), fast.norm() / x.norm());

    println!("\n  n  params  dim U(n)  provably restricted");
    for n in 1..=10 {
        let v = capacity_verdict(n);
        println!("{:>3} {:>7} {:>9}  {}", n, v.param_count, v.manifold_dim, v.provably_restricted);
    }
    Ok(())
}
