//! Randomized invariants.

use proptest::prelude::*;

use urnn::fft::unitary_dft;
use urnn::gradcheck::random_instance;
use urnn::linalg::{linear_solve, matmul, unitarity_defect, Complex, ComplexMatrix, ComplexVector};
use urnn::model::{forward, modrelu, LossKind, RecurrenceKind};
use urnn::random::{haar_unitary, randn_circular, Rng};
use urnn::restricted::RestrictedParams;
use urnn::stiefel::{full_step, riemannian_skew, skew_defect, StiefelPoint};
use urnn::tasks::copy::{gen_copy_batch, BLANK};
use urnn::tasks::CopySpec;
use urnn::train::{read_checkpoint, rmsprop_update, write_checkpoint, RmspropState};

fn random_matrix(n: usize, rng: &mut Rng) -> ComplexMatrix {
    ComplexMatrix::from_vec(n, n, randn_circular(n * n, rng).into_vec()).unwrap()
}

fn kind(full: bool) -> RecurrenceKind {
    if full {
        RecurrenceKind::Full
    } else {
        RecurrenceKind::Restricted
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn restricted_apply_preserves_norm(n in 1usize..40, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let p = RestrictedParams::sample(n, &mut rng);
        let x = randn_circular(n, &mut rng);
        let y = p.apply(&x).unwrap();
        prop_assert!((y.norm() - x.norm()).abs() <= 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn restricted_theta_round_trips(n in 1usize..20, seed in any::<u64>()) {
        let p = RestrictedParams::sample(n, &mut Rng::new(seed));
        let q = RestrictedParams::from_theta(&p.theta(), p.perm().to_vec()).unwrap();
        prop_assert_eq!(q, p);
    }

    #[test]
    fn full_step_stays_unitary(n in 1usize..24, lambda in 1e-4f64..1.0, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let w = StiefelPoint::new(haar_unitary(n, &mut rng)).unwrap();
        let g = random_matrix(n, &mut rng);
        let a = riemannian_skew(&g, &w).unwrap();
        prop_assert!(skew_defect(&a) <= 1e-12 * a.frobenius_norm().max(1.0));
        let (next, _) = full_step(&w, &g, lambda, None).unwrap();
        prop_assert!(unitarity_defect(next.matrix()).unwrap() < 1e-10);
    }

    #[test]
    fn dft_round_trip_and_parseval(n in 1usize..70, seed in any::<u64>()) {
        let x = randn_circular(n, &mut Rng::new(seed));
        let y = unitary_dft(&x, false);
        prop_assert!((y.norm() - x.norm()).abs() < 1e-12 * x.norm().max(1.0));
        let back = unitary_dft(&y, true);
        prop_assert!(back.distance(&x) < 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn solve_residual_is_small(n in 1usize..16, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        // diagonally boosted so the system is well conditioned
        let mut a = random_matrix(n, &mut rng);
        for i in 0..n {
            a[(i, i)] += Complex::new(2.0 * n as f64, 0.0);
        }
        let b = random_matrix(n, &mut rng);
        let x = linear_solve(&a, &b).unwrap();
        prop_assert!(matmul(&a, &x).unwrap().distance(&b) < 1e-10 * b.frobenius_norm().max(1.0));
    }

    #[test]
    fn modrelu_modulus(values in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -2.0f64..1.0), 1..16)) {
        let z = ComplexVector::from_vec(values.iter().map(|&(re, im, _)| Complex::new(re, im)).collect());
        let b: Vec<f64> = values.iter().map(|v| v.2).collect();
        let h = modrelu(&z, &b).unwrap();
        for i in 0..z.len() {
            let expected = if z[i].norm() < 1e-12 { 0.0 } else { (z[i].norm() + b[i]).max(0.0) };
            prop_assert!((h[i].norm() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rmsprop_first_step_is_sign_scaled(g in prop::collection::vec(1e-3f64..1e3, 1..8), lr in 1e-5f64..1e-1) {
        let mut p = vec![0.0; g.len()];
        let mut s = RmspropState::with_defaults(g.len());
        rmsprop_update(&mut p, &g, &mut s, lr).unwrap();
        for x in &p {
            prop_assert!((x + lr / 0.1f64.sqrt()).abs() < 1e-6 * lr);
        }
        prop_assert!(s.mean_sq.iter().all(|r| r.is_finite() && *r >= 0.0));
    }

    #[test]
    fn forward_is_independent_of_batch_order(n in 1usize..6, full in any::<bool>(), seed in any::<u64>()) {
        let (model, batch) = random_instance(n, 2, 2, 6, 4, kind(full), LossKind::Mse, seed);
        let (_, all) = forward(&model, &batch).unwrap();
        let order = [2usize, 0, 3, 1];
        let (_, shuffled) = forward(&model, &batch.select(&order)).unwrap();
        for (k, &s) in order.iter().enumerate() {
            let (_, single) = forward(&model, &batch.select(&[s])).unwrap();
            for t in 0..batch.steps {
                let a = all.step(s, t);
                for (x, y) in a.iter().zip(shuffled.step(k, t)).chain(a.iter().zip(single.step(0, t))) {
                    prop_assert!((x - y).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn copy_targets_recall_head(t in 1usize..300, seed in any::<u64>()) {
        let batch = gen_copy_batch(&CopySpec { t_delay: t, batch: 1, seed }).unwrap();
        let (urnn::model::Inputs::OneHot { index: x, .. }, urnn::model::Targets::Classes { index: y, .. }) =
            (&batch.inputs, &batch.targets) else { unreachable!() };
        let tail: Vec<usize> = (0..y.len()).filter(|&i| y[i] != BLANK).collect();
        prop_assert!(tail.iter().all(|&i| i >= t + 10));
        prop_assert_eq!(&y[t + 10..], &x[..10]);
    }

    #[test]
    fn checkpoints_round_trip(n in 1usize..8, full in any::<bool>(), ce in any::<bool>(), seed in any::<u64>()) {
        let loss = if ce { LossKind::CrossEntropy } else { LossKind::Mse };
        let (model, _) = random_instance(n, 3, 2, 1, 1, kind(full), loss, seed);
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        prop_assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), model);
    }
}
