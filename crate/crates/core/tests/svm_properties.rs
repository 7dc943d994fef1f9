use leaning::corpus::Leaning;
use leaning::sparse::SparseVector;
use leaning::svm::{self, TrainConfig};
use proptest::prelude::*;

fn fixture() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>, f64, u64)> {
    (2usize..12, 1usize..4).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n),
            prop::collection::vec(any::<bool>(), n),
            prop::sample::select(vec![0.01, 0.1, 1.0, 10.0]),
            any::<u64>(),
        )
    })
}

fn data(points: &[Vec<f64>], right: &[bool]) -> (Vec<SparseVector>, Vec<Leaning>) {
    let x = points.iter().map(|p| SparseVector::from_dense(p)).collect();
    let mut y: Vec<Leaning> = right.iter().map(|&r| if r { Leaning::Right } else { Leaning::Left }).collect();
    y[0] = Leaning::Left;
    y[1] = Leaning::Right;
    (x, y)
}

/// Largest projected-gradient violation of the dual, recomputed from α.
fn kkt_violation(alpha: &[f64], x: &[SparseVector], y: &[Leaning], c: f64) -> f64 {
    let dims = x[0].dims();
    let mut w = vec![0.0; dims];
    let mut b = 0.0;
    for ((a, xi), yi) in alpha.iter().zip(x).zip(y) {
        xi.axpy_into(a * yi.sign(), &mut w);
        b += a * yi.sign();
    }
    alpha
        .iter()
        .zip(x)
        .zip(y)
        .map(|((&a, xi), yi)| {
            let g = yi.sign() * (xi.dot_dense(&w) + b) - 1.0;
            if a <= 0.0 {
                (-g).max(0.0)
            } else if a >= c {
                g.max(0.0)
            } else {
                g.abs()
            }
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_solutions_satisfy_kkt_and_close_the_gap((points, right, c, seed) in fixture()) {
        let (x, y) = data(&points, &right);
        let cfg = TrainConfig { seed, max_iter: 100_000, ..TrainConfig::with_c(c) };
        let (m, alpha) = svm::solve_dual(&x, &y, &cfg).unwrap();
        prop_assert!(m.solver_report.converged);
        prop_assert!(m.solver_report.max_projected_gradient_violation < cfg.tol);
        prop_assert!(alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        // the recomputed violation can exceed the solver's last-pass value by
        // the updates made during that pass, so allow one decade
        prop_assert!(kkt_violation(&alpha, &x, &y, c) < 10.0 * cfg.tol);
        let primal = m.primal_objective(&x, &y);
        let gap = primal - svm::dual_objective(&alpha, &x, &y);
        prop_assert!(gap >= -1e-9 && gap <= 1e-2 * (1.0 + primal.abs()), "gap {gap}, primal {primal}");
    }

    #[test]
    fn same_seed_same_model((points, right, c, seed) in fixture()) {
        let (x, y) = data(&points, &right);
        let cfg = TrainConfig { seed, ..TrainConfig::with_c(c) };
        let a = svm::train_svm(&x, &y, &cfg).unwrap();
        let b = svm::train_svm(&x, &y, &cfg).unwrap();
        prop_assert_eq!(a.solver_report.iterations, b.solver_report.iterations);
        prop_assert_eq!(a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(), b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn class_exclusive_feature_points_to_its_class(
        noise in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 6..14),
        flip in any::<bool>(),
    ) {
        // feature 0 is present only in documents of one class
        let n = noise.len();
        let owner = if flip { Leaning::Left } else { Leaning::Right };
        let y: Vec<Leaning> = (0..n).map(|i| if i % 2 == 0 { owner } else if flip { Leaning::Right } else { Leaning::Left }).collect();
        let x: Vec<SparseVector> = noise
            .iter()
            .zip(&y)
            .map(|(v, l)| SparseVector::from_dense(&[if *l == owner { 1.0 } else { 0.0 }, v[0], v[1]]))
            .collect();
        let m = svm::train_svm(&x, &y, &TrainConfig::with_c(1.0)).unwrap();
        prop_assert!(m.weights[0] * owner.sign() > 0.0, "weight {}", m.weights[0]);
    }
}
