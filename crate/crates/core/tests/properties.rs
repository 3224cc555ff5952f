mod common;

use common::*;
use nalgebra::DMatrix;
use optspace::manifold::{
    cost, gradient, line_search_step, objective, optspace, optspace_with_truth, retract, solve_core, FactorTriple, LineSearchOutcome,
    OptConfig, TangentVector,
};
use optspace::sparse::{project_observed, LinearOperator, LowRankResidual};
use proptest::prelude::*;

fn random_orthogonal(rng: &mut rand_chacha::ChaCha8Rng, r: usize) -> DMatrix<f64> {
    gaussian(rng, r, r).qr().q()
}

fn random_tangent(rng: &mut rand_chacha::ChaCha8Rng, triple: &FactorTriple) -> TangentVector {
    let (m, n) = triple.factors.dims();
    let r = triple.rank();
    TangentVector {
        x: gaussian(rng, m, r),
        y: gaussian(rng, n, r),
    }
    .project_to_tangent(&triple.factors)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn cost_is_invariant_under_rotations(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let observed = random_problem(&mut rng, 10, 12, 60);
        let pair = random_pair(&mut rng, 10, 12, 3);
        let a = random_orthogonal(&mut rng, 3);
        let b = random_orthogonal(&mut rng, 3);
        let rotated = retract(&(pair.x() * &a), &(pair.y() * &b)).unwrap();
        // retract keeps X A as is up to column signs, which F ignores as well
        let f0 = cost(&observed, &pair, 0.0).unwrap().value;
        let f1 = cost(&observed, &rotated, 0.0).unwrap().value;
        prop_assert!((f0 - f1).abs() <= 1e-10 * f0.abs().max(1e-300), "{} vs {}", f0, f1);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let observed = random_problem(&mut rng, 10, 10, 50);
        let pair = random_pair(&mut rng, 10, 10, 2);
        let eval = cost(&observed, &pair, 0.0).unwrap();
        let triple = FactorTriple::new(pair, eval.core).unwrap();
        let w = gradient(&observed, &triple, 0.0).unwrap();
        let h = 1e-6;
        for _ in 0..10 {
            let d = random_tangent(&mut rng, &triple);
            let plus = retract(&(triple.x() + &d.x * h), &(triple.y() + &d.y * h)).unwrap();
            let minus = retract(&(triple.x() - &d.x * h), &(triple.y() - &d.y * h)).unwrap();
            let fd = (cost(&observed, &plus, 0.0).unwrap().value - cost(&observed, &minus, 0.0).unwrap().value) / (2.0 * h);
            let exact = w.inner(&d);
            prop_assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-8), "fd {} vs {}", fd, exact);
        }
    }

    #[test]
    fn regularized_gradient_matches_finite_differences(seed in any::<u64>(), lambda in 0.05f64..1.0) {
        let mut rng = rng(seed);
        let observed = random_problem(&mut rng, 9, 8, 30);
        let pair = random_pair(&mut rng, 9, 8, 2);
        let eval = cost(&observed, &pair, lambda).unwrap();
        let triple = FactorTriple::new(pair, eval.core).unwrap();
        let w = gradient(&observed, &triple, lambda).unwrap();
        let h = 1e-6;
        let d = random_tangent(&mut rng, &triple);
        let plus = retract(&(triple.x() + &d.x * h), &(triple.y() + &d.y * h)).unwrap();
        let minus = retract(&(triple.x() - &d.x * h), &(triple.y() - &d.y * h)).unwrap();
        let fd = (cost(&observed, &plus, lambda).unwrap().value - cost(&observed, &minus, lambda).unwrap().value) / (2.0 * h);
        let exact = w.inner(&d);
        prop_assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-8), "fd {} vs {}", fd, exact);
    }

    #[test]
    fn core_solve_matches_dense_least_squares(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let observed = random_problem(&mut rng, 8, 8, 30);
        let pair = random_pair(&mut rng, 8, 8, 2);
        let a = design_matrix(&observed, &pair);
        let b = nalgebra::DVector::from_column_slice(observed.values());
        let oracle = a.svd(true, true).solve(&b, 1e-14).unwrap();
        let core = solve_core(&observed, &pair, 0.0).unwrap().core;
        let diff = (nalgebra::DVector::from_column_slice(core.as_slice()) - &oracle).amax();
        prop_assert!(diff <= 1e-9 * oracle.amax().max(1.0), "{}", diff);
    }

    #[test]
    fn core_solve_is_a_minimum(seed in any::<u64>(), lambda in prop_oneof![Just(0.0), 0.0f64..1.0]) {
        let mut rng = rng(seed);
        let observed = random_problem(&mut rng, 8, 9, 35);
        let pair = random_pair(&mut rng, 8, 9, 2);
        let core = solve_core(&observed, &pair, lambda).unwrap().core;
        let best = objective(&observed, &pair, &core, lambda).unwrap();
        for _ in 0..20 {
            let dir = gaussian(&mut rng, 2, 2);
            let perturbed = &core + dir.normalize() * 1e-4;
            prop_assert!(objective(&observed, &pair, &perturbed, lambda).unwrap() >= best);
        }
    }

    #[test]
    fn accepted_steps_decrease_cost(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let observed = random_problem(&mut rng, 10, 10, 55);
        let pair = random_pair(&mut rng, 10, 10, 2);
        let eval = cost(&observed, &pair, 0.0).unwrap();
        let f0 = eval.value;
        let triple = FactorTriple::new(pair, eval.core).unwrap();
        let w = gradient(&observed, &triple, 0.0).unwrap();
        match line_search_step(&observed, &triple, f0, &w, 1e-3, 50, 0.0).unwrap() {
            LineSearchOutcome::Accepted { eval, factors, .. } => {
                prop_assert!(eval.value < f0);
                prop_assert!(factors.normalization_error() <= 1e-8);
            }
            LineSearchOutcome::Stalled { .. } => prop_assert!(false, "stalled on a nonzero gradient"),
        }
    }

    #[test]
    fn optspace_descends_on_the_manifold(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let u = gaussian(&mut rng, 30, 2);
        let v = gaussian(&mut rng, 25, 2);
        let dense = u * v.transpose();
        let positions = random_positions(&mut rng, 30, 25, 300);
        let observed = observe(&dense, &positions);
        let config = OptConfig { k_max: 60, tau: 1e-2, ..OptConfig::default() };
        let result = optspace(&observed, &config, Some(2)).unwrap();
        for w in result.trace.windows(2) {
            prop_assert!(w[1].cost <= w[0].cost);
        }
        prop_assert!(result.triple.factors.normalization_error() <= 1e-8);
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let dense = gaussian(&mut rng, 7, 9);
        let positions = random_positions(&mut rng, 7, 9, 20);
        let pattern = observe(&dense, &positions);
        let pair = random_pair(&mut rng, 7, 9, 2);
        let triple = FactorTriple::new(pair, gaussian(&mut rng, 2, 2)).unwrap();
        let once = project_observed(&triple, &pattern).unwrap();
        let twice = project_observed(&once, &pattern).unwrap();
        prop_assert_eq!(&once, &twice);
        let dense_est = triple.to_dense();
        for (i, j, v) in once.iter() {
            prop_assert!((v - dense_est[(i, j)]).abs() <= 1e-12);
        }
    }

    #[test]
    fn composite_operator_matches_dense(seed in any::<u64>(), m in 2usize..50, n in 2usize..50) {
        let mut rng = rng(seed);
        let r = 2.min(m).min(n);
        let count = (m * n / 3).max(1);
        let sparse = random_problem(&mut rng, m, n, count);
        let left = gaussian(&mut rng, m, r);
        let right = gaussian(&mut rng, n, r);
        let core = gaussian(&mut rng, r, r);
        let op = LowRankResidual::new(&sparse, &left, &core, &right).unwrap().with_scale(0.3);
        let dense = op.to_dense();
        let x = gaussian(&mut rng, n, 1);
        let z = gaussian(&mut rng, m, 1);
        let mut y = vec![0.0; m];
        op.apply(x.as_slice(), &mut y);
        let expect = &dense * &x;
        for (a, b) in y.iter().zip(expect.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let mut yt = vec![0.0; n];
        op.apply_transpose(z.as_slice(), &mut yt);
        let expect = dense.transpose() * &z;
        for (a, b) in yt.iter().zip(expect.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn full_observation_reaches_machine_precision_quickly() {
    let mut rng = rng(17);
    let dense = gaussian(&mut rng, 40, 4) * gaussian(&mut rng, 30, 4).transpose();
    let positions: Vec<_> = (0..40).flat_map(|i| (0..30).map(move |j| (i, j))).collect();
    let observed = observe(&dense, &positions);
    let result = optspace_with_truth(&observed, &OptConfig::default(), None, Some(&dense)).unwrap();
    assert!(result.iterations() <= 5, "{} iterations", result.iterations());
    let err = result.trace.last().unwrap().prediction_error.unwrap();
    assert!(err <= 1e-10, "{err}");
}
