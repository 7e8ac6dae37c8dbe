use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twtl_fleet::allocation::{
    allocate_with_fallback, solve_allocation_with, task_probabilities, verify_feasibility, AllocationError,
    AllocationInput, AllocationMatrix, SolverMethod, SolverOptions, FEASIBILITY_TOL,
};
use twtl_fleet::bounds::BoundSource;

const METHODS: [SolverMethod; 2] = [SolverMethod::InteriorPoint, SolverMethod::AugmentedLagrangian];

fn options(method: SolverMethod) -> SolverOptions {
    SolverOptions {
        method,
        ..SolverOptions::default()
    }
}

fn random_instance<R: Rng>(rng: &mut R, n: usize, k: usize) -> AllocationInput {
    let values = (0..n).map(|_| (0..=k).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
    let bounds = (0..n)
        .map(|_| (0..=k).map(|j| if j == k { 0.0 } else { rng.gen_range(0.3..0.99) }).collect())
        .collect();
    let thresholds = (0..k).map(|_| rng.gen_range(0.5..0.9)).collect();
    AllocationInput::new(values, bounds, thresholds).unwrap()
}

#[test]
fn single_robot_single_task_optimum() {
    let input = AllocationInput::new(vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]], vec![0.9]).unwrap();
    for method in METHODS {
        let s = solve_allocation_with(&input, &options(method)).unwrap();
        assert!((s.matrix.get(0, 0) - 0.9).abs() < 1e-6, "{method:?}");
        assert!((s.matrix.get(0, 1) - 0.1).abs() < 1e-6, "{method:?}");
        assert!((s.objective - 0.1).abs() < 1e-6, "{method:?}");
    }
}

#[test]
fn two_robot_optimum_puts_one_robot_on_the_task() {
    // Maximising (1 - p1) + (1 - p2) subject to (1 - p1)(1 - p2) <= 0.1: the
    // optimum is a corner with value 1.1, the symmetric point only reaches 0.63.
    let input = AllocationInput::new(
        vec![vec![0.0, 1.0]; 2],
        vec![vec![1.0, 0.0]; 2],
        vec![0.9],
    )
    .unwrap();
    for method in METHODS {
        let s = solve_allocation_with(&input, &options(method)).unwrap();
        assert!((s.objective - 1.1).abs() < 1e-5, "{method:?}: {}", s.objective);
    }
}

#[test]
fn weak_robots_are_infeasible() {
    let input = AllocationInput::new(vec![vec![0.0, 1.0]], vec![vec![0.5, 0.0]], vec![0.9]).unwrap();
    for method in METHODS {
        assert_eq!(solve_allocation_with(&input, &options(method)), Err(AllocationError::Infeasible));
    }
}

#[test]
fn fallback_to_static_bounds() {
    let values = vec![vec![0.0, 1.0]; 3];
    let adaptive = vec![vec![0.05, 0.0]; 3];
    let fixed = vec![vec![0.8, 0.0]; 3];
    let (s, source) = allocate_with_fallback(&values, &adaptive, &fixed, &[0.9], &SolverOptions::default()).unwrap();
    assert_eq!(source, BoundSource::Static);
    let input = AllocationInput::new(values.clone(), fixed.clone(), vec![0.9]).unwrap();
    assert!(verify_feasibility(&s.matrix, &input, FEASIBILITY_TOL).unwrap());

    let (_, source) = allocate_with_fallback(&values, &fixed, &adaptive, &[0.9], &SolverOptions::default()).unwrap();
    assert_eq!(source, BoundSource::Confidence);
    assert_eq!(
        allocate_with_fallback(&values, &adaptive, &adaptive, &[0.9], &SolverOptions::default()).unwrap_err(),
        AllocationError::StaticInfeasible
    );
}

#[test]
fn shape_errors_are_reported() {
    assert!(matches!(
        AllocationInput::new(vec![vec![0.0, 1.0]], vec![vec![1.0]], vec![0.5]),
        Err(AllocationError::Shape(_))
    ));
    assert!(matches!(
        AllocationInput::new(vec![vec![0.0, 1.0]], vec![vec![1.5, 0.0]], vec![0.5]),
        Err(AllocationError::Invalid(_))
    ));
    assert!(matches!(
        AllocationInput::new(vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]], vec![1.0]),
        Err(AllocationError::Invalid(_))
    ));
}

#[test]
fn solutions_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let input = random_instance(&mut rng, 10, 4);
    for method in METHODS {
        let a = solve_allocation_with(&input, &options(method));
        let b = solve_allocation_with(&input, &options(method));
        assert_eq!(a, b);
    }
}

#[test]
fn methods_agree_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut both = 0;
    for _ in 0..40 {
        let (n, k) = (rng.gen_range(3..10), rng.gen_range(1..4));
        let input = random_instance(&mut rng, n, k);
        let ipm = solve_allocation_with(&input, &options(SolverMethod::InteriorPoint));
        let al = solve_allocation_with(&input, &options(SolverMethod::AugmentedLagrangian));
        for s in [&ipm, &al].into_iter().flatten() {
            assert!(verify_feasibility(&s.matrix, &input, FEASIBILITY_TOL).unwrap());
        }
        if let (Ok(a), Ok(b)) = (&ipm, &al) {
            both += 1;
            // Different local optima are possible, but not far apart.
            let scale = a.objective.abs().max(b.objective.abs()).max(1.0);
            assert!((a.objective - b.objective).abs() <= 0.05 * scale, "{} vs {}", a.objective, b.objective);
        }
    }
    assert!(both >= 30);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returned_allocations_verify(seed in any::<u64>(), n in 1usize..8, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_instance(&mut rng, n, k);
        if let Ok(s) = solve_allocation_with(&input, &SolverOptions::default()) {
            prop_assert!(verify_feasibility(&s.matrix, &input, FEASIBILITY_TOL).unwrap());
            for row in s.matrix.rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
            prop_assert!((s.objective - s.matrix.objective(&input.values)).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_bounds_keep_feasibility(seed in any::<u64>(), n in 1usize..8, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..=k).map(|_| rng.gen_range(0.0..1.0)).collect();
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            })
            .collect();
        let lower: Vec<Vec<f64>> = (0..n).map(|_| (0..=k).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let truth: Vec<Vec<f64>> = lower.iter().map(|r| r.iter().map(|&b| rng.gen_range(b..=1.0)).collect()).collect();
        let p = AllocationMatrix::from_rows(rows);
        let lo = task_probabilities(&p, &lower, k);
        let hi = task_probabilities(&p, &truth, k);
        for (l, h) in lo.iter().zip(&hi) {
            prop_assert!(h >= l);
        }
    }
}
