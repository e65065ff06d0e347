use mview::surrogate::{aggregate_blocks, integrate, make_experiment, sample_theta_ball, DynamicsParams};
use proptest::prelude::*;

proptest! {
    #[test]
    fn aggregating_twice_equals_aggregating_by_double(
        samples in proptest::collection::vec(-1e3f64..1e3, 0..200),
        a in 1usize..12,
    ) {
        let once = aggregate_blocks(&samples, a);
        let pairs: Vec<f64> = once.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        let direct = aggregate_blocks(&samples, 2 * a);
        prop_assert_eq!(pairs.len(), direct.len());
        for (p, d) in pairs.iter().zip(&direct) {
            prop_assert!((p - d).abs() < 1e-12 * (1.0 + d.abs()) * a as f64);
        }
    }
}

#[test]
fn integration_is_reproducible_given_seed() {
    let p = DynamicsParams::lorenz96(6, 8.0, 100);
    assert_eq!(integrate(&p, None, 3).unwrap(), integrate(&p, None, 3).unwrap());
    assert_ne!(integrate(&p, None, 3).unwrap(), integrate(&p, None, 4).unwrap());
}

#[test]
fn experiments_do_not_depend_on_worker_count() {
    let base = DynamicsParams::lorenz63(120);
    let family = sample_theta_ball(&base, 0.01, 4, 8).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| make_experiment(&family, &base, 0.3, 11).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.model_runs, b.model_runs);
    assert_eq!(a.real, b.real);
}
