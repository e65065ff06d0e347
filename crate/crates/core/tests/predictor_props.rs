use mview::embedding::{build_delay_matrix, sample_views, Coordinate, DelayMatrix, View};
use mview::predictor::{
    knn, local_linear_predict, multiview_predict, single_nn_predict, PredictOptions,
};
use mview::surrogate::{integrate, DynamicsParams};
use mview::timeseries::{SeriesPanel, StandardizationStats};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lorenz() -> SeriesPanel {
    integrate(&DynamicsParams::lorenz63(260), None, 5).unwrap()
}

fn pool() -> Vec<Coordinate> {
    ["x", "y", "z"]
        .iter()
        .flat_map(|v| (0..3).map(move |l| Coordinate::new(*v, -l).unwrap()))
        .collect()
}

fn random_rows(seed: u64, n: usize, dim: usize) -> Vec<(i64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| (i as i64, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect()
}

fn view(dim: usize) -> View {
    let coords = (0..dim).map(|i| Coordinate::new("x", -(i as i64)).unwrap()).collect();
    View::new(coords, "x", 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn neighbour_order_ignores_positive_affine_maps(
        scales in proptest::collection::vec((0.01f64..100.0, -50.0f64..50.0), 3),
        seed in 0u64..1000,
    ) {
        let raw = lorenz();
        let moved = raw.map_present(|v, x| scales[v].0 * x + scales[v].1);
        let views = sample_views(&pool(), "x", 1, 3, 4, seed).unwrap();
        let z = |p: &SeriesPanel| StandardizationStats::fit(p, None).unwrap().apply(p).unwrap();
        let (za, zb) = (z(&raw), z(&moved));
        for v in &views {
            let a = build_delay_matrix(&za, v).unwrap();
            let b = build_delay_matrix(&zb, v).unwrap();
            for row in (0..a.len()).step_by(23) {
                let na = knn(&a, a.x(row), 8).unwrap();
                let nb = knn(&b, b.x(row), 8).unwrap();
                prop_assert_eq!(na.indices, nb.indices);
            }
        }
    }

    #[test]
    fn local_linear_reproduces_affine_targets(
        coef in proptest::collection::vec(-3.0f64..3.0, 4),
        seed in 0u64..10_000,
        k in 6usize..20,
    ) {
        let rows = random_rows(seed, 40, 3);
        let f = |x: &[f64]| coef[0] + coef[1] * x[0] + coef[2] * x[1] + coef[3] * x[2];
        let m = DelayMatrix::from_rows(
            view(3),
            rows.iter().map(|(t, x)| (*t, x.clone(), f(x))).collect(),
        )
        .unwrap();
        let q = [0.1, -0.2, 0.3];
        let p = local_linear_predict(&m, &q, k).unwrap();
        prop_assert!((p - f(&q)).abs() < 1e-8, "{p} vs {}", f(&q));
    }

    #[test]
    fn single_nn_returns_a_training_target(seed in 0u64..10_000, q in proptest::collection::vec(-2.0f64..2.0, 2)) {
        let rows = random_rows(seed, 25, 2);
        let m = DelayMatrix::from_rows(
            view(2),
            rows.iter().map(|(t, x)| (*t, x.clone(), x[0] * x[1])).collect(),
        )
        .unwrap();
        let p = single_nn_predict(&m, &q).unwrap();
        prop_assert!(m.ys().contains(&p));
    }
}

fn z_lorenz() -> SeriesPanel {
    let raw = lorenz();
    StandardizationStats::fit(&raw, None).unwrap().apply(&raw).unwrap()
}

#[test]
fn multiview_mean_is_order_free_and_decomposes() {
    let z = z_lorenz();
    let views = sample_views(&pool(), "x", 1, 3, 12, 3).unwrap();
    let origin = z.end() - 20;
    let times: Vec<i64> = (origin + 1..=z.end()).collect();
    let opts = PredictOptions { k: 8, theiler: true };
    let all = multiview_predict(&z, &z, &views, origin, &times, &opts).unwrap();
    let mut reversed = views.clone();
    reversed.reverse();
    let rev = multiview_predict(&z, &z, &reversed, origin, &times, &opts).unwrap();
    let dropped = multiview_predict(&z, &z, &views[1..], origin, &times, &opts).unwrap();
    for i in 0..times.len() {
        assert!((all.multiview_mean[i] - rev.multiview_mean[i]).abs() < 1e-12);
        let n = all.n_views_used(i) as f64;
        let first = all.slots[i][0].unwrap().local_linear;
        let rest = (all.multiview_mean[i] * n - first) / (n - 1.0);
        assert!((rest - dropped.multiview_mean[i]).abs() < 1e-10);
    }
}

#[test]
fn predictions_do_not_depend_on_worker_count() {
    let z = z_lorenz();
    let views = sample_views(&pool(), "x", 1, 3, 10, 9).unwrap();
    let origin = z.end() - 15;
    let times: Vec<i64> = (origin + 1..=z.end()).collect();
    let opts = PredictOptions { k: 8, theiler: true };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| multiview_predict(&z, &z, &views, origin, &times, &opts).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
}
