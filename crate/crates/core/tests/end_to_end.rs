use mvsde_core::{
    build_schedule, experiment_params, gaussian, grover_query_count, run_emulated, run_particle, shimizu_yamada,
    substream, QmciMode, StreamKey,
};
use proptest::prelude::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn emulated_run_is_independent_of_worker_count() {
    let problem = shimizu_yamada(1.0).unwrap();
    let mut params = experiment_params(0.25, 2.0, 1.0).unwrap();
    params.n_particles = 9_000;
    params.seed = 17;
    let mut a = in_pool(1, || run_emulated(&problem, &params).unwrap());
    let mut b = in_pool(3, || run_emulated(&problem, &params).unwrap());
    a.wall_ms = 0.0;
    b.wall_ms = 0.0;
    assert_eq!(a, b);
}

#[test]
fn particle_and_exact_emulation_agree_with_the_analytic_mean() {
    let problem = shimizu_yamada(1.0).unwrap();
    let exact = (-2.0f64).exp();
    let particle = run_particle(&problem, 50_000, 0.02, 4).unwrap();
    let mut params = experiment_params(0.125, 2.0, 1.0).unwrap();
    params.n_particles = 50_000;
    params.qmci_mode = QmciMode::Exact;
    let emulated = run_emulated(&problem, &params).unwrap().estimate;
    // Five standard errors of a mean with variance about 2.
    let tol = 5.0 * (2.0f64 / 50_000.0).sqrt();
    assert!((particle - exact).abs() < tol, "{particle}");
    assert!((emulated - exact).abs() < tol, "{emulated}");
}

#[test]
fn query_total_grows_with_accuracy() {
    let problem = shimizu_yamada(1.0).unwrap();
    let mut last = 0;
    for eps in [0.5, 0.25, 0.125] {
        let mut params = experiment_params(eps, 2.0, 1.0).unwrap();
        params.n_particles = 200;
        let rec = run_emulated(&problem, &params).unwrap();
        let s = params.grover_schedule().unwrap();
        // Depths 1..n_t-1 twice plus the terminal call at depth n_t.
        let n_t = rec.n_t as u64;
        let per = grover_query_count(&s, 1).unwrap();
        assert_eq!(rec.queries, per * ((n_t - 1) * n_t + n_t));
        assert!(rec.queries > last);
        last = rec.queries;
    }
}

#[test]
fn gaussian_stream_moments() {
    let v = gaussian(StreamKey::new(3, 0, 0, substream::NOISE), 200_000, 0.25).unwrap();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 5.0 * (0.25 / n).sqrt());
    assert!((var - 0.25).abs() < 5.0 * 0.25 * (2.0 / n).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn experiment_schedules_cover_the_horizon(k in 0u32..8, horizon in 0.5f64..4.0) {
        let eps = 0.5f64.powi(k as i32);
        let p = experiment_params(eps, horizon, 1.0).unwrap();
        let s = build_schedule(horizon, p.h_i, p.h_ii).unwrap();
        prop_assert_eq!(s.grid.len(), s.n_t + 1);
        prop_assert!((s.grid[s.n_t] - horizon).abs() < 1e-9 * horizon);
        prop_assert!(s.grid.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(p.h_i <= horizon * eps / 16.0 * (1.0 + 1e-12));
        prop_assert!(p.h_ii <= horizon / 4.0 * eps.sqrt() * (1.0 + 1e-12));
    }
}
