mod oracles;

use acllft_core::envs::LatentParams;
use acllft_core::theory::{convexity_diagnostic, info_loss, kalman_posterior, optimal_window, optimal_window_by};
use oracles::grid_posterior_variance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng) -> LatentParams {
    LatentParams {
        theta: rng.gen_range(0.05..2.0),
        eta: rng.gen_range(0.2..1.0),
        sigma_eps: rng.gen_range(0.2..1.0),
        dt: 0.1,
    }
}

#[test]
fn posterior_variance_matches_grid_bayes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for trace in 0..50 {
        let p = random_params(&mut rng);
        let l = rng.gen_range(1..=5);
        let ys: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let exact = kalman_posterior(&ys, &p).unwrap().variance;
        let grid = grid_posterior_variance(&ys, p.theta, p.eta, p.sigma_eps, p.dt, 801);
        assert!((exact - grid).abs() <= 1e-4 * exact, "trace {trace}: {exact} vs {grid}");
    }
}

#[test]
fn variance_never_increases_with_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let p = random_params(&mut rng);
        let ys: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut last = f64::INFINITY;
        for l in 0..=64 {
            let v = kalman_posterior(&ys[64 - l..], &p).unwrap().variance;
            assert!(v > 0.0 && v <= last * (1.0 + 1e-12));
            assert!(v <= p.stationary_variance() * (1.0 + 1e-12));
            last = v;
        }
    }
}

#[test]
fn nearly_static_process_prefers_the_longest_window() {
    let p = LatentParams { theta: 1e-4, eta: 0.01, ..LatentParams::default() };
    let ys = vec![0.3; 64];
    let (l, _) = optimal_window(&ys, &p, &[1, 2, 4, 8, 16, 32, 64]).unwrap();
    assert_eq!(l, 64);
}

#[test]
fn exhaustive_search_agrees_with_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let vars: Vec<f64> = (0..8).map(|_| rng.gen_range(0.1..1.0)).collect();
        let cands: Vec<usize> = (0..8).collect();
        let (l, v) = optimal_window_by(&cands, |i| Ok(vars[i])).unwrap();
        let mut best = 0;
        for i in 1..8 {
            if vars[i] < vars[best] {
                best = i;
            }
        }
        assert_eq!((l, v), (best, vars[best]));
    }
    // ties go to the smaller length
    let (l, _) = optimal_window_by(&[4, 2, 8], |_| Ok(0.5)).unwrap();
    assert_eq!(l, 2);
}

#[test]
fn losses_match_recomputation_from_raw_variances() {
    let p = LatentParams { theta: 0.3, ..LatentParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ys: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cands = [1usize, 2, 4, 8, 16, 32];
    let (_, vmin) = optimal_window(&ys, &p, &cands).unwrap();
    for &l in &cands {
        let raw = kalman_posterior(&ys[32 - l..], &p).unwrap().variance;
        let loss = info_loss(raw, vmin).unwrap();
        assert!((loss - 0.5 * (raw / vmin).ln()).abs() < 1e-12);
        assert!(loss >= 0.0);
    }
}

#[test]
fn default_process_variance_profile_is_locally_convex() {
    // regression baseline: curvature of the default filter's variance in a
    // ±4 neighbourhood of the best window among 1..=12
    let p = LatentParams::default();
    let ys = vec![0.0; 12];
    let (l_star, _) = optimal_window(&ys, &p, &(1..=12).collect::<Vec<_>>()).unwrap();
    let lengths: Vec<usize> = (l_star.saturating_sub(4).max(1)..=(l_star + 4).min(12)).collect();
    let vars: Vec<f64> = lengths.iter().map(|&l| kalman_posterior(&ys[12 - l..], &p).unwrap().variance).collect();
    let fit = convexity_diagnostic(&lengths, &vars).unwrap();
    assert!(fit.k.unwrap() > 0.0);
    assert!(fit.r2.unwrap() >= 0.8, "r2 {:?}", fit.r2);
}
