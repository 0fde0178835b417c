use acllft_core::envs::{latent_reset, latent_step, LatentParams, LatentProcess};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn zero_diffusion_starts_at_zero_and_decays_geometrically() {
    let p = LatentParams { eta: 0.0, ..LatentParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(latent_reset(p, &mut rng).unwrap().xi, 0.0);
    let mut s = LatentProcess { params: p, xi: 1.0 };
    let mut expect = 1.0;
    for _ in 0..50 {
        latent_step(&mut s, &mut rng);
        expect *= p.decay();
        assert_eq!(s.xi, expect);
    }
}

#[test]
fn noiseless_observation_is_the_state() {
    let p = LatentParams { sigma_eps: 0.0, ..LatentParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = latent_reset(p, &mut rng).unwrap();
    for _ in 0..100 {
        let o = latent_step(&mut s, &mut rng);
        assert_eq!(o, s.xi);
    }
}

#[test]
fn invalid_parameters_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(latent_reset(LatentParams { theta: 0.0, ..LatentParams::default() }, &mut rng).is_err());
    assert!(latent_reset(LatentParams { dt: -0.1, ..LatentParams::default() }, &mut rng).is_err());
}

#[test]
fn reset_matches_stationary_moments() {
    let p = LatentParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| latent_reset(p, &mut rng).unwrap().xi).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let v = p.stationary_variance();
    assert!(mean.abs() <= 3.0 * (v / n as f64).sqrt(), "mean {mean}");
    assert!((var / v - 1.0).abs() <= 0.05, "variance {var} vs {v}");
}

#[test]
fn lag_one_autocorrelation_matches_decay() {
    let p = LatentParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = latent_reset(p, &mut rng).unwrap();
    let n = 1_000_000;
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        latent_step(&mut s, &mut rng);
        xs.push(s.xi);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let c1: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let rho = c1 / c0;
    assert!((rho / p.decay() - 1.0).abs() <= 0.02, "lag-1 autocorrelation {rho}");
}

/// Kolmogorov-Smirnov statistic of `xs` against `cdf`.
fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn chain_forgets_its_start() {
    // independent chains from a far-off start; after burn-in each endpoint is
    // one draw from the chain's stationary law
    let p = LatentParams { theta: 0.5, ..LatentParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let burn = 400;
    let mut xs: Vec<f64> = (0..n)
        .map(|_| {
            let mut s = LatentProcess { params: p, xi: 3.0 };
            for _ in 0..burn {
                latent_step(&mut s, &mut rng);
            }
            s.xi
        })
        .collect();
    // the Euler chain's own stationary variance
    let a = p.decay();
    let v = p.step_variance() / (1.0 - a * a);
    let law = Normal::new(0.0, v.sqrt()).unwrap();
    let d = ks_statistic(&mut xs, |x| law.cdf(x));
    // asymptotic critical value at the 0.01 level
    let crit = 1.628 / (n as f64).sqrt();
    assert!(d < crit, "KS statistic {d} exceeds {crit}");
}
