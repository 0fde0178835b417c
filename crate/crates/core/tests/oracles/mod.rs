//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use acllft_core::approx::{backprop, DenseNet};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook O(t²) DFT with twiddles recomputed per term.
pub fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let t = x.len();
    (0..t)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * n % t) as f64 / t as f64;
                acc += Complex64::new(ang.cos(), ang.sin()) * v;
            }
            acc
        })
        .collect()
}

/// GAE by direct double summation of discounted TD errors.
pub fn brute_force_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| rewards[t] + if dones[t] { 0.0 } else { gamma * next_values[t] } - values[t])
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for u in t..n {
                sum += w * delta[u];
                if dones[u] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Posterior variance of the current latent state by numerical Bayes on a
/// dense grid: stationary prior one step before the first observation, then
/// predict (grid convolution with the transition kernel) and update
/// (pointwise likelihood) per observation.
pub fn grid_posterior_variance(
    observations: &[f64],
    theta: f64,
    eta: f64,
    sigma_eps: f64,
    dt: f64,
    points: usize,
) -> f64 {
    let prior_var = eta * eta / (2.0 * theta);
    let half = 8.0 * prior_var.sqrt() + observations.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let h = 2.0 * half / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| -half + i as f64 * h).collect();
    let a = 1.0 - theta * dt;
    let q = eta * eta * dt;
    let r = sigma_eps * sigma_eps;
    let mut p: Vec<f64> = grid.iter().map(|&x| normal_pdf(x, 0.0, prior_var)).collect();
    for &y in observations {
        let mut next = vec![0.0; points];
        for (j, nx) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &pi) in p.iter().enumerate() {
                if pi > 0.0 {
                    acc += pi * normal_pdf(grid[j], a * grid[i], q);
                }
            }
            *nx = acc * h * normal_pdf(y, grid[j], r);
        }
        let z: f64 = next.iter().sum::<f64>() * h;
        p = next.into_iter().map(|v| v / z).collect();
    }
    let mean: f64 = grid.iter().zip(&p).map(|(x, w)| x * w).sum::<f64>() * h;
    grid.iter().zip(&p).map(|(x, w)| (x - mean).powi(2) * w).sum::<f64>() * h
}

/// Worst relative error of backprop against central differences along
/// random unit directions.
pub fn worst_probe_error(sizes: &[usize], probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = DenseNet::new(sizes, seed).unwrap();
    let n_in = sizes[0];
    let n_out = *sizes.last().unwrap();
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let c: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v: Vec<f64> = (0..net.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let g = backprop(&net, &x, &c).unwrap();
        let analytic: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        let f = |s: f64| {
            let mut n = net.clone();
            n.params_mut().iter_mut().zip(&v).for_each(|(p, d)| *p += s * d);
            n.forward(&x).unwrap().iter().zip(&c).map(|(o, w)| o * w).sum::<f64>()
        };
        let h = 1e-5;
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

