use crate::error::ensure;
use crate::Result;

/// Generalized advantage estimation.
///
/// `δ_t = r_t + γ·V(s_{t+1})·(1 − done_t) − V(s_t)` and
/// `A_t = δ_t + γλ·(1 − done_t)·A_{t+1}`; returns are `A_t + V(s_t)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    ensure!(
        values.len() == n && next_values.len() == n && dones.len() == n,
        "gae inputs differ in length: rewards {n}, values {}, next values {}, dones {}",
        values.len(),
        next_values.len(),
        dones.len()
    );
    ensure!(
        values.iter().chain(next_values).chain(rewards).all(|v| v.is_finite()),
        "gae inputs must be finite"
    );
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to mean 0 and unit standard deviation; a spread below
/// `1e-8` only centers.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std >= 1e-8 {
            *a /= std;
        }
    }
}
