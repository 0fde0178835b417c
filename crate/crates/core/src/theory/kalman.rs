use crate::envs::LatentParams;
use crate::error::ensure;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Gaussian posterior over the current latent state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimate {
    pub mean: f64,
    pub variance: f64,
    pub window: usize,
}

/// Filters `observations` (oldest first, the last one observing the current
/// state) from the stationary prior `N(0, η²/(2θ))` placed one step before
/// the first observation. Each observation is preceded by a predict step.
pub fn kalman_posterior(observations: &[f64], params: &LatentParams) -> Result<PosteriorEstimate> {
    params.validate()?;
    ensure!(observations.iter().all(|y| y.is_finite()), "observations must be finite");
    let (a, q, r) = (params.decay(), params.step_variance(), params.obs_variance());
    let mut mean = 0.0;
    let mut var = params.stationary_variance();
    for &y in observations {
        mean *= a;
        var = a * a * var + q;
        let k = var / (var + r);
        mean += k * (y - mean);
        var *= 1.0 - k;
    }
    Ok(PosteriorEstimate { mean, variance: var, window: observations.len() })
}

/// Mean squared error of a windowed filter that assumes `nominal` while the
/// state actually evolves under `true_steps`.
///
/// `true_steps[u]` holds the true `(a, q)` of the transition into the `u`-th
/// window observation, `start_variance` the true variance of the state one
/// step before the window and `obs_variance` the true observation noise.
/// The filter starts from mean 0 and the nominal stationary variance. The
/// result is exact: the estimator is linear, so its error law only depends on
/// the joint second moments of (error, state), which are propagated here.
pub fn windowed_filter_mse(
    nominal: &LatentParams,
    true_steps: &[(f64, f64)],
    start_variance: f64,
    obs_variance: f64,
) -> f64 {
    let (an, qn, rn) = (nominal.decay(), nominal.step_variance(), nominal.obs_variance());
    let mut p = nominal.stationary_variance();
    // error e = ξ − ξ̂; the filter mean starts at 0 so e = ξ
    let (mut pee, mut pex, mut pxx) = (start_variance, start_variance, start_variance);
    for &(a, q) in true_steps {
        let d = a - an;
        let ee = an * an * pee + d * d * pxx + 2.0 * an * d * pex + q;
        let ex = an * a * pex + d * a * pxx + q;
        pxx = a * a * pxx + q;
        let pm = an * an * p + qn;
        let k = pm / (pm + rn);
        p = (1.0 - k) * pm;
        pee = (1.0 - k) * (1.0 - k) * ee + k * k * obs_variance;
        pex = (1.0 - k) * ex;
    }
    pee
}

/// Exhaustive minimization of `variance(L)` over `candidates`; ties within a
/// relative `1e-9` go to the smaller length. Returns `(L*, σ²_min)`.
pub fn optimal_window_by<F>(candidates: &[usize], mut variance: F) -> Result<(usize, f64)>
where
    F: FnMut(usize) -> Result<f64>,
{
    ensure!(!candidates.is_empty(), "no candidate window lengths");
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best = (sorted[0], variance(sorted[0])?);
    for &l in &sorted[1..] {
        let v = variance(l)?;
        if v < best.1 * (1.0 - 1e-9) {
            best = (l, v);
        }
    }
    Ok(best)
}

/// [`optimal_window_by`] with the Kalman variance over the most recent `L`
/// entries of `history`.
pub fn optimal_window(history: &[f64], params: &LatentParams, candidates: &[usize]) -> Result<(usize, f64)> {
    let t = history.len();
    ensure!(candidates.iter().all(|&l| l <= t), "candidate window exceeds the {t} available observations");
    optimal_window_by(candidates, |l| Ok(kalman_posterior(&history[t - l..], params)?.variance))
}

/// `½·ln(σ²_L / σ²_min)`. Ratios within `1e-9` below one count as zero.
pub fn info_loss(variance: f64, min_variance: f64) -> Result<f64> {
    ensure!(variance > 0.0 && min_variance > 0.0, "variances must be positive");
    let ratio = variance / min_variance;
    if ratio < 1.0 - 1e-9 {
        return Err(Error::Validation(format!(
            "variance {variance} lies below the claimed minimum {min_variance}"
        )));
    }
    Ok(if ratio < 1.0 { 0.0 } else { 0.5 * ratio.ln() })
}

/// Local quadratic fit `σ²_L − σ²_min ≈ ½·k·(L − L*)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityFit {
    pub l_star: usize,
    /// `None` when the profile is flat and no curvature can be fitted.
    pub k: Option<f64>,
    pub r2: Option<f64>,
}

/// Least-squares curvature through the minimum of a variance profile.
pub fn convexity_diagnostic(lengths: &[usize], variances: &[f64]) -> Result<ConvexityFit> {
    ensure!(lengths.len() == variances.len(), "lengths and variances differ in size");
    ensure!(lengths.len() >= 5, "need at least five lengths for a curvature fit");
    let (i_min, &v_min) = variances
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(lengths[a.0].cmp(&lengths[b.0])))
        .expect("non-empty");
    let l_star = lengths[i_min];
    let x: Vec<f64> = lengths.iter().map(|&l| 0.5 * (l as f64 - l_star as f64).powi(2)).collect();
    let y: Vec<f64> = variances.iter().map(|v| v - v_min).collect();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let scale = variances.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if sxx == 0.0 || ss_tot <= (1e-12 * scale).powi(2) {
        return Ok(ConvexityFit { l_star, k: None, r2: None });
    }
    let k = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - k * a).powi(2)).sum();
    Ok(ConvexityFit { l_star, k: Some(k), r2: Some(1.0 - ss_res / ss_tot) })
}
