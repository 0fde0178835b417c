use super::kalman::{info_loss, optimal_window_by, windowed_filter_mse};
use crate::central::{ActionSchedule, CentralAgent, CentralKind, CentralTransition, CentralUpdateConfig, DecideMode};
use crate::envs::{latent_reset, LatentParams};
use crate::error::ensure;
use crate::marl::PpoConfig;
use crate::approx::AdamConfig;
use crate::par::Execution;
use crate::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Piecewise-constant `(θ, η)` cycling every `period` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSchedule {
    pub period: usize,
    pub regimes: Vec<(f64, f64)>,
}

/// Stationary variance of the Euler-discretized chain.
pub fn discrete_stationary_variance(theta: f64, eta: f64, dt: f64) -> f64 {
    let a = 1.0 - theta * dt;
    eta * eta * dt / (1.0 - a * a)
}

impl RegimeSchedule {
    /// The nominal regime only.
    pub fn constant(nominal: &LatentParams) -> Self {
        Self { period: usize::MAX, regimes: vec![(nominal.theta, nominal.eta)] }
    }

    /// Alternates the nominal regime with a fast-reverting one whose `η` keeps
    /// the discrete stationary variance unchanged, so only the temporal
    /// correlation switches.
    pub fn alternating(nominal: &LatentParams, fast_theta: f64, period: usize) -> Self {
        let v = discrete_stationary_variance(nominal.theta, nominal.eta, nominal.dt);
        let a = 1.0 - fast_theta * nominal.dt;
        let eta = (v * (1.0 - a * a) / nominal.dt).sqrt();
        Self { period, regimes: vec![(nominal.theta, nominal.eta), (fast_theta, eta)] }
    }

    pub fn at(&self, t: usize) -> (f64, f64) {
        self.regimes[(t / self.period) % self.regimes.len()]
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        ensure!(self.period >= 1 && !self.regimes.is_empty(), "regime schedule must be non-empty");
        for &(theta, eta) in &self.regimes {
            ensure!(theta > 0.0 && (1.0 - theta * dt).abs() < 1.0, "regime theta {theta} is unstable at dt {dt}");
            ensure!(eta >= 0.0 && eta.is_finite(), "regime eta must be non-negative");
        }
        Ok(())
    }
}

/// Settings of the learned context-length selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedConfig {
    pub k0: usize,
    pub hidden: Vec<usize>,
    /// Steps of the independent training trace.
    pub train_steps: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub entropy_coef: f64,
}

impl Default for LearnedConfig {
    fn default() -> Self {
        Self { k0: 8, hidden: vec![32, 32], train_steps: 120_000, batch: 500, epochs: 4, lr: 3e-3, entropy_coef: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdaptivePolicy {
    /// Tracks `L*_t` exactly.
    Oracle,
    /// A central agent trained on reward `−𝓛_t` over an independent trace and
    /// then run greedily.
    Learned(LearnedConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub horizon: usize,
    /// Parameters assumed by every windowed filter.
    pub nominal: LatentParams,
    pub regimes: RegimeSchedule,
    pub fixed: Vec<usize>,
    /// Lengths over which `L*_t` is searched; also the adaptive action set.
    pub candidates: Vec<usize>,
    pub seed: u64,
}

impl Default for RegretConfig {
    fn default() -> Self {
        let nominal = LatentParams::default();
        Self {
            horizon: 20_000,
            regimes: RegimeSchedule::alternating(&nominal, 4.0, 2000),
            nominal,
            fixed: vec![1, 2, 4, 8, 16, 32],
            candidates: vec![0, 1, 2, 4, 8, 16, 32],
            seed: 0,
        }
    }
}

impl RegretConfig {
    fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        self.regimes.validate(self.nominal.dt)?;
        ensure!(self.horizon >= 1, "horizon must be positive");
        ensure!(!self.candidates.is_empty(), "no candidate lengths");
        ensure!(
            self.fixed.iter().all(|l| self.candidates.contains(l)),
            "fixed lengths must be among the candidates"
        );
        Ok(())
    }

    fn max_len(&self) -> usize {
        *self.candidates.iter().max().expect("validated")
    }
}

/// Exact per-step variances of every candidate window over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTable {
    pub candidates: Vec<usize>,
    /// `variances[τ][c]`.
    pub variances: Vec<Vec<f64>>,
    pub l_star: Vec<usize>,
    pub sigma_min: Vec<f64>,
}

impl VarianceTable {
    pub fn loss(&self, t: usize, length: usize) -> Result<f64> {
        let c = self.candidates.iter().position(|&l| l == length);
        ensure!(c.is_some(), "length {length} is not a candidate");
        info_loss(self.variances[t][c.unwrap()], self.sigma_min[t])
    }
}

/// Builds the variance table for experiment steps `0..horizon`. Experiment
/// step `τ` sits `burn = max candidate` steps into the simulated trace so
/// every window has enough history.
pub fn variance_table(cfg: &RegretConfig, horizon: usize) -> Result<VarianceTable> {
    cfg.validate()?;
    let burn = cfg.max_len();
    let n = burn + horizon;
    let dt = cfg.nominal.dt;
    let regime = |u: usize| cfg.regimes.at(u.saturating_sub(burn));
    // trans[u]: true (a, q) of the transition into trace step u
    let trans: Vec<(f64, f64)> = (0..n)
        .map(|u| {
            let (theta, eta) = regime(u);
            (1.0 - theta * dt, eta * eta * dt)
        })
        .collect();
    let mut v = Vec::with_capacity(n);
    let (th0, eta0) = regime(0);
    v.push(discrete_stationary_variance(th0, eta0, dt));
    for u in 1..n {
        let (a, q) = trans[u];
        v.push(a * a * v[u - 1] + q);
    }
    let r = cfg.nominal.obs_variance();
    let mut candidates = cfg.candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let mut variances = Vec::with_capacity(horizon);
    let mut l_star = Vec::with_capacity(horizon);
    let mut sigma_min = Vec::with_capacity(horizon);
    for tau in 0..horizon {
        let u = tau + burn;
        let row: Vec<f64> = candidates
            .iter()
            .map(|&l| if l == 0 { v[u] } else { windowed_filter_mse(&cfg.nominal, &trans[u + 1 - l..=u], v[u - l], r) })
            .collect();
        let (ls, vmin) = optimal_window_by(&candidates, |l| {
            Ok(row[candidates.iter().position(|&c| c == l).expect("candidate")])
        })?;
        variances.push(row);
        l_star.push(ls);
        sigma_min.push(vmin);
    }
    Ok(VarianceTable { candidates, variances, l_star, sigma_min })
}

/// Simulated observations `y_u` for trace steps `0..burn + horizon`.
pub fn simulate_observations(cfg: &RegretConfig, horizon: usize, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let burn = cfg.max_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (th0, eta0) = cfg.regimes.at(0);
    let start = LatentParams { theta: th0, eta: eta0, ..cfg.nominal };
    let mut proc = latent_reset(start, &mut rng)?;
    proc.xi *= (discrete_stationary_variance(th0, eta0, cfg.nominal.dt) / start.stationary_variance()).sqrt();
    let mut ys = Vec::with_capacity(burn + horizon);
    ys.push(proc.xi + cfg.nominal.sigma_eps * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
    for u in 1..burn + horizon {
        let (theta, eta) = cfg.regimes.at(u.saturating_sub(burn));
        ys.push(proc.step_with(theta, eta, &mut rng));
    }
    Ok(ys)
}

/// Loss series of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCurve {
    pub name: String,
    pub lengths: Vec<usize>,
    pub per_step: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl PolicyCurve {
    fn new(name: String, lengths: Vec<usize>, table: &VarianceTable) -> Result<Self> {
        let per_step = lengths.iter().enumerate().map(|(t, &l)| table.loss(t, l)).collect::<Result<Vec<_>>>()?;
        let mut acc = 0.0;
        let cumulative = per_step
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Ok(Self { name, lengths, per_step, cumulative })
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    /// `linear` for fixed windows, `power` for adaptive policies.
    pub model: String,
    pub slope_or_exponent: Option<f64>,
    pub r2: Option<f64>,
    /// Log-log growth exponent, reported for every curve.
    pub loglog_exponent: Option<f64>,
}

fn loglog(cumulative: &[f64]) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = cumulative
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(t, &c)| (((t + 1) as f64).ln(), c.ln()))
        .unzip();
    linear_fit(&x, &y)
}

fn summarize(curve: &PolicyCurve, model: &str) -> FitSummary {
    let ll = loglog(&curve.cumulative);
    let (value, r2) = if model == "linear" {
        let x: Vec<f64> = (1..=curve.cumulative.len()).map(|t| t as f64).collect();
        linear_fit(&x, &curve.cumulative).map_or((None, None), |f| (Some(f.slope), Some(f.r2)))
    } else {
        ll.map_or((None, None), |f| (Some(f.slope), Some(f.r2)))
    };
    FitSummary { model: model.into(), slope_or_exponent: value, r2, loglog_exponent: ll.map(|f| f.slope) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub horizon: usize,
    pub fixed: Vec<PolicyCurve>,
    pub adaptive: PolicyCurve,
    pub fits: BTreeMap<String, FitSummary>,
    pub sigma_min: Vec<f64>,
    pub l_star: Vec<usize>,
    /// Best fixed cumulative loss minus the adaptive one at the horizon.
    pub gap_at_t: f64,
}

impl RegretReport {
    pub fn best_fixed(&self) -> &PolicyCurve {
        self.fixed.iter().min_by(|a, b| a.total().total_cmp(&b.total())).expect("at least one fixed window")
    }

    /// Rows of `t,policy,per_step_loss,cumulative_loss`.
    pub fn csv(&self) -> String {
        let mut s = String::from("t,policy,per_step_loss,cumulative_loss\n");
        for c in self.fixed.iter().chain(std::iter::once(&self.adaptive)) {
            for t in 0..c.per_step.len() {
                s.push_str(&format!("{},{},{},{}\n", t, c.name, c.per_step[t], c.cumulative[t]));
            }
        }
        s
    }

    /// `{fits: {policy: {model, slope_or_exponent, r2, …}}, gap_at_T}`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "fits": self.fits, "gap_at_T": self.gap_at_t })
    }
}

fn selector(cfg: &RegretConfig, learned: &LearnedConfig, seed: u64) -> Result<CentralAgent> {
    let max = cfg.max_len();
    ensure!(max.is_power_of_two(), "learned selection needs a power-of-two longest window");
    let mut lengths = vec![0];
    lengths.extend((0..=max.ilog2()).map(|j| 1usize << j));
    let mut sorted = cfg.candidates.clone();
    sorted.sort_unstable();
    sorted.dedup();
    ensure!(sorted == lengths, "learned selection needs candidates 0, 1, 2, 4, …, {max}");
    ensure!(learned.k0 >= 1 && learned.k0 <= max / 2, "k0 must lie in 1..={}", max / 2);
    let cap = max.div_ceil(learned.k0);
    let schedule = ActionSchedule::new(lengths.len(), learned.k0, 0, cap)?;
    ensure!(schedule.max_length() == max, "k0 {} cannot express a {max}-step window", learned.k0);
    CentralAgent::new(schedule, CentralKind::Adaptive, 1, &learned.hidden, Some(max), seed)
}

fn features(agent: &CentralAgent, rows: &[[f64; 1]], u: usize, window: usize) -> Result<Vec<f64>> {
    agent.features(&rows[u + 1 - window..=u])
}

/// Trains a selector on its own trace; returns it with its training losses.
pub fn train_selector(cfg: &RegretConfig, learned: &LearnedConfig, seed: u64) -> Result<CentralAgent> {
    ensure!(learned.batch >= 1, "batch must be positive");
    let mut agent = selector(cfg, learned, seed)?;
    let window = cfg.max_len();
    let horizon = learned.train_steps;
    let table = variance_table(cfg, horizon)?;
    let rows: Vec<[f64; 1]> = simulate_observations(cfg, horizon, seed)?.into_iter().map(|y| [y]).collect();
    let t_full = rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ucfg = CentralUpdateConfig {
        gamma: 0.0,
        lambda: 0.0,
        ppo: PpoConfig {
            epochs: learned.epochs,
            entropy_coef: learned.entropy_coef,
            adam: AdamConfig::with_lr(learned.lr),
            exec: Execution::Sequential,
            ..PpoConfig::default()
        },
        ..CentralUpdateConfig::default()
    };
    let mut batch = Vec::with_capacity(learned.batch);
    for tau in 0..horizon {
        let u = tau + window;
        let f = features(&agent, &rows, u, window)?;
        let d = agent.decide_from(t_full, f, &mut rng, DecideMode::Sample)?;
        let reward = -table.loss(tau, d.context_length)?;
        batch.push(CentralTransition {
            next_features: Vec::new(),
            features: d.features,
            mask: d.mask,
            action: d.action_index,
            log_prob: d.log_prob,
            reward,
            done: true,
        });
        if batch.len() == learned.batch || tau + 1 == horizon {
            crate::central::central_update(&mut agent, &batch, &ucfg)?;
            batch.clear();
        }
    }
    Ok(agent)
}

/// Cumulative information loss of each fixed window and of the adaptive
/// policy on one simulated trace.
pub fn regret_experiment(cfg: &RegretConfig, policy: &AdaptivePolicy) -> Result<RegretReport> {
    let table = variance_table(cfg, cfg.horizon)?;
    let mut fixed = Vec::with_capacity(cfg.fixed.len());
    for &l in &cfg.fixed {
        fixed.push(PolicyCurve::new(format!("fixed_{l}"), vec![l; cfg.horizon], &table)?);
    }
    let adaptive = match policy {
        AdaptivePolicy::Oracle => PolicyCurve::new("oracle".into(), table.l_star.clone(), &table)?,
        AdaptivePolicy::Learned(lc) => {
            let agent = train_selector(cfg, lc, cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1))?;
            let window = cfg.max_len();
            let rows: Vec<[f64; 1]> =
                simulate_observations(cfg, cfg.horizon, cfg.seed)?.into_iter().map(|y| [y]).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut lengths = Vec::with_capacity(cfg.horizon);
            for tau in 0..cfg.horizon {
                let f = features(&agent, &rows, tau + window, window)?;
                lengths.push(agent.decide_from(rows.len(), f, &mut rng, DecideMode::Greedy)?.context_length);
            }
            PolicyCurve::new("learned".into(), lengths, &table)?
        }
    };
    let mut fits = BTreeMap::new();
    for c in &fixed {
        fits.insert(c.name.clone(), summarize(c, "linear"));
    }
    fits.insert(adaptive.name.clone(), summarize(&adaptive, "power"));
    let best = fixed.iter().map(PolicyCurve::total).fold(f64::INFINITY, f64::min);
    Ok(RegretReport {
        horizon: cfg.horizon,
        gap_at_t: best - adaptive.total(),
        fixed,
        adaptive,
        fits,
        sigma_min: table.sigma_min,
        l_star: table.l_star,
    })
}
