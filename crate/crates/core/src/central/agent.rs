use super::schedule::{available_actions, ActionSchedule, ActionSet};
use crate::approx::{CategoricalPolicy, DenseNet};
use crate::error::ensure;
use crate::marl::{compute_gae, ppo_update, PolicySample, PpoConfig, PpoStats, Trainable, ValueSample};
use crate::par::chunked_sum;
use crate::spectral::{central_state, central_state_with_len, CentralState, HistoryWindow};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Initial shrink of policy output layers.
pub const POLICY_HEAD_SCALE: f64 = 0.01;

/// Which rule picks the context length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CentralKind {
    /// Learned masked categorical policy.
    #[default]
    Adaptive,
    /// Always the largest available length not above the given one.
    Fixed(usize),
}

/// How an adaptive policy turns probabilities into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecideMode {
    Sample,
    Greedy,
    /// Uniform over the unmasked slots, ignoring the network.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CentralUpdateMode {
    #[default]
    Ppo,
    /// Plain one-step actor-critic with step size ζ.
    Td,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralDecision {
    pub t: usize,
    pub action_index: usize,
    pub context_length: usize,
    pub log_prob: f64,
    pub value_estimate: f64,
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
    /// Normalized spectral state the decision was made from.
    pub features: Vec<f64>,
}

impl CentralDecision {
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// One central step: `(s, a, r, s')` with the behaviour log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralTransition {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub next_features: Vec<f64>,
    pub done: bool,
}

/// Policy and critic over the truncated spectral state of the global history.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralAgent {
    pub schedule: ActionSchedule,
    pub kind: CentralKind,
    /// Feature width of each history row.
    pub d: usize,
    /// Fixed spectral window; `None` pads each history to the next power of two.
    pub state_window: Option<usize>,
    pub policy: Trainable,
    pub critic: Trainable,
}

impl CentralAgent {
    pub fn new(
        schedule: ActionSchedule,
        kind: CentralKind,
        d: usize,
        hidden: &[usize],
        state_window: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        ensure!(d >= 1, "history rows must be non-empty");
        if let Some(w) = state_window {
            ensure!(schedule.k0 <= w / 2, "k0={} exceeds the Nyquist index of a {w}-step window", schedule.k0);
        }
        let input = CentralState::dim(d, schedule.k0);
        let sizes = |out: usize| [&[input][..], hidden, &[out]].concat();
        let mut policy = DenseNet::new(&sizes(schedule.m_slots), seed)?;
        policy.scale_output_layer(POLICY_HEAD_SCALE);
        let policy = Trainable::new(policy);
        let critic = Trainable::new(DenseNet::new(&sizes(1), seed.wrapping_add(1))?);
        Ok(Self { schedule, kind, d, state_window, policy, critic })
    }

    pub fn state_dim(&self) -> usize {
        CentralState::dim(self.d, self.schedule.k0)
    }

    /// Normalized spectral state of `history` (all zeros when it is empty).
    pub fn features<R: AsRef<[f64]>>(&self, history: &[R]) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Ok(CentralState::empty(self.d, self.schedule.k0).features);
        }
        let h = HistoryWindow::from_rows(history)?;
        ensure!(h.d() == self.d, "history rows have {} features, expected {}", h.d(), self.d);
        let s = match self.state_window {
            Some(w) => central_state_with_len(&h, self.schedule.k0, w)?,
            None => central_state(&h, self.schedule.k0)?,
        };
        Ok(s.normalized())
    }

    pub fn policy_at(&self, features: &[f64], set: &ActionSet) -> Result<CategoricalPolicy> {
        CategoricalPolicy::new(self.policy.net.forward(features)?, set.mask.clone())
    }

    pub fn value(&self, features: &[f64]) -> Result<f64> {
        Ok(self.critic.net.forward(features)?[0])
    }

    /// Picks a context length for step `t = history.len()`.
    pub fn decide<R: AsRef<[f64]>, G: Rng + ?Sized>(
        &self,
        history: &[R],
        rng: &mut G,
        mode: DecideMode,
    ) -> Result<CentralDecision> {
        let t = history.len();
        let features = self.features(history)?;
        self.decide_from(t, features, rng, mode)
    }

    /// Like [`decide`](Self::decide) for precomputed features.
    pub fn decide_from<G: Rng + ?Sized>(
        &self,
        t: usize,
        features: Vec<f64>,
        rng: &mut G,
        mode: DecideMode,
    ) -> Result<CentralDecision> {
        let set = available_actions(t, &self.schedule);
        let value_estimate = self.value(&features)?;
        let m = set.lengths.len();
        let (action_index, probs, log_prob) = match (self.kind, mode) {
            (_, DecideMode::Uniform) => {
                let open: Vec<usize> = (0..m).filter(|&j| set.mask[j]).collect();
                let a = open[rng.gen_range(0..open.len())];
                let p = 1.0 / open.len() as f64;
                let probs = (0..m).map(|j| if set.mask[j] { p } else { 0.0 }).collect();
                (a, probs, p.ln())
            }
            (CentralKind::Fixed(cap), _) => {
                let a = (0..m).rev().find(|&j| set.mask[j] && set.lengths[j] <= cap).expect("zero slot is always open");
                let mut probs = vec![0.0; m];
                probs[a] = 1.0;
                (a, probs, 0.0)
            }
            (CentralKind::Adaptive, _) => {
                let pol = self.policy_at(&features, &set)?;
                let a = if mode == DecideMode::Greedy { pol.greedy() } else { pol.sample(rng) };
                (a, pol.probs().to_vec(), pol.log_prob(a))
            }
        };
        let context_length = set.lengths[action_index];
        debug_assert!(set.mask[action_index] && context_length <= t);
        Ok(CentralDecision { t, action_index, context_length, log_prob, value_estimate, probs, mask: set.mask, features })
    }
}

/// `Σ ω_i r_i` after checking that the weights are a distribution.
pub fn central_reward(weights: &[f64], rewards: &[f64]) -> Result<f64> {
    ensure!(weights.len() == rewards.len(), "{} weights for {} rewards", weights.len(), rewards.len());
    ensure!(!weights.is_empty(), "no agents to aggregate");
    ensure!(weights.iter().all(|&w| w >= 0.0), "weights must be non-negative");
    let s: f64 = weights.iter().sum();
    ensure!((s - 1.0).abs() <= 1e-9, "weights sum to {s}, expected 1");
    Ok(weights.iter().zip(rewards).map(|(w, r)| w * r).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralUpdateConfig {
    pub mode: CentralUpdateMode,
    pub gamma: f64,
    pub lambda: f64,
    /// Step size of the td mode.
    pub zeta: f64,
    pub ppo: PpoConfig,
}

impl Default for CentralUpdateConfig {
    fn default() -> Self {
        Self { mode: CentralUpdateMode::Ppo, gamma: 0.98, lambda: 0.95, zeta: 1e-3, ppo: PpoConfig::default() }
    }
}

/// One-step TD error `r + γ·V(s')·(1 − done) − V(s)`.
pub fn td_error(reward: f64, value: f64, next_value: f64, done: bool, gamma: f64) -> f64 {
    reward + if done { 0.0 } else { gamma * next_value } - value
}

/// Updates the central policy and critic from a batch of transitions in
/// time order (episodes separated by `done`).
pub fn central_update(agent: &mut CentralAgent, batch: &[CentralTransition], cfg: &CentralUpdateConfig) -> Result<PpoStats> {
    ensure!(!batch.is_empty(), "central update needs a non-empty batch");
    match cfg.mode {
        CentralUpdateMode::Ppo => {
            let values = batch.iter().map(|x| agent.value(&x.features)).collect::<Result<Vec<_>>>()?;
            let next_values = batch
                .iter()
                .map(|x| if x.done { Ok(0.0) } else { agent.value(&x.next_features) })
                .collect::<Result<Vec<_>>>()?;
            let rewards: Vec<f64> = batch.iter().map(|x| x.reward).collect();
            let dones: Vec<bool> = batch.iter().map(|x| x.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &next_values, &dones, cfg.gamma, cfg.lambda)?;
            let pb: Vec<PolicySample> = batch
                .iter()
                .zip(&adv)
                .map(|(x, &a)| PolicySample {
                    input: x.features.clone(),
                    mask: x.mask.clone(),
                    action: x.action,
                    old_log_prob: x.log_prob,
                    advantage: a,
                })
                .collect();
            let vb: Vec<ValueSample> =
                batch.iter().zip(&ret).map(|(x, &r)| ValueSample { input: x.features.clone(), targets: vec![r] }).collect();
            ppo_update(&mut agent.policy, &mut agent.critic, &pb, &vb, &cfg.ppo)
        }
        CentralUpdateMode::Td => td_update(agent, batch, cfg),
    }
}

fn td_update(agent: &mut CentralAgent, batch: &[CentralTransition], cfg: &CentralUpdateConfig) -> Result<PpoStats> {
    let mut deltas = Vec::with_capacity(batch.len());
    for x in batch {
        let next = if x.done { 0.0 } else { agent.value(&x.next_features)? };
        let d = td_error(x.reward, agent.value(&x.features)?, next, x.done, cfg.gamma);
        if !d.is_finite() {
            return Err(Error::Divergence("non-finite central td error".into()));
        }
        deltas.push(d);
    }
    let n = batch.len() as f64;
    let items: Vec<(&CentralTransition, f64)> = batch.iter().zip(deltas.iter().copied()).collect();
    let (pnet, cnet) = (&agent.policy.net, &agent.critic.net);
    let (np, nc) = (pnet.param_count(), cnet.param_count());
    let failed = std::sync::atomic::AtomicBool::new(false);
    // [policy ascent direction | critic ascent direction | entropy | ½δ²]
    let acc = chunked_sum(cfg.ppo.exec, &items, cfg.ppo.chunk, np + nc + 2, |(x, delta), acc| {
        let (pg, rest) = acc.split_at_mut(np);
        let (cg, stats) = rest.split_at_mut(nc);
        let ok = (|| -> Result<()> {
            let trace = pnet.forward_trace(&x.features)?;
            let pol = CategoricalPolicy::new(trace.output().to_vec(), x.mask.clone())?;
            let dl: Vec<f64> = pol.grad_log_prob(x.action).iter().map(|g| g * delta / n).collect();
            pnet.backprop_into(&trace, &dl, pg)?;
            let ctrace = cnet.forward_trace(&x.features)?;
            cnet.backprop_into(&ctrace, &[delta / n], cg)?;
            stats[0] += pol.entropy();
            stats[1] += 0.5 * delta * delta;
            Ok(())
        })();
        if ok.is_err() {
            failed.store(true, std::sync::atomic::Ordering::Relaxed);
        }
    });
    ensure!(!failed.into_inner(), "central batch does not match the networks");
    agent.policy.sgd(&acc[..np], cfg.zeta)?;
    agent.critic.sgd(&acc[np..np + nc], cfg.zeta)?;
    Ok(PpoStats { entropy: acc[np + nc] / n, value_loss: acc[np + nc + 1] / n, ..PpoStats::default() })
}
