use super::rollout::{run_episode, AgentMode, Models, RolloutOptions, Trajectory};
use super::{compute_gae, ppo_update, PolicySample, PpoConfig, PpoStats, Trainable, ValueNorm, ValueSample};
use crate::approx::{AdamConfig, AttentionHeads, CategoricalPolicy, DenseNet, NetCheckpoint};
use crate::central::{
    central_update, ActionSchedule, POLICY_HEAD_SCALE, CentralAgent, CentralKind, CentralUpdateConfig, CentralUpdateMode, ContextMode,
    DecideMode,
};
use crate::envs::EnvSpec;
use crate::error::ensure;
use crate::par::{chunked_batch_sum, map_indices, Execution};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Seeds of the fixed evaluation episodes are `EVAL_SEED_BASE + k`.
pub const EVAL_SEED_BASE: u64 = 1 << 40;

pub const METRICS_HEADER: &str = "episode,mean_return,central_entropy,clip_fraction,value_loss,alignment_sign";
pub const EVAL_HEADER: &str = "episode,mean_return,baseline_return,improvement";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs_decentralized: usize,
    pub epochs_central: usize,
    pub entropy_coef: f64,
    pub lr: f64,
    /// Episodes collected before each update.
    pub batch_size: usize,
    /// Gradient steps per epoch over the collected batch.
    pub minibatches: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub episodes: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub schedule: ActionSchedule,
    pub central_kind: CentralKind,
    pub central_update: CentralUpdateMode,
    pub context_mode: ContextMode,
    pub local_history: bool,
    pub state_window: Option<usize>,
    pub attention_heads: usize,
    pub attention_dk: usize,
    pub exec: Execution,
    pub chunk: usize,
    /// Stop after the first evaluation whose improvement over the random
    /// baseline reaches this value.
    pub target_improvement: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            lambda: 0.95,
            clip: 0.2,
            epochs_decentralized: 10,
            epochs_central: 10,
            entropy_coef: 0.01,
            lr: 1e-3,
            batch_size: 25,
            minibatches: 1,
            hidden: vec![256, 64, 16],
            seed: 0,
            episodes: 2000,
            eval_every: 100,
            eval_episodes: 30,
            schedule: ActionSchedule::sample_spread(),
            central_kind: CentralKind::Adaptive,
            central_update: CentralUpdateMode::Ppo,
            context_mode: ContextMode::TimeDomain,
            local_history: false,
            state_window: None,
            attention_heads: 4,
            attention_dk: 16,
            exec: Execution::default(),
            chunk: 32,
            target_improvement: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.gamma > 0.0 && self.gamma < 1.0, "gamma must lie in (0, 1), got {}", self.gamma);
        ensure!((0.0..=1.0).contains(&self.lambda), "lambda must lie in [0, 1], got {}", self.lambda);
        ensure!(self.clip > 0.0, "clip must be positive, got {}", self.clip);
        ensure!(self.lr > 0.0 && self.lr.is_finite(), "learning rate must be positive");
        ensure!(self.entropy_coef >= 0.0, "entropy coefficient must be non-negative");
        ensure!(self.batch_size >= 1, "batch size must be positive");
        ensure!(self.minibatches >= 1, "minibatch count must be positive");
        ensure!(self.eval_every >= 1, "evaluation interval must be positive");
        ensure!(self.chunk >= 1, "chunk must be positive");
        ensure!(self.hidden.iter().all(|&h| h >= 1), "hidden widths must be positive");
        ActionSchedule::new(
            self.schedule.m_slots,
            self.schedule.k0,
            self.schedule.threshold,
            self.schedule.length_cap_factor,
        )?;
        Ok(())
    }

    /// Longest context the schedule can hand out.
    pub fn l_max(&self) -> usize {
        self.schedule.max_length()
    }

    fn ppo(&self, epochs: usize, version: u64) -> PpoConfig {
        PpoConfig {
            minibatches: self.minibatches,
            shuffle_seed: self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(version),
            clip: self.clip,
            epochs,
            entropy_coef: self.entropy_coef,
            adam: AdamConfig::with_lr(self.lr),
            normalize_advantages: true,
            exec: self.exec,
            chunk: self.chunk,
        }
    }

    fn rollout(&self, central_mode: DecideMode, agent_mode: AgentMode) -> RolloutOptions {
        RolloutOptions {
            l_max: self.l_max(),
            context_mode: self.context_mode,
            local_history: self.local_history,
            central_mode,
            agent_mode,
        }
    }

    fn trains_central(&self) -> bool {
        self.central_kind == CentralKind::Adaptive
    }
}

/// Builds freshly initialized networks for `env`.
pub fn init_models(cfg: &TrainerConfig, env: &EnvSpec) -> Result<Models> {
    cfg.validate()?;
    let e = env.build()?;
    let (n, obs, sd) = (e.n_agents(), e.obs_dim(), e.state_dim());
    let l_max = cfg.l_max();
    let ctx_d = if cfg.local_history { obs } else { sd };
    let with_hidden = |input: usize, out: usize| [&[input][..], &cfg.hidden, &[out]].concat();
    let mut policy = DenseNet::new(&with_hidden(obs + l_max * ctx_d + 1, e.n_actions()), cfg.seed)?;
    policy.scale_output_layer(POLICY_HEAD_SCALE);
    let critic = DenseNet::new(&with_hidden(n * obs + l_max * sd, n), cfg.seed.wrapping_add(1))?;
    let central =
        CentralAgent::new(cfg.schedule, cfg.central_kind, sd, &cfg.hidden, cfg.state_window, cfg.seed.wrapping_add(2))?;
    let heads = AttentionHeads::new(
        cfg.attention_heads,
        cfg.attention_dk,
        cfg.schedule.m_slots + 1,
        e.n_actions() + 1,
        cfg.seed.wrapping_add(4),
    )?;
    Ok(Models {
        policy: Trainable::new(policy),
        critic: Trainable::new(critic),
        central,
        heads,
        value_norm: ValueNorm::default(),
    })
}

/// One per-sample term of the alignment estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSample {
    pub input: Vec<f64>,
    pub action: usize,
    pub advantage: f64,
    /// Attention weight `ω_t^i`.
    pub weight: f64,
    /// `γ^t`.
    pub discount: f64,
}

/// `⟨g_c, g_d⟩` with `g_c = Σ γ^t ω_t^i ∇log π·Â` and `g_d = Σ γ^t ∇log π·Â`,
/// both over the shared policy parameters.
pub fn alignment_diagnostic(policy: &DenseNet, samples: &[AlignmentSample], exec: Execution, chunk: usize) -> Result<f64> {
    let np = policy.param_count();
    let failed = std::sync::atomic::AtomicBool::new(false);
    let n_out = policy.output_dim();
    let acc = chunked_batch_sum(exec, samples, chunk, 2 * np, |c, acc| {
        let ok = (|| -> Result<()> {
            let inputs: Vec<&[f64]> = c.iter().map(|s| s.input.as_slice()).collect();
            let trace = policy.forward_batch(&inputs)?;
            let mut plain = Vec::with_capacity(c.len() * n_out);
            let mut weighted = Vec::with_capacity(c.len() * n_out);
            for (b, s) in c.iter().enumerate() {
                let pol = CategoricalPolicy::unmasked(trace.output_row(b).to_vec())?;
                for g in pol.grad_log_prob(s.action) {
                    let v = g * s.advantage * s.discount;
                    plain.push(v);
                    weighted.push(s.weight * v);
                }
            }
            let (gc, gd) = acc.split_at_mut(np);
            policy.backprop_batch_into(&trace, &weighted, gc)?;
            policy.backprop_batch_into(&trace, &plain, gd)
        })();
        if ok.is_err() {
            failed.store(true, std::sync::atomic::Ordering::Relaxed);
        }
    });
    ensure!(!failed.into_inner(), "alignment samples do not match the policy");
    Ok(acc[..np].iter().zip(&acc[np..]).map(|(a, b)| a * b).sum())
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub mean_return: f64,
    pub central_entropy: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub alignment_sign: i8,
}

impl MetricsRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.episode, self.mean_return, self.central_entropy, self.clip_fraction, self.value_loss, self.alignment_sign
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Training episodes completed before the evaluation.
    pub episode: usize,
    pub mean_return: f64,
    pub baseline_return: f64,
    /// `(mean − baseline) / |baseline|`.
    pub improvement: f64,
}

impl EvalRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{}", self.episode, self.mean_return, self.baseline_return, self.improvement)
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from(EVAL_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Serializable snapshot of every trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerCheckpoint {
    pub policy: NetCheckpoint,
    pub critic: NetCheckpoint,
    pub central_policy: NetCheckpoint,
    pub central_critic: NetCheckpoint,
    pub attention: AttentionHeads,
    pub value_norm: ValueNorm,
    pub episodes_done: usize,
    pub policy_version: u64,
}

impl TrainerCheckpoint {
    pub fn from_models(m: &Models, episodes_done: usize) -> Self {
        Self {
            policy: m.policy.to_checkpoint(),
            critic: m.critic.to_checkpoint(),
            central_policy: m.central.policy.to_checkpoint(),
            central_critic: m.central.critic.to_checkpoint(),
            attention: m.heads.clone(),
            value_norm: m.value_norm.clone(),
            episodes_done,
            policy_version: m.policy.version,
        }
    }

    /// Restores networks into models initialized from the same config.
    pub fn restore(&self, cfg: &TrainerConfig, env: &EnvSpec) -> Result<Models> {
        let mut m = init_models(cfg, env)?;
        let load = |t: &mut Trainable, ck: &NetCheckpoint| -> Result<()> {
            let loaded = Trainable::from_checkpoint(ck)?;
            ensure!(
                loaded.net.layer_sizes() == t.net.layer_sizes(),
                "checkpoint layer sizes {:?} do not match the config ({:?})",
                loaded.net.layer_sizes(),
                t.net.layer_sizes()
            );
            *t = loaded;
            Ok(())
        };
        load(&mut m.policy, &self.policy)?;
        load(&mut m.critic, &self.critic)?;
        load(&mut m.central.policy, &self.central_policy)?;
        load(&mut m.central.critic, &self.central_critic)?;
        m.policy.version = self.policy_version;
        m.heads = self.attention.clone();
        m.value_norm = self.value_norm.clone();
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    pub evals: Vec<EvalRow>,
    pub baseline: f64,
    pub checkpoint: TrainerCheckpoint,
    pub models: Models,
    /// Counts of chosen central slots over all training steps.
    pub central_histogram: Vec<u64>,
    /// Set when training stopped on a numerical failure; the checkpoint then
    /// holds the last good parameters.
    pub diverged: Option<String>,
}

/// Mean per-agent return over the fixed evaluation episodes.
pub fn evaluate(
    cfg: &TrainerConfig,
    env: &EnvSpec,
    models: &Models,
    central_mode: DecideMode,
    agent_mode: AgentMode,
) -> Result<f64> {
    ensure!(cfg.eval_episodes >= 1, "need at least one evaluation episode");
    let opts = cfg.rollout(central_mode, agent_mode);
    let returns = map_indices(cfg.exec, cfg.eval_episodes, |k| -> Result<f64> {
        let mut e = env.build()?;
        Ok(run_episode(e.as_mut(), models, &opts, EVAL_SEED_BASE + k as u64)?.mean_return())
    });
    let mut total = 0.0;
    for r in returns {
        total += r?;
    }
    Ok(total / cfg.eval_episodes as f64)
}

/// Return of uniformly random agents and central choices on the evaluation
/// episodes.
pub fn random_baseline(cfg: &TrainerConfig, env: &EnvSpec) -> Result<f64> {
    let models = init_models(cfg, env)?;
    evaluate(cfg, env, &models, DecideMode::Uniform, AgentMode::Uniform)
}

/// Relative improvement `(x − base) / |base|`.
pub fn improvement(x: f64, base: f64) -> f64 {
    if base == 0.0 {
        if x == 0.0 {
            0.0
        } else {
            f64::INFINITY * x.signum()
        }
    } else {
        (x - base) / base.abs()
    }
}

struct UpdateStats {
    decentral: PpoStats,
    alignment: i8,
}

fn update(cfg: &TrainerConfig, models: &mut Models, trajs: &[Trajectory]) -> Result<UpdateStats> {
    if cfg.trains_central() {
        let batch: Vec<_> = trajs.iter().flat_map(|t| t.central.iter().cloned()).collect();
        let ucfg = CentralUpdateConfig {
            mode: cfg.central_update,
            gamma: cfg.gamma,
            lambda: cfg.lambda,
            zeta: cfg.lr,
            ppo: cfg.ppo(cfg.epochs_central, models.central.policy.version),
        };
        central_update(&mut models.central, &batch, &ucfg)?;
    }

    let n_actions = models.policy.net.output_dim();
    let mut raw_targets: Vec<Vec<f64>> = Vec::new();
    let mut pb = Vec::new();
    let mut vb = Vec::new();
    let mut ab = Vec::new();
    for traj in trajs {
        let n = traj.agents.len();
        let steps = traj.len();
        let mut returns = vec![vec![0.0; n]; steps];
        for i in 0..n {
            let tr = &traj.agents[i];
            let rewards: Vec<f64> = tr.iter().map(|x| x.reward).collect();
            let dones: Vec<bool> = tr.iter().map(|x| x.done).collect();
            let values: Vec<f64> = traj.values.iter().map(|v| v[i]).collect();
            let next: Vec<f64> = (0..steps).map(|t| if t + 1 < steps { values[t + 1] } else { 0.0 }).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &next, &dones, cfg.gamma, cfg.lambda)?;
            for (t, x) in tr.iter().enumerate() {
                ensure!(x.policy_version == models.policy.version, "stale policy version in batch");
                returns[t][i] = ret[t];
                pb.push(PolicySample {
                    input: x.policy_input.clone(),
                    mask: vec![true; n_actions],
                    action: x.action,
                    old_log_prob: x.log_prob,
                    advantage: adv[t],
                });
                ab.push(AlignmentSample {
                    input: x.policy_input.clone(),
                    action: x.action,
                    advantage: adv[t],
                    weight: traj.attention[t][i],
                    discount: cfg.gamma.powi(t as i32),
                });
            }
        }
        for (t, r) in returns.into_iter().enumerate() {
            vb.push(ValueSample { input: traj.critic_inputs[t].clone(), targets: Vec::new() });
            raw_targets.push(r);
        }
    }
    for r in &raw_targets {
        models.value_norm.update(r);
    }
    for (s, r) in vb.iter_mut().zip(raw_targets) {
        s.targets = r.into_iter().map(|x| models.value_norm.normalize(x)).collect();
    }
    let inner = alignment_diagnostic(&models.policy.net, &ab, cfg.exec, cfg.chunk)?;
    let pcfg = cfg.ppo(cfg.epochs_decentralized, models.policy.version);
    let decentral = ppo_update(&mut models.policy, &mut models.critic, &pb, &vb, &pcfg)?;
    Ok(UpdateStats { decentral, alignment: sign(inner) })
}

/// Runs the full training loop on `env`.
///
/// Evaluations (greedy central choice and greedy agents) happen before
/// training and after every `eval_every` episodes, plus once at the end.
pub fn train(cfg: &TrainerConfig, env: &EnvSpec) -> Result<TrainOutcome> {
    train_with(cfg, env, |_| {})
}

/// [`train`] with a callback invoked after each evaluation.
pub fn train_with(cfg: &TrainerConfig, env: &EnvSpec, mut on_eval: impl FnMut(&EvalRow)) -> Result<TrainOutcome> {
    let mut models = init_models(cfg, env)?;
    let baseline = random_baseline(cfg, env)?;
    let per_batch = cfg.batch_size;
    let sample_opts = cfg.rollout(DecideMode::Sample, AgentMode::Sample);
    let mut metrics = Vec::with_capacity(cfg.episodes);
    let mut evals = Vec::new();
    let mut histogram = vec![0u64; cfg.schedule.m_slots];
    let mut diverged = None;

    let mut eval = |models: &Models, episode: usize, evals: &mut Vec<EvalRow>| -> Result<()> {
        let r = evaluate(cfg, env, models, DecideMode::Greedy, AgentMode::Greedy)?;
        let row = EvalRow { episode, mean_return: r, baseline_return: baseline, improvement: improvement(r, baseline) };
        on_eval(&row);
        evals.push(row);
        Ok(())
    };
    eval(&models, 0, &mut evals)?;

    let mut done = 0;
    while done < cfg.episodes {
        let k = per_batch.min(cfg.episodes - done);
        let trajs = map_indices(cfg.exec, k, |j| -> Result<Trajectory> {
            let mut e = env.build()?;
            run_episode(e.as_mut(), &models, &sample_opts, cfg.seed.wrapping_add((done + j) as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for t in &trajs {
            for d in &t.decisions {
                histogram[d.action_index] += 1;
            }
        }
        let last_good = models.clone();
        let stats = match update(cfg, &mut models, &trajs) {
            Ok(s) => s,
            Err(Error::Divergence(msg)) => {
                models = last_good;
                diverged = Some(format!("after {done} episodes: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        for (j, t) in trajs.iter().enumerate() {
            metrics.push(MetricsRow {
                episode: done + j,
                mean_return: t.mean_return(),
                central_entropy: t.central_entropy(),
                clip_fraction: stats.decentral.clip_fraction,
                value_loss: stats.decentral.value_loss,
                alignment_sign: stats.alignment,
            });
        }
        let before = done;
        done += k;
        if done / cfg.eval_every > before / cfg.eval_every || done == cfg.episodes {
            eval(&models, done, &mut evals)?;
            let last = evals.last().expect("just evaluated").improvement;
            if cfg.target_improvement.is_some_and(|target| last >= target) {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        metrics,
        evals,
        baseline,
        checkpoint: TrainerCheckpoint::from_models(&models, done),
        models,
        central_histogram: histogram,
        diverged,
    })
}

/// Entropy (nats) of the greedy central choices made during evaluation
/// episodes, pooled over steps where more than one length was available.
pub fn central_selection_entropy(cfg: &TrainerConfig, env: &EnvSpec, models: &Models) -> Result<f64> {
    let opts = cfg.rollout(DecideMode::Greedy, AgentMode::Greedy);
    let trajs = map_indices(cfg.exec, cfg.eval_episodes, |k| -> Result<Trajectory> {
        let mut e = env.build()?;
        run_episode(e.as_mut(), models, &opts, EVAL_SEED_BASE + k as u64)
    });
    let mut counts = vec![0u64; cfg.schedule.m_slots];
    for t in trajs {
        for d in t?.decisions {
            if d.mask.iter().filter(|&&m| m).count() > 1 {
                counts[d.action_index] += 1;
            }
        }
    }
    Ok(histogram_entropy(&counts))
}

pub fn histogram_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}
