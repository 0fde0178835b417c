use crate::approx::{attention_weights, AttentionHeads, CategoricalPolicy};
use crate::central::{
    central_reward, select_context, CentralAgent, CentralDecision, CentralTransition, ContextMode, DecideMode,
    OptimalContext,
};
use crate::envs::MultiAgentEnv;
use crate::error::ensure;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Trainable, ValueNorm};

/// How decentralized agents pick actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    Sample,
    Greedy,
    Uniform,
}

/// Every network touched during a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    /// Policy shared by all decentralized agents.
    pub policy: Trainable,
    /// Centralized critic with one output per agent.
    pub critic: Trainable,
    pub central: CentralAgent,
    pub heads: AttentionHeads,
    /// Scale of the critic's targets.
    pub value_norm: ValueNorm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub l_max: usize,
    pub context_mode: ContextMode,
    /// Agents see their own observation history instead of the global one.
    pub local_history: bool,
    pub central_mode: DecideMode,
    pub agent_mode: AgentMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub agent_id: usize,
    pub observation: Vec<f64>,
    pub context: OptimalContext,
    /// Observation, context window and length feature as fed to the policy.
    pub policy_input: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
    /// Version of the shared policy that produced the action.
    pub policy_version: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `agents[i][t]`.
    pub agents: Vec<Vec<Transition>>,
    pub central: Vec<CentralTransition>,
    pub decisions: Vec<CentralDecision>,
    pub critic_inputs: Vec<Vec<f64>>,
    /// Critic estimates `values[t][i]` at the time of acting, in return units.
    pub values: Vec<Vec<f64>>,
    /// Attention weights `attention[t][i]`.
    pub attention: Vec<Vec<f64>>,
    /// Agent positions after each step, when the environment exposes them.
    pub positions: Vec<Vec<[f64; 2]>>,
    pub returns: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Mean entropy of the central selection distribution over the episode.
    pub fn central_entropy(&self) -> f64 {
        if self.decisions.is_empty() {
            return 0.0;
        }
        self.decisions.iter().map(|d| d.entropy()).sum::<f64>() / self.decisions.len() as f64
    }
}

/// Concatenates the observations in agent-id order and appends the shared
/// context window once.
pub fn build_global_critic_input(observations: &[(usize, &[f64])], context: &[f64]) -> Result<Vec<f64>> {
    let n = observations.len();
    let mut order: Vec<&(usize, &[f64])> = observations.iter().collect();
    order.sort_by_key(|(id, _)| *id);
    for (k, (id, _)) in order.iter().enumerate() {
        ensure!(*id == k, "agent {k} is missing from the critic input ({n} observations given)");
    }
    let mut out: Vec<f64> = order.iter().flat_map(|(_, o)| o.iter().copied()).collect();
    out.extend_from_slice(context);
    Ok(out)
}

/// Decentralized policy input for one agent.
pub fn policy_input(observation: &[f64], context: &OptimalContext) -> Vec<f64> {
    let mut v = Vec::with_capacity(observation.len() + context.window.len() + 1);
    v.extend_from_slice(observation);
    v.extend_from_slice(&context.window);
    v.push(context.length_feature);
    v
}

/// RNG for in-episode sampling; disjoint from the stream the environment
/// uses for its own reset.
pub fn episode_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Plays one episode. At step `t` the history holds the `t` global states
/// recorded before the current one.
pub fn run_episode(env: &mut dyn MultiAgentEnv, models: &Models, opts: &RolloutOptions, seed: u64) -> Result<Trajectory> {
    let n = env.n_agents();
    let n_actions = env.n_actions();
    let state_dim = env.state_dim();
    let mut rng = episode_rng(seed);
    let mut obs = env.reset(seed);
    let mut global_hist: Vec<Vec<f64>> = Vec::new();
    let mut local_hist: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut current_state = env.global_state();
    let mut traj = Trajectory {
        agents: vec![Vec::new(); n],
        central: Vec::new(),
        decisions: Vec::new(),
        critic_inputs: Vec::new(),
        values: Vec::new(),
        attention: Vec::new(),
        positions: Vec::new(),
        returns: vec![0.0; n],
    };
    let version = models.policy.version;
    let mut features = models.central.features(&global_hist)?;
    for _ in 0..env.episode_len() {
        let t = global_hist.len();
        let decision = models.central.decide_from(t, features.clone(), &mut rng, opts.central_mode)?;
        let length = decision.context_length;
        let shared = select_context(&global_hist, state_dim, length, opts.l_max, opts.context_mode)?;
        let mut inputs = Vec::with_capacity(n);
        let mut contexts = Vec::with_capacity(n);
        for i in 0..n {
            let ctx = if opts.local_history {
                select_context(&local_hist[i], obs[i].len(), length, opts.l_max, opts.context_mode)?
            } else {
                shared.clone()
            };
            inputs.push(policy_input(&obs[i], &ctx));
            contexts.push(ctx);
        }
        let pairs: Vec<(usize, &[f64])> = obs.iter().enumerate().map(|(i, o)| (i, o.as_slice())).collect();
        let critic_input = build_global_critic_input(&pairs, &shared.window)?;
        let values: Vec<f64> =
            models.critic.net.forward(&critic_input)?.into_iter().map(|v| models.value_norm.denormalize(v)).collect();
        ensure!(values.len() == n, "critic has {} outputs for {n} agents", values.len());

        let mut actions = Vec::with_capacity(n);
        let mut log_probs = Vec::with_capacity(n);
        let mut agent_features = Vec::with_capacity(n);
        for (i, input) in inputs.iter().enumerate() {
            let pol = CategoricalPolicy::unmasked(models.policy.net.forward(input)?)?;
            let a = match opts.agent_mode {
                AgentMode::Sample => pol.sample(&mut rng),
                AgentMode::Greedy => pol.greedy(),
                AgentMode::Uniform => rng.gen_range(0..n_actions),
            };
            actions.push(a);
            log_probs.push(pol.log_prob(a));
            let mut f = vec![values[i]];
            f.extend_from_slice(pol.probs());
            agent_features.push(f);
        }
        let mut query = vec![decision.value_estimate];
        query.extend_from_slice(&decision.probs);
        let weights = attention_weights(&query, &agent_features, &models.heads)?;

        let step = env.step(&actions)?;
        ensure!(step.rewards.iter().all(|r| r.is_finite()), "environment returned a non-finite reward");
        let r_c = central_reward(&weights, &step.rewards)?;

        global_hist.push(std::mem::replace(&mut current_state, env.global_state()));
        for (h, o) in local_hist.iter_mut().zip(&obs) {
            h.push(o.clone());
        }
        let next_features = models.central.features(&global_hist)?;
        traj.central.push(CentralTransition {
            features: std::mem::replace(&mut features, next_features.clone()),
            mask: decision.mask.clone(),
            action: decision.action_index,
            log_prob: decision.log_prob,
            reward: r_c,
            next_features,
            done: step.done,
        });
        for (i, ((input, ctx), next_obs)) in inputs.into_iter().zip(contexts).zip(&step.observations).enumerate() {
            traj.returns[i] += step.rewards[i];
            traj.agents[i].push(Transition {
                agent_id: i,
                observation: std::mem::take(&mut obs[i]),
                context: ctx,
                policy_input: input,
                action: actions[i],
                log_prob: log_probs[i],
                reward: step.rewards[i],
                next_observation: next_obs.clone(),
                done: step.done,
                policy_version: version,
            });
        }
        if let Some(p) = env.positions() {
            traj.positions.push(p);
        }
        traj.decisions.push(decision);
        traj.critic_inputs.push(critic_input);
        traj.values.push(values);
        traj.attention.push(weights);
        obs = step.observations;
        if step.done {
            break;
        }
    }
    Ok(traj)
}
