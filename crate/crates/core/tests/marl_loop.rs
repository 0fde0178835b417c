use acllft_core::approx::DenseNet;
use acllft_core::central::{central_reward, DecideMode};
use acllft_core::envs::{EnvSpec, SpreadConfig};
use acllft_core::marl::{
    alignment_diagnostic, build_global_critic_input, init_models, metrics_csv, run_episode, train, AgentMode,
    AlignmentSample, RolloutOptions, TrainerConfig,
};
use acllft_core::par::Execution;

fn small_config(episodes: usize) -> TrainerConfig {
    TrainerConfig {
        hidden: vec![16, 8],
        episodes,
        eval_every: 5,
        eval_episodes: 3,
        epochs_decentralized: 2,
        epochs_central: 2,
        ..TrainerConfig::default()
    }
}

fn spread(n_agents: usize, n_landmarks: usize, episode_len: usize) -> EnvSpec {
    EnvSpec::Spread(SpreadConfig { n_agents, n_landmarks, episode_len, ..SpreadConfig::default() })
}

fn options(cfg: &TrainerConfig) -> RolloutOptions {
    RolloutOptions {
        l_max: cfg.l_max(),
        context_mode: cfg.context_mode,
        local_history: cfg.local_history,
        central_mode: DecideMode::Sample,
        agent_mode: AgentMode::Sample,
    }
}

#[test]
fn critic_input_concatenates_observations_then_context() {
    let a = [1.0, 2.0, 3.0];
    let b = [4.0, 5.0, 6.0];
    let ctx = [0.5; 8];
    let x = build_global_critic_input(&[(0, &a), (1, &b)], &ctx).unwrap();
    assert_eq!(x.len(), 14);
    let y = build_global_critic_input(&[(1, &b), (0, &a)], &ctx).unwrap();
    assert_eq!(x, y);
    assert!(build_global_critic_input(&[(0, &a), (2, &b)], &ctx).is_err());
}

#[test]
fn identical_seeds_give_identical_metrics() {
    let cfg = small_config(6);
    let env = spread(2, 2, 10);
    let a = train(&cfg, &env).unwrap();
    let b = train(&cfg, &env).unwrap();
    assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
    assert_eq!(a.checkpoint, b.checkpoint);
}

#[test]
fn parallel_and_sequential_training_agree() {
    let env = spread(2, 2, 10);
    let par = train(&TrainerConfig { exec: Execution::Parallel, ..small_config(4) }, &env).unwrap();
    let seq = train(&TrainerConfig { exec: Execution::Sequential, ..small_config(4) }, &env).unwrap();
    assert_eq!(metrics_csv(&par.metrics), metrics_csv(&seq.metrics));
}

#[test]
fn zero_episodes_only_evaluates_the_initial_policy() {
    let out = train(&small_config(0), &spread(2, 2, 10)).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.evals.len(), 1);
    assert_eq!(out.evals[0].episode, 0);
    assert_eq!(out.checkpoint.episodes_done, 0);
}

#[test]
fn unit_reward_return_equals_episode_length() {
    let env = EnvSpec::Constant { n_agents: 3, obs_dim: 4, reward: 1.0, episode_len: 12 };
    let out = train(&small_config(4), &env).unwrap();
    assert!(out.metrics.iter().all(|m| m.mean_return == 12.0));
    assert!(out.evals.iter().all(|e| e.mean_return == 12.0));
}

#[test]
fn zero_reward_environment_trains_without_failure() {
    let env = EnvSpec::Constant { n_agents: 2, obs_dim: 3, reward: 0.0, episode_len: 8 };
    let out = train(&small_config(4), &env).unwrap();
    assert!(out.diverged.is_none());
    assert!(out.metrics.iter().all(|m| m.mean_return == 0.0 && m.value_loss.is_finite()));
}

#[test]
fn single_agent_central_reward_is_the_agent_reward() {
    let cfg = small_config(0);
    let env = spread(1, 1, 15);
    let models = init_models(&cfg, &env).unwrap();
    let mut e = env.build().unwrap();
    let traj = run_episode(e.as_mut(), &models, &options(&cfg), 3).unwrap();
    for (t, c) in traj.central.iter().enumerate() {
        assert_eq!(traj.attention[t], vec![1.0]);
        assert_eq!(c.reward, traj.agents[0][t].reward);
    }
}

#[test]
fn central_reward_follows_attention_weights() {
    let cfg = small_config(0);
    let env = spread(3, 3, 10);
    let models = init_models(&cfg, &env).unwrap();
    let mut e = env.build().unwrap();
    let traj = run_episode(e.as_mut(), &models, &options(&cfg), 4).unwrap();
    for (t, c) in traj.central.iter().enumerate() {
        let rewards: Vec<f64> = traj.agents.iter().map(|a| a[t].reward).collect();
        assert_eq!(c.reward, central_reward(&traj.attention[t], &rewards).unwrap());
    }
}

#[test]
fn all_agents_act_with_the_current_policy_version() {
    let cfg = small_config(3);
    let env = spread(3, 2, 10);
    let out = train(&cfg, &env).unwrap();
    let v = out.models.policy.version;
    assert!(v > 0);
    let mut e = env.build().unwrap();
    let traj = run_episode(e.as_mut(), &out.models, &options(&cfg), 11).unwrap();
    assert!(traj.agents.iter().flatten().all(|x| x.policy_version == v));
}

#[test]
fn aligned_batch_gives_positive_diagnostic() {
    let policy = DenseNet::new(&[4, 8, 3], 2).unwrap();
    let input = vec![0.3, -0.2, 0.8, 0.1];
    let samples: Vec<AlignmentSample> = (0..6)
        .map(|k| AlignmentSample {
            input: input.clone(),
            action: 1,
            advantage: 0.5 + k as f64,
            weight: 0.1 + 0.05 * k as f64,
            discount: 0.98f64.powi(k),
        })
        .collect();
    let inner = alignment_diagnostic(&policy, &samples, Execution::Sequential, 4).unwrap();
    assert!(inner > 0.0);
}
