//! Decentralized actors with a centralized critic, orchestrated by the
//! central agent.
//!
//! All agents share one policy network. Each update collects whole episodes,
//! updates the central agent first and then runs clipped-surrogate epochs on
//! the shared policy and the multi-output critic.

mod gae;
mod ppo;
mod rollout;
mod train;

pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{
    evaluate_surrogate, ppo_update, value_gradient, PolicySample, PpoConfig, PpoStats, SurrogateEval, Trainable,
    ValueNorm, ValueSample,
};
pub use rollout::{
    build_global_critic_input, episode_rng, policy_input, run_episode, AgentMode, Models, RolloutOptions, Trajectory,
    Transition,
};
pub use train::{
    alignment_diagnostic, eval_csv, evaluate, histogram_entropy, central_selection_entropy, improvement, init_models,
    metrics_csv, random_baseline, train, train_with, AlignmentSample, EvalRow, MetricsRow, TrainOutcome,
    TrainerCheckpoint, TrainerConfig, EVAL_HEADER, EVAL_SEED_BASE, METRICS_HEADER,
};
