//! Central agent: picks how much shared history the decentralized agents see.
//!
//! Each step the agent reads the truncated spectral state of the global
//! history, chooses a slot from the step-dependent dyadic schedule and hands
//! the corresponding tail of the history to every decentralized agent. It is
//! rewarded with the attention-weighted mean of the agents' rewards.

mod agent;
mod context;
mod schedule;

pub use agent::{
    central_reward, central_update, td_error, CentralAgent, CentralDecision, CentralKind, CentralTransition,
    CentralUpdateConfig, CentralUpdateMode, DecideMode, POLICY_HEAD_SCALE,
};
pub use context::{select_context, ContextMode, OptimalContext};
pub use schedule::{available_actions, ActionSchedule, ActionSet};

/// Header of the per-episode decision log.
pub const DECISION_HEADER: &str = "episode,step,t,action_index,context_length,value_estimate";

/// One decision-log line (without trailing newline).
pub fn decision_row(episode: usize, step: usize, d: &CentralDecision) -> String {
    format!("{episode},{step},{},{},{},{}", d.t, d.action_index, d.context_length, d.value_estimate)
}
