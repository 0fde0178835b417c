//! Desk-scale environments.

mod latent;
mod spread;
mod toy;

pub use latent::{latent_reset, latent_step, LatentParams, LatentProcess};
pub use spread::{spread_reset, spread_rewards, spread_step, SpreadConfig, SpreadEnv, SpreadState, SPREAD_ACTIONS};
pub use toy::ConstantRewardEnv;

use crate::Result;
use serde::{Deserialize, Serialize};

/// Result of one joint step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// A cooperative environment with discrete per-agent actions.
pub trait MultiAgentEnv: Send {
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Width of the per-step global state recorded into the history.
    fn state_dim(&self) -> usize;
    fn episode_len(&self) -> usize;
    /// Resets from `seed` and returns the initial per-agent observations.
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;
    fn step(&mut self, actions: &[usize]) -> Result<EnvStep>;
    fn global_state(&self) -> Vec<f64>;
    /// Agent positions, when the environment has any, for trajectory dumps.
    fn positions(&self) -> Option<Vec<[f64; 2]>> {
        None
    }
}

/// Serializable environment selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvSpec {
    Spread(SpreadConfig),
    Constant { n_agents: usize, obs_dim: usize, reward: f64, episode_len: usize },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn MultiAgentEnv>> {
        Ok(match self {
            Self::Spread(cfg) => Box::new(SpreadEnv::new(cfg.clone())?),
            Self::Constant { n_agents, obs_dim, reward, episode_len } => {
                Box::new(ConstantRewardEnv::new(*n_agents, *obs_dim, *reward, *episode_len)?)
            }
        })
    }
}

/// One row of the `step,agent,pos_x,pos_y,reward` trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpRow {
    pub step: usize,
    pub agent: usize,
    pub pos_x: f64,
    pub pos_y: f64,
    pub reward: f64,
}

pub const TRAJECTORY_HEADER: &str = "step,agent,pos_x,pos_y,reward";

/// Renders dump rows as CSV including the header.
pub fn trajectory_csv(rows: &[DumpRow]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.step, r.agent, r.pos_x, r.pos_y, r.reward));
    }
    out
}
