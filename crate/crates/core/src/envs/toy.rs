use super::{EnvStep, MultiAgentEnv};
use crate::error::ensure;
use crate::Result;

/// Every agent receives the same constant reward every step; observations are
/// a fixed ramp. Used for smoke tests of the training loop.
#[derive(Debug, Clone)]
pub struct ConstantRewardEnv {
    n_agents: usize,
    obs_dim: usize,
    reward: f64,
    episode_len: usize,
    step: usize,
}

impl ConstantRewardEnv {
    pub fn new(n_agents: usize, obs_dim: usize, reward: f64, episode_len: usize) -> Result<Self> {
        ensure!(n_agents >= 1 && obs_dim >= 1 && episode_len >= 1, "constant env dims must be positive");
        ensure!(reward.is_finite(), "reward must be finite");
        Ok(Self { n_agents, obs_dim, reward, episode_len, step: 0 })
    }

    fn obs(&self) -> Vec<Vec<f64>> {
        (0..self.n_agents)
            .map(|i| (0..self.obs_dim).map(|k| (i + k) as f64 * 0.1 + self.step as f64 * 0.01).collect())
            .collect()
    }
}

impl MultiAgentEnv for ConstantRewardEnv {
    fn n_agents(&self) -> usize {
        self.n_agents
    }
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn episode_len(&self) -> usize {
        self.episode_len
    }
    fn reset(&mut self, _seed: u64) -> Vec<Vec<f64>> {
        self.step = 0;
        self.obs()
    }
    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        ensure!(actions.len() == self.n_agents, "expected {} actions", self.n_agents);
        ensure!(actions.iter().all(|&a| a < 2), "invalid action");
        self.step += 1;
        Ok(EnvStep { observations: self.obs(), rewards: vec![self.reward; self.n_agents], done: self.step >= self.episode_len })
    }
    fn global_state(&self) -> Vec<f64> {
        vec![self.step as f64 / self.episode_len as f64]
    }
}
