use super::{EnvStep, MultiAgentEnv};
use crate::error::ensure;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// `noop, +x, −x, +y, −y`
pub const SPREAD_ACTIONS: usize = 5;

const DIRECTIONS: [[f64; 2]; SPREAD_ACTIONS] = [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadConfig {
    pub n_agents: usize,
    pub n_landmarks: usize,
    pub episode_len: usize,
    /// Collision when two agents are closer than twice this.
    pub agent_radius: f64,
    /// Velocity added per step in the chosen direction.
    pub accel: f64,
    /// Fraction of velocity kept between steps.
    pub damping: f64,
    pub max_speed: f64,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        Self {
            n_agents: 4,
            n_landmarks: 3,
            episode_len: 25,
            agent_radius: 0.075,
            accel: 0.1,
            damping: 0.5,
            max_speed: 0.2,
        }
    }
}

impl SpreadConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_agents >= 1, "spread needs at least one agent");
        ensure!(self.n_landmarks >= 1, "spread needs at least one landmark");
        ensure!(self.episode_len >= 1, "episode length must be positive");
        ensure!(self.agent_radius >= 0.0 && self.accel >= 0.0, "radius and accel must be non-negative");
        ensure!((0.0..=1.0).contains(&self.damping), "damping must lie in [0, 1]");
        ensure!(self.max_speed > 0.0, "max speed must be positive");
        Ok(())
    }

    /// `vel(2) + pos(2) + landmarks(2·L) + other agents(2·(n−1))`
    pub fn obs_dim(&self) -> usize {
        4 + 2 * self.n_landmarks + 2 * (self.n_agents - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadState {
    pub agent_positions: Vec<[f64; 2]>,
    pub agent_velocities: Vec<[f64; 2]>,
    pub landmark_positions: Vec<[f64; 2]>,
    pub step: usize,
}

impl SpreadState {
    pub fn observations(&self) -> Vec<Vec<f64>> {
        let n = self.agent_positions.len();
        (0..n)
            .map(|i| {
                let p = self.agent_positions[i];
                let v = self.agent_velocities[i];
                let mut o = vec![v[0], v[1], p[0], p[1]];
                for l in &self.landmark_positions {
                    o.extend([l[0] - p[0], l[1] - p[1]]);
                }
                for (j, q) in self.agent_positions.iter().enumerate() {
                    if j != i {
                        o.extend([q[0] - p[0], q[1] - p[1]]);
                    }
                }
                o
            })
            .collect()
    }

    /// `[pos, vel]` of every agent, concatenated.
    pub fn global_state(&self) -> Vec<f64> {
        self.agent_positions
            .iter()
            .zip(&self.agent_velocities)
            .flat_map(|(p, v)| [p[0], p[1], v[0], v[1]])
            .collect()
    }
}

/// Uniform positions in the arena, zero velocities.
pub fn spread_reset(cfg: &SpreadConfig, seed: u64) -> (SpreadState, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let agent_positions: Vec<[f64; 2]> = (0..cfg.n_agents).map(|_| point()).collect();
    let landmark_positions: Vec<[f64; 2]> = (0..cfg.n_landmarks).map(|_| point()).collect();
    let state = SpreadState {
        agent_velocities: vec![[0.0, 0.0]; cfg.n_agents],
        agent_positions,
        landmark_positions,
        step: 0,
    };
    let obs = state.observations();
    (state, obs)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Shared coverage term `−Σ_l min_j ‖p_j − l‖` for every agent, plus `−1` per
/// collision partner.
pub fn spread_rewards(agents: &[[f64; 2]], landmarks: &[[f64; 2]], agent_radius: f64) -> Vec<f64> {
    let global: f64 = -landmarks
        .iter()
        .map(|&l| agents.iter().map(|&p| dist(p, l)).fold(f64::INFINITY, f64::min))
        .sum::<f64>();
    let mut r = vec![global; agents.len()];
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            if dist(agents[i], agents[j]) < 2.0 * agent_radius {
                r[i] -= 1.0;
                r[j] -= 1.0;
            }
        }
    }
    r
}

pub fn spread_step(cfg: &SpreadConfig, state: &SpreadState, actions: &[usize]) -> Result<(SpreadState, Vec<f64>, bool)> {
    ensure!(actions.len() == cfg.n_agents, "expected {} actions, got {}", cfg.n_agents, actions.len());
    if let Some(a) = actions.iter().find(|&&a| a >= SPREAD_ACTIONS) {
        crate::error::invalid::<()>(format!("invalid spread action {a}"))?;
    }
    let mut next = state.clone();
    for (i, &a) in actions.iter().enumerate() {
        let d = DIRECTIONS[a];
        let mut v = [
            cfg.damping * state.agent_velocities[i][0] + cfg.accel * d[0],
            cfg.damping * state.agent_velocities[i][1] + cfg.accel * d[1],
        ];
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if speed > cfg.max_speed {
            v = [v[0] * cfg.max_speed / speed, v[1] * cfg.max_speed / speed];
        }
        let mut p = [state.agent_positions[i][0] + v[0], state.agent_positions[i][1] + v[1]];
        for c in 0..2 {
            if p[c].abs() > 1.0 {
                p[c] = p[c].clamp(-1.0, 1.0);
                v[c] = 0.0;
            }
        }
        next.agent_positions[i] = p;
        next.agent_velocities[i] = v;
    }
    next.step += 1;
    let rewards = spread_rewards(&next.agent_positions, &next.landmark_positions, cfg.agent_radius);
    let done = next.step >= cfg.episode_len;
    Ok((next, rewards, done))
}

/// Stateful wrapper implementing [`MultiAgentEnv`].
#[derive(Debug, Clone)]
pub struct SpreadEnv {
    cfg: SpreadConfig,
    state: SpreadState,
}

impl SpreadEnv {
    pub fn new(cfg: SpreadConfig) -> Result<Self> {
        cfg.validate()?;
        let (state, _) = spread_reset(&cfg, 0);
        Ok(Self { cfg, state })
    }

    pub fn state(&self) -> &SpreadState {
        &self.state
    }

    pub fn set_state(&mut self, state: SpreadState) -> Result<()> {
        ensure!(
            state.agent_positions.len() == self.cfg.n_agents && state.landmark_positions.len() == self.cfg.n_landmarks,
            "state shape does not match the configuration"
        );
        self.state = state;
        Ok(())
    }
}

impl MultiAgentEnv for SpreadEnv {
    fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }
    fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }
    fn n_actions(&self) -> usize {
        SPREAD_ACTIONS
    }
    fn state_dim(&self) -> usize {
        4 * self.cfg.n_agents
    }
    fn episode_len(&self) -> usize {
        self.cfg.episode_len
    }
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let (s, o) = spread_reset(&self.cfg, seed);
        self.state = s;
        o
    }
    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let (s, rewards, done) = spread_step(&self.cfg, &self.state, actions)?;
        self.state = s;
        Ok(EnvStep { observations: self.state.observations(), rewards, done })
    }
    fn global_state(&self) -> Vec<f64> {
        self.state.global_state()
    }
    fn positions(&self) -> Option<Vec<[f64; 2]>> {
        Some(self.state.agent_positions.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(agents: Vec<[f64; 2]>, landmarks: Vec<[f64; 2]>) -> SpreadState {
        SpreadState { agent_velocities: vec![[0.0; 2]; agents.len()], agent_positions: agents, landmark_positions: landmarks, step: 0 }
    }

    #[test]
    fn reset_is_deterministic_and_shaped() {
        let cfg = SpreadConfig::default();
        let (a, oa) = spread_reset(&cfg, 17);
        let (b, ob) = spread_reset(&cfg, 17);
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        assert_eq!(cfg.obs_dim(), 16);
        assert!(oa.iter().all(|o| o.len() == 16));
        let (c, _) = spread_reset(&cfg, 18);
        assert_ne!(a, c);
    }

    #[test]
    fn observation_never_contains_self_relative_position() {
        let s = state(vec![[0.1, 0.2], [0.5, 0.5], [-0.3, 0.0], [0.9, -0.9]], vec![[0.0; 2]; 3]);
        let obs = s.observations();
        for (i, o) in obs.iter().enumerate() {
            let others: Vec<[f64; 2]> = o[10..].chunks(2).map(|c| [c[0], c[1]]).collect();
            assert_eq!(others.len(), 3);
            assert!(others.iter().all(|r| *r != [0.0, 0.0]), "agent {i}");
        }
        assert_eq!(&obs[0][10..12], &[0.5 - 0.1, 0.5 - 0.2]);
    }

    #[test]
    fn covered_landmarks_give_zero_global_term() {
        let l = vec![[0.5, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let r = spread_rewards(&[[0.5, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, -1.0]], &l, 0.075);
        assert_eq!(r, vec![0.0; 4]);
    }

    #[test]
    fn coincident_agents_collide() {
        let l = vec![[0.5, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let agents = [[0.5, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let r = spread_rewards(&agents, &l, 0.075);
        assert_eq!(r, vec![0.0, 0.0, -1.0, -1.0]);
    }

    #[test]
    fn hand_evaluated_coverage() {
        let agents = [[0.0, 0.0], [1.0, 0.0], [-1.0, -1.0], [-1.0, 1.0]];
        let l = [[0.5, 0.0], [0.0, 1.0], [1.0, 1.0]];
        // (0.5,0): 0.5 to both of the first two; (0,1): 1 to (0,0) and (-1,1);
        // (1,1): 1 to (1,0)
        let r = spread_rewards(&agents, &l, 0.075);
        assert!(r.iter().all(|&v| (v + 2.5).abs() < 1e-12));
    }

    #[test]
    fn translation_and_relabel_invariance() {
        let agents = [[0.1, -0.2], [0.4, 0.3], [-0.5, 0.6], [0.41, 0.31]];
        let l = [[0.0, 0.0], [0.3, -0.4], [-0.2, 0.2]];
        let r = spread_rewards(&agents, &l, 0.075);
        let shift = |v: &[[f64; 2]]| v.iter().map(|p| [p[0] + 3.0, p[1] - 7.0]).collect::<Vec<_>>();
        let rs = spread_rewards(&shift(&agents), &shift(&l), 0.075);
        for (a, b) in r.iter().zip(&rs) {
            assert!((a - b).abs() < 1e-12);
        }
        let perm = [agents[2], agents[0], agents[3], agents[1]];
        let rp = spread_rewards(&perm, &l, 0.075);
        assert_eq!(rp, vec![r[2], r[0], r[3], r[1]]);
    }

    #[test]
    fn step_validates_and_terminates() {
        let cfg = SpreadConfig::default();
        let (s, _) = spread_reset(&cfg, 1);
        assert!(spread_step(&cfg, &s, &[0, 1, 2, 5]).is_err());
        assert!(spread_step(&cfg, &s, &[0, 1]).is_err());
        let mut env = SpreadEnv::new(cfg.clone()).unwrap();
        env.reset(1);
        let mut steps = 0;
        loop {
            let out = env.step(&[1, 2, 3, 4]).unwrap();
            steps += 1;
            for p in env.state().agent_positions.iter() {
                assert!(p[0].abs() <= 1.0 && p[1].abs() <= 1.0);
            }
            for v in env.state().agent_velocities.iter() {
                assert!((v[0] * v[0] + v[1] * v[1]).sqrt() <= cfg.max_speed + 1e-12);
            }
            if out.done {
                break;
            }
        }
        assert_eq!(steps, 25);
    }

    #[test]
    fn replay_is_deterministic() {
        let cfg = SpreadConfig::default();
        let run = || {
            let mut env = SpreadEnv::new(cfg.clone()).unwrap();
            env.reset(7);
            (0..25).map(|t| env.step(&[t % 5, (t + 1) % 5, (t + 2) % 5, 0]).unwrap().rewards).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
