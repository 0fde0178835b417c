//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. Lists
//! are comma separated. Unknown keys and repeated keys are errors.

use crate::CliError;
use acllft_core::central::{ActionSchedule, CentralKind, CentralUpdateMode, ContextMode};
use acllft_core::envs::{EnvSpec, LatentParams, SpreadConfig};
use acllft_core::marl::TrainerConfig;
use acllft_core::par::Execution;
use acllft_core::theory::{AdaptivePolicy, LearnedConfig, RegimeSchedule, RegretConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// A trained method: the adaptive central agent or a fixed context length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Adaptive,
    Fixed(usize),
}

impl Method {
    pub fn kind(self) -> CentralKind {
        match self {
            Self::Adaptive => CentralKind::Adaptive,
            Self::Fixed(l) => CentralKind::Fixed(l),
        }
    }

    /// Directory name under the output root.
    pub fn dir_name(self) -> String {
        match self {
            Self::Adaptive => "adaptive".into(),
            Self::Fixed(l) => format!("fixed_{l}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Adaptive => f.write_str("adaptive"),
            Self::Fixed(l) => write!(f, "fixed:{l}"),
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "adaptive" {
            return Ok(Self::Adaptive);
        }
        s.strip_prefix("fixed:")
            .and_then(|l| l.parse().ok())
            .map(Self::Fixed)
            .ok_or_else(|| format!("unknown method '{s}' (expected 'adaptive' or 'fixed:L')"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: SpreadConfig,
    pub trainer: TrainerConfig,
    pub methods: Vec<Method>,
    pub theory: RegretConfig,
    /// Rate of the fast regime that alternates with the nominal one.
    pub fast_theta: f64,
    pub regime_period: usize,
    /// `None` tracks the optimal window exactly.
    pub learned: Option<LearnedConfig>,
    pub spectral_t: usize,
    pub spectral_m: u32,
    /// Fraction of the training run, counted from the end, that
    /// `compare-fixed` averages over.
    pub compare_window: f64,
    pub case_episodes: usize,
    #[serde(skip)]
    train_steps: Option<usize>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub tag: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: SpreadConfig::default(),
            trainer: TrainerConfig { episodes: 20_000, ..TrainerConfig::default() },
            methods: vec![Method::Adaptive],
            theory: RegretConfig::default(),
            fast_theta: 4.0,
            regime_period: 2000,
            learned: Some(LearnedConfig::default()),
            spectral_t: 64,
            spectral_m: 2,
            compare_window: 0.1,
            case_episodes: 1,
            train_steps: None,
            seeds: vec![0],
            out: PathBuf::from("runs"),
            tag: "default".into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Validation(format!("{key}: cannot parse '{v}'")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, CliError> {
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("line {}: expected 'key = value'", n + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if entries.insert(k.clone(), v).is_some() {
                return Err(CliError::Validation(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        let mut c = Self::default();
        for (k, v) in &entries {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let t = &mut self.trainer;
        let s = &mut t.schedule;
        let th = &mut self.theory;
        match key {
            "env.n_agents" => self.env.n_agents = parse(key, v)?,
            "env.n_landmarks" => self.env.n_landmarks = parse(key, v)?,
            "env.episode_len" => self.env.episode_len = parse(key, v)?,
            "env.agent_radius" => self.env.agent_radius = parse(key, v)?,

            "train.episodes" => t.episodes = parse(key, v)?,
            "train.lr" => t.lr = parse(key, v)?,
            "train.gamma" => t.gamma = parse(key, v)?,
            "train.lambda" => t.lambda = parse(key, v)?,
            "train.clip" => t.clip = parse(key, v)?,
            "train.epochs_decentralized" => t.epochs_decentralized = parse(key, v)?,
            "train.epochs_central" => t.epochs_central = parse(key, v)?,
            "train.entropy" => t.entropy_coef = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.minibatches" => t.minibatches = parse(key, v)?,
            "train.hidden" => t.hidden = list(key, v)?,
            "train.eval_every" => t.eval_every = parse(key, v)?,
            "train.eval_episodes" => t.eval_episodes = parse(key, v)?,
            "train.local_history" => t.local_history = parse(key, v)?,
            "train.attention_heads" => t.attention_heads = parse(key, v)?,
            "train.attention_dk" => t.attention_dk = parse(key, v)?,
            "train.chunk" => t.chunk = parse(key, v)?,
            "train.exec" => {
                t.exec = match v {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(CliError::Validation(format!("{key}: expected 'parallel' or 'sequential'"))),
                }
            }
            "train.methods" => {
                self.methods =
                    v.split(',').map(|m| m.trim().parse()).collect::<Result<_, String>>().map_err(CliError::Validation)?
            }
            "train.target_improvement" => t.target_improvement = optional(key, v)?,

            "central.m_slots" => s.m_slots = parse(key, v)?,
            "central.k0" => s.k0 = parse(key, v)?,
            "central.threshold" => s.threshold = parse(key, v)?,
            "central.length_cap" => s.length_cap_factor = parse(key, v)?,
            "central.state_window" => t.state_window = optional(key, v)?,
            "central.update" => {
                t.central_update = match v {
                    "ppo" => CentralUpdateMode::Ppo,
                    "td" => CentralUpdateMode::Td,
                    _ => return Err(CliError::Validation(format!("{key}: expected 'ppo' or 'td'"))),
                }
            }
            "central.context" => {
                t.context_mode = match v {
                    "time" => ContextMode::TimeDomain,
                    _ => match v.strip_prefix("lowpass:").and_then(|k| k.parse().ok()) {
                        Some(keep) => ContextMode::LowPass { keep },
                        None => return Err(CliError::Validation(format!("{key}: expected 'time' or 'lowpass:K'"))),
                    },
                }
            }

            "theory.horizon" => th.horizon = parse(key, v)?,
            "theory.theta" => th.nominal.theta = parse(key, v)?,
            "theory.eta" => th.nominal.eta = parse(key, v)?,
            "theory.sigma_eps" => th.nominal.sigma_eps = parse(key, v)?,
            "theory.dt" => th.nominal.dt = parse(key, v)?,
            "theory.fast_theta" => self.fast_theta = parse(key, v)?,
            "theory.period" => self.regime_period = parse(key, v)?,
            "theory.fixed" => th.fixed = list(key, v)?,
            "theory.candidates" => th.candidates = list(key, v)?,
            "theory.policy" => {
                self.learned = match v {
                    "oracle" => None,
                    "learned" => Some(self.learned.clone().unwrap_or_default()),
                    _ => return Err(CliError::Validation(format!("{key}: expected 'oracle' or 'learned'"))),
                }
            }
            "theory.train_steps" => self.train_steps = Some(parse(key, v)?),

            "spectral.t" => self.spectral_t = parse(key, v)?,
            "spectral.m" => self.spectral_m = parse(key, v)?,
            "compare.window" => self.compare_window = parse(key, v)?,
            "case.episodes" => self.case_episodes = parse(key, v)?,
            "seeds" => self.seeds = list(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "tag" => self.tag = v.to_string(),
            _ => return Err(CliError::Validation(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn theory_policy(&self) -> AdaptivePolicy {
        match &self.learned {
            Some(l) => AdaptivePolicy::Learned(l.clone()),
            None => AdaptivePolicy::Oracle,
        }
    }

    pub fn validate(&mut self) -> Result<(), CliError> {
        self.theory.regimes = RegimeSchedule::alternating(&self.theory.nominal, self.fast_theta, self.regime_period);
        if let Some(steps) = self.train_steps.take() {
            match &mut self.learned {
                Some(l) => l.train_steps = steps,
                None => return Err(CliError::Validation("theory.train_steps only applies to theory.policy = learned".into())),
            }
        }
        self.env.validate()?;
        self.trainer.validate()?;
        ActionSchedule::new(
            self.trainer.schedule.m_slots,
            self.trainer.schedule.k0,
            self.trainer.schedule.threshold,
            self.trainer.schedule.length_cap_factor,
        )?;
        LatentParams::validate(&self.theory.nominal)?;
        self.theory.regimes.validate(self.theory.nominal.dt)?;
        if self.seeds.is_empty() {
            return Err(CliError::Validation("seeds must be non-empty".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Validation("train.methods must be non-empty".into()));
        }
        if !(self.compare_window > 0.0 && self.compare_window <= 1.0) {
            return Err(CliError::Validation(format!("compare.window must lie in (0, 1], got {}", self.compare_window)));
        }
        Ok(())
    }

    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec::Spread(self.env.clone())
    }

    pub fn trainer_for(&self, method: Method, seed: u64) -> TrainerConfig {
        TrainerConfig { seed, central_kind: method.kind(), ..self.trainer.clone() }
    }

    /// SHA-256 over the canonical JSON form of the resolved configuration,
    /// leaving out the output directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("config is an object").remove("out");
        let json = v.to_string();
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
