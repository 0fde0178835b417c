use crate::approx::{adam_step, AdamConfig, AdamState, CategoricalPolicy, DenseNet, NetCheckpoint};
use crate::error::ensure;
use crate::par::{chunked_batch_sum, Execution};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};

/// A network together with its optimizer state and an update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainable {
    pub net: DenseNet,
    pub opt: AdamState,
    /// Incremented on every parameter update.
    pub version: u64,
}

impl Trainable {
    pub fn new(net: DenseNet) -> Self {
        let opt = AdamState::new(net.param_count());
        Self { net, opt, version: 0 }
    }

    pub fn adam(&mut self, grad: &[f64], cfg: &AdamConfig) -> Result<()> {
        adam_step(self.net.params_mut(), grad, &mut self.opt, cfg)?;
        self.version += 1;
        Ok(())
    }

    /// Plain gradient step `params += scale · grad`.
    pub fn sgd(&mut self, grad: &[f64], scale: f64) -> Result<()> {
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("non-finite gradient at parameter {i}")));
        }
        for (p, g) in self.net.params_mut().iter_mut().zip(grad) {
            *p += scale * g;
        }
        self.version += 1;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> NetCheckpoint {
        self.net.to_checkpoint(Some(self.opt.clone()))
    }

    pub fn from_checkpoint(ck: &NetCheckpoint) -> Result<Self> {
        let net = DenseNet::from_checkpoint(ck)?;
        let opt = ck.optimizer_state.clone().unwrap_or_else(|| AdamState::new(net.param_count()));
        Ok(Self { net, opt, version: 0 })
    }
}

/// Running mean and variance of value targets; the critic regresses
/// standardized targets and its outputs are mapped back before use.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValueNorm {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
}

impl ValueNorm {
    const MIN_STD: f64 = 1e-2;

    pub fn update(&mut self, xs: &[f64]) {
        for &x in xs {
            self.count += 1;
            let d = x - self.mean;
            self.mean += d / self.count as f64;
            self.m2 += d * (x - self.mean);
        }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        (self.m2 / self.count as f64).sqrt().max(Self::MIN_STD)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.std() + self.mean
    }
}

/// One action taken by a categorical policy head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub input: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// A regression target for a (possibly multi-output) value head.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSample {
    pub input: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub entropy_coef: f64,
    pub adam: AdamConfig,
    pub normalize_advantages: bool,
    pub exec: Execution,
    /// Samples per gradient chunk; fixes the summation order.
    pub chunk: usize,
    /// Gradient steps per epoch, each on a disjoint shuffled slice of the
    /// batch. `1` is a full-batch step.
    pub minibatches: usize,
    /// Seeds the minibatch shuffle.
    pub shuffle_seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 10,
            entropy_coef: 0.01,
            adam: AdamConfig::default(),
            normalize_advantages: true,
            exec: Execution::default(),
            chunk: 32,
            minibatches: 1,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    /// Mean clipped-surrogate loss `−min(ρA, clip(ρ)A)` over the last epoch.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean `log π_old − log π` over the last epoch.
    pub approx_kl: f64,
    /// Fraction of samples with `|ρ − 1| > ε`, averaged over epochs.
    pub clip_fraction: f64,
}

/// Surrogate objective statistics at the current parameters without updating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateEval {
    /// Mean of `min(ρA, clip(ρ)A)`.
    pub surrogate: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

pub fn evaluate_surrogate(policy: &DenseNet, batch: &[PolicySample], clip: f64) -> Result<SurrogateEval> {
    ensure!(!batch.is_empty(), "empty policy batch");
    let (mut s, mut c, mut h) = (0.0, 0.0, 0.0);
    for x in batch {
        let pol = CategoricalPolicy::new(policy.forward(&x.input)?, x.mask.clone())?;
        let ratio = (pol.log_prob(x.action) - x.old_log_prob).exp();
        s += (ratio * x.advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * x.advantage);
        c += ((ratio - 1.0).abs() > clip) as u8 as f64;
        h += pol.entropy();
    }
    let n = batch.len() as f64;
    Ok(SurrogateEval { surrogate: s / n, clip_fraction: c / n, entropy: h / n })
}

// stats appended after the parameter gradient in the chunked accumulator
const P_LOSS: usize = 0;
const P_ENT: usize = 1;
const P_KL: usize = 2;
const P_CLIP: usize = 3;
const P_STATS: usize = 4;

/// Gradient (for descent) of the mean clipped-surrogate loss with entropy
/// bonus, plus summed statistics.
fn policy_gradient(policy: &DenseNet, batch: &[PolicySample], cfg: &PpoConfig) -> Result<(Vec<f64>, [f64; P_STATS])> {
    let np = policy.param_count();
    let n = batch.len() as f64;
    let n_out = policy.output_dim();
    let failed = AtomicBool::new(false);
    let acc = chunked_batch_sum(cfg.exec, batch, cfg.chunk, np + P_STATS, |chunk, acc| {
        let ok = (|| -> Result<()> {
            let inputs: Vec<&[f64]> = chunk.iter().map(|x| x.input.as_slice()).collect();
            let trace = policy.forward_batch(&inputs)?;
            let mut dlogits = vec![0.0; chunk.len() * n_out];
            let (grad, stats) = acc.split_at_mut(np);
            for (b, x) in chunk.iter().enumerate() {
                let pol = CategoricalPolicy::new(trace.output_row(b).to_vec(), x.mask.clone())?;
                let logp = pol.log_prob(x.action);
                let ratio = (logp - x.old_log_prob).exp();
                let a = x.advantage;
                let unclipped = ratio * a;
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
                let d = &mut dlogits[b * n_out..(b + 1) * n_out];
                // gradient of −min(...) flows only through the unclipped branch
                if unclipped <= clipped {
                    for (d, g) in d.iter_mut().zip(pol.grad_log_prob(x.action)) {
                        *d -= a * ratio * g / n;
                    }
                }
                if cfg.entropy_coef != 0.0 {
                    for (d, g) in d.iter_mut().zip(pol.grad_entropy()) {
                        *d -= cfg.entropy_coef * g / n;
                    }
                }
                stats[P_LOSS] -= unclipped.min(clipped);
                stats[P_ENT] += pol.entropy();
                stats[P_KL] += x.old_log_prob - logp;
                stats[P_CLIP] += ((ratio - 1.0).abs() > cfg.clip) as u8 as f64;
            }
            policy.backprop_batch_into(&trace, &dlogits, grad)
        })();
        if ok.is_err() {
            failed.store(true, Ordering::Relaxed);
        }
    });
    ensure!(!failed.into_inner(), "policy batch does not match the network");
    let mut stats = [0.0; P_STATS];
    stats.copy_from_slice(&acc[np..]);
    let mut grad = acc;
    grad.truncate(np);
    Ok((grad, stats))
}

/// Gradient of `½·mean((V − target)²)` and the loss itself.
pub fn value_gradient(critic: &DenseNet, batch: &[ValueSample], exec: Execution, chunk: usize) -> Result<(Vec<f64>, f64)> {
    ensure!(!batch.is_empty(), "empty value batch");
    let np = critic.param_count();
    let n_out = critic.output_dim();
    let count = batch.iter().map(|s| s.targets.len()).sum::<usize>() as f64;
    let failed = AtomicBool::new(false);
    let mut acc = chunked_batch_sum(exec, batch, chunk, np + 1, |chunk, acc| {
        let ok = (|| -> Result<()> {
            ensure!(chunk.iter().all(|x| x.targets.len() == n_out), "target count does not match the critic");
            let inputs: Vec<&[f64]> = chunk.iter().map(|x| x.input.as_slice()).collect();
            let trace = critic.forward_batch(&inputs)?;
            let err: Vec<f64> = trace.output().iter().zip(chunk.iter().flat_map(|x| &x.targets)).map(|(v, t)| v - t).collect();
            let dout: Vec<f64> = err.iter().map(|e| e / count).collect();
            let (grad, loss) = acc.split_at_mut(np);
            loss[0] += err.iter().map(|e| 0.5 * e * e).sum::<f64>();
            critic.backprop_batch_into(&trace, &dout, grad)
        })();
        if ok.is_err() {
            failed.store(true, Ordering::Relaxed);
        }
    });
    ensure!(!failed.into_inner(), "value batch does not match the critic");
    let loss = acc.pop().unwrap() / count;
    Ok((acc, loss))
}

/// Clipped-surrogate policy epochs followed by value regression epochs.
///
/// Advantages are normalized per batch when `cfg.normalize_advantages` is
/// set. Any non-finite loss aborts with [`Error::Divergence`]; the caller
/// keeps the last good parameters.
/// Index slices for one epoch: the identity order as a single slice when
/// `parts == 1`, otherwise a shuffle cut into `parts` near-equal pieces.
fn minibatch_order(n: usize, parts: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if parts == 1 {
        return vec![idx];
    }
    idx.shuffle(rng);
    let parts = parts.min(n.max(1));
    (0..parts).map(|p| idx[p * n / parts..(p + 1) * n / parts].to_vec()).collect()
}

pub fn ppo_update(
    policy: &mut Trainable,
    critic: &mut Trainable,
    policy_batch: &[PolicySample],
    value_batch: &[ValueSample],
    cfg: &PpoConfig,
) -> Result<PpoStats> {
    ensure!(!policy_batch.is_empty(), "ppo update needs a non-empty batch");
    ensure!(cfg.clip > 0.0, "clip must be positive");
    let mut batch = policy_batch.to_vec();
    if cfg.normalize_advantages {
        let mut adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
        super::normalize_advantages(&mut adv);
        for (s, a) in batch.iter_mut().zip(adv) {
            s.advantage = a;
        }
    }
    ensure!(cfg.minibatches >= 1, "need at least one minibatch");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut stats = PpoStats::default();
    let mut clip_total = 0.0;
    let mut steps = 0;
    for _ in 0..cfg.epochs {
        for part in minibatch_order(batch.len(), cfg.minibatches, &mut rng) {
            let owned: Vec<PolicySample>;
            let mb = if cfg.minibatches == 1 {
                &batch[..]
            } else {
                owned = part.iter().map(|&i| batch[i].clone()).collect();
                &owned[..]
            };
            let n = mb.len() as f64;
            let (grad, s) = policy_gradient(&policy.net, mb, cfg)?;
            if !s.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence("non-finite policy loss".into()));
            }
            stats.policy_loss = s[P_LOSS] / n;
            stats.entropy = s[P_ENT] / n;
            stats.approx_kl = s[P_KL] / n;
            clip_total += s[P_CLIP] / n;
            steps += 1;
            policy.adam(&grad, &cfg.adam)?;
        }
    }
    if steps > 0 {
        stats.clip_fraction = clip_total / steps as f64;
    }
    if !value_batch.is_empty() {
        for _ in 0..cfg.epochs {
            for part in minibatch_order(value_batch.len(), cfg.minibatches, &mut rng) {
                let owned: Vec<ValueSample>;
                let mb = if cfg.minibatches == 1 {
                    value_batch
                } else {
                    owned = part.iter().map(|&i| value_batch[i].clone()).collect();
                    &owned[..]
                };
                let (grad, loss) = value_gradient(&critic.net, mb, cfg.exec, cfg.chunk)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence("non-finite value loss".into()));
                }
                stats.value_loss = loss;
                critic.adam(&grad, &cfg.adam)?;
            }
        }
    }
    Ok(stats)
}
