use crate::error::ensure;
use crate::Result;
use rand::Rng;

/// Softmax over the entries where `mask` is true; masked entries get exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    ensure!(logits.len() == mask.len(), "logits ({}) and mask ({}) differ in length", logits.len(), mask.len());
    ensure!(mask.iter().any(|&m| m), "every action is masked");
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure!(max.is_finite(), "non-finite logits");
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

/// Categorical distribution over an action set with an availability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicy {
    logits: Vec<f64>,
    mask: Vec<bool>,
    probs: Vec<f64>,
}

impl CategoricalPolicy {
    pub fn new(logits: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let probs = masked_softmax(&logits, &mask)?;
        Ok(Self { logits, mask, probs })
    }

    pub fn unmasked(logits: Vec<f64>) -> Result<Self> {
        let mask = vec![true; logits.len()];
        Self::new(logits, mask)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.probs[action].ln()
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Highest-probability available action; ties go to the lowest index.
    pub fn greedy(&self) -> usize {
        let mut best = None;
        for (i, (&l, &m)) in self.logits.iter().zip(&self.mask).enumerate() {
            if m && best.is_none_or(|(_, bl)| l > bl) {
                best = Some((i, l));
            }
        }
        best.expect("at least one action is available").0
    }

    /// Inverse-CDF sampling from one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }

    /// `∂ log π(action) / ∂ logits`.
    pub fn grad_log_prob(&self, action: usize) -> Vec<f64> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| if !self.mask[i] { 0.0 } else if i == action { 1.0 - p } else { -p })
            .collect()
    }

    /// `∂ H / ∂ logits` with `H = −Σ p log p`.
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs
            .iter()
            .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
            .collect()
    }
}
