use super::{dot, masked_softmax};
use crate::error::ensure;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-head query and key projections.
///
/// The projections are fixed after construction: drawn once from a seeded
/// uniform distribution scaled by `1/√fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeads {
    head_count: usize,
    d_k: usize,
    query_dim: usize,
    key_dim: usize,
    /// `w_q[g]` is row-major `d_k × query_dim`.
    w_q: Vec<Vec<f64>>,
    /// `w_k[g]` is row-major `d_k × key_dim`.
    w_k: Vec<Vec<f64>>,
    seed: u64,
}

impl AttentionHeads {
    pub fn new(head_count: usize, d_k: usize, query_dim: usize, key_dim: usize, seed: u64) -> Result<Self> {
        ensure!(head_count >= 1 && d_k >= 1, "attention needs at least one head and d_k >= 1");
        ensure!(query_dim >= 1 && key_dim >= 1, "attention feature dims must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize| -> Vec<f64> {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..d_k * fan_in).map(|_| rng.gen_range(-b..b)).collect()
        };
        let mut w_q = Vec::with_capacity(head_count);
        let mut w_k = Vec::with_capacity(head_count);
        for _ in 0..head_count {
            w_q.push(draw(query_dim));
            w_k.push(draw(key_dim));
        }
        Ok(Self { head_count, d_k, query_dim, key_dim, w_q, w_k, seed })
    }

    /// Heads with explicit projection matrices.
    pub fn from_matrices(d_k: usize, w_q: Vec<Vec<f64>>, w_k: Vec<Vec<f64>>) -> Result<Self> {
        ensure!(!w_q.is_empty() && w_q.len() == w_k.len(), "need matching, non-empty query and key heads");
        ensure!(d_k >= 1, "d_k must be positive");
        ensure!(w_q[0].len().is_multiple_of(d_k) && w_k[0].len().is_multiple_of(d_k), "projection sizes must be multiples of d_k");
        let (query_dim, key_dim) = (w_q[0].len() / d_k, w_k[0].len() / d_k);
        ensure!(
            w_q.iter().all(|w| w.len() == d_k * query_dim) && w_k.iter().all(|w| w.len() == d_k * key_dim),
            "all heads must share shapes"
        );
        ensure!(w_q.iter().chain(&w_k).flatten().all(|v| v.is_finite()), "projections must be finite");
        Ok(Self { head_count: w_q.len(), d_k, query_dim, key_dim, w_q, w_k, seed: 0 })
    }

    pub fn head_count(&self) -> usize {
        self.head_count
    }
    pub fn d_k(&self) -> usize {
        self.d_k
    }
    pub fn query_dim(&self) -> usize {
        self.query_dim
    }
    pub fn key_dim(&self) -> usize {
        self.key_dim
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn project(w: &[f64], x: &[f64], d_k: usize) -> Vec<f64> {
    let n = x.len();
    (0..d_k).map(|r| dot(&w[r * n..(r + 1) * n], x)).collect()
}

/// Per-agent weights: per head a softmax over agents of
/// `Q_c · K_i / √d_k`, then averaged across heads.
pub fn attention_weights(f_c: &[f64], f_list: &[Vec<f64>], heads: &AttentionHeads) -> Result<Vec<f64>> {
    ensure!(!f_list.is_empty(), "attention needs at least one agent");
    ensure!(f_c.len() == heads.query_dim, "central feature has {} entries, projection expects {}", f_c.len(), heads.query_dim);
    for (i, f) in f_list.iter().enumerate() {
        ensure!(f.len() == heads.key_dim, "agent {i} feature has {} entries, projection expects {}", f.len(), heads.key_dim);
    }
    let n = f_list.len();
    let scale = 1.0 / (heads.d_k as f64).sqrt();
    let mask = vec![true; n];
    let mut omega = vec![0.0; n];
    for g in 0..heads.head_count {
        let q = project(&heads.w_q[g], f_c, heads.d_k);
        let scores: Vec<f64> = f_list.iter().map(|f| dot(&q, &project(&heads.w_k[g], f, heads.d_k)) * scale).collect();
        let w = masked_softmax(&scores, &mask)?;
        for (o, v) in omega.iter_mut().zip(w) {
            *o += v;
        }
    }
    let h = heads.head_count as f64;
    omega.iter_mut().for_each(|v| *v /= h);
    Ok(omega)
}
