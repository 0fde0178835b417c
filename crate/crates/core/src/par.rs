//! Data-parallel helpers.
//!
//! Every helper takes an [`Execution`] mode. With the `parallel` feature
//! disabled, [`Execution::Parallel`] silently runs sequentially. Reductions are
//! always performed over fixed-size chunks whose partial results are combined
//! in index order, so results are bit-identical between the two modes and
//! independent of the thread count.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indices<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, returning results in order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Like [`chunked_sum`], but `f(chunk, acc)` receives a whole chunk at once
/// so it can batch its work.
pub fn chunked_batch_sum<T, F>(exec: Execution, items: &[T], chunk: usize, dim: usize, f: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&[T], &mut [f64]) + Sync + Send,
{
    let chunks: Vec<&[T]> = items.chunks(chunk.max(1)).collect();
    let parts = map_slice(exec, &chunks, |c| {
        let mut acc = vec![0.0; dim];
        f(c, &mut acc);
        acc
    });
    let mut total = vec![0.0; dim];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Sums per-item gradient contributions into a vector of length `dim`.
///
/// `f(item, acc)` adds one item's contribution into `acc`. Items are grouped
/// into chunks of `chunk` items; each chunk is accumulated from zero and the
/// chunk totals are added in order.
pub fn chunked_sum<T, F>(exec: Execution, items: &[T], chunk: usize, dim: usize, f: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&T, &mut [f64]) + Sync + Send,
{
    chunked_batch_sum(exec, items, chunk, dim, |c, acc| {
        for item in c {
            f(item, acc);
        }
    })
}
