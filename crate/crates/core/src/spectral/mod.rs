//! Discrete spectral machinery: transforms, dyadic window banks, band
//! decomposition and the truncated low-frequency state fed to the central
//! agent.

mod decompose;
mod dft;
mod window;

pub use decompose::{central_state, central_state_with_len, decompose, CentralState, SpectralDecomposition};
pub use dft::{dft, dft_direct, idft, idft_complex, lowpass_filter};
pub use window::{build_window_bank, partition_residual_trend, WindowBank, WindowMode};

use crate::error::ensure;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Relative tolerance for pure spectral identities.
pub const SPECTRAL_TOL: f64 = 1e-9;
/// Imaginary residue above which an inverse transform is rejected.
pub const IMAG_RESIDUE_TOL: f64 = 1e-6;

/// A `t × d` block of per-step real features, oldest row first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    steps: Vec<f64>,
    t: usize,
    d: usize,
}

impl HistoryWindow {
    /// Builds a window from row-major data.
    pub fn new(steps: Vec<f64>, t: usize, d: usize) -> Result<Self> {
        ensure!(t >= 1, "history needs at least one step");
        ensure!(d >= 1, "history needs at least one feature");
        ensure!(steps.len() == t * d, "history data has {} entries, expected {}x{}", steps.len(), t, d);
        ensure!(steps.iter().all(|v| v.is_finite()), "history contains non-finite entries");
        Ok(Self { steps, t, d })
    }

    /// Builds a window from rows, oldest first.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        ensure!(!rows.is_empty(), "history needs at least one step");
        let d = rows[0].as_ref().len();
        let mut steps = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            ensure!(r.len() == d, "row {i} has {} features, expected {d}", r.len());
            steps.extend_from_slice(r);
        }
        Self::new(steps, rows.len(), d)
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.steps[u * self.d..(u + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.steps
    }

    /// Values of feature channel `c` across time.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.t).map(|u| self.steps[u * self.d + c]).collect()
    }

    /// The window zero-padded on the oldest side to `len` rows.
    pub fn left_padded(&self, len: usize) -> Result<Self> {
        ensure!(len >= self.t, "cannot pad {} rows down to {len}", self.t);
        let mut steps = vec![0.0; (len - self.t) * self.d];
        steps.extend_from_slice(&self.steps);
        Ok(Self { steps, t: len, d: self.d })
    }
}

/// Smallest power of two that is `>= n` (and at least 1).
pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}
