use super::{dft, idft, next_pow2, HistoryWindow, WindowBank};
use crate::error::ensure;
use crate::Result;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// DFT coefficients of each channel plus the low-pass and per-band
/// components in the time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    t: usize,
    d: usize,
    /// `coefficients[c][k]` is `S[k]` of channel `c`.
    pub coefficients: Vec<Vec<Complex64>>,
    /// Row-major `t × d`.
    pub lowpass_component: Vec<f64>,
    /// One row-major `t × d` block per band.
    pub band_components: Vec<Vec<f64>>,
}

impl SpectralDecomposition {
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn d(&self) -> usize {
        self.d
    }

    /// Low-pass plus every band, row-major `t × d`.
    pub fn reconstruction(&self) -> Vec<f64> {
        let mut out = self.lowpass_component.clone();
        for band in &self.band_components {
            for (o, v) in out.iter_mut().zip(band) {
                *o += v;
            }
        }
        out
    }

    /// Max absolute difference between the reconstruction and `history`.
    pub fn max_reconstruction_error(&self, history: &HistoryWindow) -> f64 {
        self.reconstruction()
            .iter()
            .zip(history.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Squared-error energy of the reconstruction against `history`.
    pub fn reconstruction_error_energy(&self, history: &HistoryWindow) -> f64 {
        self.reconstruction().iter().zip(history.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Splits every channel of `history` through the windows of `bank`.
pub fn decompose(history: &HistoryWindow, bank: &WindowBank) -> Result<SpectralDecomposition> {
    let (t, d) = (history.t(), history.d());
    ensure!(t == bank.t(), "history length {t} does not match window bank length {}", bank.t());
    let mut coefficients = Vec::with_capacity(d);
    let mut lowpass_component = vec![0.0; t * d];
    let mut band_components = vec![vec![0.0; t * d]; bank.bands().len()];
    for c in 0..d {
        let spec = dft(&history.channel(c))?;
        let low = idft(&masked(&spec, bank.lowpass()))?;
        for (u, v) in low.into_iter().enumerate() {
            lowpass_component[u * d + c] = v;
        }
        for (band, out) in bank.bands().iter().zip(band_components.iter_mut()) {
            let comp = idft(&masked(&spec, band))?;
            for (u, v) in comp.into_iter().enumerate() {
                out[u * d + c] = v;
            }
        }
        coefficients.push(spec);
    }
    Ok(SpectralDecomposition { t, d, coefficients, lowpass_component, band_components })
}

fn masked(spec: &[Complex64], window: &[bool]) -> Vec<Complex64> {
    spec.iter()
        .zip(window)
        .map(|(&s, &on)| if on { s } else { Complex64::new(0.0, 0.0) })
        .collect()
}

/// Fixed-size real feature vector built from the first `k0` DFT coefficients
/// of each channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralState {
    pub features: Vec<f64>,
    pub k0: usize,
    /// Number of history rows the state was built from.
    pub source_t: usize,
    /// Length of the zero-padded window that was transformed.
    pub padded_len: usize,
}

impl CentralState {
    /// `d · (2·k0 − 1)`.
    pub fn dim(d: usize, k0: usize) -> usize {
        d * (2 * k0 - 1)
    }

    /// All-zero state used before any history exists.
    pub fn empty(d: usize, k0: usize) -> Self {
        Self { features: vec![0.0; Self::dim(d, k0)], k0, source_t: 0, padded_len: 0 }
    }

    /// Features scaled by `1/√padded_len` (the unitary DFT scaling).
    pub fn normalized(&self) -> Vec<f64> {
        if self.padded_len == 0 {
            return self.features.clone();
        }
        let s = 1.0 / (self.padded_len as f64).sqrt();
        self.features.iter().map(|v| v * s).collect()
    }
}

/// Truncated spectral state of `history`.
///
/// The history is zero-padded on the oldest side to the next power of two
/// `≥ max(t, 2·k0)`. Per channel the layout is
/// `[Re S0, Re S1, Im S1, …, Re S(k0−1), Im S(k0−1)]`; channels are
/// concatenated.
pub fn central_state(history: &HistoryWindow, k0: usize) -> Result<CentralState> {
    ensure!(k0 >= 1, "k0 must be at least 1");
    let len = next_pow2(history.t().max(2 * k0));
    central_state_with_len(history, k0, len)
}

/// Like [`central_state`] but over a fixed window of `len` rows: longer
/// histories keep only their most recent `len` rows.
pub fn central_state_with_len(history: &HistoryWindow, k0: usize, len: usize) -> Result<CentralState> {
    ensure!(k0 >= 1, "k0 must be at least 1");
    ensure!(len >= 1, "window length must be positive");
    ensure!(k0 <= len / 2, "k0={k0} exceeds the Nyquist index of a {len}-step window");
    let (t, d) = (history.t(), history.d());
    let keep = t.min(len);
    let mut signal = vec![0.0; len];
    let mut features = Vec::with_capacity(CentralState::dim(d, k0));
    for c in 0..d {
        signal.iter_mut().for_each(|v| *v = 0.0);
        for (i, u) in (t - keep..t).enumerate() {
            signal[len - keep + i] = history.row(u)[c];
        }
        let spec = dft(&signal)?;
        features.push(spec[0].re);
        for s in &spec[1..k0] {
            features.push(s.re);
            features.push(s.im);
        }
    }
    Ok(CentralState { features, k0, source_t: t, padded_len: len })
}
