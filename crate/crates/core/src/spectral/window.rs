use crate::error::ensure;
use crate::Result;
use serde::{Deserialize, Serialize};

/// How the dyadic windows are laid out over frequency indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// The interval definitions taken as written: low-pass on `k ≤ 2^m` or
    /// `k ≥ t − 2^m`, band `j` on `[2^(j+m), 2^(j+m+1))` and its mirror. Each arm
    /// is kept to its own half of the spectrum and the low-pass window wins
    /// shared boundary bins, so windows are disjoint but the Nyquist bin is
    /// left uncovered.
    Literal,
    /// Every bin is assigned by its folded frequency `f = min(k, t − k)`, which
    /// gives an exact partition.
    Exact,
}

impl std::str::FromStr for WindowMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "exact" => Ok(Self::Exact),
            other => crate::error::invalid(format!("unknown window mode '{other}'")),
        }
    }
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Literal => "literal",
            Self::Exact => "exact",
        })
    }
}

/// Low-pass and band-pass 0/1 windows over `t` frequency bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBank {
    t: usize,
    m: u32,
    mode: WindowMode,
    lowpass: Vec<bool>,
    bands: Vec<Vec<bool>>,
    residual_set: Vec<usize>,
}

impl WindowBank {
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn m(&self) -> u32 {
        self.m
    }
    pub fn mode(&self) -> WindowMode {
        self.mode
    }
    pub fn lowpass(&self) -> &[bool] {
        &self.lowpass
    }
    pub fn bands(&self) -> &[Vec<bool>] {
        &self.bands
    }
    /// Bins where the windows do not sum to one, ascending.
    pub fn residual_set(&self) -> &[usize] {
        &self.residual_set
    }
    pub fn residual_fraction(&self) -> f64 {
        self.residual_set.len() as f64 / self.t as f64
    }
    /// `1 − (X[k] + Σ_j Φ_j[k])`.
    pub fn error_at(&self, k: usize) -> f64 {
        let covered = self.lowpass[k] as u32 + self.bands.iter().map(|b| b[k] as u32).sum::<u32>();
        1.0 - covered as f64
    }
    /// Indices of the low-pass support.
    pub fn lowpass_support(&self) -> Vec<usize> {
        support(&self.lowpass)
    }
}

fn support(w: &[bool]) -> Vec<usize> {
    w.iter().enumerate().filter_map(|(k, &on)| on.then_some(k)).collect()
}

/// Builds the bank for `t = 2^J` bins at truncation level `m`.
///
/// Requires `J ≥ 2`, `0 < m < J` and `2^m < t/2`. Band indices run over
/// `j = 0..=J−1−m`.
pub fn build_window_bank(t: usize, m: u32, mode: WindowMode) -> Result<WindowBank> {
    ensure!(t.is_power_of_two(), "window bank length {t} is not a power of two");
    let big_j = t.trailing_zeros();
    ensure!(big_j >= 2, "window bank length {t} is below 4");
    ensure!(m > 0 && m < big_j, "truncation level m={m} outside (0, {big_j})");
    ensure!((1usize << m) < t / 2, "2^m = {} is not below t/2 = {}", 1usize << m, t / 2);

    let cut = 1usize << m;
    let n_bands = (big_j - m) as usize;
    let half = t / 2;
    let lowpass: Vec<bool> = (0..t).map(|k| k <= cut || k >= t - cut).collect();
    let mut bands = vec![vec![false; t]; n_bands];

    match mode {
        WindowMode::Literal => {
            for (j, band) in bands.iter_mut().enumerate() {
                let lo = 1usize << (j as u32 + m);
                let hi = lo << 1;
                for (k, on) in band.iter_mut().enumerate() {
                    let positive = lo <= k && k < hi && k < half;
                    // t − hi < k ≤ t − lo, written without underflow for hi = t
                    let mirror = k + hi > t && k + lo <= t && k > half;
                    *on = (positive || mirror) && !lowpass[k];
                }
            }
        }
        WindowMode::Exact => {
            let top = n_bands - 1;
            for k in 0..t {
                if lowpass[k] {
                    continue;
                }
                let f = k.min(t - k);
                let j = ((f.ilog2() - m) as usize).min(top);
                bands[j][k] = true;
            }
        }
    }

    let mut bank = WindowBank { t, m, mode, lowpass, bands, residual_set: Vec::new() };
    bank.residual_set = (0..t).filter(|&k| bank.error_at(k) != 0.0).collect();
    Ok(bank)
}

/// Residual fraction `|𝓔|/t` of the bank at each requested length.
pub fn partition_residual_trend(m: u32, lengths: &[usize], mode: WindowMode) -> Result<Vec<(usize, f64)>> {
    lengths
        .iter()
        .map(|&t| build_window_bank(t, m, mode).map(|b| (t, b.residual_fraction())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // brute-force evaluation of the interval definitions with no half-spectrum
    // handling: used to check what the literal bank keeps and drops
    fn raw_band(t: usize, m: u32, j: u32, k: usize) -> bool {
        let lo = 1i64 << (j + m);
        let hi = lo << 1;
        let (t, k) = (t as i64, k as i64);
        (lo <= k && k < hi) || (t - hi < k && k <= t - lo)
    }

    #[test]
    fn literal_lowpass_support_t16_m1() {
        let b = build_window_bank(16, 1, WindowMode::Literal).unwrap();
        assert_eq!(b.lowpass_support(), vec![0, 1, 2, 14, 15]);
        assert_eq!(b.bands().len(), 3);
    }

    #[test]
    fn literal_residual_matches_brute_force_scan() {
        let b = build_window_bank(16, 1, WindowMode::Literal).unwrap();
        let mut scan = Vec::new();
        for k in 0..16 {
            let x = (k <= 2 || k >= 14) as i32;
            let mut s = x;
            for (j, band) in b.bands().iter().enumerate() {
                // every literal band bin must come from the raw interval definition
                if band[k] {
                    assert!(raw_band(16, 1, j as u32, k));
                }
                s += band[k] as i32;
            }
            if s != 1 {
                scan.push(k);
            }
        }
        assert_eq!(b.residual_set(), scan.as_slice());
        assert_eq!(scan, vec![8]);
    }

    #[test]
    fn exact_mode_has_no_residual() {
        for (t, m) in [(16, 1), (8, 1), (64, 3), (1024, 2)] {
            let b = build_window_bank(t, m, WindowMode::Exact).unwrap();
            assert!(b.residual_set().is_empty());
            for k in 0..t {
                assert_eq!(b.error_at(k), 0.0);
            }
        }
    }

    #[test]
    fn windows_are_symmetric_and_disjoint() {
        for mode in [WindowMode::Literal, WindowMode::Exact] {
            for (t, m) in [(8, 1), (16, 1), (16, 2), (128, 3), (256, 1)] {
                let b = build_window_bank(t, m, mode).unwrap();
                for k in 1..t {
                    assert_eq!(b.lowpass()[k], b.lowpass()[t - k]);
                    for band in b.bands() {
                        assert_eq!(band[k], band[t - k]);
                    }
                }
                for k in 0..t {
                    let active = b.lowpass()[k] as u32 + b.bands().iter().map(|w| w[k] as u32).sum::<u32>();
                    assert!(active <= 1, "{mode} t={t} m={m} k={k}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_window_bank(12, 1, WindowMode::Exact).is_err());
        assert!(build_window_bank(2, 1, WindowMode::Exact).is_err());
        assert!(build_window_bank(16, 0, WindowMode::Exact).is_err());
        assert!(build_window_bank(16, 3, WindowMode::Exact).is_err());
        assert!(build_window_bank(16, 4, WindowMode::Literal).is_err());
    }

    #[test]
    fn residual_trend() {
        let lit = partition_residual_trend(1, &[16, 32, 64], WindowMode::Literal).unwrap();
        for w in lit.windows(2) {
            assert!(w[1].1 <= w[0].1);
            let ratio = w[1].1 / w[0].1;
            assert!((0.3..=0.7).contains(&ratio), "ratio {ratio}");
        }
        let ex = partition_residual_trend(1, &[16, 32, 64], WindowMode::Exact).unwrap();
        assert!(ex.iter().all(|&(_, f)| f == 0.0));
        assert!(partition_residual_trend(3, &[16], WindowMode::Literal).is_err());
    }
}
