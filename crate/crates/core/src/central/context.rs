use crate::error::ensure;
use crate::spectral::lowpass_filter;
use crate::Result;
use serde::{Deserialize, Serialize};

/// How the selected history tail is presented to decentralized agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ContextMode {
    /// Raw rows.
    #[default]
    TimeDomain,
    /// Each channel of the tail low-pass filtered, keeping folded
    /// frequencies below `keep`.
    LowPass { keep: usize },
}

/// An `l_max × d` window whose last `chosen_length` rows hold the most recent
/// history; earlier rows are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalContext {
    pub window: Vec<f64>,
    pub l_max: usize,
    pub d: usize,
    pub chosen_length: usize,
    pub length_feature: f64,
}

impl OptimalContext {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.window[r * self.d..(r + 1) * self.d]
    }
}

/// Copies the last `length` rows of `history` into the tail of a zeroed
/// `l_max × d` window.
pub fn select_context<R: AsRef<[f64]>>(
    history: &[R],
    d: usize,
    length: usize,
    l_max: usize,
    mode: ContextMode,
) -> Result<OptimalContext> {
    let t = history.len();
    ensure!(l_max >= 1 && d >= 1, "context window must be non-empty");
    ensure!(length <= t, "context length {length} exceeds the {t} available steps");
    ensure!(length <= l_max, "context length {length} exceeds the window size {l_max}");
    let mut window = vec![0.0; l_max * d];
    let offset = (l_max - length) * d;
    for (j, row) in history[t - length..].iter().enumerate() {
        let row = row.as_ref();
        ensure!(row.len() == d, "history row has {} features, expected {d}", row.len());
        window[offset + j * d..offset + (j + 1) * d].copy_from_slice(row);
    }
    if let (ContextMode::LowPass { keep }, true) = (mode, length > 0) {
        for c in 0..d {
            let signal: Vec<f64> = (0..length).map(|j| window[offset + j * d + c]).collect();
            let filtered = lowpass_filter(&signal, keep)?;
            for (j, v) in filtered.into_iter().enumerate() {
                window[offset + j * d + c] = v;
            }
        }
    }
    Ok(OptimalContext { window, l_max, d, chosen_length: length, length_feature: length as f64 / l_max as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(t: usize, d: usize) -> Vec<Vec<f64>> {
        (0..t).map(|u| (0..d).map(|c| (u * 10 + c) as f64 + 0.5).collect()).collect()
    }

    #[test]
    fn zero_length_is_empty() {
        let c = select_context(&rows(3, 2), 2, 0, 4, ContextMode::TimeDomain).unwrap();
        assert!(c.window.iter().all(|&v| v == 0.0));
        assert_eq!(c.length_feature, 0.0);
    }

    #[test]
    fn full_length_is_identity() {
        let h = rows(4, 3);
        let c = select_context(&h, 3, 4, 4, ContextMode::TimeDomain).unwrap();
        assert_eq!(c.window, h.concat());
        assert_eq!(c.length_feature, 1.0);
    }

    #[test]
    fn tail_indexing() {
        // 1-based: rows 3,4 of the window are history rows 5,6
        let h = rows(6, 2);
        let c = select_context(&h, 2, 2, 4, ContextMode::TimeDomain).unwrap();
        assert_eq!(c.row(2), h[4].as_slice());
        assert_eq!(c.row(3), h[5].as_slice());
        assert!(c.row(0).iter().chain(c.row(1)).all(|&v| v == 0.0));
    }

    #[test]
    fn too_long_rejected() {
        assert!(select_context(&rows(2, 1), 1, 4, 4, ContextMode::TimeDomain).is_err());
        assert!(select_context(&rows(8, 1), 1, 8, 4, ContextMode::TimeDomain).is_err());
    }

    #[test]
    fn lowpass_keeps_constant_tail() {
        let h: Vec<Vec<f64>> = (0..4).map(|_| vec![2.0]).collect();
        let c = select_context(&h, 1, 4, 4, ContextMode::LowPass { keep: 1 }).unwrap();
        for v in c.window {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn tail_rows_are_bitwise_copies(
            data in proptest::collection::vec(-1e3f64..1e3, 2..40),
            lpow in 0u32..4,
        ) {
            let d = 2;
            let t = data.len() / d;
            let h: Vec<Vec<f64>> = data.chunks_exact(d).map(|c| c.to_vec()).collect();
            let l_max = 8;
            let length = (1usize << lpow).min(t);
            let c = select_context(&h, d, length, l_max, ContextMode::TimeDomain).unwrap();
            for r in 0..l_max - length {
                prop_assert!(c.row(r).iter().all(|&v| v == 0.0));
            }
            for j in 0..length {
                let w = c.row(l_max - length + j);
                let src = &h[t - length + j];
                prop_assert!(w.iter().zip(src).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }
}
