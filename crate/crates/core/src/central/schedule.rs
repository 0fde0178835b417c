use crate::error::ensure;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Step-dependent dyadic menu of context lengths.
///
/// At step `t` the nonzero entries are `2^0, …, 2^k` with
/// `k = min(⌊log2(k0·cap)⌋, ⌊log2 t⌋ − 1)`, right-aligned in a vector of
/// `m_slots` entries and left-padded with zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchedule {
    pub m_slots: usize,
    pub k0: usize,
    /// Step after which the full menu is reached in the reference configs.
    /// Informational only: the same formula applies below it.
    pub threshold: usize,
    pub length_cap_factor: usize,
}

/// Candidate lengths plus the mask of selectable slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    pub lengths: Vec<usize>,
    pub mask: Vec<bool>,
}

impl ActionSet {
    pub fn available_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

impl ActionSchedule {
    pub fn new(m_slots: usize, k0: usize, threshold: usize, length_cap_factor: usize) -> Result<Self> {
        ensure!(k0 >= 1, "k0 must be at least 1");
        ensure!(length_cap_factor >= 1, "length cap factor must be at least 1");
        let s = Self { m_slots, k0, threshold, length_cap_factor };
        let need = s.max_exponent() as usize + 2;
        ensure!(m_slots >= need, "{m_slots} action slots cannot hold a zero and {} dyadic lengths", need - 1);
        Ok(s)
    }

    /// The small spread configuration: `M=5`, `k0=4`, threshold 7.
    pub fn sample_spread() -> Self {
        Self { m_slots: 5, k0: 4, threshold: 7, length_cap_factor: 1 }
    }

    /// The long-horizon configuration: `M=19`, `k0=64`, threshold 127.
    pub fn long_horizon() -> Self {
        Self { m_slots: 19, k0: 64, threshold: 127, length_cap_factor: 1 }
    }

    fn max_exponent(&self) -> u32 {
        (self.k0 * self.length_cap_factor).ilog2()
    }

    /// Largest length the schedule can ever emit.
    pub fn max_length(&self) -> usize {
        1 << self.max_exponent()
    }

    fn top_exponent(&self, t: usize) -> Option<u32> {
        if t < 4 {
            return None;
        }
        Some((t.ilog2() - 1).min(self.max_exponent()))
    }

    /// The length vector for step `t`.
    pub fn table(&self, t: usize) -> Vec<usize> {
        let mut v = vec![0; self.m_slots];
        if let Some(k) = self.top_exponent(t) {
            let n = k as usize + 1;
            for (j, slot) in v[self.m_slots - n..].iter_mut().enumerate() {
                *slot = 1 << j;
            }
        }
        v
    }
}

/// Lengths for step `t` and a mask exposing one canonical zero slot (the last
/// zero) plus every distinct dyadic length.
pub fn available_actions(t: usize, schedule: &ActionSchedule) -> ActionSet {
    let lengths = schedule.table(t);
    let zero_slot = lengths.iter().rposition(|&l| l == 0);
    let mask = lengths.iter().enumerate().map(|(j, &l)| l > 0 || Some(j) == zero_slot).collect();
    ActionSet { lengths, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_spread_rows() {
        let s = ActionSchedule::sample_spread();
        assert_eq!(s.table(8), vec![0, 0, 1, 2, 4]);
        assert_eq!(s.table(1), vec![0; 5]);
        assert_eq!(s.table(4), vec![0, 0, 0, 1, 2]);
        assert_eq!(s.table(25), vec![0, 0, 1, 2, 4]);
        let a = available_actions(1, &s);
        assert_eq!(a.mask, vec![false, false, false, false, true]);
        let a = available_actions(8, &s);
        assert_eq!(a.mask, vec![false, true, true, true, true]);
    }

    #[test]
    fn long_horizon_row() {
        let s = ActionSchedule::long_horizon();
        let mut want = vec![0; 12];
        want.extend([1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(s.table(128), want);
        assert_eq!(s.table(4096), want);
    }

    #[test]
    fn too_few_slots_rejected() {
        assert!(ActionSchedule::new(3, 4, 7, 1).is_err());
        assert!(ActionSchedule::new(4, 4, 7, 1).is_ok());
        assert!(ActionSchedule::new(5, 4, 7, 1).is_ok());
    }

    proptest! {
        #[test]
        fn rows_are_well_formed(t in 0usize..5000, k0 in 1usize..70, cap in 1usize..4) {
            let need = (k0 * cap).ilog2() as usize + 2;
            let s = ActionSchedule::new(need + 1, k0, 0, cap).unwrap();
            let a = available_actions(t, &s);
            prop_assert_eq!(a.lengths.len(), s.m_slots);
            prop_assert!(a.lengths.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(a.lengths.iter().all(|&l| l <= t.max(1) / 2 || l == 0));
            prop_assert_eq!(a.mask.iter().zip(&a.lengths).filter(|(m, &l)| **m && l == 0).count(), 1);
            let nz: Vec<usize> = a.lengths.iter().copied().filter(|&l| l > 0).collect();
            for (j, l) in nz.iter().enumerate() {
                prop_assert_eq!(*l, 1 << j);
            }
            prop_assert_eq!(a, available_actions(t, &s));
        }
    }
}
