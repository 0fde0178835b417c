use super::{IMAG_RESIDUE_TOL, SPECTRAL_TOL};
use crate::error::ensure;
use crate::Result;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Forward DFT `S[k] = Σ_u s[u]·exp(−i2πku/t)`.
///
/// Power-of-two lengths use an iterative radix-2 transform; everything else
/// falls back to direct summation.
pub fn dft(signal: &[f64]) -> Result<Vec<Complex64>> {
    ensure!(!signal.is_empty(), "dft of an empty signal");
    ensure!(signal.iter().all(|v| v.is_finite()), "dft input contains non-finite values");
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut buf, false);
    Ok(buf)
}

/// Direct `O(t²)` DFT. Kept public so the fast path can be cross-checked.
pub fn dft_direct(signal: &[f64]) -> Result<Vec<Complex64>> {
    ensure!(!signal.is_empty(), "dft of an empty signal");
    ensure!(signal.iter().all(|v| v.is_finite()), "dft input contains non-finite values");
    let buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(direct(&buf, false))
}

/// Inverse DFT returning complex samples (scaled by `1/t`).
pub fn idft_complex(coefficients: &[Complex64]) -> Result<Vec<Complex64>> {
    ensure!(!coefficients.is_empty(), "idft of an empty spectrum");
    ensure!(
        coefficients.iter().all(|c| c.re.is_finite() && c.im.is_finite()),
        "idft input contains non-finite values"
    );
    let mut buf = coefficients.to_vec();
    transform(&mut buf, true);
    let scale = 1.0 / buf.len() as f64;
    for c in &mut buf {
        *c *= scale;
    }
    Ok(buf)
}

/// Inverse DFT of a conjugate-symmetric spectrum.
///
/// The imaginary residue of the inverse is discarded; a residue larger than
/// `1e-6` (relative to the signal scale) means the spectrum was not the
/// transform of a real signal and is rejected.
pub fn idft(coefficients: &[Complex64]) -> Result<Vec<f64>> {
    let out = idft_complex(coefficients)?;
    let scale = out.iter().fold(1.0_f64, |m, c| m.max(c.re.abs()));
    let residue = out.iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
    ensure!(
        residue <= IMAG_RESIDUE_TOL * scale,
        "inverse transform has imaginary residue {residue:.3e}; spectrum is not conjugate-symmetric"
    );
    Ok(out.into_iter().map(|c| c.re).collect())
}

/// Keeps frequencies whose folded index `min(k, t−k)` is below `keep` and
/// inverts. Used for the filtered-context ablation.
pub fn lowpass_filter(signal: &[f64], keep: usize) -> Result<Vec<f64>> {
    let t = signal.len();
    let mut spec = dft(signal)?;
    for (k, c) in spec.iter_mut().enumerate() {
        if k.min(t - k) >= keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    idft(&spec)
}

fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n.is_power_of_two() {
        radix2(buf, inverse);
    } else {
        let out = direct(buf, inverse);
        buf.copy_from_slice(&out);
    }
}

fn direct(buf: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = buf.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            buf.iter()
                .enumerate()
                .map(|(u, &x)| {
                    // reduce k·u mod n first so the angle stays small
                    let ang = sign * 2.0 * PI * ((k * u) % n) as f64 / n as f64;
                    x * Complex64::new(ang.cos(), ang.sin())
                })
                .sum()
        })
        .collect()
}

fn radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // twiddles computed directly per index rather than by repeated
        // multiplication, which keeps the error at the 1e-15 level for t=1024
        let tw: Vec<Complex64> = (0..half)
            .map(|k| {
                let ang = sign * 2.0 * PI * k as f64 / len as f64;
                Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * tw[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Max relative deviation from conjugate symmetry, used by tests and checks.
pub(crate) fn conjugate_asymmetry(spec: &[Complex64]) -> f64 {
    let t = spec.len();
    let scale = spec.iter().fold(1.0_f64, |m, c| m.max(c.norm()));
    (1..t)
        .map(|k| (spec[k] - spec[t - k].conj()).norm() / scale)
        .fold(0.0, f64::max)
}

#[allow(dead_code)]
pub(crate) fn is_conjugate_symmetric(spec: &[Complex64]) -> bool {
    conjugate_asymmetry(spec) <= SPECTRAL_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // independent textbook summation, no index reduction
    fn naive(x: &[f64]) -> Vec<Complex64> {
        let t = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (u, &v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * k as f64 * u as f64 / t;
                    acc += Complex64::from_polar(v, ang);
                }
                acc
            })
            .collect()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn constant_and_impulse() {
        let s = dft(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let expect = [4.0, 0.0, 0.0, 0.0];
        for (c, e) in s.iter().zip(expect) {
            assert!(close(*c, Complex64::new(e, 0.0), 1e-12));
        }
        let s = dft(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for c in s {
            assert!(close(c, Complex64::new(1.0, 0.0), 1e-12));
        }
    }

    #[test]
    fn cosine_concentrates_at_bins_one_and_seven() {
        let x: Vec<f64> = (0..8).map(|u| (2.0 * PI * u as f64 / 8.0).cos()).collect();
        let oracle = naive(&x);
        assert!(close(oracle[1], Complex64::new(4.0, 0.0), 1e-9));
        assert!(close(oracle[7], Complex64::new(4.0, 0.0), 1e-9));
        let s = dft(&x).unwrap();
        for k in 0..8 {
            assert!(close(s[k], oracle[k], 1e-9), "k={k}");
            if k != 1 && k != 7 {
                assert!(s[k].norm() < 1e-9);
            }
        }
    }

    #[test]
    fn fast_and_direct_paths_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [1usize, 2, 3, 5, 8, 12, 16, 64, 256] {
            let x: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let oracle = naive(&x);
            for (a, b) in dft(&x).unwrap().iter().zip(&oracle) {
                assert!(close(*a, *b, 1e-9 * t as f64));
            }
            for (a, b) in dft_direct(&x).unwrap().iter().zip(&oracle) {
                assert!(close(*a, *b, 1e-9 * t as f64));
            }
        }
    }

    #[test]
    fn inverse_cases() {
        let x = idft(&[Complex64::new(4.0, 0.0), 0.0.into(), 0.0.into(), 0.0.into()]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let z = idft(&[Complex64::new(0.0, 0.0); 4]).unwrap();
        assert_eq!(z, vec![0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let back = idft(&naive(&x)).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_malformed_spectrum_and_non_finite_input() {
        let bad = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0), 0.0.into(), 0.0.into()];
        assert!(idft(&bad).is_err());
        assert!(dft(&[1.0, f64::INFINITY]).is_err());
        assert!(dft(&[]).is_err());
    }

    #[test]
    fn lowpass_keeps_dc_only() {
        let x = [1.0, 3.0, 1.0, 3.0];
        let y = lowpass_filter(&x, 1).unwrap();
        for v in y {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }
}
