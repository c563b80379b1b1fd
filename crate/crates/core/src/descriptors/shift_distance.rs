//! Exhaustive minimum distance between two signals under cyclic temporal
//! shifts, brightness offsets and amplitude scaling.
//!
//! Cost is `O(|T|·|B|·|A|·m)`, so this is only meant for short signals; the
//! Fourier descriptor is the scalable substitute.

use crate::error::{Error, Result};

pub const MAX_ORACLE_LEN: usize = 64;

/// `min over (t, b, a) of Σ_i |s1[i] − a·(s2[(i + t) mod m] + b)|`.
pub fn min_shift_distance(
    s1: &[f64],
    s2: &[f64],
    shifts: &[usize],
    offsets: &[f64],
    amplitudes: &[f64],
) -> Result<f64> {
    let m = s1.len();
    if m != s2.len() {
        return Err(Error::Dimension(format!(
            "signals have lengths {} and {}",
            m,
            s2.len()
        )));
    }
    if m == 0 || m > MAX_ORACLE_LEN {
        return Err(Error::Invalid(format!(
            "exhaustive search supports 1..={} samples, got {}",
            MAX_ORACLE_LEN, m
        )));
    }
    if shifts.is_empty() || offsets.is_empty() || amplitudes.is_empty() {
        return Err(Error::Invalid("search grids must be non-empty".into()));
    }
    let mut best = f64::INFINITY;
    let mut rotated = vec![0.0; m];
    for &t in shifts {
        for (i, r) in rotated.iter_mut().enumerate() {
            *r = s2[(i + t) % m];
        }
        for &b in offsets {
            for &a in amplitudes {
                let d: f64 = s1
                    .iter()
                    .zip(&rotated)
                    .map(|(&u, &v)| (u - a * (v + b)).abs())
                    .sum();
                best = best.min(d);
            }
        }
    }
    Ok(best)
}
