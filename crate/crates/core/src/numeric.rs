//! Log-domain primitives, compensated summation, and deterministic bit mixing.

use crate::error::{Error, Result};

/// ln(1 + e^x), stable on both tails.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(e^a + e^b), stable for any ordering and for infinite inputs.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::INFINITY {
        return f64::INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// 1 / (1 + e^{-x}), stable on both tails.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Block volume |B_j| = 2^(d*j) as an exact f64.
pub fn block_volume(d: u32, j: u32) -> Result<f64> {
    let exp = (d as u64) * (j as u64);
    if exp > 1023 {
        return Err(Error::LevelOverflow { d, j });
    }
    Ok((exp as f64).exp2())
}

/// Geometric tail estimate for a positive, eventually geometric series.
///
/// Fits a ratio to the last three terms and returns term_N * r / (1 - r).
/// A trailing zero means the series terminated: tail 0. Returns None when
/// the terms do not look geometric with ratio below `max_ratio`.
pub fn geometric_tail(terms: &[f64], max_ratio: f64) -> Option<f64> {
    let last = *terms.last()?;
    if last == 0.0 {
        return Some(0.0);
    }
    if terms.len() < 3 {
        return None;
    }
    let t = &terms[terms.len() - 3..];
    if !(t[0] > 0.0 && t[1] > 0.0 && t[2] > 0.0) {
        return None;
    }
    let r = (t[1] / t[0]).max(t[2] / t[1]);
    if !(r.is_finite() && r > 0.0 && r < max_ratio) {
        return None;
    }
    Some(t[2] * r / (1.0 - r))
}

/// Weyl increment of SplitMix64, reused to derive child keys.
pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; the sole randomness primitive.
///
/// Every coin in the sampler is a pure function of the 64-bit key fed here,
/// so replicas are reproducible and order-independent.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform f64 in [0, 1) from the top 53 bits.
pub fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
