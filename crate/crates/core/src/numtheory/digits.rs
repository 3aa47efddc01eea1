//! Base-(n-1) digit expansion of bit segments and the witness-digit
//! predicate Z(s, n).
//!
//! A segment `s_0 s_1 ... s_{m-1}` encodes the integer `sum s_t 2^t`, so the
//! first bit read is the least significant. Digits are produced least
//! significant first and evaluated lazily, since evaluation stops at the
//! first witness.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{ss_witness, NumError};
use crate::bitstream::{ceil_log2, BitString};

/// How many base-(n-1) digits the predicate inspects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JMaxMode {
    /// d_0 .. d_{k-1}
    #[serde(rename = "k_minus_1")]
    KMinus1,
    /// d_0 .. d_k
    #[default]
    #[serde(rename = "k")]
    K,
}

impl std::str::FromStr for JMaxMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k" => Ok(JMaxMode::K),
            "k_minus_1" | "k-1" => Ok(JMaxMode::KMinus1),
            other => Err(format!("unknown j_max_mode `{other}`")),
        }
    }
}

/// Little-endian digits d_0..d_k in radix n-1, zero padded to k+1 digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitExpansion {
    pub radix: u64,
    pub digits: Vec<u64>,
}

impl DigitExpansion {
    /// Index of the most significant digit.
    pub fn k(&self) -> usize {
        self.digits.len() - 1
    }

    pub fn value(&self) -> BigUint {
        self.digits
            .iter()
            .rev()
            .fold(BigUint::zero(), |acc, &d| acc * self.radix + d)
    }
}

/// Bit length of n.
pub fn bit_length(n: u64) -> u32 {
    64 - n.leading_zeros()
}

/// Segment width l(l + 2c) with l the bit length of n and c = l - 1.
pub fn segment_width(n: u64) -> usize {
    let l = bit_length(n) as usize;
    l * (l + 2 * (l - 1))
}

/// k + 1: the least e with (n-1)^e > 2^m - 1.
pub fn digit_count(n: u64, m: usize) -> usize {
    assert!(n >= 3, "radix n-1 must be at least 2");
    let radix = BigUint::from(n - 1);
    let mut e = ((m as f64) / ((n - 1) as f64).log2()).floor().max(1.0) as usize;
    // (n-1)^e >= 2^m  <=>  bit length of (n-1)^e exceeds m
    while e > 1 && radix.pow(e as u32 - 1).bits() > m as u64 {
        e -= 1;
    }
    while radix.pow(e as u32).bits() <= m as u64 {
        e += 1;
    }
    e
}

/// Rewrites `value` (an m-bit quantity) in radix n-1.
pub fn to_base(value: &BigUint, n: u64, m: usize) -> DigitExpansion {
    assert!(value.bits() <= m as u64, "value wider than {m} bits");
    let radix = n - 1;
    let count = digit_count(n, m);
    let mut digits = Vec::with_capacity(count);
    let mut v = value.clone();
    for _ in 0..count {
        let (q, r) = (&v / radix, &v % radix);
        digits.push(r.to_u64().expect("digit < radix"));
        v = q;
    }
    debug_assert!(v.is_zero());
    DigitExpansion { radix, digits }
}

/// The integer sum s_t 2^t encoded by a segment.
pub fn segment_value(segment: &BitString) -> BigUint {
    let mut limbs = Vec::with_capacity(segment.len().div_ceil(64));
    let mut pos = 0;
    while pos < segment.len() {
        let w = (segment.len() - pos).min(64) as u32;
        let chunk = segment.bits_at(pos, w);
        limbs.push(chunk.reverse_bits() >> (64 - w));
        pos += w as usize;
    }
    let mut words32 = Vec::with_capacity(limbs.len() * 2);
    for l in limbs {
        words32.push(l as u32);
        words32.push((l >> 32) as u32);
    }
    BigUint::from_slice(&words32)
}

/// Targets up to this size get a precomputed witness table.
const TABLE_LIMIT: u64 = 1 << 12;

/// Precomputed per-target constants for repeated Z evaluations.
#[derive(Debug, Clone)]
pub struct ZTarget {
    pub n: u64,
    /// l(l + 2c)
    pub width: usize,
    /// k + 1
    pub digits: usize,
    /// ceil(log2(n - 1))
    pub witness_bits: u32,
    table: Option<Vec<bool>>,
}

impl ZTarget {
    pub fn new(n: u64) -> Self {
        assert!(n >= 3 && n % 2 == 1, "Z target must be odd and >= 3, got {n}");
        let width = segment_width(n);
        let table = (n <= TABLE_LIMIT).then(|| (0..n).map(|i| i > 0 && ss_witness(i, n)).collect());
        ZTarget {
            n,
            width,
            digits: digit_count(n, width),
            witness_bits: ceil_log2(n - 1),
            table,
        }
    }

    pub fn digits_tested(&self, mode: JMaxMode) -> usize {
        match mode {
            JMaxMode::K => self.digits,
            JMaxMode::KMinus1 => self.digits - 1,
        }
    }

    fn witness(&self, i: u64) -> bool {
        match &self.table {
            Some(t) => t[i as usize],
            None => ss_witness(i, self.n),
        }
    }

    pub fn evaluate(&self, segment: &BitString, mode: JMaxMode) -> Result<ZOutcome, NumError> {
        if segment.len() != self.width {
            return Err(NumError::WidthMismatch {
                expected: self.width,
                actual: segment.len(),
            });
        }
        Ok(self.evaluate_at(segment, 0, mode))
    }

    /// Evaluates the segment `bits[start .. start + width]` without copying it.
    ///
    /// Panics if the segment runs past the end of `bits`.
    pub fn evaluate_at(&self, bits: &BitString, start: usize, mode: JMaxMode) -> ZOutcome {
        assert!(start + self.width <= bits.len(), "Z segment out of range");
        let radix = self.n - 1;
        let limit = self.digits_tested(mode);
        let mut first = None;
        if self.width <= 128 {
            let lo_w = self.width.min(64) as u32;
            let mut v = (bits.bits_at(start, lo_w).reverse_bits() >> (64 - lo_w)) as u128;
            if self.width > 64 {
                let hi_w = (self.width - 64) as u32;
                let hi = bits.bits_at(start + 64, hi_w).reverse_bits() >> (64 - hi_w);
                v |= (hi as u128) << 64;
            }
            for j in 0..limit {
                let d = if v >> 64 == 0 {
                    let x = v as u64;
                    v = (x / radix) as u128;
                    x % radix
                } else {
                    let d = (v % radix as u128) as u64;
                    v /= radix as u128;
                    d
                };
                if self.witness(1 + d) {
                    first = Some(j);
                    break;
                }
            }
        } else {
            let segment = bits.slice(start, self.width).expect("range checked");
            let mut v = segment_value(&segment);
            for j in 0..limit {
                let d = (&v % radix).to_u64().expect("digit < radix");
                v /= radix;
                if self.witness(1 + d) {
                    first = Some(j);
                    break;
                }
            }
        }
        match first {
            Some(j) => ZOutcome {
                violated: false,
                first_witness_index: Some(j),
                bits_charged: j as u64 * self.witness_bits as u64,
            },
            None => ZOutcome {
                violated: true,
                first_witness_index: None,
                bits_charged: self.width as u64,
            },
        }
    }
}

/// Result of one Z(s, n) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZOutcome {
    /// No tested digit produced a witness.
    pub violated: bool,
    pub first_witness_index: Option<usize>,
    pub bits_charged: u64,
}

pub fn z_predicate(segment: &BitString, n: u64, mode: JMaxMode) -> Result<ZOutcome, NumError> {
    ZTarget::new(n).evaluate(segment, mode)
}
