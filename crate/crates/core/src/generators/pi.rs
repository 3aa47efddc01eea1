//! Binary digits of π.
//!
//! The fractional expansion is computed in fixed point as
//! `floor(π · 2^P)` with `P = n_bits + GUARD_BITS`, using the Chudnovsky
//! series evaluated by binary splitting over exact integers, then a single
//! integer square root and a single division. Results are memoised per
//! process so repeated requests slice the longest expansion computed so far.

use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};

use crate::bitstream::BitString;

pub const GUARD_BITS: u64 = 64;

const A: u64 = 13_591_409;
const B: u64 = 545_140_134;
/// 640320^3 / 24
const C3_OVER_24: u64 = 10_939_058_860_032_000;
/// Lower bound on bits gained per series term (log2(640320^3 / 1728) ≈ 47.11).
const BITS_PER_TERM: u64 = 47;

struct Split {
    p: BigInt,
    q: BigInt,
    t: BigInt,
}

fn leaf(k: u64) -> Split {
    let (p, q) = if k == 0 {
        (BigInt::one(), BigInt::one())
    } else {
        let p = BigInt::from(6 * k - 5) * BigInt::from(2 * k - 1) * BigInt::from(6 * k - 1);
        let q = BigInt::from(k) * BigInt::from(k) * BigInt::from(k) * BigInt::from(C3_OVER_24);
        (p, q)
    };
    let mut t = &p * BigInt::from(A + B * k);
    if k % 2 == 1 {
        t = -t;
    }
    Split { p, q, t }
}

fn combine(l: Split, r: Split, need_p: bool) -> Split {
    let t = &r.q * &l.t + &l.p * &r.t;
    let p = if need_p { &l.p * &r.p } else { BigInt::zero() };
    Split { p, q: &l.q * &r.q, t }
}

fn split(a: u64, b: u64, need_p: bool, depth: u32) -> Split {
    if b - a == 1 {
        return leaf(a);
    }
    let m = (a + b) / 2;
    let (l, r) = join(depth, || split(a, m, true, depth + 1), || split(m, b, need_p, depth + 1));
    combine(l, r, need_p)
}

#[cfg(feature = "parallel")]
fn join<L, R>(depth: u32, left: impl FnOnce() -> L + Send, right: impl FnOnce() -> R + Send) -> (L, R)
where
    L: Send,
    R: Send,
{
    if depth < 4 {
        rayon::join(left, right)
    } else {
        (left(), right())
    }
}

#[cfg(not(feature = "parallel"))]
fn join<L, R>(_depth: u32, left: impl FnOnce() -> L, right: impl FnOnce() -> R) -> (L, R) {
    (left(), right())
}

/// floor(sqrt(x)) by recursive precision doubling plus Newton steps from above.
pub fn isqrt(x: &BigUint) -> BigUint {
    let bits = x.bits();
    if bits <= 128 {
        return x.sqrt();
    }
    let shift = (bits / 2) & !1;
    let hi = isqrt(&(x >> shift));
    let mut r = (hi + 1u32) << (shift / 2);
    loop {
        let y = (&r + x / &r) >> 1u32;
        if y >= r {
            return r;
        }
        r = y;
    }
}

/// floor(π · 2^precision), up to a few units in the last place.
fn pi_fixed(precision: u64) -> BigUint {
    let terms = precision / BITS_PER_TERM + 2;
    let Split { q, t, .. } = split(0, terms, false, 0);
    let (mut q, mut t) = (q.abs(), t);
    assert!(t.is_positive());
    let keep = precision + 2 * GUARD_BITS;
    let excess = t.bits().saturating_sub(keep).min(q.bits().saturating_sub(keep));
    if excess > 0 {
        q >>= excess;
        t >>= excess;
    }
    let root = isqrt(&(BigUint::from(10_005u32) << (2 * precision)));
    let num = BigInt::from_biguint(Sign::Plus, root) * q * BigInt::from(426_880u32);
    (num / t).to_biguint().expect("positive")
}

fn compute(n_bits: usize) -> BitString {
    let precision = n_bits as u64 + GUARD_BITS;
    let fixed = pi_fixed(precision);
    let frac = fixed - (BigUint::from(3u32) << precision);
    let top = frac >> GUARD_BITS;
    let n_bytes = n_bits.div_ceil(8);
    let pad = n_bytes * 8 - n_bits;
    let be = (top << pad).to_bytes_be();
    let mut bytes = vec![0u8; n_bytes.saturating_sub(be.len())];
    bytes.extend_from_slice(&be);
    if bytes.len() > n_bytes {
        // A carry into the integer part cannot happen for a correct expansion.
        bytes.drain(..bytes.len() - n_bytes);
    }
    BitString::from_bytes(&bytes, n_bits, "pi")
}

fn cache() -> &'static Mutex<Option<BitString>> {
    static CACHE: OnceLock<Mutex<Option<BitString>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(None))
}

/// First `n_bits` bits of the binary expansion of π − 3.
pub fn pi_bits(n_bits: usize) -> BitString {
    assert!(n_bits >= 1);
    let mut guard = cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(c) = guard.as_ref() {
        if c.len() >= n_bits {
            return c.slice(0, n_bits).expect("cached prefix");
        }
    }
    let fresh = compute(n_bits);
    *guard = Some(fresh.clone());
    fresh
}

/// Uncached computation, exposed for benchmarks.
pub fn pi_bits_uncached(n_bits: usize) -> BitString {
    compute(n_bits)
}
