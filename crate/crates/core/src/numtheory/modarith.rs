//! Modular arithmetic and the Solovay-Strassen witness predicate.

use num_bigint::BigUint;
use num_traits::{One, Zero};

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// base^exp mod modulus by left-to-right square-and-multiply.
pub fn mod_pow(base: u64, exp: u64, modulus: u64) -> u64 {
    assert!(modulus >= 2, "modulus must be at least 2");
    let b = base % modulus;
    let mut acc = 1u64;
    for i in (0..64 - exp.leading_zeros()).rev() {
        acc = mul_mod(acc, acc, modulus);
        if (exp >> i) & 1 == 1 {
            acc = mul_mod(acc, b, modulus);
        }
    }
    acc
}

/// Arbitrary-precision square-and-multiply.
pub fn mod_pow_big(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    assert!(*modulus >= BigUint::from(2u32), "modulus must be at least 2");
    let b = base % modulus;
    let mut acc = BigUint::one();
    for i in (0..exp.bits()).rev() {
        acc = &acc * &acc % modulus;
        if exp.bit(i) {
            acc = &acc * &b % modulus;
        }
    }
    acc
}

/// Jacobi symbol (a/n) for odd n >= 3 by the binary reciprocity algorithm.
pub fn jacobi(a: u64, n: u64) -> i8 {
    assert!(n >= 3 && n % 2 == 1, "jacobi modulus must be odd and >= 3, got {n}");
    let mut a = a % n;
    let mut n = n;
    let mut t = 1i8;
    while a != 0 {
        let tz = a.trailing_zeros();
        a >>= tz;
        if tz % 2 == 1 && matches!(n % 8, 3 | 5) {
            t = -t;
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            t = -t;
        }
        a %= n;
    }
    if n == 1 {
        t
    } else {
        0
    }
}

/// Jacobi symbol for arbitrary-precision arguments.
pub fn jacobi_big(a: &BigUint, n: &BigUint) -> i8 {
    assert!(*n >= BigUint::from(3u32) && n.bit(0));
    let mut a = a % n;
    let mut n = n.clone();
    let mut t = 1i8;
    while !a.is_zero() {
        let tz = a.trailing_zeros().unwrap_or(0);
        a >>= tz;
        let n8 = (&n % 8u32).iter_u32_digits().next().unwrap_or(0);
        if tz % 2 == 1 && matches!(n8, 3 | 5) {
            t = -t;
        }
        std::mem::swap(&mut a, &mut n);
        let three = BigUint::from(3u32);
        if (&a % 4u32) == three && (&n % 4u32) == three {
            t = -t;
        }
        a %= &n;
    }
    if n.is_one() {
        t
    } else {
        0
    }
}

/// Solovay-Strassen predicate W(i, n): true when `i` witnesses that `n` is composite.
pub fn ss_witness(i: u64, n: u64) -> bool {
    debug_assert!(n >= 3 && n % 2 == 1, "W needs odd n >= 3, got {n}");
    debug_assert!((1..n).contains(&i), "W needs 1 <= i <= n-1, got i={i} n={n}");
    if gcd(i, n) > 1 {
        return true;
    }
    let e = mod_pow(i, (n - 1) / 2, n);
    match jacobi(i, n) {
        1 => e != 1,
        -1 => e != n - 1,
        _ => true,
    }
}
