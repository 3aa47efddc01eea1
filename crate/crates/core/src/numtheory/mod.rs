//! Number theory for the witness tests.

mod carmichael;
mod digits;
mod modarith;

use thiserror::Error;

pub use carmichael::{
    enumerate_carmichael, enumerate_carmichael_with, integer_sqrt, least_prime_factors, load_or_enumerate,
    read_cache, write_cache, CarmichaelSet, EnumerationLimits,
};
pub use digits::{
    bit_length, digit_count, segment_value, segment_width, to_base, z_predicate, DigitExpansion, JMaxMode,
    ZOutcome, ZTarget,
};
pub use modarith::{gcd, jacobi, jacobi_big, mod_pow, mod_pow_big, ss_witness};

#[derive(Debug, Error)]
pub enum NumError {
    #[error("carmichael bound {bound} needs ~{required_bytes} bytes, budget is {budget_bytes}")]
    ResourceLimit {
        bound: u64,
        required_bytes: u64,
        budget_bytes: u64,
    },
    #[error("Z segment must be {expected} bits, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("carmichael cache: {0}")]
    BadCache(String),
    #[error("carmichael cache i/o: {0}")]
    Io(#[from] std::io::Error),
}
