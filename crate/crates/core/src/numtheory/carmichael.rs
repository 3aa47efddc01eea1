//! Carmichael enumeration by Korselt's criterion.
//!
//! Base primes up to sqrt(bound) come from a linear sieve of least prime
//! factors. The range itself is processed in disjoint segments: each odd
//! candidate is divided by every base prime that hits it, tracking whether it
//! stays squarefree and whether p - 1 | n - 1 for each factor found. Whatever
//! cofactor survives is a single prime above sqrt(bound). Segments run in
//! parallel and are concatenated in order, so the result is deterministic.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::NumError;
use crate::par;

/// Strictly increasing Carmichael numbers up to an inclusive bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CarmichaelSet {
    bound: u64,
    members: Vec<u64>,
}

impl CarmichaelSet {
    /// Wraps an explicit member list (sorted and deduplicated here).
    pub fn from_members(bound: u64, mut members: Vec<u64>) -> Self {
        members.sort_unstable();
        members.dedup();
        members.retain(|&m| m <= bound);
        CarmichaelSet { bound, members }
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members not exceeding a smaller bound.
    pub fn restrict(&self, bound: u64) -> CarmichaelSet {
        let cut = self.members.partition_point(|&m| m <= bound);
        CarmichaelSet {
            bound: bound.min(self.bound),
            members: self.members[..cut].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationLimits {
    /// Upper limit on working memory, in bytes.
    pub memory_budget: u64,
    /// Numbers per segment.
    pub segment_len: u64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            memory_budget: 2 << 30,
            segment_len: 1 << 18,
        }
    }
}

impl EnumerationLimits {
    /// Working memory the enumeration would need for `bound`.
    pub fn required_bytes(&self, bound: u64) -> u64 {
        let root = integer_sqrt(bound);
        // least-prime-factor table plus the base prime list (~root / ln root entries)
        let sieve = (root + 1).saturating_mul(4);
        let primes = (root as f64 / (root.max(3) as f64).ln() * 1.3) as u64 * 4;
        let workers = par::current_threads() as u64;
        let segments = workers.saturating_mul(self.segment_len).saturating_mul(10);
        sieve.saturating_add(primes).saturating_add(segments)
    }
}

pub fn integer_sqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r.checked_mul(r).is_none_or(|sq| sq > n) {
        r -= 1;
    }
    while (r + 1).checked_mul(r + 1).is_some_and(|sq| sq <= n) {
        r += 1;
    }
    r
}

/// Linear sieve: least prime factor for every k <= limit, plus the primes.
pub fn least_prime_factors(limit: u32) -> (Vec<u32>, Vec<u32>) {
    let mut lpf = vec![0u32; limit as usize + 1];
    let mut primes = Vec::new();
    for i in 2..=limit as usize {
        if lpf[i] == 0 {
            lpf[i] = i as u32;
            primes.push(i as u32);
        }
        for &p in &primes {
            let ip = i * p as usize;
            if p > lpf[i] || ip > limit as usize {
                break;
            }
            lpf[ip] = p;
        }
    }
    (lpf, primes)
}

fn scan_segment(lo: u64, hi: u64, primes: &[u32]) -> Vec<u64> {
    // Only odd candidates: slot i holds lo_odd + 2i.
    let first = if lo % 2 == 1 { lo } else { lo + 1 };
    if first >= hi {
        return Vec::new();
    }
    let slots = ((hi - first) as usize).div_ceil(2);
    let mut rem: Vec<u64> = (0..slots).map(|i| first + 2 * i as u64).collect();
    let mut ok = vec![true; slots];
    let mut factors = vec![0u8; slots];
    for &p in primes.iter().filter(|&&p| p > 2) {
        let p = p as u64;
        if p * p > hi {
            break;
        }
        // first odd multiple of p that is >= first
        let mut m = first.div_ceil(p) * p;
        if m % 2 == 0 {
            m += p;
        }
        while m < hi {
            let i = ((m - first) / 2) as usize;
            if ok[i] {
                let r = rem[i] / p;
                if r % p == 0 || (m - 1) % (p - 1) != 0 {
                    ok[i] = false;
                } else {
                    rem[i] = r;
                    factors[i] += 1;
                }
            }
            m += 2 * p;
        }
    }
    let mut out = Vec::new();
    for i in 0..slots {
        if !ok[i] {
            continue;
        }
        let n = first + 2 * i as u64;
        let mut k = factors[i];
        let q = rem[i];
        if q > 1 {
            if (n - 1) % (q - 1) != 0 {
                continue;
            }
            k += 1;
        }
        if k >= 2 {
            out.push(n);
        }
    }
    out
}

pub fn enumerate_carmichael(bound: u64) -> Result<CarmichaelSet, NumError> {
    enumerate_carmichael_with(bound, &EnumerationLimits::default())
}

pub fn enumerate_carmichael_with(bound: u64, limits: &EnumerationLimits) -> Result<CarmichaelSet, NumError> {
    assert!(bound >= 2, "bound must be at least 2");
    let required = limits.required_bytes(bound);
    let root = integer_sqrt(bound);
    if required > limits.memory_budget || root > u32::MAX as u64 - 1 {
        return Err(NumError::ResourceLimit {
            bound,
            required_bytes: required,
            budget_bytes: limits.memory_budget,
        });
    }
    let (_, primes) = least_prime_factors(root as u32 + 1);
    let seg = limits.segment_len.max(64);
    let n_segments = (bound / seg + 1) as usize;
    let parts = par::map_range(n_segments, |s| {
        let lo = (s as u64 * seg).max(3);
        let hi = ((s as u64 + 1) * seg).min(bound.saturating_add(1));
        if lo >= hi {
            Vec::new()
        } else {
            scan_segment(lo, hi, &primes)
        }
    });
    let members = parts.into_iter().flatten().collect();
    Ok(CarmichaelSet { bound, members })
}

const MAGIC: &[u8; 4] = b"CARM";
const VERSION: u32 = 1;

/// Cache layout, all little-endian: `CARM`, u32 version, u64 bound,
/// u64 member count, then one u64 per member.
pub fn write_cache(set: &CarmichaelSet, path: &Path) -> Result<(), NumError> {
    let mut buf = Vec::with_capacity(24 + 8 * set.members.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&set.bound.to_le_bytes());
    buf.extend_from_slice(&(set.members.len() as u64).to_le_bytes());
    for m in &set.members {
        buf.extend_from_slice(&m.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<CarmichaelSet, NumError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |why: &str| NumError::BadCache(format!("{}: {why}", path.display()));
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(bad("missing magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    let bound = u64_at(8);
    let count = u64_at(16) as usize;
    if bytes.len() != 24 + 8 * count {
        return Err(bad("length does not match member count"));
    }
    let members: Vec<u64> = (0..count).map(|i| u64_at(24 + 8 * i)).collect();
    if members.windows(2).any(|w| w[0] >= w[1]) || members.last().is_some_and(|&m| m > bound) {
        return Err(bad("members not strictly increasing within bound"));
    }
    Ok(CarmichaelSet { bound, members })
}

/// Reads a cache covering `bound`, or enumerates and writes one.
pub fn load_or_enumerate(path: &Path, bound: u64) -> Result<CarmichaelSet, NumError> {
    if let Ok(set) = read_cache(path) {
        if set.bound >= bound {
            return Ok(set.restrict(bound));
        }
    }
    let set = enumerate_carmichael(bound)?;
    write_cache(&set, path)?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::{gcd, mod_pow};

    fn is_carmichael_by_congruence(n: u64) -> bool {
        if n < 3 || n % 2 == 0 {
            return false;
        }
        let prime = (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
        !prime && (2..n).all(|b| gcd(b, n) != 1 || mod_pow(b, n - 1, n) == 1)
    }

    #[test]
    fn small_bounds() {
        assert_eq!(enumerate_carmichael(1000).unwrap().members(), &[561]);
        assert_eq!(
            enumerate_carmichael(10_000).unwrap().members(),
            &[561, 1105, 1729, 2465, 2821, 6601, 8911]
        );
        assert!(enumerate_carmichael(560).unwrap().is_empty());
        assert_eq!(enumerate_carmichael(561).unwrap().members(), &[561]);
    }

    #[test]
    fn matches_congruence_oracle_to_20000() {
        let oracle: Vec<u64> = (3..=20_000).filter(|&n| is_carmichael_by_congruence(n)).collect();
        let limits = EnumerationLimits {
            segment_len: 1000,
            ..Default::default()
        };
        assert_eq!(enumerate_carmichael_with(20_000, &limits).unwrap().members(), &oracle[..]);
    }

    #[test]
    fn resource_limit() {
        let tiny = EnumerationLimits {
            memory_budget: 1 << 10,
            segment_len: 1 << 16,
        };
        assert!(matches!(
            enumerate_carmichael_with(1_000_000, &tiny),
            Err(NumError::ResourceLimit { .. })
        ));
        assert!(matches!(enumerate_carmichael(u64::MAX), Err(NumError::ResourceLimit { .. })));
    }

    #[test]
    fn linear_sieve() {
        let (lpf, primes) = least_prime_factors(30);
        assert_eq!(primes, [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert_eq!(lpf[28], 2);
        assert_eq!(lpf[25], 5);
        assert_eq!(lpf[29], 29);
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let set = enumerate_carmichael(100_000).unwrap();
        write_cache(&set, &path).unwrap();
        assert_eq!(read_cache(&path).unwrap(), set);
        let again = load_or_enumerate(&path, 10_000).unwrap();
        assert_eq!(again.members(), &[561, 1105, 1729, 2465, 2821, 6601, 8911]);
        std::fs::write(&path, b"nope").unwrap();
        assert!(matches!(read_cache(&path), Err(NumError::BadCache(_))));
    }

    #[test]
    fn integer_sqrt_edges() {
        for n in [0u64, 1, 2, 3, 4, 99, 100, 101, u64::MAX, (1 << 52) + 1] {
            let r = integer_sqrt(n);
            assert!(r * r <= n);
            assert!((r + 1).checked_mul(r + 1).is_none_or(|s| s > n));
        }
    }
}
