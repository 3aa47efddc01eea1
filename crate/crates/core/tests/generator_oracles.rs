//! Each generator against a second, deliberately naive transcription of the
//! published algorithm, compared on the first 1024 bits.

use algrand::bitstream::BitString;
use algrand::generators::{generate, SourceSpec};

const BITS: usize = 1024;

fn to_bits(words: &[u64], width: u32) -> String {
    let mut s = String::new();
    for w in words {
        for k in (0..width).rev() {
            s.push(if w >> k & 1 == 1 { '1' } else { '0' });
        }
    }
    s.truncate(BITS);
    s
}

fn ours(spec: SourceSpec) -> String {
    let b: BitString = generate(&spec, BITS).unwrap();
    b.to_ascii01()
}

/// MT19937 as in the 2002 reference C code (init_genrand, init_by_array, genrand_int32).
struct RefMt {
    mt: Vec<u32>,
    mti: usize,
}

impl RefMt {
    fn init_genrand(s: u32) -> Self {
        let mut mt = vec![0u32; 624];
        mt[0] = s;
        for i in 1..624 {
            mt[i] = 1812433253u32
                .wrapping_mul(mt[i - 1] ^ (mt[i - 1] >> 30))
                .wrapping_add(i as u32);
        }
        RefMt { mt, mti: 624 }
    }

    fn init_by_array(key: &[u32]) -> Self {
        let mut r = Self::init_genrand(19650218);
        let mt = &mut r.mt;
        let (mut i, mut j) = (1usize, 0usize);
        let mut k = 624.max(key.len());
        while k > 0 {
            let prev = mt[i - 1] ^ (mt[i - 1] >> 30);
            mt[i] = (mt[i] ^ prev.wrapping_mul(1664525))
                .wrapping_add(key[j])
                .wrapping_add(j as u32);
            i += 1;
            j += 1;
            if i >= 624 {
                mt[0] = mt[623];
                i = 1;
            }
            if j >= key.len() {
                j = 0;
            }
            k -= 1;
        }
        k = 623;
        while k > 0 {
            let prev = mt[i - 1] ^ (mt[i - 1] >> 30);
            mt[i] = (mt[i] ^ prev.wrapping_mul(1566083941)).wrapping_sub(i as u32);
            i += 1;
            if i >= 624 {
                mt[0] = mt[623];
                i = 1;
            }
            k -= 1;
        }
        mt[0] = 0x8000_0000;
        r
    }

    fn genrand_int32(&mut self) -> u32 {
        let mag01 = [0u32, 0x9908_b0df];
        if self.mti >= 624 {
            let mt = &mut self.mt;
            let mut kk = 0;
            while kk < 624 - 397 {
                let y = (mt[kk] & 0x8000_0000) | (mt[kk + 1] & 0x7fff_ffff);
                mt[kk] = mt[kk + 397] ^ (y >> 1) ^ mag01[(y & 1) as usize];
                kk += 1;
            }
            while kk < 623 {
                let y = (mt[kk] & 0x8000_0000) | (mt[kk + 1] & 0x7fff_ffff);
                mt[kk] = mt[kk + 397 - 624] ^ (y >> 1) ^ mag01[(y & 1) as usize];
                kk += 1;
            }
            let y = (mt[623] & 0x8000_0000) | (mt[0] & 0x7fff_ffff);
            mt[623] = mt[396] ^ (y >> 1) ^ mag01[(y & 1) as usize];
            self.mti = 0;
        }
        let mut y = self.mt[self.mti];
        self.mti += 1;
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c_5680;
        y ^= (y << 15) & 0xefc6_0000;
        y ^= y >> 18;
        y
    }
}

#[test]
fn mt19937_matches_reference() {
    let mut ok = RefMt::init_genrand(5489);
    assert_eq!(ok.genrand_int32(), 3499211612);
    for seed in [0u64, 1, 5489, 0xdead_beef_cafe_f00d] {
        let mut r = RefMt::init_by_array(&[seed as u32, (seed >> 32) as u32]);
        let words: Vec<u64> = (0..BITS / 32).map(|_| r.genrand_int32() as u64).collect();
        assert_eq!(ours(SourceSpec::Mt19937 { seed }), to_bits(&words, 32), "seed {seed}");
    }
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rotl(x: u64, k: u32) -> u64 {
    (x << k) | (x >> (64 - k))
}

#[test]
fn xoroshiro128plus_matches_reference() {
    for seed in [0u64, 7, u64::MAX] {
        let mut sm = seed;
        let mut s = [splitmix64(&mut sm), splitmix64(&mut sm)];
        let words: Vec<u64> = (0..BITS / 64)
            .map(|_| {
                let (s0, mut s1) = (s[0], s[1]);
                let result = s0.wrapping_add(s1);
                s1 ^= s0;
                s[0] = rotl(s0, 24) ^ s1 ^ (s1 << 16);
                s[1] = rotl(s1, 37);
                result
            })
            .collect();
        assert_eq!(ours(SourceSpec::Xoroshiro128Plus { seed }), to_bits(&words, 64), "seed {seed}");
    }
}

#[test]
fn pcg32_matches_reference() {
    // pcg32_srandom_r(rng, seed, 54) followed by pcg32_random_r.
    for seed in [0u64, 42, 1 << 63] {
        let inc = (54u64 << 1) | 1;
        let mut state = 0u64;
        let step = |state: &mut u64| {
            let old = *state;
            *state = old.wrapping_mul(6364136223846793005).wrapping_add(inc);
            let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
            let rot = (old >> 59) as u32;
            ((xorshifted >> rot) | (xorshifted << ((rot.wrapping_neg()) & 31))) as u64
        };
        step(&mut state);
        state = state.wrapping_add(seed);
        step(&mut state);
        let words: Vec<u64> = (0..BITS / 32).map(|_| step(&mut state)).collect();
        assert_eq!(ours(SourceSpec::Pcg32 { seed }), to_bits(&words, 32), "seed {seed}");
    }
}

/// Philox4x32 with 10 rounds, written out from the round function definition.
fn philox_block(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (mut x, mut k) = (ctr, key);
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(0x9E37_79B9);
            k[1] = k[1].wrapping_add(0xBB67_AE85);
        }
        let p0 = 0xD251_1F53u64 * x[0] as u64;
        let p1 = 0xCD9E_8D57u64 * x[2] as u64;
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        x = [hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0];
    }
    x
}

#[test]
fn philox4x32_matches_reference() {
    assert_eq!(philox_block([0; 4], [0; 2]), [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]);
    assert_eq!(
        philox_block([u32::MAX; 4], [u32::MAX; 2]),
        [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
    );
    for seed in [0u64, 99, 0x0123_4567_89ab_cdef] {
        let key = [seed as u32, (seed >> 32) as u32];
        let words: Vec<u64> = (0..BITS as u32 / 128)
            .flat_map(|c| philox_block([c, 0, 0, 0], key))
            .map(|w| w as u64)
            .collect();
        assert_eq!(ours(SourceSpec::Philox4x32 { seed }), to_bits(&words, 32), "seed {seed}");
    }
}

#[test]
fn bernoulli_matches_threshold_rule() {
    // One bit per 53-bit uniform from the seeded xoroshiro128+ stream.
    let (seed, bias) = (5u64, 0.3);
    let mut sm = seed;
    let mut s = [splitmix64(&mut sm), splitmix64(&mut sm)];
    let mut expect = String::new();
    for _ in 0..BITS {
        let (s0, mut s1) = (s[0], s[1]);
        let r = s0.wrapping_add(s1);
        s1 ^= s0;
        s[0] = rotl(s0, 24) ^ s1 ^ (s1 << 16);
        s[1] = rotl(s1, 37);
        let u = (r >> 11) as f64 / (1u64 << 53) as f64;
        expect.push(if u < bias { '1' } else { '0' });
    }
    assert_eq!(ours(SourceSpec::Bernoulli { seed, bias }), expect);
}
