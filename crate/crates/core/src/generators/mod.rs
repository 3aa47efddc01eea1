//! Deterministic bit sources.
//!
//! Word-oriented generators are serialised MSB-first per output word, in
//! output order. The Bernoulli source spends one 53-bit uniform draw from a
//! xoroshiro128+ stream per emitted bit.

mod mt19937;
mod pcg32;
mod philox;
mod pi;
mod xoroshiro;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mt19937::Mt19937;
pub use pcg32::{Pcg32, DEFAULT_STREAM as PCG32_DEFAULT_STREAM};
pub use philox::{philox4x32_10, Philox4x32};
pub use pi::{isqrt, pi_bits, pi_bits_uncached, GUARD_BITS as PI_GUARD_BITS};
pub use xoroshiro::{SplitMix64, Xoroshiro128Plus};

use crate::bitstream::{load_bitfile, BitBuilder, BitError, BitFormat, BitString};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid source: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Bits(#[from] BitError),
}

/// Declarative description of a bit source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum SourceSpec {
    #[serde(rename = "mt19937")]
    Mt19937 { seed: u64 },
    #[serde(rename = "xoroshiro128plus")]
    Xoroshiro128Plus { seed: u64 },
    #[serde(rename = "pcg32")]
    Pcg32 { seed: u64 },
    #[serde(rename = "philox4x32")]
    Philox4x32 { seed: u64 },
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "bernoulli")]
    Bernoulli { seed: u64, bias: f64 },
    #[serde(rename = "file")]
    File { path: PathBuf, format: BitFormat },
}

impl SourceSpec {
    pub fn family(&self) -> &'static str {
        match self {
            SourceSpec::Mt19937 { .. } => "mt19937",
            SourceSpec::Xoroshiro128Plus { .. } => "xoroshiro128plus",
            SourceSpec::Pcg32 { .. } => "pcg32",
            SourceSpec::Philox4x32 { .. } => "philox4x32",
            SourceSpec::Pi => "pi",
            SourceSpec::Bernoulli { .. } => "bernoulli",
            SourceSpec::File { .. } => "file",
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if let SourceSpec::Bernoulli { bias, .. } = self {
            if !(0.0..=1.0).contains(bias) {
                return Err(GenError::InvalidSpec(format!("bernoulli bias {bias} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Whether the source is parameterised by a seed.
    pub fn is_seeded(&self) -> bool {
        !matches!(self, SourceSpec::Pi | SourceSpec::File { .. })
    }

    /// Same family with the seed replaced; unseeded sources are returned as is.
    pub fn with_seed(&self, new_seed: u64) -> SourceSpec {
        let mut s = self.clone();
        match &mut s {
            SourceSpec::Mt19937 { seed }
            | SourceSpec::Xoroshiro128Plus { seed }
            | SourceSpec::Pcg32 { seed }
            | SourceSpec::Philox4x32 { seed }
            | SourceSpec::Bernoulli { seed, .. } => *seed = new_seed,
            SourceSpec::Pi | SourceSpec::File { .. } => {}
        }
        s
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            SourceSpec::Mt19937 { seed }
            | SourceSpec::Xoroshiro128Plus { seed }
            | SourceSpec::Pcg32 { seed }
            | SourceSpec::Philox4x32 { seed }
            | SourceSpec::Bernoulli { seed, .. } => Some(*seed),
            SourceSpec::Pi | SourceSpec::File { .. } => None,
        }
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Bernoulli { seed, bias } => write!(f, "bernoulli:seed={seed},bias={bias}"),
            SourceSpec::Pi => f.write_str("pi"),
            SourceSpec::File { path, format } => write!(f, "file:path={},format={format}", path.display()),
            other => write!(f, "{}:seed={}", other.family(), other.seed().unwrap_or_default()),
        }
    }
}

/// Parses the compact `family[:key=value,...]` form used on the command line,
/// e.g. `pcg32:seed=7`, `bernoulli:seed=1,bias=0.4`, `file:path=q.bin,format=packed-msb`.
impl std::str::FromStr for SourceSpec {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: String| GenError::InvalidSpec(m);
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut seed = None;
        let mut bias = None;
        let mut path = None;
        let mut format = None;
        for kv in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{kv}`")))?;
            match k.trim() {
                "seed" => seed = Some(v.trim().parse::<u64>().map_err(|e| bad(format!("seed: {e}")))?),
                "bias" => bias = Some(v.trim().parse::<f64>().map_err(|e| bad(format!("bias: {e}")))?),
                "path" => path = Some(PathBuf::from(v.trim())),
                "format" => format = Some(v.trim().parse::<BitFormat>().map_err(bad)?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let need_seed = || seed.ok_or_else(|| bad(format!("{family} requires seed=")));
        let spec = match family.trim() {
            "mt19937" => SourceSpec::Mt19937 { seed: need_seed()? },
            "xoroshiro128plus" => SourceSpec::Xoroshiro128Plus { seed: need_seed()? },
            "pcg32" => SourceSpec::Pcg32 { seed: need_seed()? },
            "philox4x32" => SourceSpec::Philox4x32 { seed: need_seed()? },
            "pi" => SourceSpec::Pi,
            "bernoulli" => SourceSpec::Bernoulli {
                seed: need_seed()?,
                bias: bias.ok_or_else(|| bad("bernoulli requires bias=".into()))?,
            },
            "file" => SourceSpec::File {
                path: path.ok_or_else(|| bad("file requires path=".into()))?,
                format: format.unwrap_or(BitFormat::PackedMsb),
            },
            other => return Err(bad(format!("unknown family `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

enum Engine {
    Mt(Box<Mt19937>),
    Xoroshiro(Xoroshiro128Plus),
    Pcg(Pcg32),
    Philox(Philox4x32),
    Bernoulli { rng: Xoroshiro128Plus, bias: f64 },
}

/// Running state of a seeded generator.
pub struct GeneratorState {
    engine: Engine,
    bits_emitted: u64,
}

impl GeneratorState {
    /// `None` for sources without a generator (π and files).
    pub fn new(spec: &SourceSpec) -> Option<Self> {
        let engine = match *spec {
            SourceSpec::Mt19937 { seed } => Engine::Mt(Box::new(Mt19937::from_seed(seed))),
            SourceSpec::Xoroshiro128Plus { seed } => Engine::Xoroshiro(Xoroshiro128Plus::from_seed(seed)),
            SourceSpec::Pcg32 { seed } => Engine::Pcg(Pcg32::from_seed(seed)),
            SourceSpec::Philox4x32 { seed } => Engine::Philox(Philox4x32::from_seed(seed)),
            SourceSpec::Bernoulli { seed, bias } => Engine::Bernoulli {
                rng: Xoroshiro128Plus::from_seed(seed),
                bias,
            },
            SourceSpec::Pi | SourceSpec::File { .. } => return None,
        };
        Some(GeneratorState { engine, bits_emitted: 0 })
    }

    pub fn bits_emitted(&self) -> u64 {
        self.bits_emitted
    }

    /// Next output word and its width in bits.
    fn next_word(&mut self) -> (u64, u32) {
        match &mut self.engine {
            Engine::Mt(mt) => (mt.next_u32() as u64, 32),
            Engine::Xoroshiro(x) => (x.next_u64(), 64),
            Engine::Pcg(p) => (p.next_u32() as u64, 32),
            Engine::Philox(p) => (p.next_u32() as u64, 32),
            Engine::Bernoulli { rng, bias } => ((rng.next_f64() < *bias) as u64, 1),
        }
    }

    /// Emits the next `n_bits` bits. A word that straddles the end contributes
    /// its leading bits and the remainder is discarded.
    pub fn fill(&mut self, n_bits: usize, origin: &str) -> BitString {
        let mut b = BitBuilder::with_capacity(n_bits);
        while b.len() < n_bits {
            let (word, width) = self.next_word();
            let take = (n_bits - b.len()).min(width as usize) as u32;
            b.push_bits(word >> (width - take), take);
        }
        self.bits_emitted += n_bits as u64;
        b.finish(origin)
    }
}

/// First `n_bits` bits of the source.
pub fn generate(spec: &SourceSpec, n_bits: usize) -> Result<BitString, GenError> {
    if n_bits == 0 {
        return Err(GenError::InvalidSpec("n_bits must be at least 1".into()));
    }
    spec.validate()?;
    match spec {
        SourceSpec::Pi => Ok(pi_bits(n_bits)),
        SourceSpec::File { path, format } => {
            let bits = load_bitfile(path, *format, Some(n_bits))?;
            if bits.len() < n_bits {
                return Err(BitError::TooShort {
                    needed: n_bits,
                    available: bits.len(),
                }
                .into());
            }
            Ok(bits)
        }
        seeded => {
            let mut g = GeneratorState::new(seeded).expect("seeded family");
            Ok(g.fill(n_bits, &seeded.to_string()))
        }
    }
}

/// Seed for the `index`-th independent stream of a source with base `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut sm = SplitMix64::new(seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    sm.next_u64()
}
