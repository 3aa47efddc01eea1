//! The five per-string metrics: Borel normality and the four witness tests.
//!
//! Every metric is a pure function of the bits and its parameters. Targets
//! are always visited in ascending numeric order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bitstream::{draw_witness, witness_width, BitCursor, BitError, BitString, Exhaustion};
use crate::numtheory::{segment_width, ss_witness, CarmichaelSet, JMaxMode, ZTarget};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("{test}: {source}")]
    Bits {
        test: TestKind,
        #[source]
        source: BitError,
    },
    #[error("csss1: stream exhausted during the k = {k} pass: {source}")]
    Csss1Exhausted {
        k: u32,
        #[source]
        source: BitError,
    },
    #[error("{test}: no result within {limit} draws")]
    DrawLimit { test: TestKind, limit: u32 },
    #[error("{test}: string of {available} bits is too short (need {needed})")]
    TooShort {
        test: TestKind,
        needed: usize,
        available: usize,
    },
    #[error("{test}: no targets")]
    NoTargets { test: TestKind },
    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Borel,
    Csss1,
    Csss2,
    Csss3,
    Csss4,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        TestKind::Borel,
        TestKind::Csss1,
        TestKind::Csss2,
        TestKind::Csss3,
        TestKind::Csss4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Borel => "borel",
            TestKind::Csss1 => "csss1",
            TestKind::Csss2 => "csss2",
            TestKind::Csss3 => "csss3",
            TestKind::Csss4 => "csss4",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown test `{s}`"))
    }
}

/// Where the segments of one csss4 repetition start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Csss4Layout {
    /// Targets read back to back from the repetition offset.
    #[default]
    Sequential,
    /// Every target reads its segment from the repetition offset itself.
    SameOffset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Csss4Config {
    pub targets: Vec<u64>,
    pub offset_stride: usize,
    pub layout: Csss4Layout,
}

impl Default for Csss4Config {
    fn default() -> Self {
        Csss4Config {
            targets: vec![9, 15, 21, 25, 27, 33, 35, 39, 45, 49],
            offset_stride: 1,
            layout: Csss4Layout::Sequential,
        }
    }
}

impl Csss4Config {
    pub fn validate(&self) -> Result<(), AlgoError> {
        if self.targets.is_empty() {
            return Err(AlgoError::InvalidConfig("csss4 needs at least one target".into()));
        }
        if self.offset_stride == 0 {
            return Err(AlgoError::InvalidConfig("csss4 offset_stride must be >= 1".into()));
        }
        for &n in &self.targets {
            let composite = (3..).step_by(2).take_while(|d| d * d <= n).any(|d| n % d == 0);
            if n < 9 || n % 2 == 0 || !composite {
                return Err(AlgoError::InvalidConfig(format!(
                    "csss4 target {n} is not an odd composite >= 9"
                )));
            }
        }
        Ok(())
    }

    fn sorted_targets(&self) -> Vec<u64> {
        let mut t = self.targets.clone();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Bits spanned by one repetition.
    pub fn repetition_len(&self) -> usize {
        let widths = self.sorted_targets().into_iter().map(segment_width);
        match self.layout {
            Csss4Layout::Sequential => widths.sum(),
            Csss4Layout::SameOffset => widths.max().unwrap_or(0),
        }
    }

    /// Number of repetitions that fit in `len` bits.
    pub fn repetitions(&self, len: usize) -> usize {
        let r = self.repetition_len();
        if len < r {
            0
        } else {
            (len - r) / self.offset_stride + 1
        }
    }
}

/// Largest block size m used by the Borel metric: floor(log2 log2 len).
pub fn borel_max_block(len: usize) -> u32 {
    let log = usize::BITS - 1 - len.leading_zeros();
    u32::BITS - 1 - log.leading_zeros()
}

/// max over block sizes m and m-bit patterns j of |N_j / (len / m) - 2^-m| * log2 len.
///
/// Blocks are non-overlapping; a trailing remainder shorter than m is ignored.
/// A value of at most 1 means the string is Borel normal to accuracy
/// 1 / log2 len.
pub fn borel_metric(x: &BitString) -> Result<f64, AlgoError> {
    if x.len() < 4 {
        return Err(AlgoError::TooShort {
            test: TestKind::Borel,
            needed: 4,
            available: x.len(),
        });
    }
    let log_len = (x.len() as f64).log2();
    let mut worst = 0.0f64;
    for m in 1..=borel_max_block(x.len()) {
        let blocks = x.len() / m as usize;
        let mut counts = vec![0u64; 1 << m];
        for b in 0..blocks {
            counts[x.bits_at(b * m as usize, m) as usize] += 1;
        }
        let expected = 1.0 / (1u64 << m) as f64;
        for &c in &counts {
            let dev = (c as f64 / blocks as f64 - expected).abs();
            worst = worst.max(dev);
        }
    }
    Ok(worst * log_len)
}

fn checked_targets(targets: &[u64], test: TestKind) -> Result<Vec<u64>, AlgoError> {
    if targets.is_empty() {
        return Err(AlgoError::NoTargets { test });
    }
    let mut t = targets.to_vec();
    t.sort_unstable();
    t.dedup();
    if let Some(&bad) = t.iter().find(|&&n| n < 3 || n % 2 == 0) {
        return Err(AlgoError::InvalidConfig(format!("{test} target {bad} must be odd and >= 3")));
    }
    Ok(t)
}

/// Whether one k-pass from bit 0 witnesses every target.
fn csss1_pass(x: &BitString, targets: &[u64], k: u32, policy: Exhaustion) -> Result<bool, BitError> {
    let mut cursor = BitCursor::new(x, policy);
    let mut all = true;
    for &n in targets {
        let mut hit = false;
        for _ in 0..k {
            let d = draw_witness(&mut cursor, n)?;
            hit |= ss_witness(d.value, n);
        }
        all &= hit;
    }
    Ok(all)
}

/// Smallest k such that drawing k witnesses per target, restarting from bit
/// 0 for every k, finds a witness for every target.
///
/// All k draws are made for each target even after a witness appears, so
/// the bits consumed by a pass depend only on k. `max_k` bounds the search,
/// which only matters under the wrap policy.
pub fn csss1_min_witnesses(x: &BitString, targets: &[u64], policy: Exhaustion, max_k: u32) -> Result<u64, AlgoError> {
    let targets = checked_targets(targets, TestKind::Csss1)?;
    for k in 1..=max_k {
        match csss1_pass(x, &targets, k, policy) {
            Ok(true) => return Ok(k as u64),
            Ok(false) => {}
            Err(source) => return Err(AlgoError::Csss1Exhausted { k, source }),
        }
    }
    Err(AlgoError::DrawLimit {
        test: TestKind::Csss1,
        limit: max_k,
    })
}

/// Sum over targets of ceil(log2 n) times the accepted draws needed to hit a
/// witness, all read from one cursor. Rejected chunks consume bits but are
/// not counted.
pub fn csss2_bits_used(x: &BitString, targets: &[u64], policy: Exhaustion, max_draws: u32) -> Result<u64, AlgoError> {
    let targets = checked_targets(targets, TestKind::Csss2)?;
    let mut cursor = BitCursor::new(x, policy);
    let mut total = 0u64;
    for n in targets {
        let mut trials = 0u32;
        loop {
            let d = draw_witness(&mut cursor, n).map_err(|source| AlgoError::Bits {
                test: TestKind::Csss2,
                source,
            })?;
            trials += d.trials;
            if ss_witness(d.value, n) {
                break;
            }
            if trials >= max_draws {
                return Err(AlgoError::DrawLimit {
                    test: TestKind::Csss2,
                    limit: max_draws,
                });
            }
        }
        total += witness_width(n) as u64 * trials as u64;
    }
    Ok(total)
}

/// Sum over targets of the bits charged by Z on consecutive segments of one
/// cursor.
pub fn csss3_bits_used(x: &BitString, targets: &[u64], policy: Exhaustion, mode: JMaxMode) -> Result<u64, AlgoError> {
    let targets = checked_targets(targets, TestKind::Csss3)?;
    let mut cursor = BitCursor::new(x, policy);
    let mut total = 0u64;
    for n in targets {
        let target = ZTarget::new(n);
        let start = cursor.position();
        let outcome = if start + target.width <= x.len() {
            cursor = BitCursor::at(x, start + target.width, policy);
            target.evaluate_at(x, start, mode)
        } else {
            let seg = cursor.read_bits(target.width).map_err(|source| AlgoError::Bits {
                test: TestKind::Csss3,
                source,
            })?;
            target.evaluate(&seg, mode).expect("segment has the target width")
        };
        total += outcome.bits_charged;
    }
    Ok(total)
}

/// Average number of violated targets per repetition, sliding the repetition
/// start by `offset_stride` bits.
pub fn csss4_violation_average(x: &BitString, cfg: &Csss4Config, mode: JMaxMode) -> Result<f64, AlgoError> {
    cfg.validate()?;
    let reps = cfg.repetitions(x.len());
    if reps == 0 {
        return Err(AlgoError::TooShort {
            test: TestKind::Csss4,
            needed: cfg.repetition_len(),
            available: x.len(),
        });
    }
    let targets: Vec<ZTarget> = cfg.sorted_targets().into_iter().map(ZTarget::new).collect();
    let mut violations = 0u64;
    for r in 0..reps {
        let mut pos = r * cfg.offset_stride;
        for t in &targets {
            violations += t.evaluate_at(x, pos, mode).violated as u64;
            if cfg.layout == Csss4Layout::Sequential {
                pos += t.width;
            }
        }
    }
    Ok(violations as f64 / reps as f64)
}

fn default_max_draws() -> u32 {
    1024
}

/// Knobs shared by the witness tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestParams {
    pub exhaustion: Exhaustion,
    pub j_max_mode: JMaxMode,
    /// Cap on k for csss1 and on draws per target for csss2.
    #[serde(default = "default_max_draws")]
    pub max_draws: u32,
    pub csss4: Csss4Config,
}

impl Default for TestParams {
    fn default() -> Self {
        TestParams {
            exhaustion: Exhaustion::Error,
            j_max_mode: JMaxMode::K,
            max_draws: default_max_draws(),
            csss4: Csss4Config::default(),
        }
    }
}

/// Targets plus parameters: everything a metric needs besides the bits.
#[derive(Debug, Clone)]
pub struct TestSuite {
    pub carmichael: CarmichaelSet,
    pub params: TestParams,
}

impl TestSuite {
    pub fn new(carmichael: CarmichaelSet, params: TestParams) -> Self {
        TestSuite { carmichael, params }
    }

    pub fn evaluate(&self, test: TestKind, x: &BitString) -> Result<f64, AlgoError> {
        let p = &self.params;
        let targets = self.carmichael.members();
        match test {
            TestKind::Borel => borel_metric(x),
            TestKind::Csss1 => csss1_min_witnesses(x, targets, p.exhaustion, p.max_draws).map(|v| v as f64),
            TestKind::Csss2 => csss2_bits_used(x, targets, p.exhaustion, p.max_draws).map(|v| v as f64),
            TestKind::Csss3 => csss3_bits_used(x, targets, p.exhaustion, p.j_max_mode).map(|v| v as f64),
            TestKind::Csss4 => csss4_violation_average(x, &p.csss4, p.j_max_mode),
        }
    }

    /// The parameters that influence `test`, as canonical JSON.
    pub fn params_json(&self, test: TestKind) -> serde_json::Value {
        let p = &self.params;
        let carm = serde_json::json!({
            "carmichael_bound": self.carmichael.bound(),
            "targets": self.carmichael.len(),
        });
        let mut v = match test {
            TestKind::Borel => serde_json::json!({ "blocks": "non-overlapping" }),
            TestKind::Csss1 | TestKind::Csss2 => carm,
            TestKind::Csss3 => carm,
            TestKind::Csss4 => serde_json::to_value(&p.csss4).expect("serialisable"),
        };
        let obj = v.as_object_mut().expect("object");
        obj.insert("test".into(), test.as_str().into());
        if test != TestKind::Borel {
            obj.insert("exhaustion".into(), serde_json::to_value(p.exhaustion).expect("serialisable"));
        }
        if matches!(test, TestKind::Csss1 | TestKind::Csss2) {
            obj.insert("max_draws".into(), p.max_draws.into());
        }
        if matches!(test, TestKind::Csss3 | TestKind::Csss4) {
            obj.insert("j_max_mode".into(), serde_json::to_value(p.j_max_mode).expect("serialisable"));
        }
        v
    }

    /// First 16 hex digits of the SHA-256 of [`Self::params_json`].
    pub fn params_hash(&self, test: TestKind) -> String {
        params_hash(&self.params_json(test))
    }
}

pub fn params_hash(params: &serde_json::Value) -> String {
    let digest = Sha256::digest(params.to_string().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// One metric evaluation: a row of metrics.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub source: String,
    pub string_index: usize,
    pub test: TestKind,
    pub complemented: bool,
    /// Absent when the evaluation failed.
    pub value: Option<f64>,
    pub params_hash: String,
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::{complement, BitBuilder};
    use crate::generators::{generate, SourceSpec};
    use proptest::prelude::*;

    fn chunks(values: &[u64], width: u32, pad: usize) -> BitString {
        let mut b = BitBuilder::new();
        for &v in values {
            b.push_bits(v, width);
        }
        for _ in 0..pad {
            b.push_bit(false);
        }
        b.finish("t")
    }

    fn random(bits: usize, seed: u64) -> BitString {
        generate(&SourceSpec::Xoroshiro128Plus { seed }, bits).unwrap()
    }

    #[test]
    fn borel_examples() {
        let alt: BitString = "01".repeat(1 << 15).parse().unwrap();
        assert_eq!(borel_metric(&alt).unwrap(), 15.0);
        assert_eq!(borel_metric(&BitString::zeros(1 << 16, "z")).unwrap(), 15.0);
        assert!(matches!(borel_metric(&BitString::zeros(3, "z")), Err(AlgoError::TooShort { .. })));
        assert_eq!(borel_max_block(4), 1);
        assert_eq!(borel_max_block(15), 1);
        assert_eq!(borel_max_block(16), 2);
        assert_eq!(borel_max_block(1 << 20), 4);
        assert_eq!(borel_max_block(1 << 26), 4);
        assert_eq!(borel_max_block((1 << 32) - 1), 4);
    }

    #[test]
    fn borel_random_is_small() {
        let m = borel_metric(&random(1 << 20, 5)).unwrap();
        assert!(m < 1.0, "{m}");
    }

    #[test]
    fn csss1_examples() {
        // 2 is a liar for 561, 5 is a witness.
        let s = chunks(&[2, 5], 10, 40);
        assert_eq!(csss1_min_witnesses(&s, &[561], Exhaustion::Error, 64).unwrap(), 2);
        let s = chunks(&[5], 10, 10);
        assert_eq!(csss1_min_witnesses(&s, &[561], Exhaustion::Error, 64).unwrap(), 1);
        let s = BitString::ones(200, "ones");
        assert!(matches!(
            csss1_min_witnesses(&s, &[561], Exhaustion::Error, 64),
            Err(AlgoError::Csss1Exhausted { k: 1, .. })
        ));
        assert!(matches!(
            csss1_min_witnesses(&s, &[561], Exhaustion::Wrap, 64),
            Err(AlgoError::Csss1Exhausted { k: 1, .. })
        ));
        assert!(matches!(
            csss1_min_witnesses(&s, &[], Exhaustion::Error, 64),
            Err(AlgoError::NoTargets { .. })
        ));
    }

    #[test]
    fn csss1_is_minimal() {
        let x = random(1 << 16, 11);
        let targets = [561, 1105, 1729, 2465, 2821, 6601, 8911];
        let k = csss1_min_witnesses(&x, &targets, Exhaustion::Error, 1024).unwrap() as u32;
        assert!(k >= 1);
        for smaller in 1..k {
            assert!(!csss1_pass(&x, &targets, smaller, Exhaustion::Error).unwrap());
        }
    }

    #[test]
    fn csss2_examples() {
        let s = chunks(&[2, 5], 10, 0);
        assert_eq!(csss2_bits_used(&s, &[561], Exhaustion::Error, 1024).unwrap(), 20);
        let s = chunks(&[5], 10, 0);
        assert_eq!(csss2_bits_used(&s, &[561], Exhaustion::Error, 1024).unwrap(), 10);
        // Rejected chunks (0 and > 560) do not change the count.
        let s = chunks(&[0, 1023, 600, 2, 0, 5], 10, 0);
        assert_eq!(csss2_bits_used(&s, &[561], Exhaustion::Error, 1024).unwrap(), 20);
        let s = chunks(&[2, 2], 10, 0);
        assert!(matches!(
            csss2_bits_used(&s, &[561], Exhaustion::Error, 1024),
            Err(AlgoError::Bits { .. })
        ));
        assert!(matches!(
            csss2_bits_used(&s, &[561], Exhaustion::Wrap, 8),
            Err(AlgoError::DrawLimit { limit: 8, .. })
        ));
    }

    #[test]
    fn csss2_mean_trials_on_random_strings() {
        let mut trials = 0u64;
        for seed in 0..1000 {
            let x = random(2048, seed);
            trials += csss2_bits_used(&x, &[561], Exhaustion::Error, 1024).unwrap() / 10;
        }
        let mean = trials as f64 / 1000.0;
        assert!((1.0..=3.0).contains(&mean), "{mean}");
    }

    #[test]
    fn csss3_examples() {
        let z = BitString::zeros(40, "z");
        assert_eq!(csss3_bits_used(&z, &[9], Exhaustion::Error, JMaxMode::K).unwrap(), 40);
        // value 1 -> d_0 = 1 -> W(2, 15)
        let mut bools = vec![false; 40];
        bools[0] = true;
        let s = BitString::from_bools(&bools, "w");
        assert_eq!(csss3_bits_used(&s, &[15], Exhaustion::Error, JMaxMode::K).unwrap(), 0);
        assert!(matches!(
            csss3_bits_used(&BitString::zeros(39, "z"), &[9], Exhaustion::Error, JMaxMode::K),
            Err(AlgoError::Bits { .. })
        ));
        assert_eq!(
            csss3_bits_used(&BitString::zeros(39, "z"), &[9], Exhaustion::Wrap, JMaxMode::K).unwrap(),
            40
        );
    }

    #[test]
    fn csss3_is_additive() {
        let x = random(4096, 3);
        let targets = [561u64, 1105, 1729];
        let total = csss3_bits_used(&x, &targets, Exhaustion::Error, JMaxMode::K).unwrap();
        let mut pos = 0;
        let mut sum = 0;
        for n in targets {
            let t = ZTarget::new(n);
            sum += t.evaluate_at(&x, pos, JMaxMode::K).bits_charged;
            pos += t.width;
        }
        assert_eq!(total, sum);
    }

    #[test]
    fn csss4_examples() {
        let cfg = Csss4Config::default();
        assert_eq!(cfg.repetition_len(), 755);
        let z = BitString::zeros(900, "z");
        assert_eq!(csss4_violation_average(&z, &cfg, JMaxMode::K).unwrap(), 10.0);
        assert_eq!(cfg.repetitions(900), 900 - 755 + 1);
        let single = Csss4Config {
            targets: vec![9],
            ..Csss4Config::default()
        };
        assert_eq!(csss4_violation_average(&z, &single, JMaxMode::K).unwrap(), 1.0);
        assert!(matches!(
            csss4_violation_average(&BitString::zeros(754, "z"), &cfg, JMaxMode::K),
            Err(AlgoError::TooShort { needed: 755, .. })
        ));
        let strided = Csss4Config {
            offset_stride: 64,
            ..Csss4Config::default()
        };
        assert_eq!(strided.repetitions(755 + 64 * 3 + 63), 4);
        let same = Csss4Config {
            layout: Csss4Layout::SameOffset,
            ..Csss4Config::default()
        };
        assert_eq!(same.repetition_len(), 96);
        assert_eq!(csss4_violation_average(&z, &same, JMaxMode::K).unwrap(), 10.0);
    }

    #[test]
    fn csss4_config_validation() {
        for bad in [vec![], vec![7], vec![10], vec![9, 11]] {
            let cfg = Csss4Config {
                targets: bad,
                ..Csss4Config::default()
            };
            assert!(cfg.validate().is_err());
        }
        assert!(Csss4Config::default().validate().is_ok());
    }

    #[test]
    fn params_hash_tracks_relevant_params() {
        let set = CarmichaelSet::from_members(10_000, vec![561, 1105]);
        let a = TestSuite::new(set.clone(), TestParams::default());
        let mut p = TestParams::default();
        p.csss4.offset_stride = 64;
        let b = TestSuite::new(set, p);
        assert_eq!(a.params_hash(TestKind::Csss2), b.params_hash(TestKind::Csss2));
        assert_ne!(a.params_hash(TestKind::Csss4), b.params_hash(TestKind::Csss4));
        assert_eq!(a.params_hash(TestKind::Borel).len(), 16);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn borel_complement_invariant(bits in prop::collection::vec(any::<bool>(), 4..3000)) {
            let x = BitString::from_bools(&bits, "p");
            prop_assert_eq!(borel_metric(&x).unwrap(), borel_metric(&complement(&x)).unwrap());
        }

        #[test]
        fn csss4_average_in_range(seed in any::<u64>(), stride in 1usize..200) {
            let cfg = Csss4Config { offset_stride: stride, ..Csss4Config::default() };
            let x = random(3000, seed);
            let v = csss4_violation_average(&x, &cfg, JMaxMode::K).unwrap();
            prop_assert!((0.0..=10.0).contains(&v));
        }

        #[test]
        fn metrics_are_deterministic(seed in any::<u64>()) {
            let suite = TestSuite::new(
                CarmichaelSet::from_members(10_000, vec![561, 1105, 1729]),
                TestParams { exhaustion: Exhaustion::Wrap, ..TestParams::default() },
            );
            let x = random(4096, seed);
            for t in TestKind::ALL {
                let a = suite.evaluate(t, &x).unwrap();
                let b = suite.evaluate(t, &x).unwrap();
                prop_assert_eq!(a.to_bits(), b.to_bits());
                prop_assert!(a >= 0.0);
                if t == TestKind::Csss1 {
                    prop_assert!(a >= 1.0);
                }
            }
        }
    }
}
