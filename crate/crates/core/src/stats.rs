//! Two-sample comparison pipeline: Kolmogorov-Smirnov, Shapiro-Wilk and
//! Welch's t-test, with report assembly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::par;

/// Largest |a|·|b| handled by the exact KS distribution.
pub const KS_EXACT_CAP: usize = 10_000;
/// p below this marks a pairwise KS or Welch difference as significant.
pub const PAIR_ALPHA: f64 = 0.005;
/// Shapiro-Wilk p below this counts as evidence against normality.
pub const NORMALITY_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample size {n} outside [{min}, {max}]")]
    SampleSizeOutOfRange { n: usize, min: usize, max: usize },
    #[error("degenerate sample (zero variance)")]
    DegenerateSample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("need at least two sources, got {0}")]
    TooFewSources(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KsExact,
    KsAsymptotic,
    ShapiroWilk,
    WelchT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub df: Option<f64>,
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    v
}

/// Walks the merged samples and returns max |i·nb − j·na| over the observed
/// points, plus whether any value occurs in both samples.
fn ks_integer_statistic(a: &[f64], b: &[f64]) -> (u64, bool) {
    let (na, nb) = (a.len() as i64, b.len() as i64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0i64;
    let mut cross_tie = false;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let i0 = i;
        let j0 = j;
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        cross_tie |= i > i0 && j > j0;
        best = best.max((i as i64 * nb - j as i64 * na).abs());
    }
    (best as u64, cross_tie)
}

/// P(D ≥ d) for samples of sizes na and nb, with d in units of 1/(na·nb).
///
/// Every arrangement of the pooled labels is a monotone lattice path from
/// (0,0) to (na,nb), all equally likely. The recursion moves probability
/// along the path and collects the mass that first reaches |i·nb − j·na| ≥ d,
/// so small p-values come out without cancellation.
pub fn ks_exact_p(na: usize, nb: usize, d: u64) -> f64 {
    if d == 0 {
        return 1.0;
    }
    let d = d as i64;
    let hit = |i: usize, j: usize| (i as i64 * nb as i64 - j as i64 * na as i64).abs() >= d;
    let mut row = vec![0.0f64; nb + 1];
    let mut absorbed = 0.0;
    row[0] = 1.0;
    for i in 0..=na {
        let mut next = vec![0.0f64; nb + 1];
        for j in 0..=nb {
            let mass = row[j];
            if mass == 0.0 {
                continue;
            }
            let left = (na - i + nb - j) as f64;
            if i < na {
                let m = mass * (na - i) as f64 / left;
                if hit(i + 1, j) {
                    absorbed += m;
                } else {
                    next[j] += m;
                }
            }
            if j < nb {
                let m = mass * (nb - j) as f64 / left;
                if hit(i, j + 1) {
                    absorbed += m;
                } else {
                    row[j + 1] += m;
                }
            }
        }
        row = next;
    }
    absorbed.clamp(0.0, 1.0)
}

/// Survival function of the Kolmogorov distribution, P(K > λ).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-theta form, fast for small λ.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..=20 {
            let odd = (2 * k - 1) as f64;
            cdf += (-odd * odd * c).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sf = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sf += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sf).clamp(0.0, 1.0)
}

/// Two-sided two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    ks_two_sample_with(a, b, KS_EXACT_CAP)
}

/// As [`ks_two_sample`] with a configurable cap on |a|·|b| for the exact path.
pub fn ks_two_sample_with(a: &[f64], b: &[f64], exact_cap: usize) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a)?;
    check_finite(b)?;
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len(), b.len());
    let (d_int, cross_tie) = ks_integer_statistic(&a, &b);
    let statistic = d_int as f64 / (na as f64 * nb as f64);
    if na * nb <= exact_cap && !cross_tie {
        return Ok(TestResult {
            statistic,
            p_value: ks_exact_p(na, nb, d_int),
            method: Method::KsExact,
            df: None,
        });
    }
    let en = (na as f64 * nb as f64 / (na + nb) as f64).sqrt();
    Ok(TestResult {
        statistic,
        p_value: kolmogorov_sf(statistic * en),
        method: Method::KsAsymptotic,
        df: None,
    })
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

const SW_C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const SW_C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const SW_C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const SW_C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const SW_C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const SW_C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const SW_G: [f64; 2] = [-2.273, 0.459];

/// Half of the antisymmetric Shapiro-Wilk coefficient vector, largest first.
fn sw_coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let std = Normal::standard();
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half)
        .map(|i| std.inverse_cdf((i as f64 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&SW_C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (start, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&SW_C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        (2, fac)
    } else {
        ((1), ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
    };
    for i in start..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Shapiro-Wilk normality test (Royston's approximation, 3 ≤ n ≤ 5000).
pub fn shapiro_wilk(x: &[f64]) -> Result<TestResult, StatsError> {
    let n = x.len();
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if !(3..=5000).contains(&n) {
        return Err(StatsError::SampleSizeOutOfRange { n, min: 3, max: 5000 });
    }
    check_finite(x)?;
    let xs = sorted(x);
    let range = xs[n - 1] - xs[0];
    if range <= 0.0 || !range.is_finite() {
        return Err(StatsError::DegenerateSample);
    }
    let half = sw_coefficients(n);
    let coef = |i: usize| -> f64 {
        let j = n - 1 - i;
        match i.cmp(&j) {
            std::cmp::Ordering::Less => -half[i],
            std::cmp::Ordering::Greater => half[j],
            std::cmp::Ordering::Equal => 0.0,
        }
    };
    // W as the squared correlation between sorted data and coefficients.
    let mean_x = xs.iter().map(|v| v / range).sum::<f64>() / n as f64;
    let mean_a = (0..n).map(coef).sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, &v) in xs.iter().enumerate() {
        let da = coef(i) - mean_a;
        let dx = v / range - mean_x;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    let root = (ssa * ssx).sqrt();
    let one_minus_w = ((root - sax) * (root + sax) / (ssa * ssx)).max(0.0);
    let w = (1.0 - one_minus_w).clamp(f64::MIN_POSITIVE, 1.0);

    let p_value = if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::PI / 3.0);
        p.clamp(0.0, 1.0)
    } else {
        let y = one_minus_w.ln();
        let an = n as f64;
        let tail = |y: f64, mean: f64, sd: f64| {
            Normal::new(mean, sd).expect("positive sd").sf(y)
        };
        if n <= 11 {
            let gamma = poly(&SW_G, an);
            if y >= gamma {
                1e-99
            } else {
                tail(-(gamma - y).ln(), poly(&SW_C3, an), poly(&SW_C4, an).exp())
            }
        } else {
            let ln_n = an.ln();
            tail(y, poly(&SW_C5, ln_n), poly(&SW_C6, ln_n).exp())
        }
    };
    Ok(TestResult {
        statistic: w,
        p_value: p_value.clamp(0.0, 1.0),
        method: Method::ShapiroWilk,
        df: None,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::SampleSizeOutOfRange {
                n: s.len(),
                min: 2,
                max: usize::MAX,
            });
        }
    }
    check_finite(a)?;
    check_finite(b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided(t, df),
        method: Method::WelchT,
        df: Some(df),
    })
}

/// One cell of an upper-triangular comparison matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub a: String,
    pub b: String,
    pub result: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub source: String,
    pub result: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl NormalityResult {
    /// Passes the gate: a p-value at or above the normality threshold.
    pub fn looks_normal(&self) -> bool {
        self.result.is_some_and(|r| r.p_value >= NORMALITY_ALPHA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairTest {
    Ks,
    Welch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub a: String,
    pub b: String,
    pub test: PairTest,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub pairwise: f64,
    pub normality: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            pairwise: PAIR_ALPHA,
            normality: NORMALITY_ALPHA,
        }
    }
}

/// Outcome of the comparison pipeline for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub sources: Vec<String>,
    pub sample_sizes: Vec<usize>,
    /// Pairs (i, j) with i < j in row-major order.
    pub ks: Vec<PairResult>,
    pub shapiro_wilk: Vec<NormalityResult>,
    pub normality_gate_passed: bool,
    /// Sources whose Shapiro-Wilk p-value is below the normality threshold.
    pub non_normal: Vec<String>,
    pub welch: Option<Vec<PairResult>>,
    pub significant_pairs: Vec<Significance>,
    pub thresholds: Thresholds,
}

fn pair_indices(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

fn run_pairs(
    sources: &[(String, Vec<f64>)],
    test: fn(&[f64], &[f64]) -> Result<TestResult, StatsError>,
) -> Vec<PairResult> {
    par::map(&pair_indices(sources.len()), |&(i, j)| {
        let (r, e) = match test(&sources[i].1, &sources[j].1) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        PairResult {
            a: sources[i].0.clone(),
            b: sources[j].0.clone(),
            result: r,
            error: e,
        }
    })
}

/// KS on every pair, Shapiro-Wilk on every source, and Welch on every pair
/// when all sources pass the normality screen.
pub fn decision_pipeline(sources: &[(String, Vec<f64>)]) -> Result<StatReport, StatsError> {
    if sources.len() < 2 {
        return Err(StatsError::TooFewSources(sources.len()));
    }
    for (_, s) in sources {
        if s.is_empty() {
            return Err(StatsError::EmptySample);
        }
        check_finite(s)?;
    }
    let thresholds = Thresholds::default();
    let ks = run_pairs(sources, ks_two_sample);
    let shapiro: Vec<NormalityResult> = par::map(sources, |(label, s)| match shapiro_wilk(s) {
        Ok(r) => NormalityResult {
            source: label.clone(),
            result: Some(r),
            error: None,
        },
        Err(e) => NormalityResult {
            source: label.clone(),
            result: None,
            error: Some(e.to_string()),
        },
    });
    let non_normal = shapiro
        .iter()
        .filter(|r| r.result.is_some_and(|t| t.p_value < thresholds.normality))
        .map(|r| r.source.clone())
        .collect();
    let gate = shapiro.iter().all(NormalityResult::looks_normal);
    let welch = gate.then(|| run_pairs(sources, welch_t));

    let mut significant_pairs = Vec::new();
    let mut collect = |pairs: &[PairResult], test: PairTest| {
        for p in pairs {
            if let Some(r) = p.result {
                if r.p_value < thresholds.pairwise {
                    significant_pairs.push(Significance {
                        a: p.a.clone(),
                        b: p.b.clone(),
                        test,
                        p_value: r.p_value,
                    });
                }
            }
        }
    };
    collect(&ks, PairTest::Ks);
    if let Some(w) = &welch {
        collect(w, PairTest::Welch);
    }
    Ok(StatReport {
        sources: sources.iter().map(|(l, _)| l.clone()).collect(),
        sample_sizes: sources.iter().map(|(_, s)| s.len()).collect(),
        ks,
        shapiro_wilk: shapiro,
        normality_gate_passed: gate,
        non_normal,
        welch,
        significant_pairs,
        thresholds,
    })
}

impl StatReport {
    fn index(&self, label: &str) -> Option<usize> {
        self.sources.iter().position(|s| s == label)
    }

    fn lookup(pairs: &[PairResult], a: &str, b: &str) -> Option<f64> {
        pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .and_then(|p| p.result.map(|r| r.p_value))
    }

    pub fn ks_p(&self, a: &str, b: &str) -> Option<f64> {
        Self::lookup(&self.ks, a, b)
    }

    pub fn welch_p(&self, a: &str, b: &str) -> Option<f64> {
        self.welch.as_deref().and_then(|w| Self::lookup(w, a, b))
    }

    /// Upper-triangular p-value matrix indexed by source position.
    pub fn matrix(&self, pairs: &[PairResult]) -> Vec<Vec<Option<f64>>> {
        let k = self.sources.len();
        let mut m = vec![vec![None; k]; k];
        for p in pairs {
            if let (Some(i), Some(j)) = (self.index(&p.a), self.index(&p.b)) {
                let (i, j) = (i.min(j), i.max(j));
                m[i][j] = p.result.map(|r| r.p_value);
            }
        }
        m
    }

    pub fn is_significant(&self, a: &str, b: &str, test: PairTest) -> bool {
        self.significant_pairs
            .iter()
            .any(|s| s.test == test && ((s.a == a && s.b == b) || (s.a == b && s.b == a)))
    }

    fn write_matrix(&self, out: &mut String, title: &str, pairs: &[PairResult]) {
        let m = self.matrix(pairs);
        let k = self.sources.len();
        let width = self.sources.iter().map(|s| s.len()).max().unwrap_or(0).max(10) + 2;
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:width$}", "");
        for s in &self.sources[1..] {
            let _ = write!(out, "{s:>width$}");
        }
        out.push('\n');
        for i in 0..k - 1 {
            let _ = write!(out, "{:<width$}", self.sources[i]);
            for j in 1..k {
                let cell = if j <= i {
                    String::new()
                } else {
                    match m[i][j] {
                        Some(p) if p < self.thresholds.pairwise => format!("{p:.5}*"),
                        Some(p) => format!("{p:.5} "),
                        None => "n/a ".to_string(),
                    }
                };
                let _ = write!(out, "{cell:>width$}");
            }
            out.push('\n');
        }
    }

    /// Aligned plain-text tables: KS p-values, Shapiro-Wilk per source and,
    /// when computed, Welch p-values. Significant entries carry a `*`.
    pub fn to_text(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{title}\n");
        self.write_matrix(&mut out, "Kolmogorov-Smirnov two-sample p-values", &self.ks);
        out.push('\n');
        let _ = writeln!(out, "Shapiro-Wilk");
        let width = self.sources.iter().map(|s| s.len()).max().unwrap_or(0).max(10) + 2;
        for r in &self.shapiro_wilk {
            let cell = match (&r.result, &r.error) {
                (Some(t), _) => format!(
                    "W = {:.5}  p = {:.5}{}",
                    t.statistic,
                    t.p_value,
                    if t.p_value < self.thresholds.normality { "*" } else { "" }
                ),
                (None, Some(e)) => e.clone(),
                (None, None) => "n/a".into(),
            };
            let _ = writeln!(out, "{:<width$}{cell}", r.source);
        }
        out.push('\n');
        match &self.welch {
            Some(w) => self.write_matrix(&mut out, "Welch t-test p-values", w),
            None => {
                let _ = writeln!(out, "Welch t-test skipped: not every source passed the normality screen");
            }
        }
        out
    }
}
