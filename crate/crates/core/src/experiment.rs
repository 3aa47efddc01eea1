//! Experiment orchestration: config, string materialisation, metric fan-out,
//! statistics and artifacts on disk.
//!
//! Output files written to the output directory:
//!
//! - `metrics.csv`, `metrics.json`: one row per (source, string, test, complemented)
//! - `statreport-<test>-<orig|comp>.json` and `.txt`
//! - `boxplot.json`
//! - `manifest.json`: config hash, versions, timings. The only file that varies between identical runs.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algotests::{Csss4Config, MetricSample, TestKind, TestParams, TestSuite};
use crate::bitstream::{complement, split_into_samples, BitString, Exhaustion};
use crate::generators::{derive_seed, generate, GenError, SourceSpec};
use crate::numtheory::{enumerate_carmichael, load_or_enumerate, CarmichaelSet, JMaxMode, NumError};
use crate::par;
use crate::stats::{decision_pipeline, StatReport};

pub const METRICS_HEADER: [&str; 7] = [
    "source",
    "string_index",
    "test",
    "complemented",
    "value",
    "params_hash",
    "error",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("generating `{source_label}`: {error}")]
    Generation { source_label: String, error: GenError },
    #[error("carmichael targets: {0}")]
    Carmichael(#[from] NumError),
    #[error("i/o on {path}: {error}")]
    Io { path: PathBuf, error: io::Error },
    #[error("metrics file: {0}")]
    Metrics(String),
}

impl ExperimentError {
    /// Process exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |error| ExperimentError::Io {
        path: path.to_path_buf(),
        error,
    }
}

/// How the per-source strings are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generation {
    /// One independently seeded stream per string (seed derived from the
    /// source seed and the string index).
    #[default]
    Direct,
    /// One long stream from the source seed, cut into consecutive strings.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub label: String,
    #[serde(flatten)]
    pub spec: SourceSpec,
}

fn default_tests() -> Vec<TestKind> {
    TestKind::ALL.to_vec()
}
fn default_bound() -> u64 {
    10_000_000
}
fn default_true() -> bool {
    true
}
fn default_max_draws() -> u32 {
    1024
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sources: Vec<SourceEntry>,
    pub n_strings: usize,
    /// Bits per string.
    pub string_len: usize,
    #[serde(default = "default_tests")]
    pub tests: Vec<TestKind>,
    #[serde(default = "default_bound")]
    pub carmichael_bound: u64,
    /// Binary cache for the Carmichael set, reused when its bound covers ours.
    #[serde(default)]
    pub carmichael_cache: Option<PathBuf>,
    #[serde(default)]
    pub csss4: Csss4Config,
    #[serde(default = "default_true")]
    pub run_complemented: bool,
    #[serde(default)]
    pub wrap_on_exhaustion: bool,
    #[serde(default)]
    pub j_max_mode: JMaxMode,
    #[serde(default = "default_max_draws")]
    pub max_draws: u32,
    #[serde(default)]
    pub generation: Generation,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative paths inside the config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut cfg.sources {
            if let SourceSpec::File { path, .. } = &mut s.spec {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        if let Some(c) = &mut cfg.carmichael_cache {
            if c.is_relative() {
                *c = base.join(&*c);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.sources.is_empty() {
            return bad("at least one source is required".into());
        }
        if self.n_strings < 1 {
            return bad("n_strings must be >= 1".into());
        }
        if self.string_len < 1024 {
            return bad(format!("string_len must be >= 1024, got {}", self.string_len));
        }
        if self.tests.is_empty() {
            return bad("no tests selected".into());
        }
        let mut seen = HashSet::new();
        for s in &self.sources {
            if s.label.is_empty() || s.label.contains(',') {
                return bad(format!("invalid source label `{}`", s.label));
            }
            if !seen.insert(&s.label) {
                return bad(format!("duplicate source label `{}`", s.label));
            }
            s.spec
                .validate()
                .map_err(|e| ExperimentError::Config(format!("source `{}`: {e}", s.label)))?;
        }
        if self.uses_carmichael() && self.carmichael_bound < 561 {
            return bad(format!(
                "carmichael_bound {} leaves no targets (the smallest is 561)",
                self.carmichael_bound
            ));
        }
        if self.tests.contains(&TestKind::Csss4) {
            self.csss4.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if self.max_draws == 0 {
            return bad("max_draws must be >= 1".into());
        }
        Ok(())
    }

    fn uses_carmichael(&self) -> bool {
        self.tests
            .iter()
            .any(|t| matches!(t, TestKind::Csss1 | TestKind::Csss2 | TestKind::Csss3))
    }

    pub fn test_params(&self) -> TestParams {
        TestParams {
            exhaustion: if self.wrap_on_exhaustion {
                Exhaustion::Wrap
            } else {
                Exhaustion::Error
            },
            j_max_mode: self.j_max_mode,
            max_draws: self.max_draws,
            csss4: self.csss4.clone(),
        }
    }

    /// Sorted, de-duplicated test list.
    pub fn test_list(&self) -> Vec<TestKind> {
        let mut t = self.tests.clone();
        t.sort();
        t.dedup();
        t
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serialisable");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// The strings of one source, in index order.
pub fn materialize(entry: &SourceEntry, n_strings: usize, string_len: usize, mode: Generation) -> Result<Vec<BitString>, GenError> {
    let spec = &entry.spec;
    let long = |spec: &SourceSpec| -> Result<Vec<BitString>, GenError> {
        let bits = generate(spec, n_strings * string_len)?;
        let parts = split_into_samples(&bits, n_strings, string_len)?;
        Ok(parts
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.with_origin(format!("{}#{i}", entry.label)))
            .collect())
    };
    match (spec.seed(), mode) {
        (Some(seed), Generation::Direct) => par::map_range(n_strings, |i| {
            generate(&spec.with_seed(derive_seed(seed, i as u64)), string_len)
                .map(|s| s.with_origin(format!("{}#{i}", entry.label)))
        })
        .into_iter()
        .collect(),
        _ => long(spec),
    }
}

fn group_key(s: &MetricSample) -> (TestKind, bool) {
    (s.test, s.complemented)
}

pub fn report_name(test: TestKind, complemented: bool) -> String {
    format!("statreport-{test}-{}", if complemented { "comp" } else { "orig" })
}

/// Runs the comparison pipeline for every (test, complemented) group that has
/// at least two sources with values. Sources keep their first-seen order.
pub fn reports_from_samples(rows: &[MetricSample]) -> BTreeMap<(TestKind, bool), Result<StatReport, String>> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.source.as_str()) {
            order.push(&r.source);
        }
    }
    let mut groups: BTreeMap<(TestKind, bool), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let src = order.iter().position(|s| *s == r.source).expect("seen");
        let by_src = groups.entry(group_key(r)).or_default();
        let v = by_src.entry(src).or_default();
        if let Some(x) = r.value {
            v.push(x);
        }
    }
    groups
        .into_iter()
        .map(|(key, by_src)| {
            let samples: Vec<(String, Vec<f64>)> = by_src
                .into_iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(i, v)| (order[i].to_string(), v))
                .collect();
            (key, decision_pipeline(&samples).map_err(|e| e.to_string()))
        })
        .collect()
}

/// Tukey box-plot numbers for one group of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub source: String,
    pub test: TestKind,
    pub complemented: bool,
    pub n_values: usize,
    pub n_errors: usize,
    /// Absent when every row of the group failed.
    pub summary: Option<FiveNumber>,
}

/// Quantile by linear interpolation between closest ranks (h = (n−1)·q).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let (q1, median, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x));
    let whisker_low = inside.clone().fold(f64::INFINITY, f64::min).min(q1);
    let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max).max(q3);
    Some(FiveNumber {
        min: v[0],
        q1,
        median,
        q3,
        max: v[v.len() - 1],
        whisker_low,
        whisker_high,
        outliers: v.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect(),
    })
}

/// One summary per (source, test, complemented), sources in first-seen order.
pub fn summarize_boxplot(rows: &[MetricSample]) -> Vec<BoxplotSummary> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, TestKind, bool), (Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let idx = match order.iter().position(|s| *s == r.source) {
            Some(i) => i,
            None => {
                order.push(&r.source);
                order.len() - 1
            }
        };
        let g = groups.entry((idx, r.test, r.complemented)).or_default();
        match r.value {
            Some(v) => g.0.push(v),
            None => g.1 += 1,
        }
    }
    groups
        .into_iter()
        .map(|((idx, test, complemented), (values, errors))| BoxplotSummary {
            source: order[idx].to_string(),
            test,
            complemented,
            n_values: values.len(),
            n_errors: errors,
            summary: five_number(&values),
        })
        .collect()
}

pub fn write_metrics_csv(rows: &[MetricSample], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ExperimentError::Metrics(e.to_string()))?;
    let res = (|| -> Result<(), csv::Error> {
        w.write_record(METRICS_HEADER)?;
        for r in rows {
            w.write_record([
                r.source.clone(),
                r.string_index.to_string(),
                r.test.to_string(),
                r.complemented.to_string(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
                r.params_hash.clone(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| ExperimentError::Metrics(format!("{}: {e}", path.display())))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricSample>, ExperimentError> {
    let bad = |m: String| ExperimentError::Metrics(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(bad(format!("unexpected header {:?}", header)));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let ctx = |m: String| bad(format!("row {}: {m}", line + 2));
        let value = match field(4) {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|e| ctx(format!("value: {e}")))?),
        };
        rows.push(MetricSample {
            source: field(0).to_string(),
            string_index: field(1).parse().map_err(|e| ctx(format!("string_index: {e}")))?,
            test: field(2).parse().map_err(ctx)?,
            complemented: field(3).parse().map_err(|e| ctx(format!("complemented: {e}")))?,
            value,
            params_hash: field(5).to_string(),
            error: Some(field(6)).filter(|e| !e.is_empty()).map(str::to_string),
        });
    }
    Ok(rows)
}

pub fn read_metrics_json(path: &Path) -> Result<Vec<MetricSample>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Metrics(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Writes `statreport-*.json` and `.txt` for every computable group and
/// returns the groups that could not be analysed.
pub fn write_reports(rows: &[MetricSample], dir: &Path) -> Result<Vec<String>, ExperimentError> {
    let mut skipped = Vec::new();
    for ((test, comp), report) in reports_from_samples(rows) {
        let name = report_name(test, comp);
        match report {
            Ok(r) => {
                write_json(&r, &dir.join(format!("{name}.json")))?;
                let title = format!(
                    "{test} metric, {} strings",
                    if comp { "complemented" } else { "original" }
                );
                let p = dir.join(format!("{name}.txt"));
                fs::write(&p, r.to_text(&title)).map_err(io_err(&p))?;
            }
            Err(e) => {
                log::warn!("{name}: not analysed ({e})");
                skipped.push(format!("{name}: {e}"));
            }
        }
    }
    Ok(skipped)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub crate_version: String,
    pub parallel: bool,
    pub workers: usize,
    pub started_unix: u64,
    pub durations_secs: BTreeMap<String, f64>,
    pub rows: usize,
    pub error_rows: usize,
    pub errors_by_test: BTreeMap<String, usize>,
    pub carmichael_targets: Option<usize>,
    pub skipped_reports: Vec<String>,
    pub config: ExperimentConfig,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub rows: Vec<MetricSample>,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn error_rows(&self) -> usize {
        self.manifest.error_rows
    }
}

/// Evaluates every enabled test on every string of every source, original
/// and (optionally) complemented, in a deterministic row order.
pub fn evaluate_all(
    config: &ExperimentConfig,
    strings: &[Vec<BitString>],
    suite: &TestSuite,
) -> Vec<MetricSample> {
    let tests = config.test_list();
    let comps: &[bool] = if config.run_complemented { &[false, true] } else { &[false] };
    let complemented: Vec<Vec<BitString>> = if config.run_complemented {
        strings.iter().map(|v| par::map(v, complement)).collect()
    } else {
        Vec::new()
    };
    let mut items = Vec::new();
    for (s, per_source) in strings.iter().enumerate() {
        for i in 0..per_source.len() {
            for &t in &tests {
                for &c in comps {
                    items.push((s, i, t, c));
                }
            }
        }
    }
    let hashes: BTreeMap<TestKind, String> = tests.iter().map(|&t| (t, suite.params_hash(t))).collect();
    par::map(&items, |&(s, i, test, comp)| {
        let x = if comp { &complemented[s][i] } else { &strings[s][i] };
        let (value, error) = match suite.evaluate(test, x) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        MetricSample {
            source: config.sources[s].label.clone(),
            string_index: i,
            test,
            complemented: comp,
            value,
            params_hash: hashes[&test].clone(),
            error,
        }
    })
}

/// Loads or enumerates the Carmichael targets for a config.
pub fn carmichael_targets(config: &ExperimentConfig) -> Result<CarmichaelSet, ExperimentError> {
    let set = match &config.carmichael_cache {
        Some(path) => load_or_enumerate(path, config.carmichael_bound)?,
        None => enumerate_carmichael(config.carmichael_bound)?,
    };
    Ok(set.restrict(config.carmichael_bound))
}

/// Runs a full experiment and writes every artifact into `output_dir`.
pub fn run_experiment(config: &ExperimentConfig, output_dir: &Path) -> Result<RunSummary, ExperimentError> {
    config.validate()?;
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    par::with_workers(config.workers, || {
        let mut durations = BTreeMap::new();
        let mut clock = Instant::now();
        let mut lap = |name: &str, durations: &mut BTreeMap<String, f64>| {
            durations.insert(name.to_string(), clock.elapsed().as_secs_f64());
            clock = Instant::now();
        };

        let carmichael = if config.uses_carmichael() {
            let set = carmichael_targets(config)?;
            log::info!("{} Carmichael targets up to {}", set.len(), config.carmichael_bound);
            set
        } else {
            CarmichaelSet::from_members(config.carmichael_bound, Vec::new())
        };
        lap("carmichael", &mut durations);

        let mut strings = Vec::with_capacity(config.sources.len());
        for entry in &config.sources {
            log::info!("generating {} x {} bits for `{}`", config.n_strings, config.string_len, entry.label);
            let s = materialize(entry, config.n_strings, config.string_len, config.generation).map_err(|error| {
                ExperimentError::Generation {
                    source_label: entry.label.clone(),
                    error,
                }
            })?;
            strings.push(s);
        }
        lap("generate", &mut durations);

        let suite = TestSuite::new(carmichael, config.test_params());
        log::info!("evaluating metrics");
        let rows = evaluate_all(config, &strings, &suite);
        drop(strings);
        lap("metrics", &mut durations);

        let mut errors_by_test = BTreeMap::new();
        for r in rows.iter().filter(|r| r.error.is_some()) {
            *errors_by_test.entry(r.test.to_string()).or_insert(0) += 1;
        }
        let error_rows = errors_by_test.values().sum();
        if error_rows > 0 {
            log::warn!("{error_rows} metric evaluations failed: {errors_by_test:?}");
        }

        write_metrics_csv(&rows, &output_dir.join("metrics.csv"))?;
        write_json(&rows, &output_dir.join("metrics.json"))?;
        let skipped = write_reports(&rows, output_dir)?;
        write_json(&summarize_boxplot(&rows), &output_dir.join("boxplot.json"))?;
        lap("reports", &mut durations);

        let manifest = Manifest {
            config_hash: config.hash(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: cfg!(feature = "parallel"),
            workers: par::current_threads(),
            started_unix,
            durations_secs: durations,
            rows: rows.len(),
            error_rows,
            errors_by_test,
            carmichael_targets: config.uses_carmichael().then(|| suite.carmichael.len()),
            skipped_reports: skipped,
            config: config.clone(),
        };
        write_json(&manifest, &output_dir.join("manifest.json"))?;
        Ok(RunSummary {
            output_dir: output_dir.to_path_buf(),
            rows,
            manifest,
        })
    })
}
