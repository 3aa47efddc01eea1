use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use algrand::bitstream::{save_bitfile, BitFormat};
use algrand::experiment::{
    read_metrics_csv, read_metrics_json, reports_from_samples, run_experiment, write_reports, ExperimentConfig,
    ExperimentError,
};
use algrand::generators::{generate, SourceSpec};
use algrand::numtheory::{enumerate_carmichael_with, write_cache, EnumerationLimits};
use algrand::par;

#[derive(Parser)]
#[command(name = "algrand", version, about = "Algorithmic-randomness tests for bit sources")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Table format for `carmichael` output and `stats` input.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run { config: PathBuf },
    /// Enumerate Carmichael numbers up to a bound.
    Carmichael {
        #[arg(long)]
        bound: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the binary cache used by `run`.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Memory budget for the sieve, in MiB.
        #[arg(long, default_value_t = 2048)]
        memory_mib: u64,
    },
    /// Recompute the statistical reports from a metrics file.
    Stats {
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Write the first N bits of a source to a bitfile.
    Gen {
        /// Source, e.g. `pcg32:seed=7`, `bernoulli:seed=1,bias=0.4`, `pi`.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        bits: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "packed-msb")]
        bit_format: BitFormat,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let workers = cli.workers;
    match par::with_workers(workers, || dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        Command::Carmichael {
            bound,
            out,
            cache,
            memory_mib,
        } => cmd_carmichael(cli, *bound, out, cache.as_deref(), *memory_mib),
        Command::Stats { metrics } => cmd_stats(cli, metrics),
        Command::Gen {
            spec,
            bits,
            out,
            bit_format,
        } => cmd_gen(spec, *bits, out, *bit_format),
    }
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    let out = cli.output_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    let run = run_experiment(&config, &out)?;
    println!(
        "{} metric rows ({} failed) written to {}",
        run.rows.len(),
        run.error_rows(),
        out.display()
    );
    for ((test, comp), report) in reports_from_samples(&run.rows) {
        let tag = if comp { "comp" } else { "orig" };
        match report {
            Ok(r) => {
                let pairs: Vec<String> = r
                    .significant_pairs
                    .iter()
                    .map(|s| format!("{}~{} ({:?} p={:.4})", s.a, s.b, s.test, s.p_value))
                    .collect();
                println!(
                    "  {test:<6} {tag}: {} significant{}{}",
                    pairs.len(),
                    if pairs.is_empty() { "" } else { ": " },
                    pairs.join(", ")
                );
            }
            Err(e) => println!("  {test:<6} {tag}: not analysed ({e})"),
        }
    }
    Ok(())
}

fn cmd_carmichael(cli: &Cli, bound: u64, out: &Path, cache: Option<&Path>, memory_mib: u64) -> Result<(), Failure> {
    if bound < 2 {
        return Err(Failure::config("--bound must be at least 2"));
    }
    let limits = EnumerationLimits {
        memory_budget: memory_mib.saturating_mul(1 << 20),
        ..EnumerationLimits::default()
    };
    let set = enumerate_carmichael_with(bound, &limits).map_err(|e| Failure::runtime(e.to_string()))?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("n\n");
            for m in set.members() {
                s.push_str(&m.to_string());
                s.push('\n');
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&set).expect("serialisable") + "\n",
    };
    fs::write(out, text).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    if let Some(c) = cache {
        write_cache(&set, c).map_err(|e| Failure::runtime(e.to_string()))?;
    }
    println!("{} Carmichael numbers <= {bound}", set.len());
    Ok(())
}

fn cmd_stats(cli: &Cli, metrics: &Path) -> Result<(), Failure> {
    let json = match cli.format {
        Some(f) => f == Format::Json,
        None => metrics.extension().is_some_and(|e| e == "json"),
    };
    let rows = if json {
        read_metrics_json(metrics)?
    } else {
        read_metrics_csv(metrics)?
    };
    if rows.is_empty() {
        return Err(Failure::config(format!("{} has no rows", metrics.display())));
    }
    if let Some(dir) = &cli.output_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
        write_reports(&rows, dir)?;
    }
    for ((test, comp), report) in reports_from_samples(&rows) {
        let title = format!("{test} ({})", if comp { "complemented" } else { "original" });
        match report {
            Ok(r) => println!("{}", r.to_text(&title)),
            Err(e) => println!("{title}: not analysed ({e})\n"),
        }
    }
    Ok(())
}

fn cmd_gen(spec: &str, bits: usize, out: &Path, format: BitFormat) -> Result<(), Failure> {
    let spec: SourceSpec = spec.parse().map_err(|e: algrand::generators::GenError| Failure::config(e.to_string()))?;
    if bits == 0 {
        return Err(Failure::config("--bits must be at least 1"));
    }
    let s = generate(&spec, bits).map_err(|e| Failure::runtime(e.to_string()))?;
    save_bitfile(&s, out, format).map_err(|e| Failure::runtime(e.to_string()))?;
    println!("{bits} bits of {spec} written to {}", out.display());
    Ok(())
}
