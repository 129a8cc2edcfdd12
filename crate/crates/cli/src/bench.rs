use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Subcommand};
use hearthwire_bench::{compare_modes, run_bench, BenchError, BenchOptions, BenchReport, Mode, Testbed};

use crate::settings::parse_hash;
use crate::{announce, CliError};

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Time round trips in one mode on an in-process loopback testbed.
    Run(RunArgs),
    /// Per-stage deltas between two JSON reports (b relative to a).
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// http-signed, http-unsigned or mqtt.
    #[arg(long)]
    pub mode: Mode,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 2048)]
    pub key_bits: usize,
    #[arg(long, default_value = "md5")]
    pub hash: String,
    /// Gateway key cache lifetime; 0 fetches from the KDC on every command.
    #[arg(long, default_value_t = 0)]
    pub key_cache_ttl_ms: u64,
    /// `.csv` writes one row per iteration, anything else writes JSON.
    /// Without it the JSON report goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Print the full comparison as JSON instead of verdict lines.
    #[arg(long)]
    pub json: bool,
}

pub async fn run(cmd: BenchCommand) -> Result<(), CliError> {
    match cmd {
        BenchCommand::Run(args) => bench_run(args).await,
        BenchCommand::Compare(args) => bench_compare(args),
    }
}

fn bench_error(e: BenchError) -> CliError {
    match e {
        BenchError::NoIterations => CliError::Usage(e.to_string()),
        BenchError::TargetUnreachable(_) => CliError::Connectivity(e.to_string()),
        BenchError::Setup(_) | BenchError::Rejected(_) | BenchError::EmulatorMissed(_) => CliError::Failure(e.to_string()),
    }
}

async fn bench_run(args: RunArgs) -> Result<(), CliError> {
    if args.iterations == 0 {
        return Err(bench_error(BenchError::NoIterations));
    }
    if !hearthwire_core::crypto::SUPPORTED_KEY_BITS.contains(&args.key_bits) {
        return Err(CliError::Usage(format!(
            "unsupported key size {} (expected one of 1024, 2048, 4096)",
            args.key_bits
        )));
    }
    let options = BenchOptions {
        iterations: args.iterations,
        warmup: args.warmup,
        key_bits: args.key_bits,
        hash: parse_hash(&args.hash)?,
        key_cache_ttl: Duration::from_millis(args.key_cache_ttl_ms),
    };
    let testbed = Testbed::start(&options).await.map_err(bench_error)?;
    let report = run_bench(&testbed, args.mode, &options).await.map_err(bench_error)?;
    let total = report.aggregates.total_ms;
    eprintln!(
        "{}: {} iterations, total mean {:.3} ms, p50 {:.3} ms, p95 {:.3} ms, payload {} bytes",
        report.mode, report.iterations, total.mean, total.p50, total.p95, report.payload_bytes
    );
    match &args.out {
        None => announce(report.to_json()),
        Some(path) => {
            let body = if is_csv(path) { report.to_csv() } else { report.to_json() };
            std::fs::write(path, body).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load_report(path: &Path) -> Result<BenchReport, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    BenchReport::from_json(&raw).map_err(|e| CliError::Validation(format!("{} is not a bench report: {e}", path.display())))
}

fn bench_compare(args: CompareArgs) -> Result<(), CliError> {
    let a = load_report(&args.a)?;
    let b = load_report(&args.b)?;
    let cmp = compare_modes(&a, &b).map_err(|e| CliError::Validation(e.to_string()))?;
    if args.json {
        announce(serde_json::to_string_pretty(&cmp).expect("comparison serializes"));
    } else {
        print!("{cmp}");
    }
    Ok(())
}
