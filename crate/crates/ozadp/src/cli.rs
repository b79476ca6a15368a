//! The `ozadp` command line.
//!
//! Exit codes: 0 success, 2 usage error or unreadable input, 3 contract
//! violation reported by the library, 4 failed self-test.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ozadp_core::grading::{self, loglog_fit, SWEEP_CSV_HEADER};
use ozadp_core::qr::{geqrf_blocked, histogram_csv, qr_residual, slice_histogram};
use ozadp_core::{adp_gemm, esc_exact, AdpConfig, AdpMode};

use crate::io::{read_matrix, write_matrix, write_text, IoError};
use crate::lists::{parse_u64_list, parse_usize_list};
use crate::selftest;
use crate::trace::trace_json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONTRACT: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Contract(#[from] ozadp_core::Error),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Contract(_) => EXIT_CONTRACT,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ozadp", version, about = "FP64 GEMM emulated with int8 slices, with guarded dispatch")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "OZADP_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// alpha * A B + beta * C through the dispatcher.
    Gemm(GemmArgs),
    /// Exponent span of A B.
    Esc(EscArgs),
    /// Accuracy sweeps.
    #[command(subcommand)]
    Grade(GradeCommand),
    /// Blocked Householder QR with dispatched trailing updates.
    Qr(QrArgs),
    /// Quick property checks of the library.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DispatchArgs {
    /// auto, native or emulate:S
    #[arg(long, default_value = "auto", value_parser = parse_mode)]
    pub mode: AdpMode,
    #[arg(long, default_value_t = 53)]
    pub target_bits: u32,
    #[arg(long, default_value_t = ozadp_core::esc::DEFAULT_BLOCK_LEN)]
    pub esc_block: usize,
    #[arg(long, default_value_t = 18)]
    pub max_slices: usize,
    #[arg(long, default_value_t = 256)]
    pub min_dim: usize,
    /// Modeled integer-to-FP64 throughput ratio of the cost model.
    #[arg(long, default_value_t = ozadp_core::adp::DEFAULT_COST_RATIO)]
    pub cost_ratio: f64,
}

impl DispatchArgs {
    fn config(&self) -> AdpConfig {
        AdpConfig {
            target_mantissa_bits: self.target_bits,
            esc_block_len: self.esc_block,
            max_slices: self.max_slices,
            min_dim: self.min_dim,
            mode: self.mode,
            cost_ratio: self.cost_ratio,
        }
    }
}

#[derive(Debug, Args)]
pub struct GemmArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub c: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta: f64,
    #[command(flatten)]
    pub dispatch: DispatchArgs,
    /// Output matrix; `.mtx` writes Matrix Market, anything else binary.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the dispatch trace as JSON here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EscArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Enumerate every product exponent instead of block estimates.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = ozadp_core::esc::DEFAULT_BLOCK_LEN)]
    pub esc_block: usize,
    #[arg(long, default_value_t = 53)]
    pub target_bits: u32,
}

#[derive(Debug, Subcommand)]
pub enum GradeCommand {
    /// Test-2 sweep over exponent ranges.
    Test2(Test2Args),
    /// Uniform (0, 1) sweep over sizes.
    Uniform(UniformArgs),
}

#[derive(Debug, Args)]
pub struct Test2Args {
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Exponent ranges, e.g. `1,2,4,...,128`.
    #[arg(long, default_value = "1,2,4,...,128")]
    pub b_list: String,
    /// Modes, e.g. `auto,emulate:7`.
    #[arg(long, default_value = "auto,emulate:7")]
    pub modes: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub dispatch: DispatchArgs,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UniformArgs {
    #[arg(long, default_value = "128,256,512,1024")]
    pub n_list: String,
    #[arg(long, default_value = "auto,native")]
    pub modes: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[command(flatten)]
    pub dispatch: DispatchArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QrArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub panel: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub dispatch: DispatchArgs,
    /// Slice-count histogram CSV; standard output when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write all GEMM traces as a JSON array here.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Scale factor for the number of random trials.
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
}

fn parse_mode(s: &str) -> std::result::Result<AdpMode, String> {
    match s.trim() {
        "auto" => Ok(AdpMode::Auto),
        "native" => Ok(AdpMode::ForceNative),
        other => match other.strip_prefix("emulate:") {
            Some(n) => match n.parse::<usize>() {
                Ok(s) if s >= 1 => Ok(AdpMode::ForceEmulate(s)),
                _ => Err(format!("bad slice count in '{other}'")),
            },
            None => Err(format!("unknown mode '{other}' (auto, native or emulate:S)")),
        },
    }
}

fn parse_modes(s: &str) -> Result<Vec<AdpMode>> {
    s.split(',').map(|m| parse_mode(m).map_err(CliError::Usage)).collect()
}

fn emit(csv: Option<&Path>, text: &str) -> Result<()> {
    match csv {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validated(config: AdpConfig) -> Result<AdpConfig> {
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn run_gemm(args: &GemmArgs) -> Result<()> {
    let config = validated(args.dispatch.config())?;
    let a = read_matrix(&args.a)?;
    let b = read_matrix(&args.b)?;
    let c = args.c.as_deref().map(read_matrix).transpose()?;
    let (out, trace) = adp_gemm(&a, &b, args.alpha, args.beta, c.as_ref(), &config)?;
    write_matrix(&args.out, &out)?;
    let json = trace_json(&trace).to_string();
    if let Some(p) = &args.trace {
        write_text(p, &format!("{json}\n"))?;
    }
    println!("{json}");
    Ok(())
}

fn run_esc(args: &EscArgs) -> Result<()> {
    let a = read_matrix(&args.a)?;
    let b = read_matrix(&args.b)?;
    let report = if args.exact {
        esc_exact(&a, &b, args.target_bits)?
    } else {
        let cfg =
            AdpConfig { esc_block_len: args.esc_block, target_mantissa_bits: args.target_bits, ..AdpConfig::default() };
        if a.as_slice().iter().chain(b.as_slice()).any(|v| !v.is_finite()) {
            return Err(ozadp_core::Error::InvalidArgument("the exponent span needs finite inputs".into()).into());
        }
        ozadp_core::adp::estimate_esc(&a, &b, &cfg)?
    };
    println!("method={}", if args.exact { "exact" } else { "coarsened" });
    println!("esc_bits={}", report.esc_bits);
    println!("slices={}", report.slices_required);
    println!("target_bits={}", report.target_bits);
    println!("window_bits={}", report.window_bits);
    Ok(())
}

fn csv_text(rows: impl IntoIterator<Item = String>) -> String {
    let mut text = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    text
}

fn run_test2(args: &Test2Args) -> Result<()> {
    let config = validated(args.dispatch.config())?;
    let bs: Vec<u32> = parse_u64_list(&args.b_list)
        .map_err(CliError::Usage)?
        .into_iter()
        .map(|b| u32::try_from(b).map_err(|_| CliError::Usage(format!("b = {b} is too large"))))
        .collect::<Result<_>>()?;
    let modes = parse_modes(&args.modes)?;
    let rows = grading::run_test2_sweep(args.n, &bs, &modes, args.seed, &config)?;
    emit(args.csv.as_deref(), &csv_text(rows.iter().map(|r| r.to_csv())))
}

fn run_uniform(args: &UniformArgs) -> Result<()> {
    let config = validated(args.dispatch.config())?;
    let sizes = parse_usize_list(&args.n_list).map_err(CliError::Usage)?;
    let modes = parse_modes(&args.modes)?;
    let seeds: Vec<u64> = (0..args.seeds.max(1)).map(|i| args.seed + i).collect();
    let points = grading::run_uniform_sweep(&sizes, &modes, &seeds, &config)?;
    emit(args.csv.as_deref(), &csv_text(points.iter().map(|p| p.row.to_csv())))?;
    for &mode in &modes {
        let label = grading::mode_label(mode);
        let sel: Vec<_> = points.iter().filter(|p| p.row.mode == label).collect();
        let fit = |f: &dyn Fn(&grading::UniformPoint) -> f64| {
            let pts: Vec<(f64, f64)> = sel.iter().map(|p| (p.row.n as f64, f(p))).collect();
            loglog_fit(&pts).map(|(s, _)| format!("{s:.3}")).unwrap_or_else(|_| "n/a".into())
        };
        eprintln!(
            "{label}: avg-error slope vs native {} vs exact {}; max-error slope vs exact {}; worst f(n) {:.3}",
            fit(&|p| p.vs_native.avg_err),
            fit(&|p| p.vs_exact.avg_err),
            fit(&|p| p.vs_exact.max_err),
            sel.iter().map(|p| p.bound_ratio).fold(0.0, f64::max)
        );
    }
    Ok(())
}

fn run_qr(args: &QrArgs) -> Result<()> {
    let config = validated(args.dispatch.config())?;
    let a = grading::gen_uniform_rect(args.m, args.n, args.seed, (0.0, 1.0));
    let result = geqrf_blocked(&a, args.panel, &config)?;
    let res = qr_residual(&a, &result)?;
    println!("relative_residual={:e}", res.relative);
    println!("absolute_residual={:e}", res.absolute);
    println!("orthogonality={:e}", res.orthogonality);
    println!("panels={}", result.panels());
    println!("gemm_calls={}", result.traces.len());
    if let Some(p) = &args.traces {
        let all: Vec<_> = result.traces.iter().map(trace_json).collect();
        write_text(p, &format!("{}\n", serde_json::Value::Array(all)))?;
    }
    emit(args.csv.as_deref(), &histogram_csv(&slice_histogram(&result.traces)))
}

fn run_selftest(args: &SelftestArgs) -> Result<()> {
    let results = selftest::run_all(args.scale.max(1));
    let mut failed = Vec::new();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))))
    }
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A pool that already exists (tests calling `run` twice) is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Gemm(a) => run_gemm(a),
        Command::Esc(a) => run_esc(a),
        Command::Grade(GradeCommand::Test2(a)) => run_test2(a),
        Command::Grade(GradeCommand::Uniform(a)) => run_uniform(a),
        Command::Qr(a) => run_qr(a),
        Command::Selftest(a) => run_selftest(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("ozadp: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_parse() {
        assert_eq!(parse_mode("auto"), Ok(AdpMode::Auto));
        assert_eq!(parse_mode("native"), Ok(AdpMode::ForceNative));
        assert_eq!(parse_mode("emulate:7"), Ok(AdpMode::ForceEmulate(7)));
        assert!(parse_mode("emulate:0").is_err());
        assert!(parse_mode("emulate").is_err());
        assert!(parse_mode("fast").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["ozadp", "--bogus"]), EXIT_USAGE);
        assert_eq!(
            run(["ozadp", "gemm", "--a", "/nonexistent/a", "--b", "/nonexistent/b", "--out", "/tmp/x"]),
            EXIT_USAGE
        );
        assert_eq!(CliError::Contract(ozadp_core::Error::InvalidArgument("x".into())).exit_code(), EXIT_CONTRACT);
        assert_eq!(CliError::CheckFailed("x".into()).exit_code(), EXIT_CHECK_FAILED);
    }
}
