//! Command-line front end for the holomux library: image ingestion, target
//! preparation, generation runs, replay metrics, convergence and timing
//! experiments, and theory validation tables.
//!
//! Every command writes its full configuration to `manifest.txt` in the
//! output directory, and identical configurations produce byte-identical
//! outputs.

mod commands;
mod imageio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl From<holomux::GenError> for CliError {
    fn from(e: holomux::GenError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<holomux::MetricsError> for CliError {
    fn from(e: holomux::MetricsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<holomux::TheoryError> for CliError {
    fn from(e: holomux::TheoryError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<holomux::FieldError> for CliError {
    fn from(e: holomux::FieldError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Ospr,
    Sttm,
    Hybrid,
}

#[derive(Debug, Parser)]
#[command(
    name = "holomux",
    version,
    about = "Time-multiplexed hologram generation benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate subframes for one configuration and simulate their replay.
    Generate(RunArgs),
    /// Sweep subframe count N and record mean/std replay MSE per N.
    Convergence(RunArgs),
    /// Measure median generation time for one configuration.
    Bench(RunArgs),
    /// Emit closed-form error tables, distribution fits, and the
    /// quantization scatter for the configured target.
    Theory(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
struct RunArgs {
    /// Input image (8-bit grayscale PGM or PNG); a procedural test image is
    /// used when omitted.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Output directory; created if missing. All outputs land here.
    #[arg(long)]
    out: PathBuf,

    /// Target width and height (powers of two). Loaded images are resized
    /// by area averaging; omitted sizes keep the image's native dimensions.
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    size: Option<Vec<usize>>,

    /// Subframe generator.
    #[arg(long, value_enum, default_value = "ospr")]
    algorithm: AlgorithmArg,

    /// Subframes per set (generate/convergence/bench) or maximum N for the
    /// theory table. Defaults: 12 for generation commands, 64 for theory.
    #[arg(long)]
    n: Option<usize>,

    /// Independent restart sets (hybrid only).
    #[arg(long)]
    sets: Option<usize>,

    /// Device phase levels.
    #[arg(long, default_value_t = 2)]
    levels: usize,

    /// Runs to average (convergence) or timing repeats (bench, minimum 5).
    #[arg(long)]
    runs: Option<usize>,

    /// Base seed; every random draw derives from it deterministically.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Score replay at unit gain instead of the least-squares optimum.
    #[arg(long)]
    no_gain: bool,

    /// Assert the command's validity invariants; violations exit with
    /// status 3.
    #[arg(long)]
    check: bool,
}

/// Validated run configuration; echoed verbatim into the manifest.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub size: Option<(usize, usize)>,
    pub algorithm: AlgorithmArg,
    pub n: usize,
    pub sets: usize,
    pub levels: usize,
    pub runs: usize,
    pub seed: u64,
    pub apply_gain: bool,
    pub check: bool,
}

impl RunConfig {
    fn from_args(command: &'static str, args: RunArgs) -> Result<Self, CliError> {
        let size = match args.size.as_deref() {
            None => None,
            Some([w, h]) => {
                if !w.is_power_of_two() || !h.is_power_of_two() {
                    return Err(CliError::Config(format!(
                        "--size must be powers of two, got {w} {h}"
                    )));
                }
                Some((*w, *h))
            }
            Some(_) => unreachable!("clap enforces two values"),
        };
        if args.levels < 2 {
            return Err(CliError::Config(format!(
                "--levels must be at least 2, got {}",
                args.levels
            )));
        }
        let n = args.n.unwrap_or(if command == "theory" { 64 } else { 12 });
        if n < 1 {
            return Err(CliError::Config("--n must be at least 1".into()));
        }
        let sets = match (args.algorithm, args.sets) {
            (AlgorithmArg::Hybrid, Some(s)) if s >= 1 => s,
            (AlgorithmArg::Hybrid, Some(_)) => {
                return Err(CliError::Config("--sets must be at least 1".into()))
            }
            (AlgorithmArg::Hybrid, None) => {
                return Err(CliError::Config(
                    "--sets is required for the hybrid algorithm".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(CliError::Config(
                    "--sets applies to the hybrid algorithm only".into(),
                ))
            }
            (_, None) => 1,
        };
        let runs = args.runs.unwrap_or(match command {
            "convergence" => 20,
            "bench" => 5,
            _ => 1,
        });
        if runs < 1 {
            return Err(CliError::Config("--runs must be at least 1".into()));
        }
        if command == "bench" && runs < 5 {
            return Err(CliError::Config(
                "bench medians need at least 5 repeats".into(),
            ));
        }
        Ok(RunConfig {
            command,
            input: args.input,
            out: args.out,
            size,
            algorithm: args.algorithm,
            n,
            sets,
            levels: args.levels,
            runs,
            seed: args.seed,
            apply_gain: !args.no_gain,
            check: args.check,
        })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => commands::generate(RunConfig::from_args("generate", args)?),
        Command::Convergence(args) => {
            commands::convergence(RunConfig::from_args("convergence", args)?)
        }
        Command::Bench(args) => commands::bench(RunConfig::from_args("bench", args)?),
        Command::Theory(args) => commands::theory(RunConfig::from_args("theory", args)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> RunArgs {
        let mut argv = vec!["holomux", "generate", "--out", "o"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Generate(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn exit_codes_map_by_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Io("x".into()).exit_code(), 2);
        assert_eq!(CliError::Check("x".into()).exit_code(), 3);
    }

    #[test]
    fn size_must_be_power_of_two() {
        let err = RunConfig::from_args("generate", args(&["--size", "100", "100"])).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        let ok = RunConfig::from_args("generate", args(&["--size", "128", "64"])).unwrap();
        assert_eq!(ok.size, Some((128, 64)));
    }

    #[test]
    fn hybrid_requires_sets_and_others_reject_it() {
        assert!(RunConfig::from_args("generate", args(&["--algorithm", "hybrid"])).is_err());
        assert!(RunConfig::from_args("generate", args(&["--sets", "3"])).is_err());
        let ok = RunConfig::from_args(
            "generate",
            args(&["--algorithm", "hybrid", "--sets", "3", "--n", "4"]),
        )
        .unwrap();
        assert_eq!((ok.sets, ok.n), (3, 4));
    }

    #[test]
    fn per_command_defaults() {
        assert_eq!(RunConfig::from_args("generate", args(&[])).unwrap().n, 12);
        assert_eq!(RunConfig::from_args("theory", args(&[])).unwrap().n, 64);
        assert_eq!(
            RunConfig::from_args("convergence", args(&[])).unwrap().runs,
            20
        );
        assert_eq!(RunConfig::from_args("bench", args(&[])).unwrap().runs, 5);
        assert!(RunConfig::from_args("bench", args(&["--runs", "3"])).is_err());
    }
}
