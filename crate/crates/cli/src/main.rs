use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stf_cli::{commands, CliError, GlobalOptions, RunConfig};

const CONFIG_HELP: &str = "\
Configuration is a JSON document with one section per subcommand
(factorize, forecast, evaluate, atom_scan, synth) and a top-level seed.
The full schema ships as schema/config.schema.json. Defaults:
  seed 0
  factorize.solver: outer_iters 100, inner_iters 50, tol 1e-8,
    schedule {kind: diminishing} with c = 1/(2|W'W|+1), project_nonneg true,
    gamma0 1.0, order nonneg_last
  factorize.model: lambda_w 0, lambda_wp 0
  penalty: {kind: none|ridge|lasso|soft_freq|hard_freq, lambda, R, mask}
  forecast.encode / atom_scan.encode: iters 500, constant 1/L step,
    gamma0 1.0, order nonneg_last
  synth: spec {d 64, t 163, freqs [14, 6], sigma 0}, grid [8, 8]
Relative paths resolve against the configuration file's directory.
Environment: STF_LOG = error | warn | info | debug (default warn).
Exit codes: 0 success, 2 usage or input error, 3 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "stf", version, about = "Supervised semi-nonnegative factorization for spatio-temporal forecasting", after_help = CONFIG_HELP)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for grid sweeps.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Write tensors in the little-endian binary layout instead of CSV.
    #[arg(long, global = true)]
    binary: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit W, W' and H (one model, or one per grid point).
    Factorize,
    /// Encode the full auxiliary record and predict the missing period.
    Forecast,
    /// NSE of a prediction tensor against the truth.
    Evaluate,
    /// Rank single-atom removals by forecast NSE.
    AtomScan,
    /// Generate the two-tone synthetic tensors.
    Synth,
}

fn init_logging() -> Result<(), CliError> {
    let level = std::env::var("STF_LOG").unwrap_or_else(|_| "warn".to_string());
    if !matches!(level.as_str(), "error" | "warn" | "info" | "debug") {
        return Err(CliError::input(format!(
            "STF_LOG must be one of error, warn, info, debug; got `{level}`"
        )));
    }
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_logging()?;
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if matches!(cli.command, Command::Synth) => RunConfig::default(),
        None => return Err(CliError::input("--config is required for this subcommand")),
    };
    if cli.jobs == 0 {
        return Err(CliError::input("--jobs must be at least 1"));
    }
    let opts = GlobalOptions { out: cli.out, jobs: cli.jobs, binary: cli.binary, seed: cli.seed };
    match cli.command {
        Command::Factorize => {
            let points = commands::cmd_factorize(&cfg, &opts)?;
            for p in points {
                let status = match (p.final_objective, &p.error) {
                    (Some(f), _) => format!("objective {f}"),
                    (None, Some(e)) => format!("failed: {e}"),
                    (None, None) => "no objective".into(),
                };
                let dir = if p.dir == "." { opts.out.clone() } else { opts.out.join(&p.dir) };
                println!("{}\t{status}", dir.display());
            }
        }
        Command::Forecast => {
            let m = commands::cmd_forecast(&cfg, &opts)?;
            match m.nse {
                Some(v) => println!("horizon {}\tnse {v}", m.horizon),
                None => println!("horizon {}", m.horizon),
            }
        }
        Command::Evaluate => println!("nse {}", commands::cmd_evaluate(&cfg, &opts)?.nse),
        Command::AtomScan => print!("{}", commands::scan_to_csv(&commands::cmd_atom_scan(&cfg, &opts)?)),
        Command::Synth => {
            for f in commands::cmd_synth(&cfg, &opts)?.files {
                println!("{}", opts.out.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
