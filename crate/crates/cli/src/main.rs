use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairshare::apmodel::preset;
use fairshare::distributions::Family;
use fairshare::engine::{run, Scenario};
use fairshare::experiment::{
    fit_trace, run_experiment, run_sweep, validate, write_fit_csv, write_pp_csv, write_results_csv,
    write_validation_csv,
};
use fairshare::scenario::parse_scenario;
use fairshare::schedulers::Policy;
use fairshare::traffic::{read_flow_trace, write_flow_trace};
use fairshare::{Error, Result};

/// Simulates guest sharing of a home broadband uplink.
#[derive(Debug, Parser)]
#[command(name = "fairshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run matched baseline/treatment pairs and print impact rows.
    Run(RunArgs),
    /// Compare reference and independent seeds of a guest profile generator.
    Validate(ValidateArgs),
    /// Fit distributions to the flows of a trace CSV.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Base seed; run r uses seed + r.
    #[arg(long, env = "FAIRSHARE_SEED")]
    seed: Option<u64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Every policy, preset and load band, using the scenario as a base.
    #[arg(long)]
    sweep: bool,
    /// Also write the guest flows of the scenario's first run as a trace CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Guest profile 1-4; all four when omitted.
    #[arg(long)]
    profile: Option<u8>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Trace CSV with start_s, bytes, duration_s columns.
    trace: PathBuf,
    /// weibull, generalized-pareto or lognormal; per-characteristic defaults
    /// when omitted.
    #[arg(long)]
    family: Option<String>,
    /// Where to write P-P points.
    #[arg(long)]
    pp_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

const DEFAULT_SEED: u64 = 42;

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "config" => 3,
        "invalid-input" => 4,
        "insufficient-data" => 5,
        "degenerate-fit" => 6,
        "calibration" => 7,
        "undefined-impact" => 8,
        "logic" => 9,
        _ => 10,
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let base = match &args.scenario {
        Some(path) => parse_scenario(path)?,
        None if args.sweep => Scenario::new(preset("AP1")?, Policy::DropTail),
        None => return Err(Error::Config("--scenario is required unless --sweep is given".into())),
    };
    let seed = args.common.seed.unwrap_or(if args.scenario.is_some() { base.seed } else { DEFAULT_SEED });
    if let Some(path) = &args.trace_out {
        let report = run(&base.with_seed(seed))?;
        write_flow_trace(&report.guest_trace(), BufWriter::new(File::create(path)?))?;
    }
    let results =
        if args.sweep { run_sweep(&base, args.runs, seed)? } else { vec![run_experiment(&base, args.runs, seed)?] };
    log::info!("{} scenario(s), {} run(s) each", results.len(), args.runs);
    write_results_csv(results.iter().flat_map(|r| &r.rows), output(args.common.out.as_deref())?)?;
    Ok(())
}

fn validate_cmd(args: ValidateArgs) -> Result<()> {
    let seed = args.common.seed.unwrap_or(DEFAULT_SEED);
    let ids: Vec<u8> = match args.profile {
        Some(id) => vec![id],
        None => (1..=4).collect(),
    };
    let results = ids.iter().map(|&id| validate(id, args.runs, seed)).collect::<Result<Vec<_>>>()?;
    write_validation_csv(&results, output(args.common.out.as_deref())?)
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let family = args.family.as_deref().map(str::parse::<Family>).transpose()?;
    let flows = read_flow_trace(File::open(&args.trace)?)?;
    let fits = fit_trace(&flows, family)?;
    write_fit_csv(&fits, output(args.out.as_deref())?)?;
    if let Some(path) = &args.pp_out {
        write_pp_csv(&fits, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run_cmd(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
