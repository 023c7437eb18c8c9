//! `eventimpact` command-line front end.

mod commands;
mod curves;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Best-quote event analytics: classification, correlation estimators,
/// propagator and gap-kernel calibration, spread dynamics, simulation.
///
/// Prices and gaps in every output are in ticks, diffusion in ticks^2.
#[derive(Parser, Debug)]
#[command(name = "eventimpact", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Session trim in minutes, written `START,END`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trim(pub u32, pub u32);

fn parse_trim(s: &str) -> Result<Trim, String> {
    let (a, b) = s.split_once(',').ok_or("expected START,END in minutes")?;
    let n = |x: &str| x.trim().parse::<u32>().map_err(|_| format!("not a whole number of minutes: {x:?}"));
    Ok(Trim(n(a)?, n(b)?))
}

#[derive(Args, Debug, Clone)]
pub struct Input {
    /// Event CSV.
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest lag L, in events.
    #[arg(long, default_value_t = 1000)]
    pub max_lag: usize,
    /// Minutes dropped at the start and end of each session. Defaults to 0,0
    /// for stats and propagate and 30,40 for gaps, closure and spread.
    #[arg(long, value_parser = parse_trim, value_name = "START,END")]
    pub trim: Option<Trim>,
    #[arg(long, default_value_t = 0.01)]
    pub tick_size: f64,
    /// Symbol; defaults to the input file stem.
    #[arg(long)]
    pub symbol: Option<String>,
    /// Seed of the day-block bootstrap.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Bootstrap replicates for standard errors.
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    /// Worker threads. Estimators run sequentially, so results do not depend
    /// on it; the value is recorded in the output metadata.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug, Clone)]
pub struct Model {
    /// Ridge weight; the scale-aware default when omitted, 0 for plain inversion.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Gap-kernel length L_K, in events.
    #[arg(long, default_value_t = 100)]
    pub kernel_lag: usize,
    /// Diffusion offset D0 added to the closure, in ticks^2.
    #[arg(long, default_value_t = 0.04)]
    pub d0: f64,
    /// Spread reversion rate per event; fitted by grid search when omitted.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify raw best quotes and trades into the event CSV.
    Ingest {
        /// Best bid/offer CSV: timestamp_ns,bid_price,bid_size,ask_price,ask_size.
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        /// Trades CSV: timestamp_ns,price,size,aggressor_side.
        #[arg(long, value_name = "CSV")]
        trades: PathBuf,
        /// Event CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "SYM")]
        symbol: String,
        #[arg(long, default_value_t = 0.01)]
        tick_size: f64,
        /// Offset of exchange local time from UTC, in minutes.
        #[arg(long, default_value_t = -300, allow_hyphen_values = true)]
        utc_offset: i32,
        /// Per-day classification counts as JSON; standard output when omitted.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Correlations C and Π, responses R and R^S, and diffusion D.
    Stats {
        #[command(flatten)]
        input: Input,
        /// Also write the long-format CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Multi-event propagators G, the market-order baseline and implied D.
    Propagate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: Model,
    },
    /// Realized gaps Δ^R, gap kernels K, K̃, κ and the impact decomposition.
    Gaps {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: Model,
    },
    /// Empirical D against the constant-gap and closure predictions.
    Closure {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: Model,
    },
    /// Spread response model with α given or fitted.
    Spread {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: Model,
    },
    /// Generate a synthetic event CSV from a key = value config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Every curve family as JSON plus one long CSV, into a directory.
    Report {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: Model,
    },
    /// Run the built-in oracle suite and write its artifacts.
    Selftest {
        /// Artifact directory.
        #[arg(long, default_value = "selftest-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 200_000)]
        events: usize,
        #[arg(long, default_value_t = 200)]
        max_lag: usize,
        #[arg(long, default_value_t = 30)]
        kernel_lag: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { input, trades, out, symbol, tick_size, utc_offset, counts } => {
            commands::ingest(&input, &trades, &out, symbol, tick_size, utc_offset, counts.as_deref())
        }
        Command::Stats { input, csv } => commands::stats(&input, csv.as_deref()),
        Command::Propagate { input, model } => commands::propagate(&input, &model),
        Command::Gaps { input, model } => commands::gaps(&input, &model),
        Command::Closure { input, model } => commands::closure(&input, &model),
        Command::Spread { input, model } => commands::spread(&input, &model),
        Command::Simulate { config, out, seed } => commands::simulate(&config, &out, seed),
        Command::Report { input, model } => commands::report(&input, &model),
        Command::Selftest { out, events, max_lag, kernel_lag, seed } => {
            commands::selftest(&out, events, max_lag, kernel_lag, seed)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind, "message": e.message }));
            ExitCode::FAILURE
        }
    }
}
