use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exal_cli::config::{describe, ConfigError, Params};
use exal_cli::{execute, schema_of, Invocation};

#[derive(Parser, Debug)]
#[command(name = "exal", version, about = "Explanation sampling experiments")]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommandArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the accepted keys and their defaults.
    #[arg(long)]
    list_params: bool,
    /// Parameter overrides as key=value.
    #[arg(value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw explanations of a formula.
    ExplainSample(CommandArgs),
    /// Distinct explanations against draws for several strategies.
    DiversityBench(CommandArgs),
    /// Probability bounds from explanations of a formula and its negation.
    BoundsBench(CommandArgs),
    /// Flow matching on the explanation MDP and decay-rate fitting.
    FlowTrain(CommandArgs),
    /// Multi-digit MNIST addition from sum labels.
    TrainMnist(CommandArgs),
    /// Grid shortest paths from path labels.
    TrainGrid(CommandArgs),
    /// Brute-force cross-checks on random fixtures.
    OracleCheck(CommandArgs),
}

impl Command {
    fn split(self) -> (&'static str, CommandArgs) {
        match self {
            Command::ExplainSample(a) => ("explain-sample", a),
            Command::DiversityBench(a) => ("diversity-bench", a),
            Command::BoundsBench(a) => ("bounds-bench", a),
            Command::FlowTrain(a) => ("flow-train", a),
            Command::TrainMnist(a) => ("train-mnist", a),
            Command::TrainGrid(a) => ("train-grid", a),
            Command::OracleCheck(a) => ("oracle-check", a),
        }
    }
}

const USAGE_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (name, args) = cli.command.split();
    let schema = schema_of(name).expect("every subcommand has a schema");
    if args.list_params {
        println!("{}", describe(schema));
        return ExitCode::SUCCESS;
    }
    let params = match Params::load(schema, args.config.as_deref(), &args.params) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    if cli.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(USAGE_ERROR);
    }
    let inv = Invocation {
        command: name.to_string(),
        seed: cli.seed,
        out_dir: cli.out_dir,
        workers: cli.workers,
        params,
    };
    match execute(&inv) {
        Ok(outcome) => {
            println!("{}", outcome.line);
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE_ERROR)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
