mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gimrl::{AgentKind, Task};

#[derive(Parser)]
#[command(name = "gimrl", version, about = "Itemset mining with a deep Q-network agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine patterns with an agent and write the run directory.
    Mine(MineArgs),
    /// Enumerate the exact pattern set with a classical miner.
    Baseline(BaselineArgs),
    /// Report how much of a reference pattern file a result covers.
    Compare(CompareArgs),
    /// Train on the first 60% of transactions, transfer, retrain on the rest.
    Transfer(TransferArgs),
    /// Repeat runs over a grid of configuration values.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
pub struct DataArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// Transaction database in SPMF format.
    #[arg(long)]
    pub data: PathBuf,
    /// Read `items:total:utilities` lines.
    #[arg(long)]
    pub utility_format: bool,
    /// Threshold in percent of transactions (FI, AR) or of total utility (HUI).
    #[arg(long, required_unless_present = "threshold_abs", conflicts_with = "threshold_abs")]
    pub threshold: Option<f64>,
    /// Threshold in absolute support count or utility.
    #[arg(long)]
    pub threshold_abs: Option<u64>,
    /// Minimum confidence in percent; required for AR.
    #[arg(long)]
    pub conf: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Published hyperparameters.
    PaperAppc,
    /// Small budget and network for databases of a few hundred transactions.
    Desk,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "paper-appc")]
    pub preset: Preset,
    /// JSON object of configuration fields applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_agent)]
    pub agent: Option<AgentKind>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record per-episode wall time in the episode log.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "gimrl_out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Abort after exploring this many candidates.
    #[arg(long, default_value_t = gimrl::oracle::DEFAULT_CANDIDATE_CAP)]
    pub cap: usize,
    #[arg(long, default_value = "gimrl_baseline")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Pattern file produced by `mine`.
    #[arg(long)]
    pub found: PathBuf,
    /// Pattern file produced by `baseline`.
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Restart batch-norm running statistics on the transferred network.
    #[arg(long)]
    pub reset_bn: bool,
    #[arg(long, default_value = "gimrl_transfer")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// JSON object mapping configuration fields to lists of values.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Also report the steps needed to reach this many unique patterns.
    #[arg(long)]
    pub target_count: Option<usize>,
    #[arg(long, default_value = "gimrl_sweep")]
    pub out: PathBuf,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: gimrl::Error| e.to_string())
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    s.parse().map_err(|e: gimrl::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let outcome = commands::configure_threads().and_then(|()| match cli.command {
        Command::Mine(a) => commands::mine(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Compare(a) => commands::compare(a),
        Command::Transfer(a) => commands::transfer(a),
        Command::Sweep(a) => commands::sweep(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
