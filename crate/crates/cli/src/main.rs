//! `seqauction` command-line front end.

mod commands;
mod report;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seqauction::Error;

#[derive(Parser, Debug)]
#[command(name = "seqauction", version, about = "Sequential first-price item auctions")]
struct Cli {
    /// Worker threads for solving and verification (default: SEQAUCTION_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Include wall-clock timings in reports (they are left out so reruns are byte-identical).
    #[arg(long, global = true)]
    timing: bool,

    /// Write the result here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Solve an instance by backward induction.
    Solve(SolveArgs),
    /// Check a strategy profile for profitable one-shot deviations.
    Verify(VerifyArgs),
    /// VCG allocation, prices and augmenting paths.
    Vcg(InstanceArg),
    /// Augmenting-path forest and the item orderings it induces.
    Orderings(OrderingArgs),
    /// Search the augmenting-path orderings for one that replicates VCG.
    Conjecture(ConjectureArgs),
    /// Price-of-anarchy sweep over the chain construction, as CSV.
    Poa(PoaArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Thm1,
    Thm1Budgeted,
    Thm1BudgetAdditive,
    AppendixA,
    AppendixB,
    Identical,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Number of chain bidders.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    epsilon: Option<String>,
    /// Comma-separated chain values.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<String>>,
    #[arg(long)]
    grid_step: Option<String>,
    /// Coarse grid for the budgeted family (step 0.1).
    #[arg(long)]
    coarse: bool,
    /// Number of items of the identical-items family.
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Also write `<output>.profile.json` naming the built-in profile.
    #[arg(long, requires = "output")]
    with_profile: bool,
}

#[derive(Args, Debug)]
pub struct InstanceArg {
    instance: std::path::PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    MaxTotalUtility,
    MinPrice,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    instance: std::path::PathBuf,
    /// Sale order as comma-separated item names.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Rule::MaxTotalUtility)]
    rule: Rule,
    /// Record every surviving stage equilibrium along the path.
    #[arg(long)]
    enumerate: bool,
    #[arg(long, default_value_t = 2_000_000)]
    max_states: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    Thm1,
    Thm1Budgeted,
    VcgMimic,
    Solver,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Concrete,
    Abstract,
    Dual,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    instance: std::path::PathBuf,
    /// Profile to check (default: the instance family's own profile, else the solver's).
    #[arg(long, value_enum)]
    profile: Option<ProfileKind>,
    #[arg(long, value_enum, default_value_t = Mode::Concrete)]
    mode: Mode,
    #[arg(long, default_value_t = 4_000_000)]
    max_states: usize,
    /// Witnesses to include in the report.
    #[arg(long, default_value_t = 20)]
    max_witnesses: usize,
}

#[derive(Args, Debug)]
pub struct OrderingArgs {
    instance: std::path::PathBuf,
    #[arg(long, default_value_t = seqauction::ordering::DEFAULT_CAP)]
    cap: usize,
    /// Sample this many orderings when enumeration hits the cap.
    #[arg(long, default_value_t = 0)]
    sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct ConjectureArgs {
    #[command(flatten)]
    orderings: OrderingArgs,
    /// Test every ordering instead of stopping at the first witness.
    #[arg(long)]
    all: bool,
    /// Succeed when enumeration is exhaustive and finds no witness.
    #[arg(long)]
    expect_none: bool,
    #[arg(long, default_value_t = 2_000_000)]
    max_states: usize,
}

#[derive(Args, Debug)]
pub struct PoaArgs {
    #[arg(long, value_enum, default_value_t = Family::Thm1)]
    family: Family,
    #[arg(long, default_value_t = 1)]
    k_from: usize,
    #[arg(long, default_value_t = 6)]
    k_to: usize,
    /// Coarse grid for the budgeted family.
    #[arg(long)]
    coarse: bool,
    /// Also write a gnuplot script plotting the CSV.
    #[arg(long)]
    gnuplot_script: Option<std::path::PathBuf>,
}

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// The command ran but its success condition does not hold.
    pub const NEGATIVE: u8 = 1;
    pub const PARSE: u8 = 2;
    pub const CAPACITY: u8 = 3;
    pub const NO_EQUILIBRIUM: u8 = 4;
    pub const OTHER: u8 = 5;
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Schema { .. } => exit::PARSE,
        Error::Capacity(_) => exit::CAPACITY,
        Error::NoPureStageEquilibrium { .. } => exit::NO_EQUILIBRIUM,
        _ => exit::OTHER,
    }
}

fn workers(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("SEQAUCTION_WORKERS").ok()?.parse().ok())
        .filter(|&n| n > 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = workers(cli.workers) {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = commands::Context { timing: cli.timing, output: cli.output.clone() };
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Solve(a) => commands::solve(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
        Command::Vcg(a) => commands::vcg(&ctx, a),
        Command::Orderings(a) => commands::orderings(&ctx, a),
        Command::Conjecture(a) => commands::conjecture(&ctx, a),
        Command::Poa(a) => commands::poa(&ctx, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("seqauction: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_distinct_exit_codes() {
        assert_eq!(exit_code(&Error::Parse("x".into())), exit::PARSE);
        assert_eq!(exit_code(&Error::Schema { path: "items".into(), message: "x".into() }), exit::PARSE);
        assert_eq!(exit_code(&Error::Capacity("x".into())), exit::CAPACITY);
        assert_eq!(exit_code(&Error::NoPureStageEquilibrium { state: "s".into() }), exit::NO_EQUILIBRIUM);
        assert_eq!(exit_code(&Error::Domain("x".into())), exit::OTHER);
    }

    #[test]
    fn worker_flag_wins_over_environment() {
        assert_eq!(workers(Some(3)), Some(3));
        assert_eq!(workers(Some(0)), None);
    }
}
