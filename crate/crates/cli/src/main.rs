use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nbshift_cli::{exit_code, run, Command, Params, RunConfig};

#[derive(Parser)]
#[command(name = "nbshift", version, about = "Factor maps and diagnostics for nonsingular Bernoulli shifts")]
struct Cli {
    #[command(subcommand)]
    group: Group,
}

#[derive(Subcommand)]
enum Group {
    /// Measure diagnostics: Kakutani shift sums, Doeblin bound, good blocks.
    Measure {
        #[command(subcommand)]
        action: MeasureAction,
    },
    /// The i.i.d. factor pipeline on a sampled window.
    Factor {
        #[command(subcommand)]
        action: FactorAction,
    },
    /// Marker and matching combinatorics.
    Match {
        #[command(subcommand)]
        action: MatchAction,
    },
    /// Step-density families, the coordinate map and ratio sets.
    Typeiii {
        #[command(subcommand)]
        action: TypeiiiAction,
    },
    /// Blocking, Hellinger sums and the ergodic-index table.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
}

#[derive(Args)]
struct Leaf {
    /// TOML file with default parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

#[derive(Subcommand)]
enum MeasureAction {
    Check(Leaf),
}

#[derive(Subcommand)]
enum FactorAction {
    Run(Leaf),
}

#[derive(Subcommand)]
enum MatchAction {
    Run(Leaf),
}

#[derive(Subcommand)]
enum TypeiiiAction {
    Ratios(Leaf),
}

#[derive(Subcommand)]
enum IndexAction {
    Scan(Leaf),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, leaf) = match cli.group {
        Group::Measure { action: MeasureAction::Check(l) } => (Command::Measure, l),
        Group::Factor { action: FactorAction::Run(l) } => (Command::Factor, l),
        Group::Match { action: MatchAction::Run(l) } => (Command::Match, l),
        Group::Typeiii { action: TypeiiiAction::Ratios(l) } => (Command::Typeiii, l),
        Group::Index { action: IndexAction::Scan(l) } => (Command::Index, l),
    };
    let params = match &leaf.config {
        Some(path) => match Params::from_file(path) {
            Ok(mut base) => {
                base.overlay(&leaf.params);
                base
            }
            Err(e) => {
                eprintln!("nbshift: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => leaf.params,
    };
    let mut config = RunConfig::new(command, params);
    match run(&mut config) {
        Ok(report) => {
            for m in &report.metrics {
                println!("{} {} = {} ({})", if m.pass { "PASS" } else { "FAIL" }, m.name, m.value, m.tolerance);
            }
            println!("report written to {}", config.params.out_dir().display());
            ExitCode::from(exit_code(&report) as u8)
        }
        Err(e) => {
            eprintln!("nbshift: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
