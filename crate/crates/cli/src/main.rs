mod corpus;
mod output;
mod run;
mod verify;
mod weave;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_STATIC: u8 = 2;
pub const EXIT_REVERT: u8 = 3;
pub const EXIT_DISAGREE: u8 = 4;

#[derive(Parser)]
#[command(name = "gvc", version, about = "Gradual verification for GCL contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Statically verify a program and report residual checks.
    Verify {
        path: PathBuf,
        /// Write the verification report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Print the constraint systems handed to the prover.
        #[arg(long)]
        dump_constraints: bool,
    },
    /// Insert residual checks into a program.
    Weave {
        path: PathBuf,
        /// Report produced by `verify` for this exact file.
        #[arg(long, required_unless_present = "auto", conflicts_with = "auto")]
        report: Option<PathBuf>,
        /// Verify and weave in one step.
        #[arg(long)]
        auto: bool,
        /// Output file; a `<out>.map.json` sidecar is written next to it.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute a transaction script on the VM.
    Run {
        path: PathBuf,
        #[arg(long)]
        txs: PathBuf,
        /// Initial ledger JSON; missing slots start at 0.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        gas_limit: u64,
        #[arg(long)]
        gas_report: Option<PathBuf>,
        /// Implementations for the program's extern contracts.
        #[arg(long)]
        adversary: Option<PathBuf>,
        /// Debug mode: skip checks, boundary enforcement and permission tracking.
        #[arg(long)]
        unchecked: bool,
        /// Write the final ledger JSON here.
        #[arg(long)]
        ledger_out: Option<PathBuf>,
    },
    /// Verify, weave and cross-check every program in a directory.
    Corpus {
        dir: PathBuf,
        #[arg(long, default_value_t = gvc_core::oracle::DEFAULT_BOUND)]
        bound: u64,
        /// Harness self-test: run a VM image with its checks removed.
        #[arg(long, hide = true)]
        mutant: bool,
    },
}

fn main() -> ExitCode {
    // clap would exit 2 on bad arguments, which is the static-error code
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let code = match cli.command {
        Command::Verify {
            path,
            report,
            dump_constraints,
        } => verify::cmd_verify(&path, report.as_deref(), dump_constraints),
        Command::Weave {
            path,
            report,
            auto,
            output,
        } => weave::cmd_weave(&path, report.as_deref(), auto, output.as_deref()),
        Command::Run {
            path,
            txs,
            ledger,
            gas_limit,
            gas_report,
            adversary,
            unchecked,
            ledger_out,
        } => run::cmd_run(run::RunArgs {
            path: &path,
            txs: &txs,
            ledger: ledger.as_deref(),
            gas_limit,
            gas_report: gas_report.as_deref(),
            adversary: adversary.as_deref(),
            unchecked,
            ledger_out: ledger_out.as_deref(),
        }),
        Command::Corpus { dir, bound, mutant } => corpus::cmd_corpus(&dir, bound, mutant),
    };
    ExitCode::from(code)
}
