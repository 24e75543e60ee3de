//! `fedmon`: one binary for the whole information system. Subcommands run
//! the broker service, reproduce the emulation and throughput experiments,
//! query a persisted store snapshot, and convert XML or NetLogger input to
//! JSON. Exit codes: 0 success, 1 usage error, 2 runtime error.

mod commands;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fedmon", version, about = "Federated monitoring information system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the broker service until interrupted.
    Broker(commands::broker::BrokerArgs),
    /// Run an infrastructure emulation and write its report.
    Emulate(commands::emulate::EmulateArgs),
    /// Sweep a pairs x message-size throughput grid.
    Bench(commands::bench::BenchArgs),
    /// Query a persisted store snapshot, printing matching records as JSON lines.
    Query(commands::query::QueryArgs),
    /// Convert XML or NetLogger input to JSON documents.
    Convert(commands::convert::ConvertArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version are successful exits; everything else is
            // a usage error
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Command::Broker(args) => commands::broker::run(args),
        Command::Emulate(args) => commands::emulate::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::Query(args) => commands::query::run(args),
        Command::Convert(args) => commands::convert::run(args),
    };
    if let Err(err) = outcome {
        eprintln!("fedmon: {err:#}");
        std::process::exit(2);
    }
}
