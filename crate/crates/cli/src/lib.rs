//! The `lgrid` command-line client: credential conversion, delegation with
//! local signing, job submission and monitoring, and the latency bench.

pub mod args;
pub mod bench;
pub mod cache;
pub mod commands;
pub mod error;
pub mod latency;

pub use args::Cli;
pub use error::{CliError, CliResult};

use args::Command;
use commands::Context;

/// Runs a parsed command line, writing reports to `out`.
pub async fn run(cli: Cli, out: &mut dyn std::io::Write) -> CliResult {
    let ctx = Context::from_env(cli.global);
    match &cli.command {
        Command::Convert(args) => commands::convert(args, out),
        Command::Delegate(args) => commands::delegate(&ctx, args, out).await,
        Command::Submit(args) => commands::submit(&ctx, args, out).await,
        Command::Status(args) => commands::status(&ctx, args, out).await,
        Command::Watch(args) => commands::watch(&ctx, args, out).await,
        Command::Output(args) => commands::output(&ctx, args, out).await,
        Command::Cancel(args) => commands::cancel(&ctx, &args.id, out).await,
        Command::Bench(args) => commands::bench(args, out).await,
    }
}
