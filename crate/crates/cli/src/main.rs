use std::process::ExitCode;

use clap::Parser;
use lgrid_cli::args::Command;
use lgrid_cli::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    // Commands run on one thread; the bench hosts servers and wants more.
    let runtime = match cli.command {
        Command::Bench(_) => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build(),
        _ => tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build(),
    }
    .expect("tokio runtime");
    let mut stdout = std::io::stdout();
    match runtime.block_on(lgrid_cli::run(cli, &mut stdout)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lgrid: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
