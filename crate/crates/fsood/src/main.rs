use std::io::Write;
use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use fsood::cli::{self, Cli};
use fsood::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let result = cli::run(cli, &mut lock);
    let _ = lock.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Usage(_) = e {
                let mut cmd = Cli::command();
                cmd.build();
                let sub = std::env::args().nth(1).unwrap_or_default();
                if let Some(sc) = cmd.find_subcommand_mut(&sub) {
                    eprintln!("\n{}", sc.render_usage());
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
