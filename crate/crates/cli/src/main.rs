use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use hierperc_cli::{run, Cli, Failure};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(stdout) => {
            if let Some(text) = stdout {
                let _ = std::io::stdout().lock().write_all(text.as_bytes());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::CheckFailed(_)) => ExitCode::from(2),
    }
}
