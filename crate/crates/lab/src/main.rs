use std::process::ExitCode;

use clap::Parser;
use hyperwalk::commands::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let name = cli.command.name();
            let record = e.record(name);
            eprintln!("{record}");
            let dir = cli.out.clone().unwrap_or_else(|| "out".into());
            if std::fs::create_dir_all(&dir).is_ok() {
                let _ = std::fs::write(dir.join("error.json"), format!("{record:#}\n"));
            }
            ExitCode::from(if matches!(e, hyperwalk::commands::CmdError::Failed(_)) { 1 } else { 2 })
        }
    }
}
