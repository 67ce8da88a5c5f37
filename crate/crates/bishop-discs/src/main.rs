use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use bishop_discs::cli::{resolve, run_command, write_outputs, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> bishop_discs::Result<bool> {
        let (cfg, out) = resolve(&cli)?;
        let report = run_command(cli.command, &cfg)?;
        let files = write_outputs(&report, &out)?;
        // a closed stdout (e.g. piped into `head`) must not change the exit status
        let mut out = std::io::stdout().lock();
        let _ = write!(out, "{}", report.summary());
        for f in files {
            let _ = writeln!(out, "wrote {}", f.display());
        }
        Ok(report.passed)
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
