use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "obsc", version, about = "Typestate and asset checker for smart contracts")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a source file and print its diagnostics.
    Check {
        file: PathBuf,
        /// Emit a JSON report instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Check a program, then execute an invocation script against it.
    Run { file: PathBuf, script: PathBuf },
    /// Check every `.obs` file in a directory against its `.expect` file.
    Corpus { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // --help and --version are not failures
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let code = match &cli.cmd {
        Cmd::Check { file, json } => obs_cli::cmd_check(file, *json, &mut out, &mut err),
        Cmd::Run { file, script } => obs_cli::cmd_run(file, script, &mut out, &mut err),
        Cmd::Corpus { dir } => obs_cli::cmd_corpus(dir, &mut out, &mut err),
    };
    ExitCode::from(code as u8)
}
