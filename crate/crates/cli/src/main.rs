//! `kar`: reproducible kernel anchor regression campaigns.

mod args;
mod manifest;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let (plan, out, jobs) = match cli.command {
        Command::Replay(r) => match manifest::load(&r.manifest) {
            Ok(m) => (m.config, r.out.unwrap_or(m.out), r.jobs),
            Err(e) => return fail(e),
        },
        other => match args::resolve(other) {
            Ok(resolved) => resolved,
            Err(e) => return fail(e),
        },
    };
    match run::execute(&plan, &out, jobs, &argv) {
        Ok(run::Status::Completed) => ExitCode::SUCCESS,
        Ok(run::Status::Failed) => ExitCode::from(2),
        Err(e) => fail(e),
    }
}

fn fail(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    ExitCode::FAILURE
}
