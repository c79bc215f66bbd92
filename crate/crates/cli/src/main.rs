use std::process::ExitCode;

use clap::Parser;
use tclsim_cli::args::Cli;
use tclsim_cli::error::CliResult;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tclsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let (experiment, args) = cli.command.split();
    let cfg = args.resolve(experiment)?;
    let (report, written) = tclsim_cli::run(&cfg)?;
    for line in &report.summary {
        println!("{line}");
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {}", written.csv.display());
    if let Some(svg) = written.svg {
        println!("wrote {}", svg.display());
    }
    tclsim_cli::verdict(&report)
}
