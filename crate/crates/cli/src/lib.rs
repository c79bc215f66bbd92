//! Command-line experiments built on `tclsim-core`.
//!
//! Every run resolves a [`RunConfig`](config::RunConfig) from built-in
//! defaults, an optional JSON file and flags, then writes a CSV table and,
//! for plotting experiments, an SVG rendering of the same series.

pub mod args;
pub mod config;
pub mod error;
pub mod experiments;
pub mod svg;
pub mod table;

use std::fs;
use std::path::PathBuf;

use config::RunConfig;
use error::{CliError, CliResult};
use experiments::Report;

/// Files produced by a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written {
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
}

pub fn write_outputs(cfg: &RunConfig, report: &Report) -> CliResult<Written> {
    let dir = &cfg.output.out_dir;
    fs::create_dir_all(dir)?;
    let stem = report.experiment.stem();
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, report.table.to_csv())?;
    let svg = match (&report.plot, cfg.output.svg) {
        (Some(plot), true) => {
            let path = dir.join(format!("{stem}.svg"));
            fs::write(&path, plot.render())?;
            Some(path)
        }
        _ => None,
    };
    Ok(Written { csv, svg })
}

/// Runs the experiment and writes its outputs.
pub fn run(cfg: &RunConfig) -> CliResult<(Report, Written)> {
    let report = experiments::execute(cfg)?;
    let written = write_outputs(cfg, &report)?;
    Ok((report, written))
}

/// Positivity breaches and failed checks as errors, breaches first.
pub fn verdict(report: &Report) -> CliResult<()> {
    if !report.breaches.is_empty() {
        return Err(CliError::Numerical(format!("positivity breach in {}", report.breaches.join(", "))));
    }
    let failed = report.failed_checks();
    if !failed.is_empty() {
        return Err(CliError::Acceptance(failed.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect()));
    }
    Ok(())
}
