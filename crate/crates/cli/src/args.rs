use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tclsim_core::GeneratorKind;

use crate::config::{Experiment, InitialSpec, RunConfig, SolverMethod};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "tclsim", version, about = "TCL master equation experiments for a qubit in a Lorentzian reservoir")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Excited population for |e> and the equal superposition, TCL vs closed form.
    Figure1(RunArgs),
    /// Exact, multiscale and ordinary generators side by side.
    Figure2(RunArgs),
    /// Table of singular times for the exact and multiscale generators.
    SingularTimes(RunArgs),
    /// Convergence order of the multiscale singular times in eps.
    ErrorOrder(RunArgs),
    /// Residual of the multiscale approximants in the amplitude equation.
    Residuals(RunArgs),
    /// One generator, initial state and solver of your choice.
    Custom(RunArgs),
    /// Run whatever experiment the config file names.
    Run(RunArgs),
}

impl Command {
    pub fn split(&self) -> (Option<Experiment>, &RunArgs) {
        match self {
            Command::Figure1(a) => (Some(Experiment::Figure1), a),
            Command::Figure2(a) => (Some(Experiment::Figure2), a),
            Command::SingularTimes(a) => (Some(Experiment::SingularTimes), a),
            Command::ErrorOrder(a) => (Some(Experiment::ErrorOrder), a),
            Command::Residuals(a) => (Some(Experiment::Residuals), a),
            Command::Custom(a) => (Some(Experiment::Custom), a),
            Command::Run(a) => (None, a),
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// e, sup, or amplitudes ce0,cg0 (complex literals allowed).
    #[arg(long)]
    pub initial: Option<InitialSpec>,
    /// Final time in tau = lambda t units.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Number of grid points.
    #[arg(long)]
    pub points: Option<usize>,
    /// det or nmqj.
    #[arg(long)]
    pub solver: Option<SolverMethod>,
    #[arg(long)]
    pub ntraj: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, overrides_with = "no_svg")]
    pub svg: bool,
    #[arg(long, overrides_with = "svg")]
    pub no_svg: bool,
    /// Generator for `custom`: exact, ms1, ms2, ord2, ord4.
    #[arg(long)]
    pub generator: Option<GeneratorKind>,
    /// Comma-separated eps values.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Comma-separated residual orders (0, 1, 2).
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Residual probe time in slow-time units.
    #[arg(long)]
    pub t_probe: Option<f64>,
    /// Number of singular times to list.
    #[arg(long)]
    pub rows: Option<usize>,
}

impl RunArgs {
    /// Built-in defaults, then the config file, then flags.
    pub fn resolve(&self, experiment: Option<Experiment>) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(e) = experiment {
            cfg.experiment = e;
        }
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.gamma0 => cfg.params.gamma0);
        set!(self.lambda => cfg.params.lambda);
        set!(self.initial => cfg.initial);
        set!(self.t_end => cfg.grid.t_end);
        set!(self.points => cfg.grid.n_points);
        set!(self.solver => cfg.solver.method);
        set!(self.ntraj => cfg.solver.n_traj);
        set!(self.seed => cfg.solver.seed);
        set!(self.out_dir => cfg.output.out_dir);
        set!(self.generator => cfg.study.generator);
        set!(self.eps => cfg.study.eps);
        set!(self.orders => cfg.study.orders);
        set!(self.t_probe => cfg.study.t_probe);
        set!(self.rows => cfg.study.rows);
        if self.svg {
            cfg.output.svg = true;
        } else if self.no_svg {
            cfg.output.svg = false;
        }
        Ok(cfg)
    }
}
