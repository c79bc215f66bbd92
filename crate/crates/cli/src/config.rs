use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use tclsim_core::analysis::{ResidualOrder, DEFAULT_EPS_GRID};
use tclsim_core::{make_params, GeneratorKind, InitialState, PhysicalParams, TimeGrid};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Figure1,
    Figure2,
    SingularTimes,
    ErrorOrder,
    Residuals,
    Custom,
}

impl Experiment {
    /// Stem used for output file names.
    pub fn stem(self) -> &'static str {
        match self {
            Experiment::Figure1 => "figure1",
            Experiment::Figure2 => "figure2",
            Experiment::SingularTimes => "singular_times",
            Experiment::ErrorOrder => "error_order",
            Experiment::Residuals => "residuals",
            Experiment::Custom => "custom",
        }
    }
}

/// `e`, `superposition` (alias `sup`) or explicit amplitudes `ce0,cg0`.
/// Amplitudes accept complex literals such as `0.6` or `0.8i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitialSpec {
    Excited,
    Superposition,
    Amplitudes(Complex64, Complex64),
}

impl InitialSpec {
    pub fn state(&self) -> CliResult<InitialState> {
        Ok(match *self {
            InitialSpec::Excited => InitialState::excited(),
            InitialSpec::Superposition => InitialState::superposition(),
            InitialSpec::Amplitudes(ce, cg) => InitialState::new(ce, cg)?,
        })
    }
}

impl FromStr for InitialSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "e" | "excited" => Ok(InitialSpec::Excited),
            "sup" | "superposition" => Ok(InitialSpec::Superposition),
            other => {
                let (a, b) = other
                    .split_once(',')
                    .ok_or_else(|| format!("initial state `{other}`: expected e, sup or ce0,cg0"))?;
                let parse = |x: &str| {
                    Complex64::from_str(x.trim()).map_err(|_| format!("cannot parse amplitude `{}`", x.trim()))
                };
                Ok(InitialSpec::Amplitudes(parse(a)?, parse(b)?))
            }
        }
    }
}

impl TryFrom<String> for InitialSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialSpec::Excited => f.write_str("e"),
            InitialSpec::Superposition => f.write_str("superposition"),
            InitialSpec::Amplitudes(a, b) => write!(f, "{a},{b}"),
        }
    }
}

impl From<InitialSpec> for String {
    fn from(s: InitialSpec) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    #[serde(alias = "det")]
    Deterministic,
    Nmqj,
}

impl FromStr for SolverMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(SolverMethod::Deterministic),
            "nmqj" => Ok(SolverMethod::Nmqj),
            _ => Err(format!("unknown solver `{s}` (expected det|nmqj)")),
        }
    }
}

mod kind_name {
    use serde::{Deserialize, Deserializer, Serializer};
    use tclsim_core::GeneratorKind;

    pub fn serialize<S: Serializer>(k: &GeneratorKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(k.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GeneratorKind, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSpec {
    pub gamma0: f64,
    pub lambda: f64,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        Self { gamma0: 10.0, lambda: 1.0 }
    }
}

/// Output grid in `tau = lambda t` units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub t_end: f64,
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_end: 10.0, n_points: 1001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub method: SolverMethod,
    pub n_traj: u64,
    pub seed: u64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { method: SolverMethod::Deterministic, n_traj: 100_000, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub out_dir: PathBuf,
    pub svg: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("."), svg: true }
    }
}

/// Settings used only by some experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    /// Generator for `custom`.
    #[serde(with = "kind_name")]
    pub generator: GeneratorKind,
    /// `eps` values for `error_order` and `residuals`.
    pub eps: Vec<f64>,
    /// Residual orders, each 0, 1 or 2.
    pub orders: Vec<usize>,
    /// Probe time for `residuals`, in slow-time units.
    pub t_probe: f64,
    /// Number of singular times listed by `singular_times`.
    pub rows: usize,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Exact,
            eps: DEFAULT_EPS_GRID.to_vec(),
            orders: vec![0, 1, 2],
            t_probe: 1.0,
            rows: 5,
        }
    }
}

/// Full description of one run. Defaults reproduce the standard figures at
/// `gamma0 = 10`, `lambda = 1`, `tau` in `[0, 10]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub params: ParamsSpec,
    pub initial: InitialSpec,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub output: OutputSpec,
    pub study: StudySpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Figure1,
            params: ParamsSpec::default(),
            initial: InitialSpec::Excited,
            grid: GridSpec::default(),
            solver: SolverSpec::default(),
            output: OutputSpec::default(),
            study: StudySpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn physical(&self) -> CliResult<PhysicalParams> {
        Ok(make_params(self.params.gamma0, self.params.lambda)?)
    }

    /// Grid in `t` units; the configured end is in `tau` units.
    pub fn time_grid(&self) -> CliResult<TimeGrid> {
        let p = self.physical()?;
        let t_end = self.grid.t_end;
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(CliError::Validation(format!("empty grid: t_end = {t_end} must be positive")));
        }
        Ok(TimeGrid::uniform(0.0, p.t_of_tau(t_end), self.grid.n_points)?)
    }

    pub fn residual_orders(&self) -> CliResult<Vec<ResidualOrder>> {
        if self.study.orders.is_empty() {
            return Err(CliError::Validation("no residual orders requested".into()));
        }
        Ok(self.study.orders.iter().map(|&o| ResidualOrder::from_index(o)).collect::<Result<_, _>>()?)
    }

    /// Checks everything the chosen experiment needs before any solver runs.
    pub fn validate(&self) -> CliResult<()> {
        self.physical()?;
        match self.experiment {
            Experiment::Figure1 | Experiment::Figure2 | Experiment::Custom => {
                self.time_grid()?;
                if self.experiment == Experiment::Custom {
                    self.initial.state()?;
                }
                if self.solver.method == SolverMethod::Nmqj && self.solver.n_traj < 100 {
                    return Err(CliError::Validation(format!(
                        "need at least 100 trajectories, got {}",
                        self.solver.n_traj
                    )));
                }
            }
            Experiment::SingularTimes => {
                if self.study.rows == 0 {
                    return Err(CliError::Validation("rows must be at least 1".into()));
                }
            }
            Experiment::ErrorOrder => self.check_eps()?,
            Experiment::Residuals => {
                self.check_eps()?;
                self.residual_orders()?;
                let t = self.study.t_probe;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(CliError::Validation(format!("t_probe = {t} must be positive")));
                }
            }
        }
        Ok(())
    }

    fn check_eps(&self) -> CliResult<()> {
        let eps = &self.study.eps;
        if eps.len() < 3 {
            return Err(CliError::Validation(format!("need at least 3 eps values, got {}", eps.len())));
        }
        if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e < 2.0)) {
            return Err(CliError::Validation(format!("eps = {e} must lie in (0, 2)")));
        }
        Ok(())
    }
}
