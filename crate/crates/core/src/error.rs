use thiserror::Error;

/// Errors raised by the solvers and model constructors.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("initial amplitudes are not normalized: |c_e0|^2 + |c_g0|^2 = {norm}")]
    InvalidInitialState { norm: f64 },

    #[error("excited population {rho_ee} exceeds one")]
    NormViolation { rho_ee: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("not in the strong-coupling regime (gamma0 = {gamma0}, lambda = {lambda}); need gamma0 > lambda/2")]
    NotStrongCoupling { gamma0: f64, lambda: f64 },

    #[error("t = {t} lies within the guard of the generator pole at {pole}")]
    AtPole { t: f64, pole: f64 },

    #[error("step {h} too large for kernel bound {bound}: need h * sup|f| < 1")]
    StepTooLarge { h: f64, bound: f64 },

    #[error("initial excited amplitude is zero; the generator is undefined")]
    DegenerateAmplitude,

    #[error("grid end {t_end} falls inside the window of the pole at {pole}")]
    PoleAtGridEnd { t_end: f64, pole: f64 },

    #[error("jump probability exceeds the cap at t = {t} even at the minimum step")]
    StepProbabilityOverflow { t: f64 },

    #[error("reverse jump required at t = {t} but no ensemble member is in the ground state")]
    EmptyTargetClass { t: f64 },

    #[error("eps = {eps} is outside the strong-coupling regime (eps < 2 required)")]
    RegimeViolation { eps: f64 },

    #[error("need at least {needed} points for a fit, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("probe T = {t_probe} is not before the first pole T = {pole} at eps = {eps}")]
    ProbePastPole { t_probe: f64, pole: f64, eps: f64 },

    #[error("trajectories are sampled on different grids")]
    GridMismatch,

    #[error("invalid solver option: {0}")]
    InvalidOption(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
