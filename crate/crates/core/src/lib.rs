//! Numerical toolkit for the time-convolutionless (TCL) master equation of a
//! two-level system coupled resonantly to a Lorentzian reservoir.
//!
//! In the strong-coupling regime the TCL decay rate `gamma(t)` has poles at
//! the zeros of the excited amplitude. The solvers here integrate through
//! those poles and compare against the closed-form solution, an independent
//! Volterra solver, multiscale and ordinary perturbative generators, and a
//! quantum-jump Monte Carlo unraveling.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exact;
pub mod generators;
pub mod model;
pub mod nmqj;
pub mod quadrature;
pub mod tcl_solver;
pub mod volterra;

pub use error::{Error, Result};
pub use generators::{ConstantRate, Generator, GeneratorKind, GeneratorSample, TclGenerator};
pub use tcl_solver::{solve_tcl, solve_tcl_quadrature, SolveOptions, Trajectory};
pub use model::{make_params, InitialState, PhysicalParams, QubitState, Regime, TimeGrid};

