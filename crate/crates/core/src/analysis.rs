//! Singular times, error-order studies and residual checks.
//!
//! The residual check works in the dimensionless variables `T = gamma0 t`,
//! `eps = lambda / gamma0`, where the amplitude obeys
//! `c'' + eps c' + (eps/2) c = 0`. An approximant `g(T) = gamma / gamma0`
//! defines `c = exp(-½ ∫_0^T g)` before the first pole, and substituting gives
//! the residual `c (g²/4 - g'/2 - eps g / 2 + eps / 2)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::rabi_rate;
use crate::generators::{ConstantRate, Generator, GeneratorKind, TclGenerator};
use crate::model::PhysicalParams;
use crate::quadrature::integrate;
use crate::tcl_solver::Trajectory;

/// `n`-th singular time of a pole-bearing generator from its closed form.
pub fn singular_time(kind: GeneratorKind, params: &PhysicalParams, n: usize) -> Result<f64> {
    let g0 = params.gamma0();
    let eps = params.eps();
    let (first, period) = match kind {
        GeneratorKind::Exact => {
            let g = rabi_rate(params)?.value();
            let first = 2.0 * (-(eps / 2.0).sqrt()).acos() / (g0 * ((2.0 - eps) * eps).sqrt());
            (first, 2.0 * PI / g)
        }
        GeneratorKind::Multiscale1 => {
            rabi_rate(params)?;
            let w = g0 * (2.0 * eps).sqrt();
            (PI / w, 2.0 * PI / w)
        }
        GeneratorKind::Multiscale2 => {
            rabi_rate(params)?;
            let first = 4.0 * 2f64.sqrt() * (-(eps / (2.0 + eps)).sqrt()).acos() / (g0 * (4.0 - eps) * eps.sqrt());
            (first, 2.0 * PI / (g0 * (2.0 * eps).sqrt() * (1.0 - eps / 4.0)))
        }
        GeneratorKind::Ordinary2 | GeneratorKind::Ordinary4 => {
            return Err(Error::InvalidOption(format!("{} has no singular times", kind.name())));
        }
    };
    Ok(first + n as f64 * period)
}

/// Ordinary least squares fit of `ln y = slope ln x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidOption("fit inputs differ in length".into()));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Numerical("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - (slope * a + intercept)).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(PowerFit { slope, intercept, r_squared })
}

pub const DEFAULT_EPS_GRID: [f64; 6] = [0.1, 0.05, 0.02, 0.01, 0.005, 0.002];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorOrderReport {
    /// Strictly decreasing.
    pub eps_grid: Vec<f64>,
    pub t0_exact: Vec<f64>,
    pub t0_ms1: Vec<f64>,
    pub t0_ms2: Vec<f64>,
    pub rel_errors_ms1: Vec<f64>,
    pub rel_errors_ms2: Vec<f64>,
    pub fit_ms1: PowerFit,
    pub fit_ms2: PowerFit,
}

fn sorted_eps(eps_grid: &[f64]) -> Result<Vec<f64>> {
    if eps_grid.len() < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: eps_grid.len() });
    }
    if let Some(&eps) = eps_grid.iter().find(|&&e| !(e < 2.0)) {
        return Err(Error::RegimeViolation { eps });
    }
    let mut eps: Vec<f64> = eps_grid.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    if eps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidOption("eps values must be distinct".into()));
    }
    Ok(eps)
}

/// Relative error of the first singular time of both multiscale generators
/// across `eps`, at the template's `lambda` and `gamma0 = lambda / eps`.
pub fn error_order_study(template: &PhysicalParams, eps_grid: &[f64]) -> Result<ErrorOrderReport> {
    let eps = sorted_eps(eps_grid)?;
    let rows: Vec<(f64, f64, f64)> = eps
        .par_iter()
        .map(|&e| {
            let p = PhysicalParams::from_eps(e, template.lambda())?;
            Ok((
                singular_time(GeneratorKind::Exact, &p, 0)?,
                singular_time(GeneratorKind::Multiscale1, &p, 0)?,
                singular_time(GeneratorKind::Multiscale2, &p, 0)?,
            ))
        })
        .collect::<Result<_>>()?;
    let t0_exact: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let t0_ms1: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let t0_ms2: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let rel = |t: &[f64]| -> Vec<f64> { t.iter().zip(&t0_exact).map(|(a, b)| (a - b).abs() / b).collect() };
    let rel_errors_ms1 = rel(&t0_ms1);
    let rel_errors_ms2 = rel(&t0_ms2);
    Ok(ErrorOrderReport {
        fit_ms1: fit_power_law(&eps, &rel_errors_ms1)?,
        fit_ms2: fit_power_law(&eps, &rel_errors_ms2)?,
        eps_grid: eps,
        t0_exact,
        t0_ms1,
        t0_ms2,
        rel_errors_ms1,
        rel_errors_ms2,
    })
}

/// Amplitude approximant fed to the residual check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResidualOrder {
    /// `gamma = 0`, the `eps -> 0` limit.
    Zeroth,
    /// First-order multiscale rate.
    First,
    /// Second-order multiscale rate.
    Second,
    /// Exact rate; the residual is finite-difference noise.
    Exact,
}

impl ResidualOrder {
    pub fn from_index(order: usize) -> Result<Self> {
        match order {
            0 => Ok(Self::Zeroth),
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(Error::InvalidOption(format!("residual order must be 0, 1 or 2, got {order}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Zeroth => "0",
            Self::First => "1",
            Self::Second => "2",
            Self::Exact => "exact",
        }
    }

    /// Generator in `T` units: `gamma0 = 1`, `lambda = eps`.
    fn generator(self, eps: f64) -> Result<Box<dyn Generator>> {
        let p = PhysicalParams::new(1.0, eps)?;
        Ok(match self {
            Self::Zeroth => Box::new(ConstantRate::new(0.0)),
            Self::First => Box::new(TclGenerator::new(GeneratorKind::Multiscale1, p)?),
            Self::Second => Box::new(TclGenerator::new(GeneratorKind::Multiscale2, p)?),
            Self::Exact => Box::new(TclGenerator::new(GeneratorKind::Exact, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub order: ResidualOrder,
    pub t_probe: f64,
    /// Strictly decreasing.
    pub eps_grid: Vec<f64>,
    /// `|residual|` at the probe, per `eps`.
    pub residuals: Vec<f64>,
    /// Log-log slopes between adjacent `eps`.
    pub pairwise_slopes: Vec<f64>,
    /// `None` when the residuals are at the noise floor.
    pub fit: Option<PowerFit>,
}

/// Finite-difference half-step for `g'`.
const FD_STEP: f64 = 1e-3;

fn residual_at(order: ResidualOrder, eps: f64, t_probe: f64) -> Result<f64> {
    let gen = order.generator(eps)?;
    if gen.has_poles() {
        let first = gen.poles(t_probe + 2.0 * PI / gen.frequency_scale().unwrap_or(1.0))?;
        if let Some(&pole) = first.first() {
            if t_probe >= pole {
                return Err(Error::ProbePastPole { t_probe, pole, eps });
            }
        }
    }
    let g = |t: f64| gen.rates(t).gamma;
    let c = (-0.5 * integrate(g, 0.0, t_probe, 1e-15, 1e-13).value).exp();
    let h = FD_STEP;
    let dg = (g(t_probe - 2.0 * h) - 8.0 * g(t_probe - h) + 8.0 * g(t_probe + h) - g(t_probe + 2.0 * h)) / (12.0 * h);
    let gp = g(t_probe);
    Ok(c * (0.25 * gp * gp - 0.5 * dg - 0.5 * eps * gp + 0.5 * eps))
}

pub fn residual_order_check(order: ResidualOrder, eps_grid: &[f64], t_probe: f64) -> Result<ResidualReport> {
    if !(t_probe > 2.0 * FD_STEP && t_probe.is_finite()) {
        return Err(Error::InvalidOption(format!("probe T = {t_probe} must be positive")));
    }
    let eps = sorted_eps(eps_grid)?;
    let residuals: Vec<f64> = eps
        .par_iter()
        .map(|&e| residual_at(order, e, t_probe).map(f64::abs))
        .collect::<Result<_>>()?;
    let pairwise_slopes = eps
        .windows(2)
        .zip(residuals.windows(2))
        .map(|(e, r)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln())
        .collect();
    let fit = match order {
        ResidualOrder::Exact => None,
        _ => Some(fit_power_law(&eps, &residuals)?),
    };
    Ok(ResidualReport { order, t_probe, eps_grid: eps, residuals, pairwise_slopes, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub sup_norm: f64,
    /// Root mean square over the grid points.
    pub l2: f64,
    pub per_point: Vec<f64>,
    pub coherence_sup_norm: f64,
    pub coherence_l2: f64,
    pub coherence_per_point: Vec<f64>,
}

/// Differences of `rho_ee` and of `|rho_eg|` between two trajectories.
pub fn compare_trajectories(a: &Trajectory, b: &Trajectory) -> Result<Comparison> {
    if a.grid != b.grid || a.states.len() != b.states.len() {
        return Err(Error::GridMismatch);
    }
    let per_point: Vec<f64> = a.states.iter().zip(&b.states).map(|(x, y)| (x.rho_ee - y.rho_ee).abs()).collect();
    let coherence_per_point: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x.rho_eg.norm() - y.rho_eg.norm()).abs())
        .collect();
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let rms = |v: &[f64]| (v.iter().map(|d| d * d).sum::<f64>() / v.len() as f64).sqrt();
    Ok(Comparison {
        sup_norm: sup(&per_point),
        l2: rms(&per_point),
        coherence_sup_norm: sup(&coherence_per_point),
        coherence_l2: rms(&coherence_per_point),
        per_point,
        coherence_per_point,
    })
}
