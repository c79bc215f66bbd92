//! Deterministic integration of the TCL master equation through generator poles.
//!
//! For one qubit the master equation reduces to
//! `rho_ee' = -gamma rho_ee` and `rho_eg' = -(gamma + i S) rho_eg / 2`,
//! with `rho_gg = 1 - rho_ee`. Both components are integrated as logarithms
//! relative to the initial state, `y = (ln rho_ee/rho_ee0, ln |rho_eg/rho_eg0|, arg)`.
//! In these variables a pole of `gamma` is a logarithmic singularity, and the
//! relative accuracy of the state survives crossing it.
//!
//! Away from poles, [`solve_tcl`] uses an adaptive Dormand-Prince 5(4) pair with
//! dense output. Inside a window `[t* - delta, t* + delta]` the pole part
//! `-2 / (t - t*)` is integrated analytically and only the regular remainder
//! `g = gamma + 2 / (t - t*)` goes through adaptive quadrature. The coherence
//! changes sign at each crossing because the amplitude has a simple zero there.
//!
//! [`solve_tcl_quadrature`] computes the same trajectory by quadrature of `gamma`
//! alone, with the pole parts subtracted cell by cell.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{Generator, GeneratorKind, TclGenerator};
use crate::model::{InitialState, PhysicalParams, QubitState, TimeGrid};
use crate::quadrature::integrate;

const QUAD_ABS_TOL: f64 = 1e-14;
const QUAD_REL_TOL: f64 = 1e-12;
// Rounding in `gamma + 2/(s - p)` next to the cut reaches 1e-4, so a
// tighter target only makes the quadrature subdivide into the noise.
const REGULAR_ABS_TOL: f64 = 1e-10;
/// Default pole window half-width, in units of the inverse pole frequency.
pub const DEFAULT_WINDOW: f64 = 1e-3;
// Below this distance from a pole (inverse frequency units) the regular part
// is extrapolated instead of evaluated, since `gamma + 2/(t - t*)` cancels.
const CUT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Half-width of the pole-subtraction window; defaults to `1e-3 / scale`.
    pub pole_window: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            pole_window: None,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_step: f64::INFINITY,
        }
    }
}

impl SolveOptions {
    fn validate(&self, gen: &dyn Generator) -> Result<f64> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidOption("tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidOption("max_step must be positive".into()));
        }
        let delta = match (self.pole_window, gen.frequency_scale()) {
            (Some(d), _) => d,
            (None, Some(w)) => DEFAULT_WINDOW / w,
            (None, None) => 0.0,
        };
        if gen.has_poles() && !(delta.is_finite() && delta > gen.guard()) {
            return Err(Error::InvalidOption(format!(
                "pole window {delta} must exceed the generator guard {}",
                gen.guard()
            )));
        }
        Ok(delta)
    }
}

/// Record of one pole crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleCrossing {
    pub pole: f64,
    /// `∫ (gamma + 2/(t - t*)) dt` over the window.
    pub regular_integral: f64,
    /// State at the window exit `t* + delta`.
    pub post_state: QubitState,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<QubitState>,
    pub crossings: Vec<PoleCrossing>,
    /// Standard error of `rho_ee` per point, for stochastic solvers.
    pub std_errors: Option<Vec<f64>>,
    /// Set when some state leaves the physical set by more than the tolerance.
    pub positivity_breach: bool,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn rho_ee(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.rho_ee).collect()
    }

    pub(crate) fn check_positivity(&mut self, tol: f64) {
        self.positivity_breach = self.states.iter().any(|s| !s.is_physical(tol));
    }
}

/// Log-space state relative to the initial density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogState {
    ln_pop: f64,
    ln_coh: f64,
    phase: f64,
    sign: f64,
}

impl LogState {
    const ZERO: Self = Self { ln_pop: 0.0, ln_coh: 0.0, phase: 0.0, sign: 1.0 };

    fn to_state(self, rho0: &QubitState) -> QubitState {
        let rho_ee = if rho0.rho_ee == 0.0 { 0.0 } else { rho0.rho_ee * self.ln_pop.exp() };
        let rho_eg = if rho0.rho_eg == Complex64::new(0.0, 0.0) {
            Complex64::new(0.0, 0.0)
        } else {
            rho0.rho_eg * Complex64::from_polar(self.sign * self.ln_coh.exp(), self.phase)
        };
        QubitState::new(rho_ee, rho_eg)
    }
}

/// `ln` of the decay factor `exp(-∫_a^b gamma)` with pole parts handled
/// analytically, and the number of poles strictly inside `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFactor {
    pub value: f64,
    /// `-½ ∫_a^b S`.
    pub phase: f64,
    pub crossings: usize,
}

impl LogFactor {
    /// Amplitude ratio `c_e(b) / c_e(a)` implied by the factor.
    pub fn amplitude_ratio(&self) -> Complex64 {
        Complex64::from_polar(self.sign() * (0.5 * self.value).exp(), self.phase)
    }

    /// `(-1)^crossings`.
    pub fn sign(&self) -> f64 {
        if self.crossings.is_multiple_of(2) { 1.0 } else { -1.0 }
    }
}

fn pole_cut(gen: &dyn Generator, p: f64) -> f64 {
    gen.frequency_scale()
        .map_or(1e-12 * p.abs().max(1.0), |w| CUT / w)
}

/// `∫_u^v (gamma + 2/(s - p)) ds` for `[u, v]` on one side of `p`.
pub(crate) fn regular_integral(gen: &dyn Generator, p: f64, u: f64, v: f64) -> f64 {
    debug_assert!(u <= v && (u >= p || v <= p));
    if u == v {
        return 0.0;
    }
    let g = |s: f64| gen.rates(s).gamma + 2.0 / (s - p);
    let eta = pole_cut(gen, p);
    let side = if u >= p { 1.0 } else { -1.0 };
    // Part of [u, v] within eta of the pole: linear extrapolation from
    // g(p ± eta) and g(p ± 2 eta).
    let (near, far) = if side > 0.0 {
        let cut_end = (p + eta).min(v);
        if u < cut_end { ((u, cut_end), (cut_end, v)) } else { ((u, u), (u, v)) }
    } else {
        let cut_start = (p - eta).max(u);
        if cut_start < v { ((cut_start, v), (u, cut_start)) } else { ((v, v), (u, v)) }
    };
    let mut total = 0.0;
    if near.1 > near.0 {
        let g1 = g(p + side * eta);
        let g2 = g(p + side * 2.0 * eta);
        let slope = (g2 - g1) / (side * eta);
        let at = |s: f64| g1 + slope * (s - (p + side * eta));
        total += 0.5 * (at(near.0) + at(near.1)) * (near.1 - near.0);
    }
    if far.1 > far.0 {
        total += integrate(g, far.0, far.1, REGULAR_ABS_TOL, QUAD_REL_TOL).value;
    }
    total
}

/// `-½ ∫_u^v S`.
fn phase_integral(gen: &dyn Generator, u: f64, v: f64) -> f64 {
    if u == v {
        return 0.0;
    }
    -0.5 * integrate(|s| gen.rates(s).s, u, v, QUAD_ABS_TOL, QUAD_REL_TOL).value
}

/// Decay factor over `[a, b]`, `a < b`, given the generator's poles
/// (sorted; only those near `[a, b]` matter). Each sub-interval between
/// breakpoints subtracts the pole part of its nearest pole.
pub fn log_factor(gen: &dyn Generator, poles: &[f64], a: f64, b: f64) -> LogFactor {
    let mut cuts = vec![a];
    cuts.extend(
        poles
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .filter(|&m| m > a && m < b),
    );
    cuts.push(b);

    let mut value = 0.0;
    let mut phase = 0.0;
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u {
            continue;
        }
        let mid = 0.5 * (u + v);
        let nearest = poles
            .iter()
            .copied()
            .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()));
        match nearest {
            Some(p) if p > u && p < v => {
                phase += phase_integral(gen, u, p) + phase_integral(gen, p, v);
                value -= regular_integral(gen, p, u, p) + regular_integral(gen, p, p, v);
                value += 2.0 * ((v - p).abs() / (u - p).abs()).ln();
            }
            Some(p) => {
                phase += phase_integral(gen, u, v);
                value -= regular_integral(gen, p, u, v);
                value += 2.0 * ((v - p).abs() / (u - p).abs()).ln();
            }
            None => {
                phase += phase_integral(gen, u, v);
                value -= integrate(|s| gen.rates(s).gamma, u, v, QUAD_ABS_TOL, QUAD_REL_TOL).value;
            }
        }
    }
    let crossings = poles.iter().filter(|&&p| p > a && p < b).count();
    LogFactor { value, phase, crossings }
}

// Dormand-Prince 5(4) tableau with the dense-output coefficients of Hairer & Wanner.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

type Vec3 = [f64; 3];

fn axpy(y: &Vec3, terms: &[(f64, &Vec3)]) -> Vec3 {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += c * k[i];
        }
    }
    out
}

/// Adaptive integration of `y' = rhs(t)` on `[a, b]`, reporting `y` at each
/// time in `outputs` (sorted, within `(a, b]`) by dense interpolation.
fn dopri<F: Fn(f64) -> Vec3>(
    rhs: F,
    a: f64,
    b: f64,
    y0: Vec3,
    outputs: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec3, Vec<Vec3>)> {
    let mut t = a;
    let mut y = y0;
    let mut dense = Vec::with_capacity(outputs.len());
    let mut next_out = 0;
    if b <= a {
        return Ok((y, dense));
    }
    let mut h = (0.01 * (b - a)).min(opts.max_step);
    let mut k1 = rhs(t);
    while t < b {
        if b - t <= h * (1.0 + 1e-12) {
            h = b - t;
        }
        // The right-hand side depends on time only, so stages need no state.
        let mut k = [k1, [0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3]];
        for s in 1..7 {
            k[s] = rhs(t + C[s] * h);
        }
        let y_new = axpy(&y, &(0..6).map(|j| (h * A[6][j], &k[j])).collect::<Vec<_>>());
        let err_vec = axpy(&[0.0; 3], &(0..7).map(|j| (h * E[j], &k[j])).collect::<Vec<_>>());
        // An absolute error in a log variable is a relative error in the
        // state, so both tolerances bound the same quantity.
        let sc = opts.abs_tol.min(opts.rel_tol);
        let err = (err_vec.iter().map(|e| (e / sc).powi(2)).sum::<f64>() / 3.0).sqrt();
        if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite rate near t = {t}")));
        }
        if err <= 1.0 {
            let t_new = if h == b - t { b } else { t + h };
            while next_out < outputs.len() && outputs[next_out] <= t_new {
                let theta = (outputs[next_out] - t) / h;
                let mut out = [0.0; 3];
                for i in 0..3 {
                    let r1 = y[i];
                    let r2 = y_new[i] - y[i];
                    let r3 = h * k[0][i] - r2;
                    let r4 = r2 - h * k[6][i] - r3;
                    let r5 = h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>();
                    out[i] = r1 + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)));
                }
                dense.push(out);
                next_out += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k[6];
        }
        let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
        h = (h * fac).min(opts.max_step);
        if t < b && h < 1e-15 * t.abs().max(1.0) {
            return Err(Error::Numerical(format!("step size underflow at t = {t}")));
        }
    }
    while next_out < outputs.len() {
        dense.push(y);
        next_out += 1;
    }
    Ok((y, dense))
}

fn poles_for(gen: &dyn Generator, grid: &TimeGrid, delta: f64) -> Result<Vec<f64>> {
    if !gen.has_poles() {
        return Ok(Vec::new());
    }
    let poles = gen.poles(grid.t_end() + delta)?;
    if let Some(&p0) = poles.first() {
        if p0 - delta <= 0.0 {
            return Err(Error::InvalidOption(format!("pole window {delta} reaches t = 0")));
        }
    }
    if poles.windows(2).any(|w| w[1] - w[0] <= 2.0 * delta) {
        return Err(Error::InvalidOption(format!("pole windows of half-width {delta} overlap")));
    }
    let t_end = grid.t_end();
    if let Some(&p) = poles.iter().find(|&&p| (t_end - p).abs() < delta) {
        return Err(Error::PoleAtGridEnd { t_end, pole: p });
    }
    Ok(poles.into_iter().filter(|&p| p < t_end).collect())
}

/// Log-state increment from the window entry `p - delta` to `t` in the window.
fn window_increment(gen: &dyn Generator, p: f64, delta: f64, t: f64) -> (LogState, f64) {
    let entry = p - delta;
    let reg = if t <= p {
        regular_integral(gen, p, entry, t)
    } else {
        regular_integral(gen, p, entry, p) + regular_integral(gen, p, p, t)
    };
    let ln_pop = 2.0 * ((t - p).abs() / delta).ln() - reg;
    let inc = LogState {
        ln_pop,
        ln_coh: 0.5 * ln_pop,
        phase: phase_integral(gen, entry, t),
        sign: if t > p { -1.0 } else { 1.0 },
    };
    (inc, reg)
}

fn combine(base: LogState, inc: LogState) -> LogState {
    LogState {
        ln_pop: base.ln_pop + inc.ln_pop,
        ln_coh: base.ln_coh + inc.ln_coh,
        phase: base.phase + inc.phase,
        sign: base.sign * inc.sign,
    }
}

/// Adaptive solve with pole subtraction for any generator.
pub fn solve_tcl_with(
    gen: &dyn Generator,
    initial: &InitialState,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    let delta = opts.validate(gen)?;
    let poles = poles_for(gen, grid, delta)?;
    let rho0 = initial.density();
    let rhs = |t: f64| {
        let r = gen.rates(t);
        [-r.gamma, -0.5 * r.gamma, -0.5 * r.s]
    };

    let pts = grid.points();
    let mut logs = Vec::with_capacity(pts.len());
    let mut crossings = Vec::with_capacity(poles.len());
    let mut idx = 0;
    while idx < pts.len() && pts[idx] == 0.0 {
        logs.push(LogState::ZERO);
        idx += 1;
    }

    let mut cur = 0.0;
    let mut state = LogState::ZERO;
    let advance = |from: f64, to: f64, state: LogState, idx: &mut usize, logs: &mut Vec<LogState>| -> Result<LogState> {
        let start = *idx;
        while *idx < pts.len() && pts[*idx] <= to {
            *idx += 1;
        }
        let y0 = [state.ln_pop, state.ln_coh, state.phase];
        let (y, dense) = dopri(rhs, from, to, y0, &pts[start..*idx], opts)?;
        logs.extend(dense.into_iter().map(|d| LogState { ln_pop: d[0], ln_coh: d[1], phase: d[2], sign: state.sign }));
        Ok(LogState { ln_pop: y[0], ln_coh: y[1], phase: y[2], sign: state.sign })
    };

    for &p in &poles {
        state = advance(cur, p - delta, state, &mut idx, &mut logs)?;
        while idx < pts.len() && pts[idx] <= p + delta {
            let (inc, _) = window_increment(gen, p, delta, pts[idx]);
            logs.push(combine(state, inc));
            idx += 1;
        }
        let (inc, reg) = window_increment(gen, p, delta, p + delta);
        state = combine(state, inc);
        crossings.push(PoleCrossing { pole: p, regular_integral: reg, post_state: state.to_state(&rho0) });
        cur = p + delta;
    }
    advance(cur, grid.t_end(), state, &mut idx, &mut logs)?;

    let mut traj = Trajectory {
        grid: grid.clone(),
        states: logs.into_iter().map(|l| l.to_state(&rho0)).collect(),
        crossings,
        std_errors: None,
        positivity_breach: false,
    };
    traj.check_positivity(10.0 * opts.abs_tol);
    Ok(traj)
}

pub fn solve_tcl(
    kind: GeneratorKind,
    params: &PhysicalParams,
    initial: &InitialState,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    let gen = TclGenerator::new(kind, *params)?;
    solve_tcl_with(&gen, initial, grid, opts)
}

/// Quadrature path: `rho(t) = rho(0) exp(-∫_0^t gamma)` with subtracted poles.
pub fn solve_tcl_quadrature_with(
    gen: &dyn Generator,
    initial: &InitialState,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    let delta = opts.validate(gen)?;
    let poles = if gen.has_poles() { gen.poles(grid.t_end())? } else { Vec::new() };
    let rho0 = initial.density();

    let mut anchor = 0.0;
    let mut base = LogState::ZERO;
    let mut states = Vec::with_capacity(grid.len());
    for &t in grid.points() {
        if t == anchor {
            states.push(base.to_state(&rho0));
            continue;
        }
        let f = log_factor(gen, &poles, anchor, t);
        let here = combine(
            base,
            LogState {
                ln_pop: f.value,
                ln_coh: 0.5 * f.value,
                phase: f.phase,
                sign: f.sign(),
            },
        );
        states.push(here.to_state(&rho0));
        if here.ln_pop.is_finite() {
            anchor = t;
            base = here;
        }
    }

    let mut crossings = Vec::with_capacity(poles.len());
    if delta > 0.0 {
        for &p in &poles {
            let f = log_factor(gen, &poles, 0.0, p + delta);
            let post = LogState {
                ln_pop: f.value,
                ln_coh: 0.5 * f.value,
                phase: f.phase,
                sign: f.sign(),
            };
            crossings.push(PoleCrossing {
                pole: p,
                regular_integral: regular_integral(gen, p, p - delta, p) + regular_integral(gen, p, p, p + delta),
                post_state: post.to_state(&rho0),
            });
        }
    }

    let mut traj = Trajectory { grid: grid.clone(), states, crossings, std_errors: None, positivity_breach: false };
    traj.check_positivity(10.0 * opts.abs_tol);
    Ok(traj)
}

pub fn solve_tcl_quadrature(
    kind: GeneratorKind,
    params: &PhysicalParams,
    initial: &InitialState,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    let gen = TclGenerator::new(kind, *params)?;
    solve_tcl_quadrature_with(&gen, initial, grid, opts)
}
