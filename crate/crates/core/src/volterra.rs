//! Direct solvers for the excited amplitude, independent of the closed form.
//!
//! [`solve_volterra`] discretizes the integro-differential equation
//! `c'(t) = -∫_0^t f(t - s) c(s) ds` for any even kernel; for the Lorentzian
//! kernel [`solve_amplitude_ode`] integrates the equivalent local equation
//! `c'' + lambda c' + (gamma0 lambda / 2) c = 0` with `c(0) = c_e0`,
//! `c'(0) = 0`. [`generator_from_amplitude`] turns sampled amplitudes back
//! into `(S, gamma)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::generators::GeneratorSample;
use crate::model::{InitialState, PhysicalParams, TimeGrid};
use crate::quadrature::integrate;

/// Memory kernel `f(t - s)` of the amplitude equation.
#[derive(Clone)]
pub enum Kernel {
    /// `amplitude * exp(-rate |dt|)`; the history sum is updated in O(1) per step.
    Exponential { amplitude: f64, rate: f64 },
    /// Any even, continuous kernel given as a function of `|dt|`.
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Exponential { amplitude, rate } => f
                .debug_struct("Exponential")
                .field("amplitude", amplitude)
                .field("rate", rate)
                .finish(),
            Kernel::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Kernel {
    pub fn lorentzian(params: &PhysicalParams) -> Self {
        Kernel::Exponential {
            amplitude: 0.5 * params.gamma0() * params.lambda(),
            rate: params.lambda(),
        }
    }

    pub fn zero() -> Self {
        Kernel::Exponential { amplitude: 0.0, rate: 0.0 }
    }

    pub fn from_fn<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Kernel::Function(Arc::new(f))
    }

    pub fn eval(&self, dt: f64) -> f64 {
        match self {
            Kernel::Exponential { amplitude, rate } => amplitude * (-rate * dt.abs()).exp(),
            Kernel::Function(f) => f(dt.abs()),
        }
    }

    /// `∫_0^u f(v) dv` in closed form for the exponential kernel.
    fn exp_integral(amplitude: f64, rate: f64, u: f64) -> f64 {
        if rate == 0.0 {
            amplitude * u
        } else {
            -amplitude * (-rate * u).exp_m1() / rate
        }
    }

    fn cumulative_to(&self, u: f64) -> f64 {
        match self {
            Kernel::Exponential { amplitude, rate } => Self::exp_integral(*amplitude, *rate, u),
            Kernel::Function(f) => integrate(|v| f(v), 0.0, u, 1e-15, 1e-13).value,
        }
    }

    /// `∫_0^{m h} f` for `m = 0..=n`.
    fn cumulative_integral(&self, h: f64, n: usize) -> Vec<f64> {
        match self {
            Kernel::Exponential { amplitude, rate } => (0..=n)
                .map(|m| Self::exp_integral(*amplitude, *rate, m as f64 * h))
                .collect(),
            Kernel::Function(f) => {
                let mut out = Vec::with_capacity(n + 1);
                let mut acc = 0.0;
                out.push(0.0);
                for m in 0..n {
                    let a = m as f64 * h;
                    acc += integrate(|v| f(v), a, a + h, 1e-15, 1e-13).value;
                    out.push(acc);
                }
                out
            }
        }
    }

    fn sup_on(&self, points: &[f64]) -> f64 {
        match self {
            Kernel::Exponential { amplitude, .. } => amplitude.abs(),
            Kernel::Function(f) => points.iter().map(|&t| f(t).abs()).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Trapezoidal product integration of the integro-differential form; second order.
    #[default]
    Trapezoid,
    /// Simpson / three-eighths weights on the equivalent second-kind equation
    /// `c(t) = c_e0 - ∫_0^t F(t - s) c(s) ds`, `F(u) = ∫_0^u f`; fourth order, O(N²).
    Simpson,
}

/// Excited amplitude sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct AmplitudeTrajectory {
    pub grid: TimeGrid,
    pub values: Vec<Complex64>,
    pub initial: InitialState,
}

fn uniform_step(grid: &TimeGrid) -> Result<f64> {
    let h = grid
        .step()
        .ok_or_else(|| Error::InvalidGrid("a uniform grid is required".into()))?;
    if grid.t_start() != 0.0 {
        return Err(Error::InvalidGrid("the amplitude equation starts at t = 0".into()));
    }
    Ok(h)
}

pub fn solve_volterra(
    kernel: &Kernel,
    initial: &InitialState,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<AmplitudeTrajectory> {
    let h = uniform_step(grid)?;
    let bound = kernel.sup_on(grid.points());
    if h * bound >= 1.0 {
        return Err(Error::StepTooLarge { h, bound });
    }
    let values = match scheme {
        Scheme::Trapezoid => trapezoid(kernel, initial.c_e0(), h, grid.len()),
        Scheme::Simpson => simpson(kernel, initial.c_e0(), h, grid.len()),
    };
    Ok(AmplitudeTrajectory {
        grid: grid.clone(),
        values,
        initial: *initial,
    })
}

// c_{n+1} = c_n + h/2 (F_n + F_{n+1}), F_n = -I_n with I_n the trapezoid
// rule for ∫_0^{t_n} f(t_n - s) c(s) ds. The last term of I_{n+1} involves
// c_{n+1}, which is solved for in closed form.
fn trapezoid(kernel: &Kernel, c0: Complex64, h: f64, n_points: usize) -> Vec<Complex64> {
    let mut c = Vec::with_capacity(n_points);
    c.push(c0);
    let f0 = kernel.eval(0.0);
    let denom = 1.0 + 0.25 * h * h * f0;
    let mut integral_n = Complex64::new(0.0, 0.0);

    match kernel {
        Kernel::Exponential { amplitude, rate } => {
            let decay = (-rate * h).exp();
            // history[n] = Σ_{j<=n} e^{-rate (t_n - t_j)} c_j
            let mut history = c0;
            for n in 0..n_points - 1 {
                let t_next = (n + 1) as f64 * h;
                let partial = amplitude * h * (decay * history - 0.5 * (-rate * t_next).exp() * c0);
                let next = (c[n] - 0.5 * h * (integral_n + partial)) / denom;
                integral_n = partial + 0.5 * h * f0 * next;
                history = decay * history + next;
                c.push(next);
            }
        }
        Kernel::Function(f) => {
            let fk: Vec<f64> = (0..n_points).map(|m| f(m as f64 * h)).collect();
            for n in 0..n_points - 1 {
                let m = n + 1;
                let mut partial = 0.5 * fk[m] * c0;
                for j in 1..m {
                    partial += fk[m - j] * c[j];
                }
                partial *= h;
                let next = (c[n] - 0.5 * h * (integral_n + partial)) / denom;
                integral_n = partial + 0.5 * h * f0 * next;
                c.push(next);
            }
        }
    }
    c
}

fn simpson(kernel: &Kernel, c0: Complex64, h: f64, n_points: usize) -> Vec<Complex64> {
    let big_f = kernel.cumulative_integral(h, n_points - 1);
    let mut c = Vec::with_capacity(n_points);
    c.push(c0);
    if n_points == 1 {
        return c;
    }
    // First step: Simpson on [0, h] with c(h/2) from the quadratic through
    // c_0 and c_1 with zero slope at the origin (c'(0) = 0 for this equation).
    let half = kernel.cumulative_to(0.5 * h);
    let first = (c0 - h * (big_f[1] / 6.0 + 0.5 * half) * c0) / (1.0 + h * half / 6.0);
    c.push(first);
    let mut weights = vec![0.0; n_points];
    for n in 2..n_points {
        simpson_weights(n, &mut weights[..=n]);
        // The j = n term carries F(0) = 0, so the update is explicit.
        let sum: Complex64 = (0..n).map(|j| weights[j] * big_f[n - j] * c[j]).sum();
        c.push(c0 - h * sum);
    }
    c
}

/// Quadrature weights over `n >= 2` equal intervals, in units of the step.
fn simpson_weights(n: usize, w: &mut [f64]) {
    w.iter_mut().for_each(|x| *x = 0.0);
    let mut start = 0;
    if n % 2 == 1 {
        for (k, v) in [0.375, 1.125, 1.125, 0.375].into_iter().enumerate() {
            w[k] += v;
        }
        start = 3;
    }
    let mut j = start;
    while j < n {
        w[j] += 1.0 / 3.0;
        w[j + 1] += 4.0 / 3.0;
        w[j + 2] += 1.0 / 3.0;
        j += 2;
    }
}

/// Classical RK4 on the second-order amplitude equation of the Lorentzian model.
pub fn solve_amplitude_ode(
    params: &PhysicalParams,
    initial: &InitialState,
    grid: &TimeGrid,
) -> Result<AmplitudeTrajectory> {
    let h = uniform_step(grid)?;
    let l = params.lambda();
    let w2 = 0.5 * params.gamma0() * l;
    let rhs = |c: Complex64, v: Complex64| (v, -l * v - w2 * c);

    let mut c = initial.c_e0();
    let mut v = Complex64::new(0.0, 0.0);
    let mut values = Vec::with_capacity(grid.len());
    values.push(c);
    for _ in 1..grid.len() {
        let (k1c, k1v) = rhs(c, v);
        let (k2c, k2v) = rhs(c + 0.5 * h * k1c, v + 0.5 * h * k1v);
        let (k3c, k3v) = rhs(c + 0.5 * h * k2c, v + 0.5 * h * k2v);
        let (k4c, k4v) = rhs(c + h * k3c, v + h * k3v);
        c += h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        values.push(c);
    }
    Ok(AmplitudeTrajectory {
        grid: grid.clone(),
        values,
        initial: *initial,
    })
}

/// Generator estimate at one sample of an amplitude trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampledRate {
    Value(GeneratorSample),
    /// `|c_e|` fell below the floor; the rate is not resolvable here.
    NearPole { t: f64 },
}

impl SampledRate {
    pub fn value(&self) -> Option<GeneratorSample> {
        match self {
            SampledRate::Value(s) => Some(*s),
            SampledRate::NearPole { .. } => None,
        }
    }
}

/// Default amplitude floor relative to `|c_e0|`.
pub const AMPLITUDE_FLOOR: f64 = 1e-8;

/// `S = -2 Im(c'/c)` and `gamma = -2 Re(c'/c)` from central differences.
pub fn generator_from_amplitude(traj: &AmplitudeTrajectory) -> Result<Vec<SampledRate>> {
    generator_from_amplitude_with_floor(traj, AMPLITUDE_FLOOR)
}

pub fn generator_from_amplitude_with_floor(
    traj: &AmplitudeTrajectory,
    floor: f64,
) -> Result<Vec<SampledRate>> {
    let c0 = traj.initial.c_e0().norm();
    if c0 == 0.0 {
        return Err(Error::DegenerateAmplitude);
    }
    let h = traj
        .grid
        .step()
        .ok_or_else(|| Error::InvalidGrid("a uniform grid is required".into()))?;
    let c = &traj.values;
    let n = c.len();
    if n < 3 {
        return Err(Error::InvalidGrid("need at least 3 samples".into()));
    }
    let out = (0..n)
        .map(|k| {
            let t = traj.grid.points()[k];
            if c[k].norm() < floor * c0 {
                return SampledRate::NearPole { t };
            }
            let dc = if k == 0 {
                (-3.0 * c[0] + 4.0 * c[1] - c[2]) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * c[k] - 4.0 * c[k - 1] + c[k - 2]) / (2.0 * h)
            } else {
                (c[k + 1] - c[k - 1]) / (2.0 * h)
            };
            let r = dc / c[k];
            SampledRate::Value(GeneratorSample::new(t, -2.0 * r.im, -2.0 * r.re))
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact;
    use crate::model::make_params;

    fn fig() -> PhysicalParams {
        make_params(10.0, 1.0).unwrap()
    }

    fn sup_err_vs_exact(traj: &AmplitudeTrajectory, p: &PhysicalParams) -> f64 {
        traj.grid
            .points()
            .iter()
            .zip(&traj.values)
            .map(|(&t, c)| (c - exact::amplitude_exact(p, &traj.initial, t).unwrap()).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_kernel_keeps_amplitude() {
        let init = InitialState::superposition();
        let grid = TimeGrid::with_step(5.0, 0.01).unwrap();
        for scheme in [Scheme::Trapezoid, Scheme::Simpson] {
            let traj = solve_volterra(&Kernel::zero(), &init, &grid, scheme).unwrap();
            assert!(traj.values.iter().all(|c| *c == init.c_e0()));
        }
    }

    #[test]
    fn lorentzian_matches_closed_form() {
        let p = fig();
        let grid = TimeGrid::with_step(10.0, 1e-4).unwrap();
        let init = InitialState::excited();
        let traj = solve_volterra(&Kernel::lorentzian(&p), &init, &grid, Scheme::Trapezoid).unwrap();
        let err = sup_err_vs_exact(&traj, &p);
        assert!(err < 1e-6, "sup error {err}");
        assert!(traj.values.iter().all(|c| c.im.abs() < 1e-12));
    }

    #[test]
    fn constant_kernel_gives_cosine() {
        // c'' = -k c, c(0) = 1, c'(0) = 0.
        let k = 1.7;
        let init = InitialState::excited();
        let grid = TimeGrid::with_step(2.0, 2e-4).unwrap();
        for kernel in [Kernel::from_fn(move |_| k), Kernel::Exponential { amplitude: k, rate: 0.0 }] {
            let traj = solve_volterra(&kernel, &init, &grid, Scheme::Trapezoid).unwrap();
            let err = grid
                .points()
                .iter()
                .zip(&traj.values)
                .map(|(&t, c)| (c.re - (k.sqrt() * t).cos()).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "{kernel:?}: {err}");
        }
    }

    #[test]
    fn generic_and_exponential_paths_agree() {
        let p = fig();
        let grid = TimeGrid::with_step(2.0, 1e-3).unwrap();
        let init = InitialState::superposition();
        let pc = p;
        let generic = Kernel::from_fn(move |dt| crate::model::correlation_kernel(&pc, dt));
        for scheme in [Scheme::Trapezoid, Scheme::Simpson] {
            let a = solve_volterra(&Kernel::lorentzian(&p), &init, &grid, scheme).unwrap();
            let b = solve_volterra(&generic, &init, &grid, scheme).unwrap();
            let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(d < 1e-11, "{scheme:?}: {d}");
        }
    }

    #[test]
    fn trapezoid_is_second_order() {
        let p = fig();
        let init = InitialState::excited();
        let errs: Vec<f64> = [4e-4, 2e-4, 1e-4]
            .iter()
            .map(|&h| {
                let grid = TimeGrid::with_step(10.0, h).unwrap();
                let traj = solve_volterra(&Kernel::lorentzian(&p), &init, &grid, Scheme::Trapezoid).unwrap();
                sup_err_vs_exact(&traj, &p)
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.6..4.4).contains(&ratio), "ratio {ratio} from {errs:?}");
        }
    }

    #[test]
    fn simpson_is_fourth_order() {
        let p = fig();
        let init = InitialState::excited();
        let errs: Vec<f64> = [0.01, 0.005, 0.0025]
            .iter()
            .map(|&h| {
                let grid = TimeGrid::with_step(4.0, h).unwrap();
                let traj = solve_volterra(&Kernel::lorentzian(&p), &init, &grid, Scheme::Simpson).unwrap();
                sup_err_vs_exact(&traj, &p)
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((13.0..19.0).contains(&ratio), "ratio {ratio} from {errs:?}");
        }
    }

    #[test]
    fn stability_guard() {
        let p = make_params(1000.0, 1.0).unwrap();
        let grid = TimeGrid::with_step(1.0, 0.01).unwrap();
        assert!(matches!(
            solve_volterra(&Kernel::lorentzian(&p), &InitialState::excited(), &grid, Scheme::Trapezoid),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn ode_matches_closed_form_and_volterra() {
        let p = fig();
        let init = InitialState::excited();
        let grid = TimeGrid::with_step(10.0, 1e-4).unwrap();
        let ode = solve_amplitude_ode(&p, &init, &grid).unwrap();
        assert!(sup_err_vs_exact(&ode, &p) < 1e-8);
        let vol = solve_volterra(&Kernel::lorentzian(&p), &init, &grid, Scheme::Trapezoid).unwrap();
        let d = ode.values.iter().zip(&vol.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn ode_runs_in_weak_coupling() {
        // Overdamped: the amplitude decays monotonically without zeros.
        let p = make_params(0.2, 1.0).unwrap();
        let grid = TimeGrid::with_step(20.0, 1e-3).unwrap();
        let ode = solve_amplitude_ode(&p, &InitialState::excited(), &grid).unwrap();
        assert!(ode.values.windows(2).all(|w| w[1].re <= w[0].re && w[1].re > 0.0));
    }

    #[test]
    fn generator_from_exact_samples() {
        let p = fig();
        let init = InitialState::excited();
        let grid = TimeGrid::with_step(10.0, 1e-4).unwrap();
        let values = grid
            .points()
            .iter()
            .map(|&t| exact::amplitude_exact(&p, &init, t).unwrap())
            .collect();
        let traj = AmplitudeTrajectory { grid: grid.clone(), values, initial: init };
        let g = exact::rabi_rate(&p).unwrap().value();
        let zeros = exact::amplitude_zeros(&p, 11.0).unwrap();
        let rates = generator_from_amplitude(&traj).unwrap();
        let mut checked = 0;
        for r in &rates {
            let Some(s) = r.value() else { continue };
            assert!(s.s.abs() < 1e-8);
            if zeros.iter().any(|z| (s.t - z).abs() <= 0.05 / g) {
                continue;
            }
            let want = exact::generator_exact(&p, s.t).unwrap().gamma;
            assert!((s.gamma - want).abs() < 1e-5 * want.abs().max(1.0), "t={}: {} vs {}", s.t, s.gamma, want);
            checked += 1;
        }
        assert!(checked > 90_000);
    }

    #[test]
    fn generator_from_zero_kernel_is_zero() {
        let init = InitialState::superposition();
        let grid = TimeGrid::with_step(1.0, 0.01).unwrap();
        let traj = solve_volterra(&Kernel::zero(), &init, &grid, Scheme::Trapezoid).unwrap();
        for r in generator_from_amplitude(&traj).unwrap() {
            let s = r.value().unwrap();
            assert!(s.s.abs() < 1e-12 && s.gamma.abs() < 1e-12);
        }
    }

    #[test]
    fn generator_flags_near_pole_and_degenerate_input() {
        let p = fig();
        let t0 = exact::amplitude_zero(&p, 0).unwrap();
        let grid = TimeGrid::uniform(0.0, 2.0 * t0, 3).unwrap();
        let init = InitialState::excited();
        let values = grid.points().iter().map(|&t| exact::amplitude_exact(&p, &init, t).unwrap()).collect();
        let traj = AmplitudeTrajectory { grid, values, initial: init };
        let rates = generator_from_amplitude(&traj).unwrap();
        assert!(matches!(rates[1], SampledRate::NearPole { .. }));

        let ground = InitialState::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        let traj = AmplitudeTrajectory { initial: ground, ..traj };
        assert!(matches!(generator_from_amplitude(&traj), Err(Error::DegenerateAmplitude)));
    }
}
