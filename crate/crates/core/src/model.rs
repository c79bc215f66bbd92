//! Physical parameters, initial states and the reduced density matrix.
//!
//! The qubit is resonant with the centre of a Lorentzian reservoir, so the
//! whole reservoir enters only through the coupling rate `gamma0` and the
//! spectral width `lambda`. Times are absolute; the dimensionless axes
//! `tau = lambda * t` and `T = gamma0 * t` are conversions on top.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling regime of the qubit-reservoir system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `gamma0 > lambda / 2`: the excited amplitude oscillates through zero.
    Strong,
    /// `gamma0 == lambda / 2`.
    Critical,
    Weak,
}

/// Reservoir and coupling constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalParams {
    gamma0: f64,
    lambda: f64,
    eps: f64,
    regime: Regime,
}

/// Builds validated parameters; `eps` and `regime` are derived.
pub fn make_params(gamma0: f64, lambda: f64) -> Result<PhysicalParams> {
    PhysicalParams::new(gamma0, lambda)
}

impl PhysicalParams {
    pub fn new(gamma0: f64, lambda: f64) -> Result<Self> {
        for (name, value) in [("gamma0", gamma0), ("lambda", lambda)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        let half = lambda / 2.0;
        let regime = if gamma0 > half {
            Regime::Strong
        } else if gamma0 == half {
            Regime::Critical
        } else {
            Regime::Weak
        };
        Ok(Self {
            gamma0,
            lambda,
            eps: lambda / gamma0,
            regime,
        })
    }

    /// Parameters with a given `eps = lambda / gamma0` at fixed `lambda`.
    pub fn from_eps(eps: f64, lambda: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::NonPositiveParameter { name: "eps", value: eps });
        }
        Self::new(lambda / eps, lambda)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn is_strong(&self) -> bool {
        self.regime == Regime::Strong
    }

    /// `tau = lambda * t`.
    pub fn tau_of(&self, t: f64) -> f64 {
        self.lambda * t
    }

    pub fn t_of_tau(&self, tau: f64) -> f64 {
        tau / self.lambda
    }

    /// `T = gamma0 * t`.
    pub fn big_t_of(&self, t: f64) -> f64 {
        self.gamma0 * t
    }
}

/// Reservoir correlation function `f(dt) = (gamma0 lambda / 2) exp(-lambda |dt|)`.
pub fn correlation_kernel(params: &PhysicalParams, dt: f64) -> f64 {
    0.5 * params.gamma0 * params.lambda * (-params.lambda * dt.abs()).exp()
}

/// Amplitudes of the qubit at `t = 0`, reservoir in its vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialState {
    c_e0: Complex64,
    c_g0: Complex64,
}

impl InitialState {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(c_e0: Complex64, c_g0: Complex64) -> Result<Self> {
        let norm = c_e0.norm_sqr() + c_g0.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidInitialState { norm });
        }
        Ok(Self { c_e0, c_g0 })
    }

    /// `|e>`.
    pub fn excited() -> Self {
        Self {
            c_e0: Complex64::new(1.0, 0.0),
            c_g0: Complex64::new(0.0, 0.0),
        }
    }

    /// `(|e> + |g>) / sqrt(2)`.
    pub fn superposition() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            c_e0: Complex64::new(a, 0.0),
            c_g0: Complex64::new(a, 0.0),
        }
    }

    pub fn c_e0(&self) -> Complex64 {
        self.c_e0
    }

    pub fn c_g0(&self) -> Complex64 {
        self.c_g0
    }

    pub fn density(&self) -> QubitState {
        QubitState {
            rho_ee: self.c_e0.norm_sqr(),
            rho_eg: self.c_e0 * self.c_g0.conj(),
        }
    }
}

/// Reduced density matrix of the qubit, stored as `(rho_ee, rho_eg)`.
///
/// `rho_gg = 1 - rho_ee` and `rho_ge = conj(rho_eg)`, so the trace and
/// hermiticity hold by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitState {
    pub rho_ee: f64,
    pub rho_eg: Complex64,
}

impl QubitState {
    pub fn new(rho_ee: f64, rho_eg: Complex64) -> Self {
        Self { rho_ee, rho_eg }
    }

    pub fn rho_gg(&self) -> f64 {
        1.0 - self.rho_ee
    }

    pub fn trace(&self) -> f64 {
        self.rho_ee + self.rho_gg()
    }

    /// `rho_ee (1 - rho_ee) - |rho_eg|^2`; nonnegative for a physical state.
    pub fn positivity_margin(&self) -> f64 {
        self.rho_ee * self.rho_gg() - self.rho_eg.norm_sqr()
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.rho_ee >= -tol && self.rho_ee <= 1.0 + tol && self.positivity_margin() >= -tol
    }
}

/// Partial trace of the total pure state over the reservoir.
pub fn density_from_amplitudes(c_e: Complex64, initial: &InitialState) -> Result<QubitState> {
    let rho_ee = c_e.norm_sqr();
    if !(rho_ee <= 1.0 + 1e-9) {
        return Err(Error::NormViolation { rho_ee });
    }
    Ok(QubitState {
        rho_ee,
        rho_eg: c_e * initial.c_g0.conj(),
    })
}

/// Strictly increasing sample times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    uniform: bool,
}

impl TimeGrid {
    /// `n_points` equally spaced times covering `[t_start, t_end]`.
    pub fn uniform(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start < 0.0 {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite with t_start >= 0, got [{t_start}, {t_end}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n_points}")));
        }
        if t_end <= t_start {
            return Err(Error::InvalidGrid(format!("empty interval [{t_start}, {t_end}]")));
        }
        let h = (t_end - t_start) / (n_points - 1) as f64;
        let mut points: Vec<f64> = (0..n_points).map(|k| t_start + k as f64 * h).collect();
        points[n_points - 1] = t_end;
        Ok(Self { points, uniform: true })
    }

    /// Uniform grid with step `h` starting at zero and ending at the last
    /// multiple of `h` not exceeding `t_end`.
    pub fn with_step(t_end: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {h}")));
        }
        let n = (t_end / h + 1e-9).floor() as usize;
        Self::uniform(0.0, n as f64 * h, n + 1)
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("no points".into()));
        }
        if points.iter().any(|t| !t.is_finite()) || points[0] < 0.0 {
            return Err(Error::InvalidGrid("points must be finite and nonnegative".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points, uniform: false })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.points[0]
    }

    pub fn t_end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Step of a uniform grid.
    pub fn step(&self) -> Option<f64> {
        if self.uniform && self.points.len() > 1 {
            Some((self.t_end() - self.t_start()) / (self.points.len() - 1) as f64)
        } else {
            None
        }
    }
}
