//! Time-dependent TCL generators `(S(t), gamma(t))`.
//!
//! The perturbative decay rates are dimensionless functions of
//! `eps = lambda / gamma0` and `T = gamma0 t`, read as `gamma / gamma0`.
//! They are converted to absolute rates on output. Every shipped kind has
//! `S == 0` because the qubit is resonant with the reservoir.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, POLE_GUARD};
use crate::model::PhysicalParams;

/// Lamb shift and decay rate at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorSample {
    pub t: f64,
    pub s: f64,
    pub gamma: f64,
}

impl GeneratorSample {
    pub fn new(t: f64, s: f64, gamma: f64) -> Self {
        Self { t, s, gamma }
    }
}

/// Residue of `gamma` at a simple zero of the excited amplitude.
pub const SIMPLE_ZERO_RESIDUE: f64 = -2.0;

/// A time-local generator with analytically known poles.
///
/// Poles must be simple with residue [`SIMPLE_ZERO_RESIDUE`]: they mark
/// simple zeros of the underlying amplitude, across which the coherence
/// changes sign.
pub trait Generator: Sync {
    /// Rates without the pole guard; may be huge or infinite at a pole.
    fn rates(&self, t: f64) -> GeneratorSample;

    /// Poles in `[0, horizon]`, strictly increasing.
    fn poles(&self, horizon: f64) -> Result<Vec<f64>>;

    /// Angular rate at which poles recur, when the generator has poles.
    fn frequency_scale(&self) -> Option<f64> {
        None
    }

    fn has_poles(&self) -> bool {
        self.frequency_scale().is_some()
    }

    /// Half-width of the exclusion zone used by [`Generator::sample`].
    fn guard(&self) -> f64 {
        self.frequency_scale().map_or(0.0, |w| POLE_GUARD / w)
    }

    /// Guarded sample: `AtPole` within [`Generator::guard`] of a pole.
    fn sample(&self, t: f64) -> Result<GeneratorSample> {
        if self.has_poles() {
            let guard = self.guard();
            let period = 2.0 * PI / self.frequency_scale().unwrap_or(1.0);
            if let Some(&pole) = self
                .poles(t + period)?
                .iter()
                .find(|p| (t - **p).abs() < guard)
            {
                return Err(Error::AtPole { t, pole });
            }
        }
        Ok(self.rates(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneratorKind {
    Exact,
    Multiscale1,
    Multiscale2,
    Ordinary2,
    Ordinary4,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 5] = [
        GeneratorKind::Exact,
        GeneratorKind::Multiscale1,
        GeneratorKind::Multiscale2,
        GeneratorKind::Ordinary2,
        GeneratorKind::Ordinary4,
    ];

    pub fn pole_residue(self) -> Option<f64> {
        match self {
            GeneratorKind::Exact | GeneratorKind::Multiscale1 | GeneratorKind::Multiscale2 => {
                Some(SIMPLE_ZERO_RESIDUE)
            }
            GeneratorKind::Ordinary2 | GeneratorKind::Ordinary4 => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Exact => "exact",
            GeneratorKind::Multiscale1 => "ms1",
            GeneratorKind::Multiscale2 => "ms2",
            GeneratorKind::Ordinary2 => "ord2",
            GeneratorKind::Ordinary4 => "ord4",
        }
    }

    pub fn with_params(self, params: PhysicalParams) -> Result<TclGenerator> {
        TclGenerator::new(self, params)
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown generator `{s}` (expected exact|ms1|ms2|ord2|ord4)"))
    }
}

/// One of the five shipped generators bound to physical parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclGenerator {
    kind: GeneratorKind,
    params: PhysicalParams,
    // Rabi rate for Exact, unused otherwise.
    rabi: f64,
}

impl TclGenerator {
    pub fn new(kind: GeneratorKind, params: PhysicalParams) -> Result<Self> {
        let rabi = match kind {
            GeneratorKind::Exact => exact::rabi_rate(&params)?.value(),
            GeneratorKind::Multiscale1 | GeneratorKind::Multiscale2 => {
                if !params.is_strong() {
                    return Err(Error::NotStrongCoupling {
                        gamma0: params.gamma0(),
                        lambda: params.lambda(),
                    });
                }
                0.0
            }
            GeneratorKind::Ordinary2 | GeneratorKind::Ordinary4 => 0.0,
        };
        Ok(Self { kind, params, rabi })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    /// Argument of the trigonometric factors of the multiscale rates, per unit `T`.
    fn ms_phase_rate(&self) -> f64 {
        let e = self.params.eps();
        match self.kind {
            GeneratorKind::Multiscale1 => (2.0 * e).sqrt() / 2.0,
            GeneratorKind::Multiscale2 => (2.0 * e).sqrt() * (1.0 - e / 4.0) / 2.0,
            _ => unreachable!("not a multiscale kind"),
        }
    }

    /// Phase of the first pole of a multiscale rate.
    fn ms_first_phase(&self) -> f64 {
        let e = self.params.eps();
        match self.kind {
            GeneratorKind::Multiscale1 => PI / 2.0,
            GeneratorKind::Multiscale2 => (-(e / (2.0 + e)).sqrt()).acos(),
            _ => unreachable!("not a multiscale kind"),
        }
    }

    /// `n`-th pole, counted from zero.
    pub fn pole(&self, n: usize) -> Result<Option<f64>> {
        let g0 = self.params.gamma0();
        Ok(match self.kind {
            GeneratorKind::Exact => Some(exact::amplitude_zero(&self.params, n)?),
            GeneratorKind::Multiscale1 | GeneratorKind::Multiscale2 => {
                let phase = self.ms_first_phase() + n as f64 * PI;
                Some(phase / self.ms_phase_rate() / g0)
            }
            GeneratorKind::Ordinary2 | GeneratorKind::Ordinary4 => None,
        })
    }

    /// `gamma / gamma0` as a function of `T`.
    fn reduced_rate(&self, big_t: f64) -> f64 {
        let e = self.params.eps();
        match self.kind {
            GeneratorKind::Multiscale1 => {
                let a = (2.0 * e).sqrt();
                let (s, c) = (a * big_t / 2.0).sin_cos();
                e + a * s / c
            }
            GeneratorKind::Multiscale2 => {
                let theta = self.ms_phase_rate() * big_t;
                let (s, c) = theta.sin_cos();
                let num = e.sqrt() * (e.powf(1.5) * c + 2f64.sqrt() * (4.0 + e) * s);
                let den = 4.0 * c + 2.0 * (2.0 * e).sqrt() * s;
                num / den
            }
            _ => unreachable!("not a multiscale kind"),
        }
    }
}

impl Generator for TclGenerator {
    fn rates(&self, t: f64) -> GeneratorSample {
        let p = &self.params;
        let (g0, l) = (p.gamma0(), p.lambda());
        let gamma = match self.kind {
            GeneratorKind::Exact => exact::exact_rate_unguarded(p, self.rabi, t),
            GeneratorKind::Multiscale1 | GeneratorKind::Multiscale2 => g0 * self.reduced_rate(g0 * t),
            GeneratorKind::Ordinary2 => -g0 * (-l * t).exp_m1(),
            GeneratorKind::Ordinary4 => {
                // Taylor coefficients of the exact rate in gamma0 at fixed lambda, t.
                let e = (-l * t).exp();
                let second = (-0.5 * (-2.0 * l * t).exp_m1() - l * t * e) / l;
                -g0 * (-l * t).exp_m1() + g0 * g0 * second
            }
        };
        GeneratorSample::new(t, 0.0, gamma)
    }

    fn poles(&self, horizon: f64) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for n in 0.. {
            match self.pole(n)? {
                Some(t) if t <= horizon => out.push(t),
                _ => break,
            }
        }
        Ok(out)
    }

    fn frequency_scale(&self) -> Option<f64> {
        let g0 = self.params.gamma0();
        match self.kind {
            GeneratorKind::Exact => Some(self.rabi),
            GeneratorKind::Multiscale1 | GeneratorKind::Multiscale2 => {
                Some(2.0 * self.ms_phase_rate() * g0)
            }
            GeneratorKind::Ordinary2 | GeneratorKind::Ordinary4 => None,
        }
    }

    fn sample(&self, t: f64) -> Result<GeneratorSample> {
        if let Some(w) = self.frequency_scale() {
            let t0 = self.pole(0)?.expect("pole-bearing kind");
            let n = ((t - t0) * w / (2.0 * PI)).round().max(0.0) as usize;
            let pole = self.pole(n)?.expect("pole-bearing kind");
            if (t - pole).abs() < self.guard() {
                return Err(Error::AtPole { t, pole });
            }
        }
        Ok(self.rates(t))
    }
}

/// Time-independent generator; a Markovian reference and a test fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate {
    pub gamma: f64,
    pub s: f64,
}

impl ConstantRate {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, s: 0.0 }
    }
}

impl Generator for ConstantRate {
    fn rates(&self, t: f64) -> GeneratorSample {
        GeneratorSample::new(t, self.s, self.gamma)
    }

    fn poles(&self, _horizon: f64) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

/// Guarded sample of a shipped generator.
pub fn sample(kind: GeneratorKind, params: &PhysicalParams, t: f64) -> Result<GeneratorSample> {
    TclGenerator::new(kind, *params)?.sample(t)
}

/// Poles of a shipped generator in `[0, horizon]`.
pub fn poles(kind: GeneratorKind, params: &PhysicalParams, horizon: f64) -> Result<Vec<f64>> {
    TclGenerator::new(kind, *params)?.poles(horizon)
}
