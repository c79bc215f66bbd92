//! Closed-form strong-coupling solution.
//!
//! With the Lorentzian kernel the excited amplitude is
//! `c_e(t) = c_e0 e^{-lambda t/2} [cos(Gt/2) + (lambda/G) sin(Gt/2)]`,
//! `G = sqrt(2 gamma0 lambda - lambda^2)`. It vanishes at
//! `t_n = 2 [(n+1) pi - atan(G/lambda)] / G`, where the decay rate of the
//! time-local generator has simple poles.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::generators::GeneratorSample;
use crate::model::{density_from_amplitudes, InitialState, PhysicalParams, QubitState};

/// Relative pole guard: `AtPole` is raised within `POLE_GUARD / G` of a pole.
pub const POLE_GUARD: f64 = 1e-9;

/// Oscillation rate `G = sqrt(2 gamma0 lambda - lambda^2)` of the amplitude.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RabiRate(f64);

impl RabiRate {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn rabi_rate(params: &PhysicalParams) -> Result<RabiRate> {
    let (g0, l) = (params.gamma0(), params.lambda());
    let sq = 2.0 * g0 * l - l * l;
    if !params.is_strong() || sq <= 0.0 {
        return Err(Error::NotStrongCoupling { gamma0: g0, lambda: l });
    }
    Ok(RabiRate(sq.sqrt()))
}

/// Real envelope `c_e(t) / c_e0`.
pub fn envelope(params: &PhysicalParams, t: f64) -> Result<f64> {
    let g = rabi_rate(params)?.value();
    let l = params.lambda();
    let x = 0.5 * g * t;
    Ok((-0.5 * l * t).exp() * (x.cos() + l / g * x.sin()))
}

pub fn amplitude_exact(params: &PhysicalParams, initial: &InitialState, t: f64) -> Result<Complex64> {
    Ok(initial.c_e0() * envelope(params, t)?)
}

/// Time of the `n`-th zero of the excited amplitude.
pub fn amplitude_zero(params: &PhysicalParams, n: usize) -> Result<f64> {
    let g = rabi_rate(params)?.value();
    Ok(2.0 * ((n as f64 + 1.0) * PI - (g / params.lambda()).atan()) / g)
}

/// All amplitude zeros in `[0, horizon]`.
pub fn amplitude_zeros(params: &PhysicalParams, horizon: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for n in 0.. {
        let t = amplitude_zero(params, n)?;
        if t > horizon {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Decay rate of the exact generator without the pole guard.
///
/// Evaluated as `2 gamma0 lambda sin(x) / (G cos(x) + lambda sin(x))`, `x = Gt/2`,
/// which stays finite where `tan(x)` blows up.
pub fn exact_rate_unguarded(params: &PhysicalParams, g: f64, t: f64) -> f64 {
    let l = params.lambda();
    let x = 0.5 * g * t;
    let (s, c) = x.sin_cos();
    2.0 * params.gamma0() * l * s / (g * c + l * s)
}

fn nearest_zero(params: &PhysicalParams, g: f64, t: f64) -> Result<f64> {
    let t0 = amplitude_zero(params, 0)?;
    let period = 2.0 * PI / g;
    let n = ((t - t0) / period).round().max(0.0) as usize;
    amplitude_zero(params, n)
}

/// `(S, gamma)` of the exact generator, rejecting times within `guard` of a pole.
pub fn generator_exact_guarded(params: &PhysicalParams, t: f64, guard: f64) -> Result<GeneratorSample> {
    let g = rabi_rate(params)?.value();
    let pole = nearest_zero(params, g, t)?;
    if (t - pole).abs() < guard {
        return Err(Error::AtPole { t, pole });
    }
    Ok(GeneratorSample::new(t, 0.0, exact_rate_unguarded(params, g, t)))
}

/// `(S, gamma)` of the exact generator with the default guard `1e-9 / G`.
pub fn generator_exact(params: &PhysicalParams, t: f64) -> Result<GeneratorSample> {
    let g = rabi_rate(params)?.value();
    generator_exact_guarded(params, t, POLE_GUARD / g)
}

pub fn exact_density(params: &PhysicalParams, initial: &InitialState, t: f64) -> Result<QubitState> {
    density_from_amplitudes(amplitude_exact(params, initial, t)?, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;

    fn fig() -> PhysicalParams {
        make_params(10.0, 1.0).unwrap()
    }

    // Independent oracle: bisection on the closed-form amplitude.
    fn bisect_zero(p: &PhysicalParams, mut lo: f64, mut hi: f64) -> f64 {
        let f = |t: f64| envelope(p, t).unwrap();
        let flo = f(lo);
        assert!(flo * f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) * flo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn rabi_rate_examples() {
        assert_relative_eq!(rabi_rate(&fig()).unwrap().value(), 19f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(rabi_rate(&make_params(2.0, 2.0).unwrap()).unwrap().value(), 2.0);
        assert!(matches!(
            rabi_rate(&make_params(0.4, 1.0).unwrap()),
            Err(Error::NotStrongCoupling { .. })
        ));
        assert!(rabi_rate(&make_params(0.5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn amplitude_at_origin_and_zero() {
        let p = fig();
        let init = InitialState::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)).unwrap();
        assert_eq!(amplitude_exact(&p, &init, 0.0).unwrap(), init.c_e0());
        let t0 = amplitude_zero(&p, 0).unwrap();
        assert!(amplitude_exact(&p, &init, t0).unwrap().norm() < 1e-12 * 0.6);
    }

    #[test]
    fn amplitude_pinned_value() {
        // e^{-1/4} [cos(sqrt19/4) + sin(sqrt19/4)/sqrt19], evaluated independently.
        let g = 19f64.sqrt();
        let x = g / 4.0;
        let expected = (-0.25f64).exp() * (x.cos() + x.sin() / g);
        let got = amplitude_exact(&fig(), &InitialState::excited(), 0.5).unwrap();
        assert_relative_eq!(got.re, expected, epsilon = 1e-15);
        assert_relative_eq!(got.re, 0.518_764_152_091_828_3, epsilon = 1e-13);
        assert_eq!(got.im, 0.0);
    }

    #[test]
    fn first_zero_matches_bisection() {
        let p = fig();
        let oracle = bisect_zero(&p, 0.5, 1.0);
        assert!((oracle - 0.82420).abs() < 1e-5);
        assert!((amplitude_zero(&p, 0).unwrap() - oracle).abs() < 1e-12);
        let spacing = amplitude_zero(&p, 1).unwrap() - amplitude_zero(&p, 0).unwrap();
        assert_relative_eq!(spacing, 2.0 * PI / 19f64.sqrt(), epsilon = 1e-13);
        assert!((spacing - 1.441_461_568_291_336).abs() < 1e-12);
    }

    #[test]
    fn zeros_agree_with_root_finding() {
        for p in [fig(), make_params(3.0, 0.7).unwrap(), make_params(1.0, 1.0).unwrap()] {
            let g = rabi_rate(&p).unwrap().value();
            let period = 2.0 * PI / g;
            for n in 0..=10 {
                let t = amplitude_zero(&p, n).unwrap();
                let oracle = bisect_zero(&p, t - 0.3 * period, t + 0.3 * period);
                assert!((t - oracle).abs() < 1e-10, "n={n}: {t} vs {oracle}");
            }
        }
    }

    #[test]
    fn first_zero_equals_eps_form() {
        for (g0, l) in [(10.0, 1.0), (5.0, 3.0), (100.0, 0.5), (0.6, 1.0)] {
            let p = make_params(g0, l).unwrap();
            let e = p.eps();
            let alt = 2.0 * (-(e / 2.0).sqrt()).acos() / (g0 * ((2.0 - e) * e).sqrt());
            assert!((amplitude_zero(&p, 0).unwrap() - alt).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_examples() {
        let p = fig();
        let s = generator_exact(&p, 0.0).unwrap();
        assert_eq!((s.s, s.gamma), (0.0, 0.0));

        let t0 = amplitude_zero(&p, 0).unwrap();
        assert!(generator_exact(&p, t0 - 1e-7).unwrap().gamma > 1e6);
        assert!(generator_exact(&p, t0 + 1e-7).unwrap().gamma < -1e6);
        assert!(matches!(generator_exact(&p, t0), Err(Error::AtPole { .. })));
    }

    #[test]
    fn generator_matches_finite_difference_oracle() {
        let p = fig();
        let init = InitialState::excited();
        for &t in &[0.1, 0.3, 0.6, 1.2, 2.0, 3.1] {
            let h = 1e-5;
            let c = |t| amplitude_exact(&p, &init, t).unwrap();
            let dc = (c(t + h) - c(t - h)) / (2.0 * h);
            let fd = -2.0 * (dc / c(t)).re;
            let got = generator_exact(&p, t).unwrap().gamma;
            assert!(((got - fd) / fd).abs() < 1e-6, "t={t}: {got} vs {fd}");
        }
    }

    #[test]
    fn typeset_tan_form_disagrees() {
        // 2 gamma0 tan(Gt/2) / (1 + (lambda/G) tan(Gt/2)) is off by a factor G/lambda.
        let p = fig();
        let g = 19f64.sqrt();
        let t = 0.3;
        let x = g * t / 2.0;
        let typeset = 2.0 * 10.0 * x.tan() / (1.0 + x.tan() / g);
        let got = generator_exact(&p, t).unwrap().gamma;
        assert_relative_eq!(typeset / got, g, epsilon = 1e-12);
    }

    #[test]
    fn sign_structure_around_poles() {
        let p = fig();
        let t0 = amplitude_zero(&p, 0).unwrap();
        for k in 1..50 {
            let t = t0 * k as f64 / 50.0;
            assert!(generator_exact(&p, t).unwrap().gamma > 0.0);
        }
        for n in 0..5 {
            let tn = amplitude_zero(&p, n).unwrap();
            assert!(generator_exact(&p, tn + 1e-4).unwrap().gamma < 0.0);
        }
    }

    #[test]
    fn pole_residue_is_minus_two() {
        let p = fig();
        for n in 0..6 {
            let tn = amplitude_zero(&p, n).unwrap();
            for k in 3..=6 {
                let d = 10f64.powi(-k);
                for dt in [d, -d] {
                    let r = dt * generator_exact(&p, tn + dt).unwrap().gamma;
                    assert!((r + 2.0).abs() < 50.0 * d, "n={n} dt={dt}: {r}");
                }
            }
        }
    }

    #[test]
    fn decay_integral_identity_between_poles() {
        let p = fig();
        let t0 = amplitude_zero(&p, 0).unwrap();
        for (a, b) in [(0.0, 0.5), (0.1, 0.8), (0.3, t0 - 1e-3)] {
            let int = integrate(|s| generator_exact(&p, s).unwrap().gamma, a, b, 1e-13, 1e-12).value;
            let ratio = (envelope(&p, b).unwrap() / envelope(&p, a).unwrap()).powi(2);
            assert!(((-int).exp() - ratio).abs() < 1e-8);
        }
    }

    #[test]
    fn density_examples() {
        let p = fig();
        assert_eq!(exact_density(&p, &InitialState::excited(), 0.0).unwrap().rho_ee, 1.0);
        let s = exact_density(&p, &InitialState::superposition(), 0.0).unwrap();
        assert_relative_eq!(s.rho_ee, 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.rho_eg.re, 0.5, epsilon = 1e-15);

        let t0 = amplitude_zero(&p, 0).unwrap();
        let e = exact_density(&p, &InitialState::excited(), t0).unwrap();
        let sp = exact_density(&p, &InitialState::superposition(), t0).unwrap();
        assert!(e.rho_ee < 1e-24 && sp.rho_ee < 1e-24 && sp.rho_eg.norm() < 1e-12);
        for k in 0..200 {
            let t = 0.05 * k as f64;
            let e = exact_density(&p, &InitialState::excited(), t).unwrap();
            let sp = exact_density(&p, &InitialState::superposition(), t).unwrap();
            assert_relative_eq!(sp.rho_ee, 0.5 * e.rho_ee, epsilon = 1e-15, max_relative = 1e-14);
        }
    }

    proptest::proptest! {
        #[test]
        fn envelope_bound(t in 0.0f64..30.0, g0 in 0.6f64..50.0, l in 0.2f64..3.0) {
            let p = make_params(g0 * l, l).unwrap();
            let g = rabi_rate(&p).unwrap().value();
            let bound = (-0.5 * l * t).exp() * (1.0 + l * l / (g * g)).sqrt();
            proptest::prop_assert!(envelope(&p, t).unwrap().abs() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn lamb_shift_vanishes(t in 0.0f64..20.0) {
            if let Ok(s) = generator_exact(&fig(), t) {
                proptest::prop_assert_eq!(s.s, 0.0);
            }
        }
    }
}
