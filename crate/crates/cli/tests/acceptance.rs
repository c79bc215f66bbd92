//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::process::ExitCode;
use std::time::Instant;

use tclsim_cli::config::{Experiment, InitialSpec, RunConfig, SolverMethod};
use tclsim_cli::experiments::{coverage, execute, MC_COVERAGE};
use tclsim_core::analysis::{error_order_study, fit_power_law, singular_time, DEFAULT_EPS_GRID};
use tclsim_core::exact::{amplitude_exact, exact_density, generator_exact, rabi_rate};
use tclsim_core::generators::{poles, sample};
use tclsim_core::model::correlation_kernel;
use tclsim_core::nmqj::nmqj_run;
use tclsim_core::quadrature::integrate;
use tclsim_core::tcl_solver::DEFAULT_WINDOW;
use tclsim_core::volterra::{generator_from_amplitude, AmplitudeTrajectory, solve_amplitude_ode, solve_volterra, Kernel, SampledRate, Scheme};
use tclsim_core::{
    make_params, solve_tcl, solve_tcl_quadrature, Generator, GeneratorKind, InitialState, PhysicalParams, SolveOptions,
    TclGenerator, TimeGrid, Trajectory,
};

type Outcome = Result<String, String>;

struct Ctx {
    fails: Vec<String>,
}

impl Ctx {
    fn require(&mut self, ok: bool, msg: String) {
        if !ok {
            self.fails.push(msg);
        }
    }

    fn finish(self, detail: String) -> Outcome {
        if self.fails.is_empty() {
            Ok(detail)
        } else {
            Err(format!("{} | {detail}", self.fails.join("; ")))
        }
    }
}

fn ctx() -> Ctx {
    Ctx { fails: Vec::new() }
}

fn fig_params() -> PhysicalParams {
    make_params(10.0, 1.0).unwrap()
}

/// `tau` in `[0, 10]` with 1001 points, at `lambda = 1`.
fn fig_grid() -> TimeGrid {
    TimeGrid::uniform(0.0, 10.0, 1001).unwrap()
}

fn states() -> [(&'static str, InitialState); 2] {
    [("e", InitialState::excited()), ("sup", InitialState::superposition())]
}

fn det(kind: GeneratorKind, p: &PhysicalParams, init: &InitialState, grid: &TimeGrid) -> Trajectory {
    solve_tcl(kind, p, init, grid, &SolveOptions::default()).unwrap()
}

fn exact_rho(p: &PhysicalParams, init: &InitialState, grid: &TimeGrid) -> Vec<f64> {
    grid.points().iter().map(|&t| exact_density(p, init, t).unwrap().rho_ee).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn near_pole(t: f64, poles: &[f64], r: f64) -> bool {
    poles.iter().any(|z| (t - z).abs() <= r)
}

fn criterion_1() -> Outcome {
    let mut c = ctx();
    let p = fig_params();
    let grid = fig_grid();
    let start = Instant::now();
    let mut detail = Vec::new();
    for (label, init) in states() {
        let traj = det(GeneratorKind::Exact, &p, &init, &grid);
        let sup = sup_diff(&traj.rho_ee(), &exact_rho(&p, &init, &grid));
        c.require(sup <= 1e-4, format!("{label}: sup {sup:.2e} > 1e-4"));
        c.require(traj.crossings.len() >= 6, format!("{label}: only {} poles crossed", traj.crossings.len()));
        detail.push(format!("{label}: sup {sup:.2e}, {} poles", traj.crossings.len()));
    }
    let secs = start.elapsed().as_secs_f64();
    c.require(secs <= 10.0, format!("took {secs:.1}s"));
    c.finish(format!("{} ({secs:.2}s)", detail.join(", ")))
}

/// First `+ -> -` sign change of `gamma`, refined by bisection.
fn bracket_first_pole(kind: GeneratorKind, p: &PhysicalParams) -> f64 {
    let gen = TclGenerator::new(kind, *p).unwrap();
    let g = |t: f64| gen.rates(t).gamma;
    let h = 1e-3;
    let mut a = h;
    while !(g(a) > 0.0 && g(a + h) < 0.0) {
        a += h;
        assert!(a < 10.0, "no pole bracketed for {kind:?}");
    }
    let mut b = a + h;
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if g(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// First zero of the closed-form amplitude by bisection.
fn bracket_amplitude_zero(p: &PhysicalParams) -> f64 {
    let c = |t: f64| amplitude_exact(p, &InitialState::excited(), t).unwrap().re;
    let (mut a, mut b) = (0.0, 0.0);
    while c(b) > 0.0 {
        a = b;
        b += 1e-3;
    }
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if c(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn criterion_2() -> Outcome {
    let mut c = ctx();
    let p = fig_params();
    let quoted = [
        (GeneratorKind::Exact, 0.82420),
        (GeneratorKind::Multiscale1, 0.70248),
        (GeneratorKind::Multiscale2, 0.82137),
    ];
    let mut detail = Vec::new();
    for (kind, want) in quoted {
        let t0 = singular_time(kind, &p, 0).unwrap();
        let oracle = bracket_first_pole(kind, &p);
        c.require((t0 - want).abs() <= 1e-4, format!("{}: {t0:.6} vs {want}", kind.name()));
        c.require((t0 - oracle).abs() <= 1e-9, format!("{}: bracketing gives {oracle:.12}", kind.name()));
        detail.push(format!("{} {t0:.5}", kind.name()));
    }
    let z = bracket_amplitude_zero(&p);
    let t0 = singular_time(GeneratorKind::Exact, &p, 0).unwrap();
    c.require((z - t0).abs() <= 1e-9, format!("amplitude zero {z:.12} vs {t0:.12}"));
    c.finish(detail.join(", "))
}

fn criterion_3() -> Outcome {
    let mut c = ctx();
    let start = Instant::now();
    let r = error_order_study(&fig_params(), &DEFAULT_EPS_GRID).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (f1, f2) = (r.fit_ms1, r.fit_ms2);
    c.require((f1.slope - 0.5).abs() <= 0.1, format!("ms1 slope {:.4}", f1.slope));
    c.require((f2.slope - 1.5).abs() <= 0.15, format!("ms2 slope {:.4}", f2.slope));
    c.require(f1.r_squared >= 0.98 && f2.r_squared >= 0.98, "r^2 below 0.98".into());
    c.require(secs <= 10.0, format!("took {secs:.1}s"));
    c.finish(format!(
        "ms1 slope {:.4} (r^2 {:.5}), ms2 slope {:.4} (r^2 {:.5}) ({secs:.2}s)",
        f1.slope, f1.r_squared, f2.slope, f2.r_squared
    ))
}

/// Sup-norm `rho_ee` error of the ms1 and ms2 curves over `tau` in `[0, 10]`.
fn ms_errors(gamma0: f64) -> (f64, f64) {
    let p = make_params(gamma0, 1.0).unwrap();
    let grid = fig_grid();
    let init = InitialState::excited();
    let exact = exact_rho(&p, &init, &grid);
    let e = |k| sup_diff(&det(k, &p, &init, &grid).rho_ee(), &exact);
    (e(GeneratorKind::Multiscale1), e(GeneratorKind::Multiscale2))
}

// Measured once and confirmed against an independent evaluation of the
// second-order multiscale amplitude.
const MS2_SUP_ERROR_EPS_0_1: f64 = 0.005140;

fn criterion_4() -> Outcome {
    let mut c = ctx();
    let (ms1, ms2) = ms_errors(10.0);
    let (ms1_h, ms2_h) = ms_errors(20.0);
    c.require(ms2 <= 0.05, format!("ms2 error {ms2:.4e} > 0.05"));
    c.require(
        (ms2 - MS2_SUP_ERROR_EPS_0_1).abs() <= 0.2 * MS2_SUP_ERROR_EPS_0_1,
        format!("ms2 error {ms2:.6} drifted from pinned {MS2_SUP_ERROR_EPS_0_1}"),
    );
    c.require(ms1 > ms2, format!("ms1 {ms1:.4e} not above ms2 {ms2:.4e}"));
    c.require(ms1_h < ms1 && ms2_h < ms2, format!("no shrink at eps=0.05: {ms1_h:.4e}, {ms2_h:.4e}"));
    c.finish(format!("eps=0.1: ms1 {ms1:.4e}, ms2 {ms2:.4e}; eps=0.05: ms1 {ms1_h:.4e}, ms2 {ms2_h:.4e}"))
}

fn criterion_5() -> Outcome {
    let mut c = ctx();
    let p = fig_params();
    let grid = fig_grid();
    let init = InitialState::excited();
    for kind in [GeneratorKind::Ordinary2, GeneratorKind::Ordinary4] {
        let rho = det(kind, &p, &init, &grid).rho_ee();
        let minima = rho.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count();
        let rises = rho.windows(2).filter(|w| w[1] > w[0]).count();
        c.require(minima == 0 && rises == 0, format!("{}: {minima} minima, {rises} rises", kind.name()));
    }
    // Sign changes of the closed-form amplitude on a fine grid.
    let amp = |t: f64| amplitude_exact(&p, &init, t).unwrap().re;
    let n = 100_000;
    let zeros = (1..n).filter(|&k| amp(k as f64 * 1e-4).signum() != amp((k + 1) as f64 * 1e-4).signum()).count();
    c.require(zeros >= 6, format!("exact has {zeros} interior zeros"));
    c.finish(format!("ord2/ord4 monotone, exact has {zeros} interior zeros"))
}

fn criterion_6() -> Outcome {
    let mut c = ctx();
    let p = fig_params();
    let init = InitialState::superposition();

    let fine = TimeGrid::with_step(10.0, 1e-4).unwrap();
    let vol = solve_volterra(&Kernel::lorentzian(&p), &init, &fine, Scheme::Trapezoid).unwrap();
    let ode = solve_amplitude_ode(&p, &init, &fine).unwrap();
    let mut d_vol = 0.0f64;
    let mut d_ode = 0.0f64;
    for (k, &t) in fine.points().iter().enumerate() {
        let want = amplitude_exact(&p, &init, t).unwrap();
        d_vol = d_vol.max((vol.values[k] - want).norm());
        d_ode = d_ode.max((ode.values[k] - want).norm());
    }
    c.require(d_vol <= 1e-6 && d_ode <= 1e-6, format!("amplitudes: volterra {d_vol:.2e}, ode {d_ode:.2e}"));

    let zeros = poles(GeneratorKind::Exact, &p, 10.0).unwrap();
    let excl = 0.05 / rabi_rate(&p).unwrap().value();
    let closed = AmplitudeTrajectory {
        grid: fine.clone(),
        values: fine.points().iter().map(|&t| amplitude_exact(&p, &init, t).unwrap()).collect(),
        initial: init,
    };
    let mut d_gen = 0.0f64;
    for amp in [&closed, &ode] {
        let rates = generator_from_amplitude(amp).unwrap();
        for (k, r) in rates.iter().enumerate() {
            let t = fine.points()[k];
            if let (SampledRate::Value(s), false) = (r, near_pole(t, &zeros, excl)) {
                d_gen = d_gen.max((s.gamma - generator_exact(&p, t).unwrap().gamma).abs());
            }
        }
    }
    c.require(d_gen <= 1e-5, format!("generator from amplitude off by {d_gen:.2e}"));

    let grid = fig_grid();
    let delta = DEFAULT_WINDOW / rabi_rate(&p).unwrap().value();
    let mut d_quad = 0.0f64;
    for (_, init) in states() {
        let a = det(GeneratorKind::Exact, &p, &init, &grid);
        let b = solve_tcl_quadrature(GeneratorKind::Exact, &p, &init, &grid, &SolveOptions::default()).unwrap();
        for ((&t, x), y) in grid.points().iter().zip(&a.states).zip(&b.states) {
            if !near_pole(t, &zeros, delta) {
                d_quad = d_quad.max((x.rho_ee - y.rho_ee).abs()).max((x.rho_eg - y.rho_eg).norm());
            }
        }
    }
    c.require(d_quad <= 1e-8, format!("solve_tcl vs quadrature {d_quad:.2e}"));
    c.finish(format!(
        "volterra {d_vol:.1e}, ode {d_ode:.1e}, generator {d_gen:.1e}, tcl vs quadrature {d_quad:.1e}"
    ))
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn criterion_7() -> Outcome {
    let mut c = ctx();
    let start = Instant::now();
    let p = fig_params();
    let grid = fig_grid();
    let mut detail = Vec::new();
    for (label, init) in states() {
        let reference = det(GeneratorKind::Exact, &p, &init, &grid).rho_ee();
        let run = nmqj_run(GeneratorKind::Exact, &p, &init, &grid, 100_000, 2024).unwrap();
        let frac = coverage(&run.trajectory, &reference);
        c.require(frac >= MC_COVERAGE, format!("{label}: coverage {frac:.4}"));
        detail.push(format!("{label} coverage {frac:.4}"));
    }

    // Root-mean-square error over the grid, pooled over a fixed seed set.
    let init = InitialState::excited();
    let reference = det(GeneratorKind::Exact, &p, &init, &grid).rho_ee();
    let counts = [1_000u64, 10_000, 100_000];
    let seeds: Vec<u64> = (0..8).map(|k| 1000 + k).collect();
    let errors: Vec<f64> = counts
        .iter()
        .map(|&n| {
            let ms: f64 = seeds
                .iter()
                .map(|&s| rms(&nmqj_run(GeneratorKind::Exact, &p, &init, &grid, n, s).unwrap().trajectory.rho_ee(), &reference).powi(2))
                .sum::<f64>()
                / seeds.len() as f64;
            ms.sqrt()
        })
        .collect();
    let x: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let fit = fit_power_law(&x, &errors).unwrap();
    c.require((fit.slope + 0.5).abs() <= 0.1, format!("exponent {:.3}", fit.slope));
    let secs = start.elapsed().as_secs_f64();
    c.require(secs <= 60.0, format!("took {secs:.1}s"));
    c.finish(format!(
        "{}, exponent {:.3} (rms {:.2e}/{:.2e}/{:.2e}) ({secs:.1}s)",
        detail.join(", "),
        fit.slope,
        errors[0],
        errors[1],
        errors[2]
    ))
}

fn custom_nmqj_csv() -> String {
    let mut cfg = RunConfig { experiment: Experiment::Custom, ..RunConfig::default() };
    cfg.initial = InitialSpec::Superposition;
    cfg.solver.method = SolverMethod::Nmqj;
    cfg.solver.n_traj = 60_000;
    cfg.solver.seed = 99;
    cfg.grid.n_points = 401;
    execute(&cfg).unwrap().table.to_csv()
}

fn criterion_8() -> Outcome {
    let mut c = ctx();
    let p = fig_params();

    let mut worst_residue = 0.0f64;
    for kind in [GeneratorKind::Exact, GeneratorKind::Multiscale1, GeneratorKind::Multiscale2] {
        for z in poles(kind, &p, 10.0).unwrap() {
            for h in [-1e-7, 1e-7] {
                let r = h * sample(kind, &p, z + h).unwrap().gamma;
                worst_residue = worst_residue.max((r + 2.0).abs());
            }
        }
    }
    c.require(worst_residue <= 1e-4, format!("residue off by {worst_residue:.2e}"));

    let grid = fig_grid();
    let tol = 10.0 * SolveOptions::default().abs_tol;
    let (mut trace, mut margin) = (0.0f64, f64::INFINITY);
    for kind in GeneratorKind::ALL {
        for (_, init) in states() {
            for s in &det(kind, &p, &init, &grid).states {
                trace = trace.max((s.trace() - 1.0).abs());
                margin = margin.min(s.positivity_margin());
            }
        }
    }
    c.require(trace <= 1e-12, format!("trace deviates by {trace:.2e}"));
    c.require(margin >= -tol, format!("positivity margin {margin:.2e}"));

    let mut sum_rule = 0.0f64;
    for (g0, l) in [(10.0, 1.0), (0.3, 2.0), (50.0, 0.1)] {
        let q = make_params(g0, l).unwrap();
        let v = integrate(|s| 2.0 * correlation_kernel(&q, s), 0.0, 80.0 / l, 1e-14, 1e-14).value;
        sum_rule = sum_rule.max((v - g0).abs());
    }
    c.require(sum_rule <= 1e-8, format!("sum rule off by {sum_rule:.2e}"));

    let zeros = poles(GeneratorKind::Exact, &p, 10.0).unwrap();
    let scale = rabi_rate(&p).unwrap().value();
    let mut robust = 0.0f64;
    for (_, init) in states() {
        let run = |w: f64| {
            let opts = SolveOptions { pole_window: Some(w / scale), ..SolveOptions::default() };
            solve_tcl(GeneratorKind::Exact, &p, &init, &grid, &opts).unwrap()
        };
        let base = run(1e-3);
        for w in [1e-2, 1e-4] {
            let other = run(w);
            for ((&t, x), y) in grid.points().iter().zip(&base.states).zip(&other.states) {
                if !near_pole(t, &zeros, 1e-2 / scale) {
                    robust = robust.max((x.rho_ee - y.rho_ee).abs()).max((x.rho_eg - y.rho_eg).norm());
                }
            }
        }
    }
    c.require(robust < 1e-6, format!("window dependence {robust:.2e}"));

    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(custom_nmqj_csv);
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(custom_nmqj_csv);
    let again = custom_nmqj_csv();
    c.require(serial == wide && wide == again, "CSV differs between runs".into());

    c.finish(format!(
        "residue {worst_residue:.1e}, trace {trace:.1e}, margin {margin:.1e}, sum rule {sum_rule:.1e}, \
         window {robust:.1e}, CSV identical"
    ))
}

type Criterion = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("singularity transparency", criterion_1),
        ("singular times", criterion_2),
        ("error orders", criterion_3),
        ("multiscale quality", criterion_4),
        ("ordinary perturbation failure", criterion_5),
        ("oracle equivalence chain", criterion_6),
        ("nmqj consistency", criterion_7),
        ("property suites", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(d) => println!("PASS {}. {name}: {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {}. {name}: {d}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
