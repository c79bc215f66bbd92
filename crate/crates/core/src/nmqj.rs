//! Non-Markovian quantum-jump unraveling of the TCL master equation.
//!
//! At zero temperature every trajectory is either in the deterministically
//! evolved state `psi(t)` or in `|g>`, so the ensemble is two counts. While
//! `gamma > 0` members of the `psi` class jump to `|g>`; while `gamma < 0`
//! members of `|g>` jump back to the normalized `psi(t)` with the rate
//! `(n_psi / n_g) |gamma| |c_e,norm|^2`. Both probabilities are integrated
//! exactly over each step from the norm ratio `R = |psi(t+h)|^2 / |psi(t)|^2`,
//! so the only approximation is the binomial sampling itself.
//!
//! A pole is crossed in one step from `t* - w_in` to `t* + w_out`, with the
//! exit chosen where `|c_e|` returns to its entry value. The norm ratio
//! across the step is then one and no member jumps; grid points inside the
//! crossing are estimated from the entry state. If no such exit exists the
//! crossing falls back to a symmetric window shrunk until the ratio is
//! admissible.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{Generator, GeneratorKind, TclGenerator};
use crate::model::{InitialState, PhysicalParams, QubitState, TimeGrid};
use crate::tcl_solver::{self, log_factor, LogFactor, PoleCrossing, Trajectory, DEFAULT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmqjOptions {
    /// Largest admissible per-step jump probability.
    pub p_cap: f64,
    /// Step-halving floor.
    pub min_step: f64,
    /// Trajectories per independently seeded block.
    pub block_size: u64,
    /// Smallest crossing half-width; defaults to `1e-3 / scale`.
    pub pole_window: Option<f64>,
}

impl Default for NmqjOptions {
    fn default() -> Self {
        Self { p_cap: 0.1, min_step: 1e-12, block_size: 25_000, pole_window: None }
    }
}

/// Two-class ensemble at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ensemble {
    pub n_total: u64,
    pub n_in_psi: u64,
    pub n_in_g: u64,
    /// Unnormalized `(c_e, c_g)` of the deterministic branch.
    pub psi_amplitudes: (Complex64, Complex64),
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StepKind {
    Regular,
    Crossing { pole: usize },
}

#[derive(Debug, Clone, Copy)]
struct Step {
    t0: f64,
    t1: f64,
    ratio: f64,
    kind: StepKind,
    /// Grid interval the step is attributed to.
    interval: Option<usize>,
    /// Grid point reached at `t1`.
    grid_index: Option<usize>,
}

/// Grid point inside a crossing, estimated from the crossing's entry state.
#[derive(Debug, Clone, Copy)]
struct BranchPoint {
    step: usize,
    grid_index: usize,
    ratio: f64,
}

#[derive(Debug, Clone)]
struct Schedule {
    steps: Vec<Step>,
    branches: Vec<BranchPoint>,
    /// Deterministic-branch excited amplitude at each grid point.
    c_e: Vec<Complex64>,
    /// `(pole, entry, exit)`.
    crossings: Vec<(f64, f64, f64)>,
    /// Deterministic-branch excited amplitude at each crossing exit.
    crossing_exits: Vec<Complex64>,
    regular_integrals: Vec<f64>,
    c_e_final: Complex64,
}

fn ratio_of(c_from: Complex64, c_to: Complex64, c_g: Complex64) -> f64 {
    (c_to.norm_sqr() + c_g.norm_sqr()) / (c_from.norm_sqr() + c_g.norm_sqr())
}

fn interval_of(grid: &[f64], t: f64) -> Option<usize> {
    if t < grid[0] || t > grid[grid.len() - 1] || grid.len() < 2 {
        return None;
    }
    Some(grid.partition_point(|&x| x <= t).saturating_sub(1).min(grid.len() - 2))
}

fn build_schedule(gen: &dyn Generator, initial: &InitialState, grid: &TimeGrid, opts: &NmqjOptions) -> Result<Schedule> {
    let pts = grid.points();
    let t_end = grid.t_end();
    let c_g = initial.c_g0();
    let scale = gen.frequency_scale();
    let w_min = match (opts.pole_window, scale) {
        (Some(d), _) => d,
        (None, Some(w)) => DEFAULT_WINDOW / w,
        (None, None) => 0.0,
    };
    let poles: Vec<f64> = if gen.has_poles() { gen.poles(t_end + 1.0 / scale.unwrap_or(1.0))? } else { Vec::new() };

    let mut steps = Vec::new();
    let mut branches = Vec::new();
    let mut c_e_grid = vec![Complex64::new(0.0, 0.0); pts.len()];
    let mut crossings = Vec::new();
    let mut crossing_exits = Vec::new();
    let mut regular_integrals = Vec::new();

    let mut t = 0.0;
    let mut c = initial.c_e0();
    let mut gi = 0;
    while gi < pts.len() && pts[gi] == 0.0 {
        c_e_grid[gi] = c;
        gi += 1;
    }
    let mut h_prev = f64::INFINITY;

    for (pi, &p) in poles.iter().enumerate() {
        if p >= t_end {
            if p - t_end < w_min {
                return Err(Error::PoleAtGridEnd { t_end, pole: p });
            }
            break;
        }
        let spacing = poles.get(pi + 1).map_or(f64::INFINITY, |q| q - p);
        let period = 2.0 * std::f64::consts::PI / scale.unwrap_or(1.0);
        let w_in = (0.1 * spacing).min(0.5 * (p - t)).min(0.1 * period).min(0.5 * (t_end - p));
        if w_in < w_min {
            if t_end - p < 2.0 * w_min {
                return Err(Error::PoleAtGridEnd { t_end, pole: p });
            }
            return Err(Error::StepProbabilityOverflow { t: p });
        }
        let (w_in, w_out, crossing) = match balanced_exit(gen, &poles, p, w_in, w_min, (0.5 * spacing).min(t_end - p)) {
            Some((w_out, f)) => (w_in, w_out, f),
            None => symmetric_crossing(gen, &poles, p, w_in, w_min, t, c, c_g, opts.p_cap)?,
        };
        let entry = p - w_in;
        let exit = p + w_out;
        march(gen, &poles, pts, &mut t, &mut c, c_g, entry, &mut gi, &mut c_e_grid, &mut steps, &mut h_prev, opts)?;

        let c_exit = c * crossing.amplitude_ratio();
        let step_idx = steps.len();
        while gi < pts.len() && pts[gi] < exit {
            let f = log_factor(gen, &poles, entry, pts[gi]);
            let c_here = c * f.amplitude_ratio();
            c_e_grid[gi] = c_here;
            branches.push(BranchPoint { step: step_idx, grid_index: gi, ratio: ratio_of(c, c_here, c_g) });
            gi += 1;
        }
        let grid_index = if gi < pts.len() && pts[gi] == exit {
            c_e_grid[gi] = c_exit;
            gi += 1;
            Some(gi - 1)
        } else {
            None
        };
        steps.push(Step {
            t0: entry,
            t1: exit,
            ratio: ratio_of(c, c_exit, c_g),
            kind: StepKind::Crossing { pole: crossings.len() },
            interval: interval_of(pts, p),
            grid_index,
        });
        crossings.push((p, entry, exit));
        crossing_exits.push(c_exit);
        regular_integrals.push(
            tcl_solver::regular_integral(gen, p, entry, p) + tcl_solver::regular_integral(gen, p, p, exit),
        );
        t = exit;
        c = c_exit;
    }
    march(gen, &poles, pts, &mut t, &mut c, c_g, t_end, &mut gi, &mut c_e_grid, &mut steps, &mut h_prev, opts)?;

    Ok(Schedule { steps, branches, c_e: c_e_grid, crossings, crossing_exits, regular_integrals, c_e_final: c })
}

/// Exit offset `w` after the pole where `|c_e(p + w)| = |c_e(p - w_in)|`,
/// searched in `[w_min, w_max]`.
fn balanced_exit(
    gen: &dyn Generator,
    poles: &[f64],
    p: f64,
    w_in: f64,
    w_min: f64,
    w_max: f64,
) -> Option<(f64, LogFactor)> {
    let gap = |w: f64| log_factor(gen, poles, p - w_in, p + w);
    if !(w_max > w_min) || gap(w_min).value >= 0.0 || gap(w_max).value < 0.0 {
        return None;
    }
    // Safeguarded Newton; d(value)/dw = -gamma(p + w).
    let (mut lo, mut hi) = (w_min, w_max);
    let mut w = w_in.clamp(lo, hi);
    for _ in 0..100 {
        let f = gap(w);
        if f.value.abs() <= 1e-12 {
            return Some((w, f));
        }
        if f.value < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let newton = w + f.value / gen.rates(p + w).gamma;
        w = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * p.max(1.0) {
            break;
        }
    }
    Some((w, gap(w)))
}

/// Largest symmetric window, at most `w`, with an admissible norm ratio.
#[allow(clippy::too_many_arguments)]
fn symmetric_crossing(
    gen: &dyn Generator,
    poles: &[f64],
    p: f64,
    mut w: f64,
    w_min: f64,
    t: f64,
    c: Complex64,
    c_g: Complex64,
    p_cap: f64,
) -> Result<(f64, f64, LogFactor)> {
    loop {
        if w < w_min {
            return Err(Error::StepProbabilityOverflow { t: p });
        }
        let c_entry = c * log_factor(gen, poles, t, p - w).amplitude_ratio();
        let f = log_factor(gen, poles, p - w, p + w);
        if (1.0 - ratio_of(c_entry, c_entry * f.amplitude_ratio(), c_g)).abs() <= p_cap {
            return Ok((w, w, f));
        }
        w *= 0.5;
    }
}

/// Regular steps from `t` to `target`, halving until the norm ratio is admissible.
#[allow(clippy::too_many_arguments)]
fn march(
    gen: &dyn Generator,
    poles: &[f64],
    pts: &[f64],
    t: &mut f64,
    c: &mut Complex64,
    c_g: Complex64,
    target: f64,
    gi: &mut usize,
    c_e_grid: &mut [Complex64],
    steps: &mut Vec<Step>,
    h_prev: &mut f64,
    opts: &NmqjOptions,
) -> Result<()> {
    while *t < target {
        let stop = if *gi < pts.len() && pts[*gi] <= target { pts[*gi] } else { target };
        let mut h = (stop - *t).min(2.0 * *h_prev);
        loop {
            let t1 = if h >= stop - *t { stop } else { *t + h };
            let c1 = *c * log_factor(gen, poles, *t, t1).amplitude_ratio();
            let ratio = ratio_of(*c, c1, c_g);
            if (1.0 - ratio).abs() <= opts.p_cap {
                let grid_index = (*gi < pts.len() && t1 == pts[*gi]).then(|| {
                    c_e_grid[*gi] = c1;
                    *gi += 1;
                    *gi - 1
                });
                steps.push(Step {
                    t0: *t,
                    t1,
                    ratio,
                    kind: StepKind::Regular,
                    interval: interval_of(pts, 0.5 * (*t + t1)),
                    grid_index,
                });
                *h_prev = t1 - *t;
                *t = t1;
                *c = c1;
                break;
            }
            h *= 0.5;
            if h < opts.min_step {
                return Err(Error::StepProbabilityOverflow { t: *t });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct BlockResult {
    n_psi: Vec<u64>,
    variance: Vec<f64>,
    forward: Vec<u64>,
    reverse: Vec<u64>,
    crossing_forward: Vec<u64>,
    crossing_reverse: Vec<u64>,
    crossing_n_psi: Vec<u64>,
    clamps: u64,
    final_n_psi: u64,
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
}

fn run_block(schedule: &Schedule, n_grid: usize, n_block: u64, seed: u64, block: u64) -> Result<BlockResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let n_intervals = n_grid.saturating_sub(1);
    let mut out = BlockResult {
        n_psi: vec![n_block; n_grid],
        variance: vec![0.0; n_grid],
        forward: vec![0; n_intervals],
        reverse: vec![0; n_intervals],
        crossing_forward: vec![0; schedule.crossings.len()],
        crossing_reverse: vec![0; schedule.crossings.len()],
        crossing_n_psi: vec![0; schedule.crossings.len()],
        clamps: 0,
        final_n_psi: n_block,
    };
    let mut n_psi = n_block;
    let mut var = 0.0;
    let mut branch = schedule.branches.iter().peekable();

    for (k, step) in schedule.steps.iter().enumerate() {
        let n_g = n_block - n_psi;
        // Grid points inside a crossing: uncommitted draws from the entry state.
        while let Some(b) = branch.next_if(|b| b.step == k) {
            let (n_est, v_est) = if b.ratio <= 1.0 {
                let p = 1.0 - b.ratio;
                (n_psi - binomial(n_psi, p, &mut rng), b.ratio * b.ratio * var + n_psi as f64 * p * (1.0 - p))
            } else {
                let q = if n_g == 0 { 0.0 } else { (n_psi as f64 / n_g as f64 * (b.ratio - 1.0)).min(1.0) };
                (n_psi + binomial(n_g, q, &mut rng), b.ratio * b.ratio * var + n_g as f64 * q * (1.0 - q))
            };
            out.n_psi[b.grid_index] = n_est;
            out.variance[b.grid_index] = v_est;
        }

        let (fwd, rev) = if step.ratio <= 1.0 {
            let p = 1.0 - step.ratio;
            let k_jump = binomial(n_psi, p, &mut rng);
            var = step.ratio * step.ratio * var + n_psi as f64 * p * (1.0 - p);
            n_psi -= k_jump;
            (k_jump, 0)
        } else {
            let demand = n_psi as f64 * (step.ratio - 1.0);
            if n_g == 0 {
                if demand > 0.0 {
                    return Err(Error::EmptyTargetClass { t: step.t0 });
                }
                (0, 0)
            } else {
                let mut q = demand / n_g as f64;
                if q > 1.0 {
                    q = 1.0;
                    out.clamps += 1;
                }
                let k_jump = binomial(n_g, q, &mut rng);
                var = step.ratio * step.ratio * var + n_g as f64 * q * (1.0 - q);
                n_psi += k_jump;
                (0, k_jump)
            }
        };
        if let Some(i) = step.interval {
            out.forward[i] += fwd;
            out.reverse[i] += rev;
        }
        if let StepKind::Crossing { pole } = step.kind {
            out.crossing_forward[pole] += fwd;
            out.crossing_reverse[pole] += rev;
            out.crossing_n_psi[pole] = n_psi;
        }
        if let Some(g) = step.grid_index {
            out.n_psi[g] = n_psi;
            out.variance[g] = var;
        }
    }
    out.final_n_psi = n_psi;
    Ok(out)
}

/// Completed Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct NmqjRun {
    /// Ensemble averages with `std_errors` set.
    pub trajectory: Trajectory,
    /// Members of the `psi` class at each grid point.
    pub n_in_psi: Vec<u64>,
    pub final_ensemble: Ensemble,
    forward: Vec<u64>,
    reverse: Vec<u64>,
    steps_per_interval: Vec<usize>,
    min_step_per_interval: Vec<f64>,
    crossing_stats: Vec<CrossingStats>,
    clamps: u64,
}

pub fn nmqj_run(
    kind: GeneratorKind,
    params: &PhysicalParams,
    initial: &InitialState,
    grid: &TimeGrid,
    n_traj: u64,
    seed: u64,
) -> Result<NmqjRun> {
    let gen = TclGenerator::new(kind, *params)?;
    nmqj_run_with(&gen, initial, grid, n_traj, seed, &NmqjOptions::default())
}

pub fn nmqj_run_with(
    gen: &dyn Generator,
    initial: &InitialState,
    grid: &TimeGrid,
    n_traj: u64,
    seed: u64,
    opts: &NmqjOptions,
) -> Result<NmqjRun> {
    if n_traj < 100 {
        return Err(Error::InvalidOption(format!("need at least 100 trajectories, got {n_traj}")));
    }
    if !(opts.p_cap > 0.0 && opts.p_cap < 1.0) || !(opts.min_step > 0.0) || opts.block_size == 0 {
        return Err(Error::InvalidOption("p_cap must lie in (0, 1); min_step and block_size positive".into()));
    }
    let schedule = build_schedule(gen, initial, grid, opts)?;
    let n_grid = grid.len();

    let n_blocks = n_traj.div_ceil(opts.block_size);
    let base = n_traj / n_blocks;
    let extra = n_traj % n_blocks;
    let blocks: Vec<BlockResult> = (0..n_blocks)
        .into_par_iter()
        .map(|b| run_block(&schedule, n_grid, base + u64::from(b < extra), seed, b))
        .collect::<Result<_>>()?;

    let n_intervals = n_grid.saturating_sub(1);
    let mut n_psi = vec![0u64; n_grid];
    let mut variance = vec![0.0; n_grid];
    let mut forward = vec![0u64; n_intervals];
    let mut reverse = vec![0u64; n_intervals];
    let mut crossing_forward = vec![0u64; schedule.crossings.len()];
    let mut crossing_reverse = vec![0u64; schedule.crossings.len()];
    let mut crossing_n_psi = vec![0u64; schedule.crossings.len()];
    let mut clamps = 0;
    let mut final_n_psi = 0;
    for b in &blocks {
        for i in 0..n_grid {
            n_psi[i] += b.n_psi[i];
            variance[i] += b.variance[i];
        }
        for i in 0..n_intervals {
            forward[i] += b.forward[i];
            reverse[i] += b.reverse[i];
        }
        for i in 0..schedule.crossings.len() {
            crossing_forward[i] += b.crossing_forward[i];
            crossing_reverse[i] += b.crossing_reverse[i];
            crossing_n_psi[i] += b.crossing_n_psi[i];
        }
        clamps += b.clamps;
        final_n_psi += b.final_n_psi;
    }

    let n = n_traj as f64;
    let c_g = initial.c_g0();
    let ensemble_state = |count: u64, c_e: Complex64| {
        let norm2 = c_e.norm_sqr() + c_g.norm_sqr();
        let frac = count as f64 / n;
        QubitState::new(frac * c_e.norm_sqr() / norm2, frac * c_e * c_g.conj() / norm2)
    };
    let mut states = Vec::with_capacity(n_grid);
    let mut std_errors = Vec::with_capacity(n_grid);
    for i in 0..n_grid {
        let c_e = schedule.c_e[i];
        states.push(ensemble_state(n_psi[i], c_e));
        let p_tilde = (n_psi[i] as f64 + 2.0) / (n + 4.0);
        let v = variance[i].max(n * p_tilde * (1.0 - p_tilde));
        std_errors.push(c_e.norm_sqr() / (c_e.norm_sqr() + c_g.norm_sqr()) * v.sqrt() / n);
    }

    let mut steps_per_interval = vec![0usize; n_intervals];
    let mut min_step_per_interval = vec![f64::INFINITY; n_intervals];
    for s in &schedule.steps {
        if let Some(i) = s.interval {
            steps_per_interval[i] += 1;
            min_step_per_interval[i] = min_step_per_interval[i].min(s.t1 - s.t0);
        }
    }

    let mut crossings = Vec::with_capacity(schedule.crossings.len());
    let mut crossing_stats = Vec::with_capacity(schedule.crossings.len());
    for (k, &(pole, entry, exit)) in schedule.crossings.iter().enumerate() {
        let step = schedule
            .steps
            .iter()
            .find(|s| s.kind == StepKind::Crossing { pole: k })
            .expect("every crossing has a step");
        crossing_stats.push(CrossingStats {
            pole,
            entry,
            exit,
            norm_ratio: step.ratio,
            forward: crossing_forward[k],
            reverse: crossing_reverse[k],
        });
        crossings.push(PoleCrossing {
            pole,
            regular_integral: schedule.regular_integrals[k],
            post_state: ensemble_state(crossing_n_psi[k], schedule.crossing_exits[k]),
        });
    }

    let mut trajectory = Trajectory {
        grid: grid.clone(),
        states,
        crossings,
        std_errors: Some(std_errors),
        positivity_breach: false,
    };
    trajectory.check_positivity(1e-12);

    Ok(NmqjRun {
        trajectory,
        n_in_psi: n_psi,
        final_ensemble: Ensemble {
            n_total: n_traj,
            n_in_psi: final_n_psi,
            n_in_g: n_traj - final_n_psi,
            psi_amplitudes: (schedule.c_e_final, c_g),
            rng_seed: seed,
        },
        forward,
        reverse,
        steps_per_interval,
        min_step_per_interval,
        crossing_stats,
        clamps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalStats {
    pub t_start: f64,
    pub t_end: f64,
    pub forward_jumps: u64,
    pub reverse_jumps: u64,
    pub steps: usize,
    /// Smallest step attributed to the interval; infinite if none.
    pub min_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingStats {
    pub pole: f64,
    pub entry: f64,
    pub exit: f64,
    /// `|psi(exit)|^2 / |psi(entry)|^2`.
    pub norm_ratio: f64,
    pub forward: u64,
    pub reverse: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmqjReport {
    pub intervals: Vec<IntervalStats>,
    pub crossings: Vec<CrossingStats>,
    pub total_forward: u64,
    pub total_reverse: u64,
    /// `n_psi(0) - n_psi(end)`.
    pub net_transfer: i64,
    /// `total_forward - total_reverse - net_transfer`; zero when every step
    /// lies within the grid.
    pub balance: i64,
    pub clamped_reverse_steps: u64,
}

pub fn nmqj_diagnostics(run: &NmqjRun) -> NmqjReport {
    let pts = run.trajectory.grid.points();
    let intervals: Vec<IntervalStats> = (0..run.forward.len())
        .map(|i| IntervalStats {
            t_start: pts[i],
            t_end: pts[i + 1],
            forward_jumps: run.forward[i],
            reverse_jumps: run.reverse[i],
            steps: run.steps_per_interval[i],
            min_step: run.min_step_per_interval[i],
        })
        .collect();
    let total_forward: u64 = run.forward.iter().sum();
    let total_reverse: u64 = run.reverse.iter().sum();
    let first = run.n_in_psi.first().copied().unwrap_or(0) as i64;
    let last = run.n_in_psi.last().copied().unwrap_or(0) as i64;
    let net_transfer = first - last;
    NmqjReport {
        intervals,
        crossings: run.crossing_stats.clone(),
        total_forward,
        total_reverse,
        net_transfer,
        balance: total_forward as i64 - total_reverse as i64 - net_transfer,
        clamped_reverse_steps: run.clamps,
    }
}
