//! End-to-end checks of the headline numerical claims, shared by the CLI `reproduce`
//! command and the acceptance test target.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{brute_force_solve, solve, AssignmentProblem};
use crate::bench::{run_bench, BenchConfig, BenchRow};
use crate::error::Result;
use crate::flicker::{
    curve_shift, loss_centroid, phase_slip_scan, psi_grid, sequence_flicker, simulate_transition,
    Probe, SurvivalModel, TransientMode, TransientModel,
};
use crate::montecarlo::{self, McConfig};
use crate::optics::{
    phase_slip, propagate, sample_tweezer, shortest_angle, OpticalConfig, PhaseMap, Pos, Propagator,
    TweezerPattern, TweezerSpec,
};
use crate::patterns::{generate, load_stochastic, Geometry, GeometrySpec};
use crate::sequencer::{plan, wgs_only_sequence, HologramSequence, SequencerSettings};
use crate::stats::{self, StatsParams};
use crate::tolerances as tol;
use crate::wgs::{run_wgs_with, WgsResult, WgsSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed_s
        )
    }
}

/// Sizes of the heavier checks. Defaults are the pinned acceptance settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub slip_grid: usize,
    pub displacement: i64,
    pub wgs_grid: usize,
    pub assignment_instances: usize,
    pub lpi_grid: usize,
    pub lpi_plans: usize,
    pub flicker_grid: usize,
    pub flicker_seeds: u64,
    pub scan_grid: usize,
    pub scan_points: usize,
    pub scan_steps: usize,
    pub mc_trials: u64,
    pub bench_grid: usize,
    pub bench_small_grid: usize,
    pub bench_repetitions: usize,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            slip_grid: 1024,
            displacement: 250,
            wgs_grid: 1024,
            assignment_instances: 1000,
            lpi_grid: 512,
            lpi_plans: 100,
            flicker_grid: 128,
            flicker_seeds: 20,
            scan_grid: 1024,
            scan_points: 64,
            scan_steps: 4,
            mc_trials: 100_000,
            bench_grid: 512,
            bench_small_grid: 128,
            bench_repetitions: 100,
        }
    }
}

impl ReproduceOptions {
    /// Reduced grids and sample counts for smoke runs; d/M stays close to 250/1024.
    pub fn quick() -> Self {
        ReproduceOptions {
            slip_grid: 256,
            displacement: 64,
            wgs_grid: 256,
            assignment_instances: 100,
            lpi_grid: 256,
            lpi_plans: 3,
            flicker_seeds: 2,
            scan_grid: 256,
            scan_points: 32,
            mc_trials: 20_000,
            bench_grid: 256,
            bench_repetitions: 5,
            ..Default::default()
        }
    }
}

pub const TITLES: [&str; 10] = [
    "Phase-slip law",
    "Translation identity",
    "WGS uniformity",
    "Assignment oracle",
    "LPI endpoint and step bounds",
    "Flicker contrast",
    "Phase-slip scan shift",
    "Stats reproduction",
    "Monte Carlo assembly",
    "Bench properties",
];

type Check = (bool, String);

pub fn run_criterion(id: u32, opts: &ReproduceOptions) -> Outcome {
    let start = Instant::now();
    let res: Result<Check> = match id {
        1 => phase_slip_law(opts),
        2 => translation_identity(opts),
        3 => wgs_uniformity(opts),
        4 => assignment_oracle(opts),
        5 => lpi_bounds(opts),
        6 => flicker_contrast(opts),
        7 => slip_scan_shift(opts),
        8 => stats_reproduction(),
        9 => monte_carlo(opts),
        10 => bench_properties(opts),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome {
        id,
        title: TITLES.get(id as usize - 1).copied().unwrap_or("unknown").to_string(),
        passed,
        detail,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(opts: &ReproduceOptions) -> Vec<Outcome> {
    (1..=10).map(|id| run_criterion(id, opts)).collect()
}

fn grid_pattern(rows: usize, cols: usize) -> Result<TweezerPattern> {
    generate(&GeometrySpec::new(Geometry::Grid { rows, cols }, 13.0))
}

fn phase_slip_law(o: &ReproduceOptions) -> Result<Check> {
    let cfg = OpticalConfig::square(o.slip_grid).with_displacement(o.displacement, 0);
    let prop = Propagator::new(&cfg)?;
    let xi = phase_slip(o.displacement as f64, o.slip_grid);
    let start = grid_pattern(4, 4)?;
    let moved = start.translated(-1, 0);
    let fa = prop.propagate(&prop.synthesize(start.tweezers())?)?;
    let fb = prop.propagate(&prop.synthesize(moved.tweezers())?)?;
    let mut worst: f64 = 0.0;
    for (a, b) in start.positions().zip(moved.positions()) {
        let (_, pa) = sample_tweezer(&fa, a)?;
        let (_, pb) = sample_tweezer(&fb, b)?;
        worst = worst.max((shortest_angle(pa, pb) - xi).abs());
    }
    Ok((
        worst <= tol::PHASE_SLIP,
        format!("xi = {:.6} pi, worst deviation {worst:.2e} rad over 16 tweezers", xi / PI),
    ))
}

fn translation_identity(o: &ReproduceOptions) -> Result<Check> {
    let n = o.slip_grid;
    let cfg = OpticalConfig::square(n);
    let holo = PhaseMap::from_fn(n, n, |k, _| TAU * k as f64 / n as f64);
    let field = propagate(&holo, &cfg)?;
    let (peak_pos, peak) = field.peak();
    let target = Pos::new(-1, 0);
    let off = field
        .values()
        .indexed_iter()
        .filter(|((r, c), _)| !(*r as i64 == n as i64 / 2 && *c as i64 == n as i64 / 2 - 1))
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);
    let ratio = off / peak.norm();
    Ok((
        peak_pos == target && ratio <= tol::DELTA_SIDELOBE,
        format!("peak at ({}, {}), off-target/peak {ratio:.2e}", peak_pos.m, peak_pos.n),
    ))
}

fn wgs_uniformity(o: &ReproduceOptions) -> Result<Check> {
    let prop = Propagator::new(&OpticalConfig::square(o.wgs_grid))?;
    let target = grid_pattern(6, 6)?;
    let settings = WgsSettings { max_iters: tol::WGS_GRID_ITERS, ..Default::default() };
    let res = run_wgs_with(&prop, &target, &settings)?;
    let field = prop.propagate(&res.hologram)?;
    let mut drift: f64 = 0.0;
    for t in res.achieved.tweezers() {
        let (a, p) = sample_tweezer(&field, t.pos)?;
        drift = drift.max((a - t.amp).abs()).max(shortest_angle(t.phase, p).abs() * a);
    }
    let exact = prop.synthesize(res.drive.tweezers())? == res.hologram;
    Ok((
        res.converged && res.uniformity <= tol::UNIFORMITY && drift <= tol::SELF_CONSISTENCY && exact,
        format!(
            "uniformity {:.4} after {} of {} iterations, re-propagation drift {drift:.1e}",
            res.uniformity,
            res.iters_used,
            tol::WGS_GRID_ITERS
        ),
    ))
}

fn random_instance(rng: &mut ChaCha8Rng) -> Result<AssignmentProblem> {
    let n_t = rng.random_range(1..=6usize);
    let n_s = rng.random_range(n_t..=n_t + 4);
    let side = rng.random_range(3..=8i32);
    let mut cells: Vec<Pos> = (0..side * side).map(|i| Pos::new(i % side - side / 2, i / side - side / 2)).collect();
    cells.shuffle(rng);
    let sources = cells[..n_s.min(cells.len())].to_vec();
    let mut targets: Vec<Pos> = (0..side * side).map(|i| Pos::new(i % side, i / side - side / 2)).collect();
    targets.shuffle(rng);
    targets.truncate(n_t.min(sources.len()));
    AssignmentProblem::new(sources, targets)
}

fn assignment_oracle(o: &ReproduceOptions) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    for _ in 0..o.assignment_instances {
        let p = random_instance(&mut rng)?;
        if solve(&p)?.total_cost == brute_force_solve(&p)?.total_cost {
            agree += 1;
        }
    }
    Ok((
        agree == o.assignment_instances,
        format!("{agree}/{} instances at the brute-force optimum", o.assignment_instances),
    ))
}

fn check_steps(seq: &HologramSequence) -> bool {
    seq.frames.windows(2).all(|w| {
        let prev: HashMap<usize, Pos> = w[0].tweezers.iter().map(|t| (t.id, t.spec.pos)).collect();
        w[1].tweezers.iter().all(|t| {
            prev.get(&t.id)
                .is_none_or(|p| (p.m - t.spec.pos.m).abs() <= 1 && (p.n - t.spec.pos.n).abs() <= 1)
        })
    })
}

fn lpi_bounds(o: &ReproduceOptions) -> Result<Check> {
    let prop = Propagator::new(&OpticalConfig::square(o.lpi_grid))?;
    let settings = WgsSettings { max_iters: tol::WGS_GRID_ITERS, ..Default::default() };
    let initial: Arc<WgsResult> = Arc::new(run_wgs_with(&prop, &grid_pattern(6, 6)?, &settings)?);
    let target: Arc<WgsResult> = Arc::new(run_wgs_with(&prop, &grid_pattern(4, 4)?, &settings)?);
    let (mut plans, mut seed, mut bad_end, mut bad_count, mut bad_step, mut longest) = (0, 0u64, 0, 0, 0, 0);
    while plans < o.lpi_plans {
        let occ = load_stochastic(&initial.drive, 0.45, seed)?;
        seed += 1;
        if occ.iter().filter(|&&b| b).count() < 16 {
            continue;
        }
        plans += 1;
        let pl = plan(initial.clone(), target.clone(), &occ, &SequencerSettings::default())?;
        let seq = pl.full_sequence(&prop)?;
        longest = longest.max(pl.move_steps);
        if seq.frames.last().map(|f| &f.hologram) != Some(&target.hologram) {
            bad_end += 1;
        }
        if seq.len() != pl.ramp_steps + pl.move_steps {
            bad_count += 1;
        }
        if !check_steps(&seq) {
            bad_step += 1;
        }
    }
    Ok((
        bad_end + bad_count + bad_step == 0,
        format!(
            "{plans} plans (seeds 0..{seed}), N up to {longest}: {bad_end} endpoint, {bad_count} frame-count, {bad_step} step violations"
        ),
    ))
}

fn flicker_contrast(o: &ReproduceOptions) -> Result<Check> {
    let uniform = Propagator::new(&OpticalConfig::square(64))?;
    let probe = [Probe { id: 0, from: Pos::new(2, 0), to: Pos::new(2, 0) }];
    let model = TransientModel::cross_fade(16);
    let mid = |theta: f64| -> Result<f64> {
        let a = uniform.synthesize(&[TweezerSpec::new((2, 0), 1.0, 0.0)])?;
        let b = uniform.synthesize(&[TweezerSpec::new((2, 0), 1.0, theta)])?;
        let tr = simulate_transition(&a, &b, &probe, &model, &uniform)?;
        let i = tr.tau.iter().position(|&t| t == 0.5).expect("τ grid contains 0.5");
        Ok(tr.probes[0].rel_intensity[i])
    };
    let (opposite, same) = (mid(PI)?, mid(0.0)?);

    let prop = Propagator::new(&OpticalConfig::square(o.flicker_grid).with_spot_waist(2.0))?;
    let single = |m: i32, seed: u64| {
        run_wgs_with(&prop, &TweezerPattern::uniform([Pos::new(m, 0)])?, &WgsSettings { rng_seed: seed, ..Default::default() })
    };
    let mut wins = 0;
    let mut total = 0;
    let mut worst_margin = f64::INFINITY;
    for mode in [TransientMode::CrossFade, TransientMode::ValuePathLinear] {
        let model = TransientModel { substeps: 8, mode };
        for seed in 0..o.flicker_seeds {
            let pl = plan(single(-3, seed)?, single(3, seed + 100)?, &[true], &SequencerSettings::default())?;
            let lpi = pl.full_sequence(&prop)?;
            let wgs = wgs_only_sequence(&lpi, &prop, &WgsSettings { rng_seed: seed * 1000, ..Default::default() })?;
            let a = sequence_flicker(&lpi, &model, &prop)?.min_rel_intensity();
            let b = sequence_flicker(&wgs, &model, &prop)?.min_rel_intensity();
            total += 1;
            if a > b {
                wins += 1;
            }
            worst_margin = worst_margin.min(a - b);
        }
    }
    Ok((
        opposite <= tol::DESTRUCTIVE_DIP && same >= tol::CONSTRUCTIVE_FLOOR && wins == total,
        format!(
            "tau=0.5: {opposite:.1e} at pi, {same:.6} at 0; LPI above WGS-only in {wins}/{total} runs (min margin {worst_margin:.3})"
        ),
    ))
}

fn slip_scan_shift(o: &ReproduceOptions) -> Result<Check> {
    let base = OpticalConfig::square(o.scan_grid).with_spot_waist(2.0);
    let p0 = Propagator::new(&base)?;
    let pd = Propagator::new(&base.clone().with_displacement(o.displacement, 0))?;
    let array = run_wgs_with(&p0, &grid_pattern(2, 2)?, &WgsSettings::default())?.drive;
    let psi = psi_grid(o.scan_points);
    let model = TransientModel::cross_fade(8);
    let surv = SurvivalModel::default();
    let r0 = phase_slip_scan(array.tweezers(), o.scan_steps, &psi, &model, &p0, &surv)?;
    let rd = phase_slip_scan(array.tweezers(), o.scan_steps, &psi, &model, &pd, &surv)?;
    let step = TAU / o.scan_points as f64;
    let (Some(c0), Some(shift)) = (loss_centroid(&r0), curve_shift(&r0, &rd)) else {
        return Ok((false, "no loss in scan".into()));
    };
    let xi = phase_slip(o.displacement as f64, o.scan_grid);
    Ok((
        (shift + 0.5 * PI).abs() <= step && (shift + xi).abs() <= step,
        format!(
            "d=0 loss centroid {:.3} pi, shift {:.3} pi (xi {:.3} pi, step {:.3} pi)",
            c0 / PI,
            shift / PI,
            xi / PI,
            step / PI
        ),
    ))
}

fn stats_reproduction() -> Result<Check> {
    let p = StatsParams::reference();
    let r1 = stats::report(&p, Some((0.988, 0.0)), 1)?;
    let r4 = stats::report(&p, Some((0.968, 0.0)), 4)?;
    let s36 = r1.survival_initial.value;
    let s16 = r1.survival_target.value;
    let (ra, rb) = (r1.rearrangement.map_or(f64::NAN, |e| e.value), r4.rearrangement.map_or(f64::NAN, |e| e.value));
    let ok = (s36 - 0.993).abs() <= tol::STATS_ABS
        && (s16 - 0.9978).abs() <= tol::STATS_ABS
        && (ra - 0.997).abs() <= tol::STATS_ABS
        && (rb - 0.996).abs() <= tol::STATS_ABS;
    Ok((ok, format!("S36 {s36:.5}, S16 {s16:.5}, R {ra:.5}, R(n=4) {rb:.5}")))
}

fn monte_carlo(o: &ReproduceOptions) -> Result<Check> {
    let small = montecarlo::run(&McConfig { success: 0.988, trials: o.mc_trials, seed: 1, ..Default::default() })?;
    let large = montecarlo::run(&McConfig {
        p_load: 1.0,
        success: 0.997,
        n_initial: 1000,
        n_target: 1000,
        trials: o.mc_trials,
        seed: 2,
        ..Default::default()
    })?;
    let (a, b) = (small.defect_free_fraction, large.defect_free_fraction);
    Ok((
        (a - 0.824).abs() <= tol::MC_SMALL_ARRAY && (b - 0.050).abs() <= tol::MC_LARGE_ARRAY,
        format!("N=16: {a:.4} +- {:.4}; N=1000: {b:.4} +- {:.4}", small.defect_free_stderr, large.defect_free_stderr),
    ))
}

fn bench_properties(o: &ReproduceOptions) -> Result<Check> {
    let cfg = BenchConfig {
        grid: o.bench_grid,
        n_tw: vec![9, 2401],
        repetitions: o.bench_repetitions,
        ..Default::default()
    };
    // short rows in repeated ABBA order so drift of the host speed cancels out of the comparison
    const BLOCKS: usize = 50;
    let serial = run_bench(&BenchConfig {
        n_tw: [9, 2401, 2401, 9].repeat(BLOCKS),
        repetitions: o.bench_repetitions.div_ceil(2 * BLOCKS),
        ..cfg.clone()
    })?;
    let piped = run_bench(&BenchConfig { pipelined: true, ..cfg.clone() })?;
    let small = run_bench(&BenchConfig {
        grid: o.bench_small_grid,
        n_tw: vec![9, 121],
        pipelined: true,
        ..cfg
    })?;

    let pooled = |n: usize| {
        let m: Vec<f64> = serial.iter().filter(|r| r.n_tw == n).map(|r| r.compute.mean_ms).collect();
        m.iter().sum::<f64>() / m.len() as f64
    };
    let (c9, c2401) = (pooled(9), pooled(2401));
    let spread = (c2401 - c9).abs() / c9.min(c2401);
    let sum_err = serial.iter().map(|r| (r.total.mean_ms - r.stage_sum_ms()).abs()).fold(0.0, f64::max);
    let pipe_err = piped
        .iter()
        .chain(&small)
        .map(|r: &BenchRow| (r.total.mean_ms / r.pipeline_bound_ms() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((
        spread < tol::BENCH_COMPUTE_SPREAD && sum_err < 1e-3 && pipe_err < tol::BENCH_PIPELINE,
        format!(
            "compute {c9:.3} vs {c2401:.3} ms ({:.1} %), serialized total up to {:.3} ms, |total - sum| {sum_err:.1e} ms, pipelined period off bound by {:.1} % (max over {} rows)",
            spread * 100.0,
            serial.iter().map(|r| r.total.mean_ms).fold(0.0, f64::max),
            pipe_err * 100.0,
            piped.len() + small.len()
        ),
    ))
}
