use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use holosort::assignment::{solve, AssignmentProblem};
use holosort::bench::{self, BenchConfig, TransferMode};
use holosort::flicker::{
    self, loss_centroid, phase_slip_scan, psi_grid, sequence_flicker, SurvivalModel, TransientMode,
    TransientModel,
};
use holosort::io::{
    self, config_hash, write_json, OccupancyFile, PatternFile, RunManifest, WgsFile,
};
use holosort::montecarlo::{self, McConfig, RetryPolicy};
use holosort::optics::phase_slip;
use holosort::patterns::{generate, load_stochastic, Geometry, GeometrySpec, DEFAULT_SPACING};
use holosort::reproduce::{run_criterion, ReproduceOptions};
use holosort::sequencer::{plan, wgs_only_sequence, HologramSequence, PhasePath, SequencerSettings};
use holosort::stats::{self, StatsParams};
use holosort::wgs::{run_wgs_with, WgsResult, WgsSettings};
use holosort::{Error, OpticalConfig, Pos, Propagator, TweezerPattern};

#[derive(Parser)]
#[command(name = "holosort", version, about = "Hologram sequences for parallel atom rearrangement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a target geometry (and optionally a stochastic loading).
    Pattern(PatternArgs),
    /// Balance a pattern with weighted Gerchberg-Saxton.
    Wgs(WgsArgs),
    /// Assign loaded atoms to target sites.
    Plan(PlanArgs),
    /// Export the full hologram sequence of one rearrangement cycle.
    Sequence(SequenceArgs),
    /// Simulate inter-frame transients along a sequence.
    Flicker(FlickerArgs),
    /// Survival proxy versus programmed phase slip.
    Slipscan(SlipscanArgs),
    /// SPAM-corrected survival and rearrangement fidelity.
    Stats(StatsArgs),
    /// Monte Carlo assembly statistics.
    Mc(McArgs),
    /// Stage-resolved pipeline timing.
    Bench(BenchArgs),
    /// Run the acceptance checks.
    Reproduce(ReproduceArgs),
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    Failed(String),
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Lib(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Args, Serialize)]
struct OutArg {
    /// Artifact directory; created if missing.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct OpticsArgs {
    /// Square hologram size in pixels.
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Misalignment of the computational centre along x, in pixels.
    #[arg(long, default_value_t = 0)]
    displacement: i64,
    /// Gaussian illumination giving this focal waist in Fourier units; uniform if absent.
    #[arg(long)]
    waist: Option<f64>,
}

impl OpticsArgs {
    fn config(&self) -> OpticalConfig {
        let cfg = OpticalConfig::square(self.grid).with_displacement(self.displacement, 0);
        match self.waist {
            Some(w) => cfg.with_spot_waist(w),
            None => cfg,
        }
    }
}

#[derive(Args, Serialize, Clone)]
struct WgsOpts {
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0.01)]
    uniformity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl WgsOpts {
    fn settings(&self, seed_offset: u64) -> WgsSettings {
        WgsSettings {
            max_iters: self.iters,
            uniformity_target: self.uniformity,
            rng_seed: self.seed.wrapping_add(seed_offset),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum Kind {
    Grid,
    Circle,
    Kagome,
    Triangular,
    Custom,
}

#[derive(Args, Serialize)]
struct PatternArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    /// JSON list of [m, n] sites for `--kind custom`.
    #[arg(long)]
    sites: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    spacing: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    center_m: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    center_n: f64,
    /// Also write occupancy.json with this loading probability.
    #[arg(long)]
    load_p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct WgsArgs {
    #[arg(long)]
    pattern: PathBuf,
    #[command(flatten)]
    optics: OpticsArgs,
    #[command(flatten)]
    wgs: WgsOpts,
    /// Also write the focal field as CSV.
    #[arg(long)]
    field_csv: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct PlanArgs {
    #[arg(long)]
    initial: PathBuf,
    #[arg(long = "final")]
    target: PathBuf,
    #[arg(long)]
    occupancy: PathBuf,
    #[arg(long, default_value_t = 2)]
    ramp_steps: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum PathArg {
    Shortest,
    Raw,
}

#[derive(Args, Serialize, Clone)]
struct SequenceOpts {
    #[arg(long)]
    initial: PathBuf,
    #[arg(long = "final")]
    target: PathBuf,
    #[arg(long)]
    occupancy: PathBuf,
    #[arg(long, default_value_t = 2)]
    ramp_steps: usize,
    /// Programmed phase slip per move step, in radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    psi_slip: f64,
    #[arg(long, value_enum, default_value_t = PathArg::Shortest)]
    phase_path: PathArg,
    #[command(flatten)]
    optics: OpticsArgs,
    #[command(flatten)]
    wgs: WgsOpts,
}

#[derive(Args, Serialize)]
struct SequenceArgs {
    #[command(flatten)]
    seq: SequenceOpts,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum ModeArg {
    ValuePath,
    CrossFade,
}

impl ModeArg {
    fn mode(self) -> TransientMode {
        match self {
            ModeArg::ValuePath => TransientMode::ValuePathLinear,
            ModeArg::CrossFade => TransientMode::CrossFade,
        }
    }
}

#[derive(Args, Serialize)]
struct FlickerArgs {
    #[command(flatten)]
    seq: SequenceOpts,
    #[arg(long, value_enum, default_value_t = ModeArg::ValuePath)]
    mode: ModeArg,
    #[arg(long, default_value_t = 16)]
    substeps: usize,
    /// Replace every frame by an independently seeded WGS hologram of the same spots.
    #[arg(long)]
    wgs_only: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct SlipscanArgs {
    #[arg(long, default_value_t = 512)]
    grid: usize,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    displacement: i64,
    #[arg(long, default_value_t = 2.0)]
    waist: f64,
    #[arg(long, default_value_t = 2)]
    rows: usize,
    #[arg(long, default_value_t = 2)]
    cols: usize,
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    spacing: f64,
    /// Total unit moves, out and back.
    #[arg(long, default_value_t = 4)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    points: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::CrossFade)]
    mode: ModeArg,
    #[arg(long, default_value_t = 8)]
    substeps: usize,
    /// Relative intensity below which an atom counts as lost.
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    /// Fidelity table as JSON; the published characterisation if absent.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    r0_err: f64,
    #[arg(long, default_value_t = 1)]
    cycles: u32,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum PolicyArg {
    SingleShot,
    RefillOnDefect,
    ResortAll,
}

#[derive(Args, Serialize)]
struct McArgs {
    #[arg(long, default_value_t = 0.45)]
    p_load: f64,
    #[arg(long, default_value_t = 1.0)]
    success: f64,
    #[arg(long, default_value_t = 1.0)]
    imaging: f64,
    #[arg(long, default_value_t = 1)]
    cycles: u32,
    #[arg(long, default_value_t = 36)]
    n_initial: usize,
    #[arg(long, default_value_t = 16)]
    n_target: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::SingleShot)]
    policy: PolicyArg,
    /// Keep shots that loaded too few atoms.
    #[arg(long)]
    no_postselect: bool,
    #[arg(long)]
    reload: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum TransferArg {
    Fixed,
    Copy,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Tweezer counts; odd squares 9..2401 if absent.
    #[arg(long, value_delimiter = ',')]
    n_tw: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 100)]
    repetitions: usize,
    #[arg(long, default_value_t = bench::DISPLAY_MS)]
    display_ms: f64,
    #[arg(long, value_enum, default_value_t = TransferArg::Fixed)]
    transfer: TransferArg,
    #[arg(long, default_value_t = bench::TRANSFER_MS)]
    transfer_ms: f64,
    #[arg(long)]
    pipelined: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct ReproduceArgs {
    /// Criteria to run; all if absent.
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u32>,
    /// Reduced sizes for a fast smoke run.
    #[arg(long)]
    quick: bool,
    #[command(flatten)]
    out: OutArg,
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    start: Instant,
}

impl Run {
    fn new<T: Serialize>(command: &str, args: &T, out: &OutArg) -> CliResult<Self> {
        fs::create_dir_all(&out.out)?;
        Ok(Run {
            dir: out.out.clone(),
            manifest: RunManifest::new(command, config_hash(args)?),
            start: Instant::now(),
        })
    }

    fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.display().to_string());
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let p = self.path(name);
        Ok(write_json(value, &p)?)
    }

    fn finish(mut self, seed: Option<u64>) -> CliResult<()> {
        self.manifest.seed = seed;
        self.manifest.wall_clock_s = self.start.elapsed().as_secs_f64();
        Ok(self.manifest.write(&self.dir)?)
    }
}

fn load_pattern(run: &mut Run, p: &Path) -> CliResult<TweezerPattern> {
    run.input(p);
    Ok(PatternFile::load(p)?.pattern()?)
}

fn cmd_pattern(a: &PatternArgs) -> CliResult<()> {
    let mut run = Run::new("pattern", a, &a.out)?;
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| Error::Config(format!("--{flag} is required for this kind")))
    };
    let geometry = match a.kind {
        Kind::Grid => Geometry::Grid { rows: need(a.rows, "rows")?, cols: need(a.cols, "cols")? },
        Kind::Circle => Geometry::Circle { count: need(a.count, "count")? },
        Kind::Kagome => Geometry::Kagome { count: need(a.count, "count")? },
        Kind::Triangular => Geometry::Triangular { count: need(a.count, "count")? },
        Kind::Custom => {
            let path = a.sites.as_deref().ok_or_else(|| Error::Config("--sites is required for custom".into()))?;
            run.input(path);
            Geometry::Custom { sites: io::read_json(path)? }
        }
    };
    let spec = GeometrySpec::new(geometry, a.spacing).centered_at(a.center_m, a.center_n);
    let pattern = generate(&spec)?;
    let hash = run.manifest.config_hash.clone();
    run.json("pattern.json", &PatternFile::new(&pattern, hash))?;
    let mut seed = None;
    if let Some(p) = a.load_p {
        let occ = load_stochastic(&pattern, p, a.seed)?;
        run.json("occupancy.json", &OccupancyFile::new(occ, Some(p), Some(a.seed)))?;
        seed = Some(a.seed);
    }
    run.finish(seed)
}

fn cmd_wgs(a: &WgsArgs) -> CliResult<()> {
    let mut run = Run::new("wgs", a, &a.out)?;
    let pattern = load_pattern(&mut run, &a.pattern)?;
    let prop = Propagator::new(&a.optics.config())?;
    let res = run_wgs_with(&prop, &pattern, &a.wgs.settings(0))?;
    let p = run.path("hologram.pgm");
    io::save_pgm(&res.hologram, &p)?;
    let hash = run.manifest.config_hash.clone();
    run.json("wgs.json", &WgsFile::new(&res, hash))?;
    if a.field_csv {
        let field = prop.propagate(&res.hologram)?;
        let p = run.path("field.csv");
        io::write_field_csv(&field, fs::File::create(p)?)?;
    }
    run.finish(Some(a.wgs.seed))
}

#[derive(Serialize)]
struct PlanFile {
    schema: &'static str,
    config_hash: String,
    occupancy: Vec<bool>,
    /// `(initial tweezer index, target tweezer index)`.
    moves: Vec<(usize, usize)>,
    extinguished: Vec<usize>,
    total_cost: i64,
    max_move: i32,
    ramp_steps: usize,
    move_steps: usize,
}

fn load_occupancy(run: &mut Run, p: &Path) -> CliResult<Vec<bool>> {
    run.input(p);
    Ok(OccupancyFile::load(p)?.occupancy)
}

fn cmd_plan(a: &PlanArgs) -> CliResult<()> {
    let mut run = Run::new("plan", a, &a.out)?;
    let initial = load_pattern(&mut run, &a.initial)?;
    let target = load_pattern(&mut run, &a.target)?;
    let occupancy = load_occupancy(&mut run, &a.occupancy)?;
    if occupancy.len() != initial.len() {
        return Err(Error::InvalidParameter(format!(
            "occupancy has {} entries for {} initial tweezers",
            occupancy.len(),
            initial.len()
        ))
        .into());
    }
    let occupied: Vec<usize> = (0..occupancy.len()).filter(|&i| occupancy[i]).collect();
    let init: Vec<Pos> = initial.positions().collect();
    let problem = AssignmentProblem::new(occupied.iter().map(|&i| init[i]).collect(), target.positions().collect())?;
    let sol = solve(&problem)?;
    let moves: Vec<(usize, usize)> = sol.pairs.iter().map(|&(s, t)| (occupied[s], t)).collect();
    let extinguished = sol.unassigned_sources(occupied.len()).into_iter().map(|s| occupied[s]).collect();
    let file = PlanFile {
        schema: "holosort.plan/1",
        config_hash: run.manifest.config_hash.clone(),
        occupancy,
        moves,
        extinguished,
        total_cost: sol.total_cost,
        max_move: sol.max_move,
        ramp_steps: a.ramp_steps,
        move_steps: sol.max_move as usize,
    };
    run.json("plan.json", &file)?;
    run.finish(None)
}

fn build_sequence(run: &mut Run, s: &SequenceOpts, prop: &Propagator) -> CliResult<(HologramSequence, Arc<WgsResult>)> {
    let initial = load_pattern(run, &s.initial)?;
    let target = load_pattern(run, &s.target)?;
    let occupancy = load_occupancy(run, &s.occupancy)?;
    let wi = run_wgs_with(prop, &initial, &s.wgs.settings(0))?;
    let wf = Arc::new(run_wgs_with(prop, &target, &s.wgs.settings(1))?);
    let settings = SequencerSettings {
        ramp_steps: s.ramp_steps,
        psi_slip: s.psi_slip,
        phase_path: match s.phase_path {
            PathArg::Shortest => PhasePath::Shortest,
            PathArg::Raw => PhasePath::Raw,
        },
    };
    let pl = plan(wi, wf.clone(), &occupancy, &settings)?;
    run.json("plan.json", &pl.summary())?;
    Ok((pl.full_sequence(prop)?, wf))
}

fn cmd_sequence(a: &SequenceArgs) -> CliResult<()> {
    let mut run = Run::new("sequence", a, &a.out)?;
    let prop = Propagator::new(&a.seq.optics.config())?;
    let (seq, _) = build_sequence(&mut run, &a.seq, &prop)?;
    let dir = run.path("frames");
    io::write_sequence(&seq, &run.manifest.config_hash, &dir)?;
    run.finish(Some(a.seq.wgs.seed))
}

#[derive(Serialize)]
struct FlickerSummary {
    frames: usize,
    transitions: usize,
    min_rel_intensity: f64,
    mode: TransientMode,
    wgs_only: bool,
}

fn cmd_flicker(a: &FlickerArgs) -> CliResult<()> {
    let mut run = Run::new("flicker", a, &a.out)?;
    let prop = Propagator::new(&a.seq.optics.config())?;
    let (mut seq, _) = build_sequence(&mut run, &a.seq, &prop)?;
    if a.wgs_only {
        seq = wgs_only_sequence(&seq, &prop, &a.seq.wgs.settings(1000))?;
    }
    let model = TransientModel { substeps: a.substeps, mode: a.mode.mode() };
    let trace = sequence_flicker(&seq, &model, &prop)?;
    let p = run.path("trace.csv");
    trace.write_csv(fs::File::create(p)?)?;
    let summary = FlickerSummary {
        frames: seq.len(),
        transitions: trace.transitions.len(),
        min_rel_intensity: trace.min_rel_intensity(),
        mode: model.mode,
        wgs_only: a.wgs_only,
    };
    run.json("summary.json", &summary)?;
    run.finish(Some(a.seq.wgs.seed))
}

#[derive(Serialize)]
struct ScanSummary {
    xi: f64,
    loss_centroid: Option<f64>,
    points: usize,
}

fn cmd_slipscan(a: &SlipscanArgs) -> CliResult<()> {
    let mut run = Run::new("slipscan", a, &a.out)?;
    let base = OpticalConfig::square(a.grid).with_spot_waist(a.waist);
    let p0 = Propagator::new(&base)?;
    let prop = Propagator::new(&base.with_displacement(a.displacement, 0))?;
    let pattern = generate(&GeometrySpec::new(Geometry::Grid { rows: a.rows, cols: a.cols }, a.spacing))?;
    let settings = WgsSettings { rng_seed: a.seed, ..Default::default() };
    let array = run_wgs_with(&p0, &pattern, &settings)?.drive;
    let model = TransientModel { substeps: a.substeps, mode: a.mode.mode() };
    let rows = phase_slip_scan(
        array.tweezers(),
        a.steps,
        &psi_grid(a.points),
        &model,
        &prop,
        &SurvivalModel::Step { threshold: a.threshold },
    )?;
    let p = run.path("scan.csv");
    flicker::write_scan_csv(&rows, fs::File::create(p)?)?;
    let summary = ScanSummary {
        xi: phase_slip(a.displacement as f64, a.grid),
        loss_centroid: loss_centroid(&rows),
        points: rows.len(),
    };
    run.json("summary.json", &summary)?;
    run.finish(Some(a.seed))
}

fn cmd_stats(a: &StatsArgs) -> CliResult<()> {
    let mut run = Run::new("stats", a, &a.out)?;
    let params: StatsParams = match &a.params {
        Some(p) => {
            run.input(p);
            io::read_json(p)?
        }
        None => StatsParams::reference(),
    };
    let report = stats::report(&params, a.r0.map(|r| (r, a.r0_err)), a.cycles)?;
    run.json("report.json", &report)?;

    let p = run.path("report.csv");
    let mut w = csv::Writer::from_writer(fs::File::create(p)?);
    w.write_record(["quantity", "value", "plus", "minus"])?;
    let mut rows = vec![
        ("survival_initial", report.survival_initial),
        ("survival_target", report.survival_target),
    ];
    if let Some(r) = report.rearrangement {
        rows.push(("rearrangement", r));
    }
    for (name, e) in rows {
        w.write_record([name.to_string(), format!("{:.6}", e.value), format!("{:.6}", e.plus), format!("{:.6}", e.minus)])?;
    }
    w.flush()?;
    run.finish(None)
}

fn cmd_mc(a: &McArgs) -> CliResult<()> {
    let mut run = Run::new("mc", a, &a.out)?;
    let cfg = McConfig {
        p_load: a.p_load,
        success: a.success,
        imaging_survival: a.imaging,
        n_cycles: a.cycles,
        n_initial: a.n_initial,
        n_target: a.n_target,
        trials: a.trials,
        seed: a.seed,
        policy: match a.policy {
            PolicyArg::SingleShot => RetryPolicy::SingleShot,
            PolicyArg::RefillOnDefect => RetryPolicy::RefillOnDefect,
            PolicyArg::ResortAll => RetryPolicy::ResortAll,
        },
        postselect: !a.no_postselect,
        reload: a.reload,
    };
    let report = montecarlo::run(&cfg)?;
    run.json("report.json", &report)?;
    let p = run.path("report.csv");
    let mut w = csv::Writer::from_writer(fs::File::create(p)?);
    w.write_record(["missing", "trials"])?;
    for (k, c) in report.missing_histogram.iter().enumerate() {
        w.write_record([k.to_string(), c.to_string()])?;
    }
    w.flush()?;
    run.finish(Some(a.seed))
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let mut run = Run::new("bench", a, &a.out)?;
    let cfg = BenchConfig {
        grid: a.grid,
        n_tw: if a.n_tw.is_empty() { bench::default_n_tw() } else { a.n_tw.clone() },
        steps: a.steps,
        repetitions: a.repetitions,
        display_ms: a.display_ms,
        transfer: match a.transfer {
            TransferArg::Fixed => TransferMode::FixedDelay { ms: a.transfer_ms },
            TransferArg::Copy => TransferMode::BufferCopy,
        },
        pipelined: a.pipelined,
        ..Default::default()
    };
    let rows = bench::run_bench(&cfg)?;
    let p = run.path("bench.csv");
    bench::write_csv(&rows, fs::File::create(p)?)?;
    run.json("bench.json", &rows)?;
    run.finish(None)
}

fn cmd_reproduce(a: &ReproduceArgs) -> CliResult<()> {
    let mut run = Run::new("reproduce", a, &a.out)?;
    let opts = if a.quick { ReproduceOptions::quick() } else { ReproduceOptions::default() };
    let ids: Vec<u32> = if a.criteria.is_empty() { (1..=10).collect() } else { a.criteria.clone() };
    let mut outcomes = Vec::new();
    for id in ids {
        let o = run_criterion(id, &opts);
        println!("{}", o.line());
        outcomes.push(o);
    }
    run.json("reproduce.json", &outcomes)?;
    run.finish(None)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} criteria failed", outcomes.len())));
    }
    Ok(())
}

fn set_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("HOLOSORT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("HOLOSORT_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn report_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    let res = set_threads().and_then(|_| match &cli.command {
        Command::Pattern(a) => cmd_pattern(a),
        Command::Wgs(a) => cmd_wgs(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Sequence(a) => cmd_sequence(a),
        Command::Flicker(a) => cmd_flicker(a),
        Command::Slipscan(a) => cmd_slipscan(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Lib(e)) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
        Err(CliError::Failed(m)) => {
            report_error("acceptance", &m);
            ExitCode::FAILURE
        }
    }
}
