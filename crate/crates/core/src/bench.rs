//! Stage-resolved timing of the hologram pipeline.
//!
//! Each hologram passes through four stages: position update (LPI arithmetic on the
//! spot list), compute (spectrum fill + FFT + phase extraction), transfer (8-bit
//! quantisation into a frame buffer, or a fixed delay) and display (a fixed delay
//! standing in for the SLM refresh). No device is attached, so display is always
//! emulated. "Update" here is the arithmetic only, not a device buffer update.

use std::io::Write;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{OpticalConfig, PhaseMap, Pos, Propagator, TweezerSpec};

pub const DISPLAY_MS: f64 = 1.772;
pub const TRANSFER_MS: f64 = 0.821;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransferMode {
    /// Quantise the phase map into an 8-bit frame buffer.
    BufferCopy,
    FixedDelay { ms: f64 },
}

impl Default for TransferMode {
    fn default() -> Self {
        TransferMode::FixedDelay { ms: TRANSFER_MS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub grid: usize,
    pub n_tw: Vec<usize>,
    pub steps: usize,
    pub repetitions: usize,
    /// Untimed frames run before each N_tw block.
    pub warmup: usize,
    pub spacing: i32,
    pub display_ms: f64,
    pub transfer: TransferMode,
    pub pipelined: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            grid: 512,
            n_tw: default_n_tw(),
            steps: 10,
            repetitions: 100,
            warmup: 5,
            spacing: 4,
            display_ms: DISPLAY_MS,
            transfer: TransferMode::default(),
            pipelined: false,
        }
    }
}

/// Odd square sides 3..=49.
pub fn default_n_tw() -> Vec<usize> {
    (3..=49).step_by(2).map(|s| s * s).collect()
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_tw.is_empty() || self.n_tw.contains(&0) {
            return bad("n_tw values must be positive");
        }
        if self.steps == 0 || self.repetitions == 0 {
            return bad("steps and repetitions must be positive");
        }
        if self.spacing < 1 {
            return bad("spacing must be >= 1");
        }
        if !(self.display_ms > 0.0 && self.display_ms.is_finite()) {
            return bad("display latency must be positive");
        }
        if let TransferMode::FixedDelay { ms } = self.transfer {
            if !(ms > 0.0 && ms.is_finite()) {
                return bad("transfer delay must be positive");
            }
        }
        for &n in &self.n_tw {
            let side = square_side(n);
            let extent = (side as i64 - 1) * self.spacing as i64 + self.steps as i64;
            if 2 * (extent / 2 + 1) >= self.grid as i64 {
                return Err(Error::SizeCap(format!(
                    "array of {n} tweezers moving {} steps does not fit a {} grid",
                    self.steps, self.grid
                )));
            }
        }
        Ok(())
    }
}

fn square_side(n: usize) -> usize {
    let mut s = (n as f64).sqrt().ceil() as usize;
    while s > 1 && (s - 1) * (s - 1) >= n {
        s -= 1;
    }
    s.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Update,
    Compute,
    Transfer,
    Display,
    Total,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Update, Stage::Compute, Stage::Transfer, Stage::Display, Stage::Total];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Update => "update",
            Stage::Compute => "compute",
            Stage::Transfer => "transfer",
            Stage::Display => "display",
            Stage::Total => "total",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub sdev_ms: f64,
}

impl StageStats {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        StageStats { mean_ms: mean, sdev_ms: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_tw: usize,
    pub pipelined: bool,
    pub update: StageStats,
    pub compute: StageStats,
    pub transfer: StageStats,
    pub display: StageStats,
    /// Wall time per hologram. In pipelined mode this is the frame period.
    pub total: StageStats,
    pub frames: usize,
}

impl BenchRow {
    pub fn stage(&self, s: Stage) -> StageStats {
        match s {
            Stage::Update => self.update,
            Stage::Compute => self.compute,
            Stage::Transfer => self.transfer,
            Stage::Display => self.display,
            Stage::Total => self.total,
        }
    }

    pub fn stage_sum_ms(&self) -> f64 {
        self.update.mean_ms + self.compute.mean_ms + self.transfer.mean_ms + self.display.mean_ms
    }

    /// Expected pipelined frame period: the slower of the two concurrent roles.
    pub fn pipeline_bound_ms(&self) -> f64 {
        let producer = self.update.mean_ms + self.compute.mean_ms + self.transfer.mean_ms;
        producer.max(self.display.mean_ms)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn delay(ms: f64) -> Duration {
    Duration::from_secs_f64(ms * 1e-3)
}

/// √N × √N array (row-major, truncated to `n`), offset so `steps` moves along −m stay centred.
fn start_array(n: usize, spacing: i32, steps: usize) -> Vec<TweezerSpec> {
    let side = square_side(n) as i32;
    let half = ((side - 1) * spacing + steps as i32) / 2;
    let amp = (n as f64).sqrt().recip();
    (0..n as i32)
        .map(|i| {
            let (r, c) = (i / side, i % side);
            TweezerSpec::new((c * spacing - half + steps as i32, r * spacing - half), amp, 0.0)
        })
        .collect()
}

/// One LPI step: move every spot one unit along −m and advance its phase.
fn update(spots: &mut [TweezerSpec], dpsi: f64) {
    for s in spots {
        s.pos = Pos::new(s.pos.m - 1, s.pos.n);
        s.phase += dpsi;
    }
}

struct Frames<'a> {
    prop: &'a Propagator,
    start: Vec<TweezerSpec>,
    steps: usize,
}

impl Frames<'_> {
    fn step(&self, spots: &mut Vec<TweezerSpec>, j: usize) {
        if j.is_multiple_of(self.steps) {
            spots.clone_from(&self.start);
        } else {
            update(spots, 0.1);
        }
    }
}

fn transfer(holo: &PhaseMap, mode: TransferMode, buf: &mut Vec<u8>) {
    match mode {
        TransferMode::BufferCopy => {
            buf.clear();
            buf.extend(holo.values().iter().map(|&p| crate::io::phase_to_gray(p)));
        }
        TransferMode::FixedDelay { ms } => thread::sleep(delay(ms)),
    }
}

/// Time every stage for each N_tw in `cfg`.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let prop = Propagator::new(&OpticalConfig::square(cfg.grid))?;
    cfg.n_tw
        .iter()
        .map(|&n| {
            let frames = Frames { prop: &prop, start: start_array(n, cfg.spacing, cfg.steps), steps: cfg.steps };
            if cfg.pipelined {
                run_pipelined(cfg, n, &frames)
            } else {
                run_serial(cfg, n, &frames)
            }
        })
        .collect()
}

fn run_serial(cfg: &BenchConfig, n: usize, f: &Frames) -> Result<BenchRow> {
    let total = cfg.steps * cfg.repetitions;
    let mut spots = f.start.clone();
    let mut buf = Vec::new();
    let mut samples: [Vec<f64>; 5] = Default::default();
    for j in 0..cfg.warmup + total {
        let t0 = Instant::now();
        f.step(&mut spots, j);
        let t1 = Instant::now();
        let holo = f.prop.synthesize(&spots)?;
        let t2 = Instant::now();
        transfer(&holo, cfg.transfer, &mut buf);
        let t3 = Instant::now();
        thread::sleep(delay(cfg.display_ms));
        let t4 = Instant::now();
        if j >= cfg.warmup {
            for (s, (a, b)) in samples.iter_mut().zip([(t0, t1), (t1, t2), (t2, t3), (t3, t4), (t0, t4)]) {
                s.push(ms(b - a));
            }
        }
    }
    Ok(row(n, false, &samples, total))
}

fn run_pipelined(cfg: &BenchConfig, n: usize, f: &Frames) -> Result<BenchRow> {
    let total = cfg.steps * cfg.repetitions;
    let frames = cfg.warmup + total;
    let display = delay(cfg.display_ms);
    // rendezvous channel: at most one frame computing while one is displayed
    let (tx, rx) = mpsc::sync_channel::<(PhaseMap, Vec<u8>)>(0);

    thread::scope(|scope| {
        let consumer = scope.spawn(move || {
            let mut shown = Vec::with_capacity(frames);
            for (_holo, _buf) in rx.iter() {
                let t0 = Instant::now();
                thread::sleep(display);
                let t1 = Instant::now();
                shown.push((t0, t1));
            }
            shown
        });

        let mut spots = f.start.clone();
        let mut produced: [Vec<f64>; 3] = Default::default();
        let mut result = Ok(());
        for j in 0..frames {
            let t0 = Instant::now();
            f.step(&mut spots, j);
            let t1 = Instant::now();
            let holo = match f.prop.synthesize(&spots) {
                Ok(h) => h,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            };
            let t2 = Instant::now();
            let mut buf = Vec::new();
            transfer(&holo, cfg.transfer, &mut buf);
            let t3 = Instant::now();
            if j >= cfg.warmup {
                for (s, (a, b)) in produced.iter_mut().zip([(t0, t1), (t1, t2), (t2, t3)]) {
                    s.push(ms(b - a));
                }
            }
            if tx.send((holo, buf)).is_err() {
                break;
            }
        }
        drop(tx);
        let shown = consumer.join().expect("display thread panicked");
        result?;

        let timed = &shown[cfg.warmup..];
        let display_ms: Vec<f64> = timed.iter().map(|(a, b)| ms(*b - *a)).collect();
        // frame period between successive display starts
        let periods: Vec<f64> = shown[cfg.warmup.max(1) - 1..]
            .windows(2)
            .map(|w| ms(w[1].0 - w[0].0))
            .collect();
        let [u, c, t] = produced;
        Ok(row(n, true, &[u, c, t, display_ms, periods], total))
    })
}

fn row(n: usize, pipelined: bool, s: &[Vec<f64>; 5], frames: usize) -> BenchRow {
    BenchRow {
        n_tw: n,
        pipelined,
        update: StageStats::from_samples(&s[0]),
        compute: StageStats::from_samples(&s[1]),
        transfer: StageStats::from_samples(&s[2]),
        display: StageStats::from_samples(&s[3]),
        total: StageStats::from_samples(&s[4]),
        frames,
    }
}

/// CSV with columns `N_tw,stage,mean_ms,sdev_ms,mode`.
pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N_tw", "stage", "mean_ms", "sdev_ms", "mode"])?;
    for r in rows {
        let mode = if r.pipelined { "pipelined" } else { "serialized" };
        for s in Stage::ALL {
            let st = r.stage(s);
            w.write_record([
                r.n_tw.to_string(),
                s.name().to_string(),
                format!("{:.6}", st.mean_ms),
                format!("{:.6}", st.sdev_ms),
                mode.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
