//! Monte-Carlo loading and rearrangement cycles.
//!
//! Each trial loads `n_initial` sites, fills up to `n_target` of them and keeps the surplus as
//! a reserve. Every cycle, each atom that is moved survives with probability `success`; after
//! every cycle an image is taken in which every atom survives with `imaging_survival`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryPolicy {
    /// One cycle, whatever `n_cycles` says.
    #[default]
    SingleShot,
    /// Later cycles run only when a target site is empty, and only the refill atoms move.
    RefillOnDefect,
    /// Every cycle re-sorts all atoms, so all of them face the per-cycle success.
    ResortAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub p_load: f64,
    /// Per-atom success of one rearrangement cycle.
    pub success: f64,
    /// Per-atom survival of one image.
    pub imaging_survival: f64,
    pub n_cycles: u32,
    pub n_initial: usize,
    pub n_target: usize,
    pub trials: u64,
    pub seed: u64,
    pub policy: RetryPolicy,
    /// Discard shots that loaded fewer than `n_target` atoms.
    pub postselect: bool,
    /// Reload the reserve sites when the reserve runs dry between cycles.
    pub reload: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            p_load: 0.45,
            success: 1.0,
            imaging_survival: 1.0,
            n_cycles: 1,
            n_initial: 36,
            n_target: 16,
            trials: 10_000,
            seed: 0,
            policy: RetryPolicy::SingleShot,
            postselect: true,
            reload: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_load", self.p_load),
            ("success", self.success),
            ("imaging_survival", self.imaging_survival),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.n_target == 0 || self.n_target > self.n_initial {
            return Err(Error::InvalidParameter(format!(
                "need 1 ≤ n_target ≤ n_initial, got {} and {}",
                self.n_target, self.n_initial
            )));
        }
        if self.trials == 0 || self.n_cycles == 0 {
            return Err(Error::InvalidParameter("trials and n_cycles must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trials_counted: u64,
    pub trials_discarded: u64,
    pub mean_filling: f64,
    pub defect_free_fraction: f64,
    /// Binomial standard error of `defect_free_fraction`.
    pub defect_free_stderr: f64,
    /// `missing_histogram[k]` counts trials that ended with `k` empty target sites.
    pub missing_histogram: Vec<u64>,
    pub mean_cycles: f64,
}

impl McReport {
    /// Share of defective trials missing at most `k` atoms.
    pub fn failures_missing_at_most(&self, k: usize) -> f64 {
        let failures: u64 = self.missing_histogram[1..].iter().sum();
        if failures == 0 {
            return 1.0;
        }
        let within: u64 = self.missing_histogram[1..=k.min(self.missing_histogram.len() - 1)]
            .iter()
            .sum();
        within as f64 / failures as f64
    }
}

enum Outcome {
    Discarded,
    Done { missing: usize, cycles: u32 },
}

fn survivors(rng: &mut ChaCha8Rng, n: usize, p: f64) -> usize {
    if p >= 1.0 {
        n
    } else {
        (0..n).filter(|_| rng.random_bool(p)).count()
    }
}

fn trial(cfg: &McConfig, rng: &mut ChaCha8Rng) -> Outcome {
    let loaded = survivors(rng, cfg.n_initial, cfg.p_load);
    if cfg.postselect && loaded < cfg.n_target {
        return Outcome::Discarded;
    }
    let reserve_sites = cfg.n_initial - cfg.n_target;
    let placed = loaded.min(cfg.n_target);
    let mut reserve = loaded - placed;
    let mut filled = survivors(rng, placed, cfg.success);
    let image = |rng: &mut ChaCha8Rng, filled: &mut usize, reserve: &mut usize| {
        *filled = survivors(rng, *filled, cfg.imaging_survival);
        *reserve = survivors(rng, *reserve, cfg.imaging_survival);
    };
    image(rng, &mut filled, &mut reserve);
    let mut cycles = 1;

    if cfg.policy != RetryPolicy::SingleShot {
        for _ in 1..cfg.n_cycles {
            let gap = cfg.n_target - filled;
            if gap > 0 && reserve == 0 && cfg.reload {
                reserve = survivors(rng, reserve_sites, cfg.p_load);
            }
            let moved = gap.min(reserve);
            match cfg.policy {
                RetryPolicy::RefillOnDefect => {
                    if moved == 0 {
                        break;
                    }
                    filled += survivors(rng, moved, cfg.success);
                }
                RetryPolicy::ResortAll => {
                    filled = survivors(rng, filled, cfg.success) + survivors(rng, moved, cfg.success);
                }
                RetryPolicy::SingleShot => unreachable!(),
            }
            reserve -= moved;
            image(rng, &mut filled, &mut reserve);
            cycles += 1;
        }
    }
    Outcome::Done {
        missing: cfg.n_target - filled,
        cycles,
    }
}

#[derive(Clone)]
struct Tally {
    counted: u64,
    discarded: u64,
    filled: u64,
    cycles: u64,
    histogram: Vec<u64>,
}

impl Tally {
    fn new(n_target: usize) -> Self {
        Tally {
            counted: 0,
            discarded: 0,
            filled: 0,
            cycles: 0,
            histogram: vec![0; n_target + 1],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.counted += other.counted;
        self.discarded += other.discarded;
        self.filled += other.filled;
        self.cycles += other.cycles;
        for (a, b) in self.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
        self
    }
}

/// Runs `cfg.trials` independent trials; trial `i` draws from stream `i` of the seed.
pub fn run(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let tally = (0..cfg.trials)
        .into_par_iter()
        .fold(
            || Tally::new(cfg.n_target),
            |mut t, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i);
                match trial(cfg, &mut rng) {
                    Outcome::Discarded => t.discarded += 1,
                    Outcome::Done { missing, cycles } => {
                        t.counted += 1;
                        t.filled += (cfg.n_target - missing) as u64;
                        t.cycles += cycles as u64;
                        t.histogram[missing] += 1;
                    }
                }
                t
            },
        )
        .reduce(|| Tally::new(cfg.n_target), Tally::merge);

    let n = tally.counted.max(1) as f64;
    let p = tally.histogram[0] as f64 / n;
    Ok(McReport {
        trials_counted: tally.counted,
        trials_discarded: tally.discarded,
        mean_filling: tally.filled as f64 / (n * cfg.n_target as f64),
        defect_free_fraction: p,
        defect_free_stderr: (p * (1.0 - p) / n).sqrt(),
        missing_histogram: tally.histogram,
        mean_cycles: tally.cycles as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_target: usize,
    pub n_initial: usize,
    pub n_cycles: u32,
    pub defect_free_fraction: f64,
    pub defect_free_stderr: f64,
    pub mean_filling: f64,
}

/// Defect-free fraction over array sizes and cycle counts.
///
/// The initial array keeps the `n_initial / n_target` ratio of `base`.
pub fn multicycle_sweep(base: &McConfig, n_values: &[usize], cycles: &[u32]) -> Result<Vec<SweepRow>> {
    let ratio = base.n_initial as f64 / base.n_target as f64;
    let mut rows = Vec::new();
    for &n in n_values {
        for &c in cycles {
            let cfg = McConfig {
                n_target: n,
                n_initial: ((n as f64 * ratio).round() as usize).max(n),
                n_cycles: c,
                ..base.clone()
            };
            let r = run(&cfg)?;
            rows.push(SweepRow {
                n_target: n,
                n_initial: cfg.n_initial,
                n_cycles: c,
                defect_free_fraction: r.defect_free_fraction,
                defect_free_stderr: r.defect_free_stderr,
                mean_filling: r.mean_filling,
            });
        }
    }
    Ok(rows)
}
