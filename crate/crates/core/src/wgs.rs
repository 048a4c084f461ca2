//! Weighted Gerchberg–Saxton synthesis of intensity-balanced tweezer holograms.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{
    sample_tweezer, ComplexField, OpticalConfig, PhaseMap, Pos, Propagator, TweezerPattern,
    TweezerSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WgsSettings {
    pub max_iters: usize,
    /// Stop once (max − min) / mean of the normalized spot intensities drops to this.
    pub uniformity_target: f64,
    pub weight_floor: f64,
    /// Seed for the initial spot phases.
    pub rng_seed: u64,
    /// Exponent `e` in `w ← w · (⟨a⟩ / a)^e`; zero gives plain Gerchberg–Saxton.
    pub weight_exponent: f64,
}

impl Default for WgsSettings {
    fn default() -> Self {
        WgsSettings {
            max_iters: 50,
            uniformity_target: 0.01,
            weight_floor: 1e-6,
            rng_seed: 0,
            weight_exponent: 1.0,
        }
    }
}

impl WgsSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.uniformity_target > 0.0 && self.uniformity_target < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "uniformity target {} outside (0, 1)",
                self.uniformity_target
            )));
        }
        if self.weight_floor.is_nan() || self.weight_floor <= 0.0 || !self.weight_exponent.is_finite() {
            return Err(Error::InvalidParameter("bad weight floor or exponent".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WgsResult {
    pub hologram: PhaseMap,
    /// Spot amplitudes and phases sampled from re-propagating `hologram`.
    pub achieved: TweezerPattern,
    /// Weighted spectrum that was transformed into `hologram` (normalized to unit power);
    /// `Propagator::synthesize(drive)` reproduces `hologram` bit for bit.
    pub drive: TweezerPattern,
    pub uniformity: f64,
    pub iters_used: usize,
    pub converged: bool,
    /// Uniformity after every iteration.
    pub history: Vec<f64>,
}

/// `(max − min) / mean` of `(achieved / target)²` over all sites.
pub fn uniformity(achieved: &[f64], target: &[f64]) -> f64 {
    let ratios: Vec<f64> = achieved
        .iter()
        .zip(target)
        .map(|(a, t)| (a / t).powi(2))
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    if mean > 0.0 {
        (hi - lo) / mean
    } else {
        f64::INFINITY
    }
}

/// Share of the total field power landing on the given cells.
pub fn spot_power_fraction(field: &ComplexField, spots: impl IntoIterator<Item = Pos>) -> f64 {
    let on: f64 = spots
        .into_iter()
        .filter_map(|p| field.get(p))
        .map(|z| z.norm_sqr())
        .sum();
    on / field.total_power()
}

pub fn run_wgs(
    target: &TweezerPattern,
    cfg: &OpticalConfig,
    settings: &WgsSettings,
) -> Result<WgsResult> {
    run_wgs_with(&Propagator::new(cfg)?, target, settings)
}

struct Iterate {
    hologram: PhaseMap,
    drive: Vec<TweezerSpec>,
    samples: Vec<(f64, f64)>,
    uniformity: f64,
}

/// WGS on a prepared propagator; see [`run_wgs`].
pub fn run_wgs_with(
    prop: &Propagator,
    target: &TweezerPattern,
    settings: &WgsSettings,
) -> Result<WgsResult> {
    settings.validate()?;
    if target.is_empty() {
        return Err(Error::EmptyPattern);
    }
    target.check_bounds(prop.config())?;
    let goal = target.clone().normalized();
    let goal_amps: Vec<f64> = goal.tweezers().iter().map(|t| t.amp).collect();
    if goal_amps.iter().any(|&a| a <= 0.0) {
        return Err(Error::InvalidParameter(
            "WGS targets need strictly positive amplitudes".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.rng_seed);
    let mut phases: Vec<f64> = goal_amps.iter().map(|_| rng.random::<f64>() * TAU).collect();
    let mut weights = vec![1.0; goal_amps.len()];
    let mut history = Vec::with_capacity(settings.max_iters);
    let mut best: Option<Iterate> = None;

    for iter in 1..=settings.max_iters {
        let drive = drive_spectrum(&goal, &weights, &phases);
        let hologram = prop.synthesize(&drive)?;
        let field = prop.propagate(&hologram)?;
        let samples = goal
            .positions()
            .map(|p| sample_tweezer(&field, p))
            .collect::<Result<Vec<_>>>()?;
        let amps: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let u = uniformity(&amps, &goal_amps);
        history.push(u);

        let current = Iterate {
            hologram,
            drive,
            samples,
            uniformity: u,
        };
        if u <= settings.uniformity_target {
            return finish(&goal, current, iter, true, history);
        }

        // weight update from amplitude ratios, then let the spot phases float
        let ratios: Vec<f64> = amps.iter().zip(&goal_amps).map(|(a, t)| a / t).collect();
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        for (w, r) in weights.iter_mut().zip(&ratios) {
            let gain = if *r > 0.0 { (mean_ratio / r).powf(settings.weight_exponent) } else { 1.0 };
            *w = (*w * gain).max(settings.weight_floor);
        }
        let mean_w = weights.iter().sum::<f64>() / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w /= mean_w);
        for (p, s) in phases.iter_mut().zip(&current.samples) {
            *p = s.1;
        }

        if best.as_ref().is_none_or(|b| u < b.uniformity) {
            best = Some(current);
        }
    }

    let best = best.expect("at least one iteration ran");
    finish(&goal, best, settings.max_iters, false, history)
}

fn drive_spectrum(goal: &TweezerPattern, weights: &[f64], phases: &[f64]) -> Vec<TweezerSpec> {
    let mut specs: Vec<TweezerSpec> = goal
        .tweezers()
        .iter()
        .zip(weights.iter().zip(phases))
        .map(|(t, (w, p))| TweezerSpec::new(t.pos, t.amp * w, *p))
        .collect();
    let total: f64 = specs.iter().map(|t| t.amp * t.amp).sum();
    let s = total.sqrt().recip();
    specs.iter_mut().for_each(|t| t.amp *= s);
    specs
}

fn finish(
    goal: &TweezerPattern,
    it: Iterate,
    iters_used: usize,
    converged: bool,
    history: Vec<f64>,
) -> Result<WgsResult> {
    let achieved = TweezerPattern::new(
        goal.positions()
            .zip(&it.samples)
            .map(|(p, &(a, ph))| TweezerSpec::new(p, a, ph))
            .collect(),
    )?;
    let drive = TweezerPattern::new(it.drive)?.assume_normalized();
    Ok(WgsResult {
        hologram: it.hologram,
        achieved,
        drive,
        uniformity: it.uniformity,
        iters_used,
        converged,
        history,
    })
}
