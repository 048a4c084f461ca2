//! Transient fields while the SLM switches between two holograms.

use std::io::Write;

use ndarray::Zip;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{shortest_angle, wrap_phase, ComplexField, PhaseMap, Pos, Propagator, TweezerSpec};
use crate::sequencer::{make_frame, out_and_back, FrameStage, HologramSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientMode {
    /// Every pixel sweeps linearly through displayed values from old to new, without
    /// taking the short way round the phase circle.
    #[default]
    ValuePathLinear,
    /// Focal field `(1 − τ) U_old + τ U_new`.
    CrossFade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransientModel {
    /// Number of τ intervals; samples are taken at `τ = i / substeps` for `i = 0..=substeps`.
    pub substeps: usize,
    pub mode: TransientMode,
}

impl Default for TransientModel {
    fn default() -> Self {
        TransientModel {
            substeps: 16,
            mode: TransientMode::ValuePathLinear,
        }
    }
}

impl TransientModel {
    pub fn cross_fade(substeps: usize) -> Self {
        TransientModel {
            substeps,
            mode: TransientMode::CrossFade,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps < 2 {
            return Err(Error::InvalidParameter("transient needs at least 2 substeps".into()));
        }
        Ok(())
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..=self.substeps).map(|i| i as f64 / self.substeps as f64).collect()
    }
}

/// A tweezer followed across one transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub id: usize,
    pub from: Pos,
    pub to: Pos,
}

impl Probe {
    /// Cell nearest `from + τ (to − from)`, halves rounded up.
    pub fn center(&self, tau: f64) -> Pos {
        let lerp = |a: i32, b: i32| (a as f64 + tau * (b - a) as f64 + 0.5).floor() as i32;
        Pos::new(lerp(self.from.m, self.to.m), lerp(self.from.n, self.to.n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub id: usize,
    /// Intensity relative to the settled value at `to` after the transition.
    pub rel_intensity: Vec<f64>,
    pub phase: Vec<f64>,
    pub min_rel_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTrace {
    /// Index of the frame being switched to.
    pub frame: usize,
    pub tau: Vec<f64>,
    pub probes: Vec<ProbeTrace>,
}

impl TransitionTrace {
    pub fn min_rel_intensity(&self) -> f64 {
        self.probes
            .iter()
            .map(|p| p.min_rel_intensity)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Settled field at a tweezer once a frame is fully displayed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettledSample {
    pub frame: usize,
    pub id: usize,
    pub pos: Pos,
    pub intensity: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlickerTrace {
    pub transitions: Vec<TransitionTrace>,
    pub settled: Vec<SettledSample>,
}

impl FlickerTrace {
    /// Lowest relative intensity over every transition and tweezer (1 without transitions).
    pub fn min_rel_intensity(&self) -> f64 {
        self.transitions
            .iter()
            .map(TransitionTrace::min_rel_intensity)
            .fold(1.0, f64::min)
    }

    /// Settled phases of one tweezer, in frame order.
    pub fn settled_phases(&self, id: usize) -> Vec<f64> {
        self.settled.iter().filter(|s| s.id == id).map(|s| s.phase).collect()
    }

    /// Rows `(frame, τ, id, rel_intensity, phase)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame", "tau", "id", "rel_intensity", "phase"])?;
        for t in &self.transitions {
            for p in &t.probes {
                for (i, tau) in t.tau.iter().enumerate() {
                    w.serialize((t.frame, tau, p.id, p.rel_intensity[i], p.phase[i]))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Intensity and phase of the brightest cell in the 3×3 block around `c`.
fn neighbourhood_peak(sample: impl Fn(i64, i64) -> Complex64, c: Pos) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for dn in -1..=1 {
        for dm in -1..=1 {
            let z = sample(c.m as i64 + dm, c.n as i64 + dn);
            if z.norm_sqr() > best.0 {
                best = (z.norm_sqr(), wrap_phase(z.arg()));
            }
        }
    }
    best
}

/// Transient of one hologram switch, observed at the given probes.
pub fn simulate_transition(
    holo_a: &PhaseMap,
    holo_b: &PhaseMap,
    probes: &[Probe],
    model: &TransientModel,
    prop: &Propagator,
) -> Result<TransitionTrace> {
    holo_a.check_dims(prop.config())?;
    holo_b.check_dims(prop.config())?;
    let fa = prop.propagate(holo_a)?;
    let fb = prop.propagate(holo_b)?;
    transition_with_fields(holo_a, holo_b, &fa, &fb, probes, model, prop, 0)
}

#[allow(clippy::too_many_arguments)]
fn transition_with_fields(
    holo_a: &PhaseMap,
    holo_b: &PhaseMap,
    fa: &ComplexField,
    fb: &ComplexField,
    probes: &[Probe],
    model: &TransientModel,
    prop: &Propagator,
    frame: usize,
) -> Result<TransitionTrace> {
    model.validate()?;
    let taus = model.taus();
    let reference: Vec<f64> = probes
        .iter()
        .map(|p| neighbourhood_peak(|m, n| fb.at_wrapped(m, n), p.to).0)
        .collect();

    // (τ index, probe index) → (intensity, phase)
    let samples: Vec<Vec<(f64, f64)>> = match model.mode {
        TransientMode::CrossFade => taus
            .iter()
            .map(|&tau| {
                probes
                    .iter()
                    .map(|p| {
                        neighbourhood_peak(
                            |m, n| fa.at_wrapped(m, n) * (1.0 - tau) + fb.at_wrapped(m, n) * tau,
                            p.center(tau),
                        )
                    })
                    .collect()
            })
            .collect(),
        TransientMode::ValuePathLinear => taus
            .par_iter()
            .map(|&tau| {
                let field = if tau == 0.0 {
                    fa.clone()
                } else if tau == 1.0 {
                    fb.clone()
                } else {
                    prop.propagate(&value_path(holo_a, holo_b, tau))?
                };
                Ok(probes
                    .iter()
                    .map(|p| neighbourhood_peak(|m, n| field.at_wrapped(m, n), p.center(tau)))
                    .collect())
            })
            .collect::<Result<_>>()?,
    };

    let probes = probes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let rel: Vec<f64> = samples.iter().map(|row| row[k].0 / reference[k]).collect();
            let min = rel.iter().copied().fold(f64::INFINITY, f64::min);
            ProbeTrace {
                id: p.id,
                rel_intensity: rel,
                phase: samples.iter().map(|row| row[k].1).collect(),
                min_rel_intensity: min,
            }
        })
        .collect();
    Ok(TransitionTrace {
        frame,
        tau: taus,
        probes,
    })
}

/// Displayed hologram at fraction `tau` of a value-space linear switch.
pub fn value_path(holo_a: &PhaseMap, holo_b: &PhaseMap, tau: f64) -> PhaseMap {
    let mut v = holo_a.values().clone();
    Zip::from(&mut v)
        .and(holo_b.values())
        .for_each(|a, &b| *a = (1.0 - tau) * *a + tau * b);
    PhaseMap::from_wrapped(v)
}

/// Transients across every consecutive frame pair plus settled per-frame samples.
///
/// Tweezers with zero amplitude in the frame being switched to are not probed.
pub fn sequence_flicker(
    seq: &HologramSequence,
    model: &TransientModel,
    prop: &Propagator,
) -> Result<FlickerTrace> {
    model.validate()?;
    let fields: Vec<ComplexField> = seq
        .frames
        .par_iter()
        .map(|f| prop.propagate(&f.hologram))
        .collect::<Result<_>>()?;

    let mut settled = Vec::new();
    for (k, (frame, field)) in seq.frames.iter().zip(&fields).enumerate() {
        for t in frame.tweezers.iter().filter(|t| t.spec.amp > 0.0) {
            let z = field.at_wrapped(t.spec.pos.m as i64, t.spec.pos.n as i64);
            settled.push(SettledSample {
                frame: k,
                id: t.id,
                pos: t.spec.pos,
                intensity: z.norm_sqr(),
                phase: wrap_phase(z.arg()),
            });
        }
    }

    let transitions = (1..seq.frames.len())
        .into_par_iter()
        .map(|k| {
            let (a, b) = (&seq.frames[k - 1], &seq.frames[k]);
            let probes: Vec<Probe> = b
                .tweezers
                .iter()
                .filter(|t| t.spec.amp > 0.0)
                .map(|t| Probe {
                    id: t.id,
                    from: a
                        .tweezers
                        .iter()
                        .find(|s| s.id == t.id)
                        .map_or(t.spec.pos, |s| s.spec.pos),
                    to: t.spec.pos,
                })
                .collect();
            transition_with_fields(
                &a.hologram,
                &b.hologram,
                &fields[k - 1],
                &fields[k],
                &probes,
                model,
                prop,
                k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FlickerTrace {
        transitions,
        settled,
    })
}

/// Maps the deepest transient dip of a tweezer to a survival probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurvivalModel {
    /// Lost when the relative intensity falls below `threshold`.
    Step { threshold: f64 },
    Logistic { center: f64, width: f64 },
}

impl Default for SurvivalModel {
    fn default() -> Self {
        SurvivalModel::Step { threshold: 0.3 }
    }
}

impl SurvivalModel {
    pub fn survival(&self, min_rel_intensity: f64) -> f64 {
        match *self {
            SurvivalModel::Step { threshold } => {
                if min_rel_intensity < threshold {
                    0.0
                } else {
                    1.0
                }
            }
            SurvivalModel::Logistic { center, width } => {
                1.0 / (1.0 + (-(min_rel_intensity - center) / width).exp())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub psi: f64,
    pub min_intensity: f64,
    pub survival_proxy: f64,
}

/// Shuttles `array` out and back by `steps` unit moves in total, adding a programmed phase
/// slip per step, and records the deepest dip and predicted survival for every slip value.
///
/// The array moves along −m first; the displacement configured in `prop` adds its own slip.
pub fn phase_slip_scan(
    array: &[TweezerSpec],
    steps: usize,
    psi_values: &[f64],
    model: &TransientModel,
    prop: &Propagator,
    survival: &SurvivalModel,
) -> Result<Vec<ScanRow>> {
    model.validate()?;
    if steps < 2 || !steps.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "out-and-back scan needs an even step count, got {steps}"
        )));
    }
    if array.is_empty() {
        return Err(Error::EmptyPattern);
    }
    psi_values
        .par_iter()
        .map(|&psi| {
            let frames = out_and_back(array, (-1, 0), steps / 2, psi)
                .into_iter()
                .map(|specs| make_frame(FrameStage::Move, specs, prop))
                .collect::<Result<Vec<_>>>()?;
            let seq = HologramSequence {
                frames,
                ramp_steps: 0,
                move_steps: steps,
            };
            let trace = sequence_flicker(&seq, model, prop)?;
            let n_tw = array.len();
            let mut alive = vec![1.0; n_tw];
            for t in &trace.transitions {
                for p in &t.probes {
                    alive[p.id] *= survival.survival(p.min_rel_intensity);
                }
            }
            Ok(ScanRow {
                psi,
                min_intensity: trace.min_rel_intensity(),
                survival_proxy: alive.iter().sum::<f64>() / n_tw as f64,
            })
        })
        .collect()
}

/// `count` slip values evenly covering `[0, 2π)`.
pub fn psi_grid(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| std::f64::consts::TAU * i as f64 / count as f64)
        .collect()
}

/// Circular centroid of the predicted loss `1 − survival`; `None` when nothing is lost.
pub fn loss_centroid(rows: &[ScanRow]) -> Option<f64> {
    let z: Complex64 = rows
        .iter()
        .map(|r| Complex64::from_polar(1.0 - r.survival_proxy, r.psi))
        .sum();
    (z.norm() > 1e-12).then(|| wrap_phase(z.arg()))
}

/// Slip value with the lowest survival proxy (ties: deepest dip, then first).
pub fn loss_peak(rows: &[ScanRow]) -> Option<f64> {
    rows.iter()
        .min_by(|a, b| {
            a.survival_proxy
                .total_cmp(&b.survival_proxy)
                .then(a.min_intensity.total_cmp(&b.min_intensity))
        })
        .map(|r| r.psi)
}

/// Shift of the loss maximum from `reference` to `shifted`, in `[-π, π)`.
pub fn curve_shift(reference: &[ScanRow], shifted: &[ScanRow]) -> Option<f64> {
    Some(shortest_angle(loss_centroid(reference)?, loss_centroid(shifted)?))
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{phase_slip, OpticalConfig};
    use crate::patterns::{generate, Geometry, GeometrySpec};
    use crate::sequencer::{plan, wgs_only_sequence, Frame};
    use crate::wgs::{WgsResult, WgsSettings};
    use crate::TweezerPattern;
    use std::f64::consts::{PI, TAU};

    fn gaussian(size: usize) -> Propagator {
        Propagator::new(&OpticalConfig::square(size).with_spot_waist(2.0)).unwrap()
    }

    fn spot(prop: &Propagator, m: i32, amp: f64, phase: f64) -> PhaseMap {
        prop.synthesize(&[TweezerSpec::new((m, 0), amp, phase)]).unwrap()
    }

    #[test]
    fn tau_grid_contains_midpoint() {
        let t = TransientModel::default().taus();
        assert_eq!(t.len(), 17);
        assert_eq!(t[8], 0.5);
        assert!(TransientModel::cross_fade(1).validate().is_err());
    }

    #[test]
    fn identical_frames_do_not_flicker() {
        let prop = gaussian(64);
        let h = spot(&prop, 3, 1.0, 0.4);
        let probe = [Probe { id: 0, from: Pos::new(3, 0), to: Pos::new(3, 0) }];
        for model in [TransientModel::default(), TransientModel::cross_fade(8)] {
            let tr = simulate_transition(&h, &h, &probe, &model, &prop).unwrap();
            for v in &tr.probes[0].rel_intensity {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coincident_spots_interfere_as_cos_squared() {
        let prop = Propagator::new(&OpticalConfig::square(64)).unwrap();
        let probe = [Probe { id: 0, from: Pos::new(2, 0), to: Pos::new(2, 0) }];
        let model = TransientModel::cross_fade(16);
        for theta in [0.0, 0.5, 1.0, 2.0, PI] {
            let a = spot(&prop, 2, 1.0, 0.0);
            let b = spot(&prop, 2, 1.0, theta);
            let tr = simulate_transition(&a, &b, &probe, &model, &prop).unwrap();
            let mid = tr.probes[0].rel_intensity[8];
            assert!((mid - (theta / 2.0).cos().powi(2)).abs() < 1e-12, "{theta}: {mid}");
        }
    }

    #[test]
    fn opposite_phase_unit_move_dips_deeply() {
        let prop = gaussian(128);
        let probe = [Probe { id: 0, from: Pos::new(0, 0), to: Pos::new(-1, 0) }];
        let model = TransientModel::cross_fade(16);
        let dip = |theta: f64| {
            simulate_transition(&spot(&prop, 0, 1.0, 0.0), &spot(&prop, -1, 1.0, theta), &probe, &model, &prop)
                .unwrap()
                .probes[0]
                .min_rel_intensity
        };
        let (same, opposite) = (dip(0.0), dip(PI));
        assert!(same > 0.5, "{same}");
        assert!(opposite < 0.1, "{opposite}");
    }

    fn single(m: i32, seed: u64) -> WgsResult {
        let prop = gaussian(128);
        let t = TweezerPattern::uniform([Pos::new(m, 0)]).unwrap();
        crate::wgs::run_wgs_with(&prop, &t, &WgsSettings { rng_seed: seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn lpi_beats_independent_wgs_frames() {
        let prop = gaussian(128);
        for mode in [TransientMode::CrossFade, TransientMode::ValuePathLinear] {
            let model = TransientModel { substeps: 8, mode };
            for seed in 0..4 {
                let pl = plan(single(-3, seed), single(3, seed + 100), &[true], &Default::default()).unwrap();
                let lpi = pl.full_sequence(&prop).unwrap();
                let wgs = wgs_only_sequence(&lpi, &prop, &WgsSettings { rng_seed: seed * 1000, ..Default::default() }).unwrap();
                let a = sequence_flicker(&lpi, &model, &prop).unwrap();
                let b = sequence_flicker(&wgs, &model, &prop).unwrap();
                assert!(a.min_rel_intensity() > b.min_rel_intensity(), "{mode:?} seed {seed}");

                // settled phase: constant along the move for LPI, scattered for WGS-only
                let lp = a.settled_phases(0);
                let wp = b.settled_phases(0);
                let jumps = |v: &[f64]| v.windows(2).map(|w| shortest_angle(w[0], w[1]).abs()).fold(0.0, f64::max);
                assert!(jumps(&lp[2..]) < 1e-6 + PI / 6.0);
                assert!(jumps(&wp) > jumps(&lp));
            }
        }
    }

    #[test]
    fn short_sequence_has_settled_values_only() {
        let prop = gaussian(64);
        let frame = Frame {
            stage: FrameStage::Move,
            hologram: spot(&prop, 1, 1.0, 0.0),
            tweezers: vec![crate::sequencer::FrameTweezer {
                id: 0,
                spec: TweezerSpec::new((1, 0), 1.0, 0.0),
            }],
        };
        let seq = HologramSequence { frames: vec![frame], ramp_steps: 0, move_steps: 0 };
        let tr = sequence_flicker(&seq, &TransientModel::default(), &prop).unwrap();
        assert!(tr.transitions.is_empty());
        assert_eq!(tr.settled.len(), 1);
        assert_eq!(tr.min_rel_intensity(), 1.0);
    }

    fn scan_array(prop: &Propagator) -> Vec<TweezerSpec> {
        let p = generate(&GeometrySpec::new(Geometry::Grid { rows: 2, cols: 2 }, 13.0)).unwrap();
        let res = crate::wgs::run_wgs_with(prop, &p, &WgsSettings::default()).unwrap();
        res.drive.tweezers().to_vec()
    }

    #[test]
    fn scan_loss_sits_at_pi_and_moves_with_displacement() {
        let n = 128;
        let base = OpticalConfig::square(n).with_spot_waist(2.0);
        let p0 = Propagator::new(&base).unwrap();
        let d = 32;
        let pd = Propagator::new(&base.clone().with_displacement(d, 0)).unwrap();
        let psi = psi_grid(32);
        let model = TransientModel::cross_fade(8);
        let surv = SurvivalModel::default();
        let arr = scan_array(&p0);
        let r0 = phase_slip_scan(&arr, 10, &psi, &model, &p0, &surv).unwrap();
        let rd = phase_slip_scan(&arr, 10, &psi, &model, &pd, &surv).unwrap();

        let step = TAU / 32.0;
        assert!(shortest_angle(loss_centroid(&r0).unwrap(), PI).abs() <= step);
        assert_eq!(r0[0].survival_proxy, 1.0);
        assert!(r0.iter().all(|r| r.survival_proxy <= r0[0].survival_proxy));
        let shift = curve_shift(&r0, &rd).unwrap();
        assert!((shift + phase_slip(d as f64, n)).abs() <= step, "{shift}");

        // d = 0 dip depth is symmetric about π
        for i in 1..16 {
            let (a, b) = (r0[16 - i].min_intensity, r0[16 + i].min_intensity);
            assert!((a - b).abs() < 0.02, "{i}: {a} {b}");
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn displaced_scan_is_slip_translation_in_cross_fade() {
        // ξ = 2π·16/128 = π/4 is four grid steps of 2π/32
        let base = OpticalConfig::square(128).with_spot_waist(2.0);
        let p0 = Propagator::new(&base).unwrap();
        let pd = Propagator::new(&base.clone().with_displacement(16, 0)).unwrap();
        let psi = psi_grid(32);
        let model = TransientModel::cross_fade(8);
        let arr = scan_array(&p0);
        let surv = SurvivalModel::Logistic { center: 0.3, width: 0.05 };
        let r0 = phase_slip_scan(&arr, 10, &psi, &model, &p0, &surv).unwrap();
        let rd = phase_slip_scan(&arr, 10, &psi, &model, &pd, &surv).unwrap();
        // neighbouring spots pick up different displacement phases, so crosstalk differs slightly
        for i in 0..32 {
            let j = (i + 28) % 32;
            assert!((rd[j].min_intensity - r0[i].min_intensity).abs() < 5e-3, "{i}");
        }
        // an isolated spot translates exactly
        let lone = [TweezerSpec::new((2, 1), 1.0, 0.3)];
        let r0 = phase_slip_scan(&lone, 10, &psi, &model, &p0, &surv).unwrap();
        let rd = phase_slip_scan(&lone, 10, &psi, &model, &pd, &surv).unwrap();
        for i in 0..32 {
            let j = (i + 28) % 32;
            assert!((rd[j].min_intensity - r0[i].min_intensity).abs() < 1e-9, "{i}");
            assert!((rd[j].survival_proxy - r0[i].survival_proxy).abs() < 1e-9, "{i}");
        }
    }

    #[test]
    fn csv_exports() {
        let prop = gaussian(64);
        let a = spot(&prop, 0, 1.0, 0.0);
        let b = spot(&prop, -1, 1.0, 0.0);
        let tr = simulate_transition(&a, &b, &[Probe { id: 7, from: Pos::new(0, 0), to: Pos::new(-1, 0) }], &TransientModel::cross_fade(4), &prop).unwrap();
        let trace = FlickerTrace { transitions: vec![tr], settled: vec![] };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("frame,tau,id,rel_intensity,phase\n"));
        assert_eq!(text.lines().count(), 6);

        let mut buf = Vec::new();
        write_scan_csv(&[ScanRow { psi: 0.0, min_intensity: 0.5, survival_proxy: 1.0 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "psi,min_intensity,survival_proxy\n0.0,0.5,1.0\n");
    }
}
