//! Hologram sequences for one rearrangement cycle: amplitude ramp, then linear
//! position/phase interpolation one Fourier unit per frame.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve, AssignmentProblem, AssignmentSolution};
use crate::error::{Error, Result};
use crate::optics::{shortest_angle, wrap_phase, PhaseMap, Pos, Propagator, TweezerSpec};
use crate::wgs::{run_wgs_with, WgsResult, WgsSettings};
use crate::TweezerPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhasePath {
    /// Interpolate along the shorter arc, so |Δψ| ≤ π.
    #[default]
    Shortest,
    /// Interpolate the raw difference of the wrapped phases.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequencerSettings {
    pub ramp_steps: usize,
    /// Extra phase added per move step (rad).
    pub psi_slip: f64,
    pub phase_path: PhasePath,
}

impl Default for SequencerSettings {
    fn default() -> Self {
        SequencerSettings {
            ramp_steps: 2,
            psi_slip: 0.0,
            phase_path: PhasePath::Shortest,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RearrangementPlan {
    pub initial: Arc<WgsResult>,
    pub target: Arc<WgsResult>,
    /// One flag per initial tweezer.
    pub occupancy: Vec<bool>,
    /// Sources index into `occupied`; targets index the target tweezers.
    pub assignment: AssignmentSolution,
    /// Initial tweezer index of each assignment source.
    pub occupied: Vec<usize>,
    pub ramp_steps: usize,
    pub move_steps: usize,
    pub psi_slip: f64,
    pub phase_path: PhasePath,
}

/// Serializable digest of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub occupancy: Vec<bool>,
    /// `(initial tweezer index, target tweezer index)` per target.
    pub moves: Vec<(usize, usize)>,
    pub extinguished: Vec<usize>,
    pub total_cost: i64,
    pub max_move: i32,
    pub ramp_steps: usize,
    pub move_steps: usize,
    pub psi_slip: f64,
    pub phase_path: PhasePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTweezer {
    /// Index of the originating tweezer in the initial pattern.
    pub id: usize,
    #[serde(flatten)]
    pub spec: TweezerSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStage {
    Ramp,
    Move,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub stage: FrameStage,
    pub hologram: PhaseMap,
    /// Spots encoded in `hologram`; positions may coincide while tweezers pass.
    pub tweezers: Vec<FrameTweezer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HologramSequence {
    pub frames: Vec<Frame>,
    pub ramp_steps: usize,
    pub move_steps: usize,
}

impl HologramSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Assigns occupied initial tweezers to the target tweezers and sizes the move.
pub fn plan(
    initial: impl Into<Arc<WgsResult>>,
    target: impl Into<Arc<WgsResult>>,
    occupancy: &[bool],
    settings: &SequencerSettings,
) -> Result<RearrangementPlan> {
    let (initial, target) = (initial.into(), target.into());
    if occupancy.len() != initial.drive.len() {
        return Err(Error::InvalidParameter(format!(
            "occupancy has {} entries for {} initial tweezers",
            occupancy.len(),
            initial.drive.len()
        )));
    }
    if initial.hologram.dims() != target.hologram.dims() {
        return Err(Error::Config("initial and target holograms differ in size".into()));
    }
    if !settings.psi_slip.is_finite() {
        return Err(Error::InvalidParameter("psi_slip must be finite".into()));
    }
    let occupied: Vec<usize> = (0..occupancy.len()).filter(|&i| occupancy[i]).collect();
    let init_pos: Vec<Pos> = initial.drive.positions().collect();
    let problem = AssignmentProblem::new(
        occupied.iter().map(|&i| init_pos[i]).collect(),
        target.drive.positions().collect(),
    )?;
    let assignment = solve(&problem)?;
    let move_steps = assignment.max_move as usize;
    Ok(RearrangementPlan {
        initial,
        target,
        occupancy: occupancy.to_vec(),
        assignment,
        occupied,
        ramp_steps: settings.ramp_steps,
        move_steps,
        psi_slip: settings.psi_slip,
        phase_path: settings.phase_path,
    })
}

impl RearrangementPlan {
    /// `(initial index, target index)` for every target, in target order.
    pub fn moves(&self) -> Vec<(usize, usize)> {
        self.assignment
            .pairs
            .iter()
            .map(|&(s, t)| (self.occupied[s], t))
            .collect()
    }

    pub fn summary(&self) -> PlanSummary {
        let moves = self.moves();
        let mut used = vec![false; self.occupancy.len()];
        moves.iter().for_each(|&(i, _)| used[i] = true);
        PlanSummary {
            occupancy: self.occupancy.clone(),
            extinguished: (0..used.len()).filter(|&i| !used[i]).collect(),
            moves,
            total_cost: self.assignment.total_cost,
            max_move: self.assignment.max_move,
            ramp_steps: self.ramp_steps,
            move_steps: self.move_steps,
            psi_slip: self.psi_slip,
            phase_path: self.phase_path,
        }
    }

    /// Spot list for ramp frame `j` in `1..=ramp_steps`.
    pub fn ramp_specs(&self, j: usize) -> Vec<FrameTweezer> {
        let tau = j as f64 / self.ramp_steps as f64;
        let init = self.initial.drive.tweezers();
        let fin = self.target.drive.tweezers();
        let mut dest = vec![None; init.len()];
        for (i, t) in self.moves() {
            dest[i] = Some(fin[t].amp);
        }
        let specs: Vec<TweezerSpec> = init
            .iter()
            .zip(&dest)
            .map(|(t, d)| {
                let amp = match d {
                    Some(a_f) => t.amp + tau * (a_f - t.amp),
                    None => t.amp * (1.0 - tau),
                };
                TweezerSpec { amp, ..*t }
            })
            .collect();
        let specs = TweezerPattern::new(specs)
            .expect("initial positions are distinct")
            .normalized();
        specs
            .tweezers()
            .iter()
            .enumerate()
            .map(|(id, &spec)| FrameTweezer { id, spec })
            .collect()
    }

    /// Spot list for move frame `j` in `1..=move_steps`, in target order.
    pub fn move_specs(&self, j: usize) -> Vec<FrameTweezer> {
        let n = self.move_steps as i64;
        let init = self.initial.drive.tweezers();
        let fin = self.target.drive.tweezers();
        self.moves()
            .into_iter()
            .map(|(i, t)| {
                let (s, e) = (init[i], fin[t]);
                let pos = Pos::new(
                    lerp_round(s.pos.m, e.pos.m, j as i64, n),
                    lerp_round(s.pos.n, e.pos.n, j as i64, n),
                );
                let phase = if j as i64 == n && self.psi_slip == 0.0 {
                    e.phase
                } else {
                    let delta = match self.phase_path {
                        PhasePath::Shortest => shortest_angle(s.phase, e.phase),
                        PhasePath::Raw => e.phase - s.phase,
                    };
                    wrap_phase(s.phase + delta * j as f64 / n as f64 + self.psi_slip * j as f64)
                };
                FrameTweezer {
                    id: i,
                    spec: TweezerSpec {
                        pos,
                        amp: e.amp,
                        phase,
                    },
                }
            })
            .collect()
    }

    pub fn ramp_off_frames(&self, prop: &Propagator) -> Result<Vec<Frame>> {
        (1..=self.ramp_steps)
            .into_par_iter()
            .map(|j| make_frame(FrameStage::Ramp, self.ramp_specs(j), prop))
            .collect()
    }

    pub fn move_frames(&self, prop: &Propagator) -> Result<Vec<Frame>> {
        (1..=self.move_steps)
            .into_par_iter()
            .map(|j| make_frame(FrameStage::Move, self.move_specs(j), prop))
            .collect()
    }

    pub fn full_sequence(&self, prop: &Propagator) -> Result<HologramSequence> {
        if prop.config().nx != self.target.hologram.nx()
            || prop.config().ny != self.target.hologram.ny()
        {
            return Err(Error::Config("propagator grid differs from the plan's".into()));
        }
        let mut frames = self.ramp_off_frames(prop)?;
        frames.extend(self.move_frames(prop)?);
        Ok(HologramSequence {
            frames,
            ramp_steps: self.ramp_steps,
            move_steps: self.move_steps,
        })
    }
}

/// Nearest integer to `s + j(e − s)/n`, halves rounded up, in exact integer arithmetic.
fn lerp_round(s: i32, e: i32, j: i64, n: i64) -> i32 {
    let num = 2 * (s as i64 * n + j * (e - s) as i64) + n;
    num.div_euclid(2 * n) as i32
}

pub fn make_frame(stage: FrameStage, tweezers: Vec<FrameTweezer>, prop: &Propagator) -> Result<Frame> {
    let specs: Vec<TweezerSpec> = tweezers.iter().map(|t| t.spec).collect();
    Ok(Frame {
        stage,
        hologram: prop.synthesize(&specs)?,
        tweezers,
    })
}

/// Rigid shuttle of `start`: `steps` unit moves along `dir`, then `steps` back.
///
/// Each outbound step adds `psi_slip` to every spot phase and each return step subtracts it.
/// The returned spot lists include the starting frame, `2·steps + 1` in total.
pub fn out_and_back(
    start: &[TweezerSpec],
    dir: (i32, i32),
    steps: usize,
    psi_slip: f64,
) -> Vec<Vec<FrameTweezer>> {
    (0..=2 * steps)
        .map(|j| {
            let (offset, slip) = if j <= steps {
                (j as i32, j as f64 * psi_slip)
            } else {
                ((2 * steps - j) as i32, (2 * steps - j) as f64 * psi_slip)
            };
            start
                .iter()
                .enumerate()
                .map(|(id, t)| FrameTweezer {
                    id,
                    spec: TweezerSpec {
                        pos: Pos::new(t.pos.m + offset * dir.0, t.pos.n + offset * dir.1),
                        amp: t.amp,
                        phase: wrap_phase(t.phase + slip),
                    },
                })
                .collect()
        })
        .collect()
}

/// Same spot trajectory as `seq`, but every frame is an independent WGS hologram.
///
/// Frame `k` uses seed `settings.rng_seed + k`, so spot phases are uncorrelated between frames.
/// Spots with zero amplitude are dropped and coincident spots are merged.
pub fn wgs_only_sequence(
    seq: &HologramSequence,
    prop: &Propagator,
    settings: &WgsSettings,
) -> Result<HologramSequence> {
    let frames = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(k, frame)| {
            let mut kept: Vec<FrameTweezer> = Vec::new();
            for t in frame.tweezers.iter().filter(|t| t.spec.amp > 0.0) {
                if !kept.iter().any(|k| k.spec.pos == t.spec.pos) {
                    kept.push(*t);
                }
            }
            let target = TweezerPattern::new(kept.iter().map(|t| t.spec).collect())?;
            let res = run_wgs_with(
                prop,
                &target,
                &WgsSettings {
                    rng_seed: settings.rng_seed.wrapping_add(k as u64),
                    ..settings.clone()
                },
            )?;
            let tweezers = kept
                .iter()
                .zip(res.drive.tweezers())
                .map(|(t, &spec)| FrameTweezer { id: t.id, spec })
                .collect();
            Ok(Frame {
                stage: frame.stage,
                hologram: res.hologram,
                tweezers,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HologramSequence {
        frames,
        ramp_steps: seq.ramp_steps,
        move_steps: seq.move_steps,
    })
}
