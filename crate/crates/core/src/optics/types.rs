use std::collections::HashSet;
use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed angular difference `to - from` mapped onto `[-π, π)`.
pub fn shortest_angle(from: f64, to: f64) -> f64 {
    let d = wrap_phase(to - from);
    if d >= PI {
        d - TAU
    } else {
        d
    }
}

/// Integer coordinate on the Fourier (focal-plane) grid, in Fourier units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub m: i32,
    pub n: i32,
}

impl Pos {
    pub const fn new(m: i32, n: i32) -> Self {
        Pos { m, n }
    }

    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.m - other.m).abs().max((self.n - other.n).abs())
    }

    pub fn sq_dist(self, other: Pos) -> i64 {
        let dm = (self.m - other.m) as i64;
        let dn = (self.n - other.n) as i64;
        dm * dm + dn * dn
    }

    pub fn dist(self, other: Pos) -> f64 {
        (self.sq_dist(other) as f64).sqrt()
    }
}

impl From<(i32, i32)> for Pos {
    fn from((m, n): (i32, i32)) -> Self {
        Pos { m, n }
    }
}

/// Amplitude profile of the laser illuminating the SLM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Illumination {
    Uniform,
    /// Gaussian beam centred on the optical axis; `waist` is the 1/e² intensity radius in metres.
    Gaussian { waist: f64 },
}

/// Geometry of the SLM → focal-plane imaging system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    pub nx: usize,
    pub ny: usize,
    /// Laser wavelength (m).
    pub wavelength: f64,
    /// Objective focal length (m).
    pub focal_length: f64,
    /// Demagnification between SLM and objective back focal plane, in (0, 1].
    pub demagnification: f64,
    /// SLM chip side length (m). The default is inferred from the 0.45 µm Fourier unit.
    pub chip_size: f64,
    /// Offset between the hologram's computational centre and the optical axis (pixels).
    pub dx: i64,
    pub dy: i64,
    pub illumination: Illumination,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            nx: 1024,
            ny: 1024,
            wavelength: 813e-9,
            focal_length: 4e-3,
            demagnification: 0.41,
            chip_size: 17.63e-3,
            dx: 0,
            dy: 0,
            illumination: Illumination::Uniform,
        }
    }
}

impl OpticalConfig {
    /// Default optics on a square `size`×`size` grid.
    pub fn square(size: usize) -> Self {
        OpticalConfig {
            nx: size,
            ny: size,
            ..Default::default()
        }
    }

    pub fn with_displacement(mut self, dx: i64, dy: i64) -> Self {
        self.dx = dx;
        self.dy = dy;
        self
    }

    pub fn with_illumination(mut self, illumination: Illumination) -> Self {
        self.illumination = illumination;
        self
    }

    /// Gaussian illumination whose focal spot has the given 1/e² waist in Fourier units.
    pub fn with_spot_waist(self, cells: f64) -> Self {
        let waist_px = self.nx as f64 / (PI * cells);
        let waist = waist_px * self.pitch_x();
        self.with_illumination(Illumination::Gaussian { waist })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || !self.nx.is_multiple_of(2) || !self.ny.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid {}x{} must be positive and even",
                self.nx, self.ny
            )));
        }
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("focal_length", self.focal_length),
            ("chip_size", self.chip_size),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.demagnification > 0.0 && self.demagnification <= 1.0) {
            return Err(Error::Config(format!(
                "demagnification must lie in (0, 1], got {}",
                self.demagnification
            )));
        }
        if self.dx.unsigned_abs() as usize >= self.nx / 2
            || self.dy.unsigned_abs() as usize >= self.ny / 2
        {
            return Err(Error::Config(format!(
                "displacement ({}, {}) must be smaller than half the grid",
                self.dx, self.dy
            )));
        }
        if let Illumination::Gaussian { waist } = self.illumination {
            if !(waist > 0.0 && waist.is_finite()) {
                return Err(Error::Config(format!("beam waist must be positive, got {waist}")));
            }
        }
        Ok(())
    }

    pub fn pitch_x(&self) -> f64 {
        self.chip_size / self.nx as f64
    }

    pub fn pitch_y(&self) -> f64 {
        self.chip_size / self.ny as f64
    }

    pub fn contains(&self, p: Pos) -> bool {
        let hx = (self.nx / 2) as i64;
        let hy = (self.ny / 2) as i64;
        (-hx..hx).contains(&(p.m as i64)) && (-hy..hy).contains(&(p.n as i64))
    }

    pub fn check_pos(&self, p: Pos) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                m: p.m as i64,
                n: p.n as i64,
                nx: self.nx,
                ny: self.ny,
            })
        }
    }

    /// Illumination amplitude at SLM pixel `(k, l)` measured from the optical axis.
    pub fn illumination_at(&self, k: i64, l: i64) -> f64 {
        match self.illumination {
            Illumination::Uniform => 1.0,
            Illumination::Gaussian { waist } => {
                let x = k as f64 * self.pitch_x();
                let y = l as f64 * self.pitch_y();
                (-(x * x + y * y) / (waist * waist)).exp()
            }
        }
    }
}

/// Hologram displayed on the SLM: phases in `[0, 2π)`, indexed `[row, col]` = `[l + ny/2, k + nx/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    values: Array2<f64>,
}

impl PhaseMap {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        PhaseMap {
            values: Array2::zeros((ny, nx)),
        }
    }

    /// Builds a map, rejecting entries outside `[0, 2π)`.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..TAU).contains(*v)) {
            return Err(Error::InvalidParameter(format!("phase {v} outside [0, 2π)")));
        }
        Ok(PhaseMap { values })
    }

    /// Builds a map, wrapping every entry into `[0, 2π)`.
    pub fn from_wrapped(mut values: Array2<f64>) -> Self {
        values.mapv_inplace(wrap_phase);
        PhaseMap { values }
    }

    /// Evaluates `f(k, l)` on centred pixel coordinates and wraps.
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(i64, i64) -> f64) -> Self {
        let hx = (nx / 2) as i64;
        let hy = (ny / 2) as i64;
        let values = Array2::from_shape_fn((ny, nx), |(r, c)| {
            wrap_phase(f(c as i64 - hx, r as i64 - hy))
        });
        PhaseMap { values }
    }

    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    pub fn ny(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx(), self.ny())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Phase at centred pixel `(k, l)`.
    pub fn at(&self, k: i64, l: i64) -> f64 {
        let c = (k + (self.nx() / 2) as i64) as usize;
        let r = (l + (self.ny() / 2) as i64) as usize;
        self.values[[r, c]]
    }

    pub fn check_dims(&self, cfg: &OpticalConfig) -> Result<()> {
        if self.dims() != (cfg.nx, cfg.ny) {
            return Err(Error::Dimension {
                expected: (cfg.nx, cfg.ny),
                got: self.dims(),
            });
        }
        Ok(())
    }
}

/// Complex focal-plane field, indexed `[row, col]` = `[n + ny/2, m + nx/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    values: Array2<Complex64>,
}

impl ComplexField {
    pub fn new(values: Array2<Complex64>) -> Self {
        ComplexField { values }
    }

    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    pub fn ny(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx(), self.ny())
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn contains(&self, p: Pos) -> bool {
        let hx = (self.nx() / 2) as i64;
        let hy = (self.ny() / 2) as i64;
        (-hx..hx).contains(&(p.m as i64)) && (-hy..hy).contains(&(p.n as i64))
    }

    /// Value at `p`, or `None` outside the grid.
    pub fn get(&self, p: Pos) -> Option<Complex64> {
        if !self.contains(p) {
            return None;
        }
        Some(self.at_wrapped(p.m as i64, p.n as i64))
    }

    /// Value at `(m, n)` with periodic wrap-around.
    pub fn at_wrapped(&self, m: i64, n: i64) -> Complex64 {
        let nx = self.nx() as i64;
        let ny = self.ny() as i64;
        let c = (m + nx / 2).rem_euclid(nx) as usize;
        let r = (n + ny / 2).rem_euclid(ny) as usize;
        self.values[[r, c]]
    }

    pub fn total_power(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Circular shift: the output at `(m, n)` is the input at `(m - dm, n - dn)`.
    pub fn rolled(&self, dm: i64, dn: i64) -> ComplexField {
        let (nx, ny) = (self.nx() as i64, self.ny() as i64);
        let values = Array2::from_shape_fn((ny as usize, nx as usize), |(r, c)| {
            let sr = (r as i64 - dn).rem_euclid(ny) as usize;
            let sc = (c as i64 - dm).rem_euclid(nx) as usize;
            self.values[[sr, sc]]
        });
        ComplexField { values }
    }

    /// Position and value of the brightest cell.
    pub fn peak(&self) -> (Pos, Complex64) {
        let (mut best, mut best_idx) = (-1.0, (0, 0));
        for ((r, c), z) in self.values.indexed_iter() {
            let p = z.norm_sqr();
            if p > best {
                best = p;
                best_idx = (r, c);
            }
        }
        let pos = Pos::new(
            best_idx.1 as i32 - (self.nx() / 2) as i32,
            best_idx.0 as i32 - (self.ny() / 2) as i32,
        );
        (pos, self.values[[best_idx.0, best_idx.1]])
    }
}

/// One tweezer: grid position, linear field amplitude and optical phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweezerSpec {
    #[serde(flatten)]
    pub pos: Pos,
    pub amp: f64,
    pub phase: f64,
}

impl TweezerSpec {
    pub fn new(pos: impl Into<Pos>, amp: f64, phase: f64) -> Self {
        TweezerSpec {
            pos: pos.into(),
            amp,
            phase,
        }
    }
}

/// A set of tweezers at distinct grid positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweezerPattern {
    tweezers: Vec<TweezerSpec>,
    normalized: bool,
}

impl TweezerPattern {
    pub fn new(tweezers: Vec<TweezerSpec>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(tweezers.len());
        for t in &tweezers {
            if !(t.amp >= 0.0 && t.amp.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "tweezer amplitude {} must be finite and non-negative",
                    t.amp
                )));
            }
            if !t.phase.is_finite() {
                return Err(Error::InvalidParameter("non-finite tweezer phase".into()));
            }
            if !seen.insert(t.pos) {
                return Err(Error::DuplicatePosition(t.pos.m, t.pos.n));
            }
        }
        let tweezers = tweezers
            .into_iter()
            .map(|t| TweezerSpec {
                phase: wrap_phase(t.phase),
                ..t
            })
            .collect();
        Ok(TweezerPattern {
            tweezers,
            normalized: false,
        })
    }

    /// Equal-amplitude, zero-phase pattern at the given positions.
    pub fn uniform(positions: impl IntoIterator<Item = Pos>) -> Result<Self> {
        Self::new(
            positions
                .into_iter()
                .map(|p| TweezerSpec::new(p, 1.0, 0.0))
                .collect(),
        )
    }

    pub fn tweezers(&self) -> &[TweezerSpec] {
        &self.tweezers
    }

    pub fn len(&self) -> usize {
        self.tweezers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweezers.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        self.tweezers.iter().map(|t| t.pos)
    }

    pub fn total_intensity(&self) -> f64 {
        self.tweezers.iter().map(|t| t.amp * t.amp).sum()
    }

    /// Scales amplitudes so that the summed intensity is one.
    pub fn normalize(&mut self) {
        let total = self.total_intensity();
        if total > 0.0 {
            let s = total.sqrt().recip();
            for t in &mut self.tweezers {
                t.amp *= s;
            }
            self.normalized = true;
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// Flags amplitudes that were already scaled to unit power by the caller.
    pub(crate) fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    /// Same pattern translated by `(dm, dn)` cells.
    pub fn translated(&self, dm: i32, dn: i32) -> Self {
        TweezerPattern {
            tweezers: self
                .tweezers
                .iter()
                .map(|t| TweezerSpec {
                    pos: Pos::new(t.pos.m + dm, t.pos.n + dn),
                    ..*t
                })
                .collect(),
            normalized: self.normalized,
        }
    }

    pub fn check_bounds(&self, cfg: &OpticalConfig) -> Result<()> {
        self.tweezers.iter().try_for_each(|t| cfg.check_pos(t.pos))
    }
}
