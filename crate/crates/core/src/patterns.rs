//! Target geometries and stochastic loading.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{Pos, TweezerPattern};

/// Default site spacing in Fourier units (about 6 µm at 0.45 µm per unit).
pub const DEFAULT_SPACING: f64 = 13.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Grid { rows: usize, cols: usize },
    /// Regular polygon whose neighbouring vertices sit `spacing` apart.
    Circle { count: usize },
    Kagome { count: usize },
    Triangular { count: usize },
    /// Explicit sites in Fourier units; `spacing` is ignored.
    Custom { sites: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    #[serde(flatten)]
    pub geometry: Geometry,
    pub spacing: f64,
    #[serde(default)]
    pub center: (f64, f64),
}

impl GeometrySpec {
    pub fn new(geometry: Geometry, spacing: f64) -> Self {
        GeometrySpec {
            geometry,
            spacing,
            center: (0.0, 0.0),
        }
    }

    pub fn centered_at(mut self, m: f64, n: f64) -> Self {
        self.center = (m, n);
        self
    }

    pub fn count(&self) -> usize {
        match &self.geometry {
            Geometry::Grid { rows, cols } => rows * cols,
            Geometry::Circle { count }
            | Geometry::Kagome { count }
            | Geometry::Triangular { count } => *count,
            Geometry::Custom { sites } => sites.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::InvalidParameter("geometry must have at least one site".into()));
        }
        let custom = matches!(self.geometry, Geometry::Custom { .. });
        if !custom && !(self.spacing >= 2.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spacing {} must be at least 2 Fourier units",
                self.spacing
            )));
        }
        if !(self.center.0.is_finite() && self.center.1.is_finite()) {
            return Err(Error::InvalidParameter("non-finite center offset".into()));
        }
        Ok(())
    }
}

/// Sites in Fourier units before rounding, relative to the center offset.
fn raw_sites(spec: &GeometrySpec) -> Vec<(f64, f64)> {
    let s = spec.spacing;
    match &spec.geometry {
        Geometry::Grid { rows, cols } => {
            let (r0, c0) = ((*rows as f64 - 1.0) / 2.0, (*cols as f64 - 1.0) / 2.0);
            (0..*rows)
                .flat_map(|r| (0..*cols).map(move |c| ((c as f64 - c0) * s, (r as f64 - r0) * s)))
                .collect()
        }
        Geometry::Circle { count: 1 } => vec![(0.0, 0.0)],
        Geometry::Circle { count } => {
            let n = *count as f64;
            let radius = s / (2.0 * (PI / n).sin());
            (0..*count)
                .map(|i| {
                    let a = TAU * i as f64 / n;
                    (radius * a.cos(), radius * a.sin())
                })
                .collect()
        }
        Geometry::Triangular { count } => nearest(lattice(s, &[(0.0, 0.0)], *count), *count),
        Geometry::Kagome { count } => {
            // triangular Bravais lattice of twice the spacing with a three-site basis
            let a = 2.0 * s;
            let basis = [(0.0, 0.0), (a / 2.0, 0.0), (a / 4.0, a * 3f64.sqrt() / 4.0)];
            nearest(lattice(a, &basis, *count), *count)
        }
        Geometry::Custom { sites } => sites.clone(),
    }
}

fn lattice(a: f64, basis: &[(f64, f64)], count: usize) -> Vec<(f64, f64)> {
    let reach = ((count as f64).sqrt().ceil() as i64) + 2;
    let h = a * 3f64.sqrt() / 2.0;
    let mut out = Vec::new();
    for j in -reach..=reach {
        for i in -reach..=reach {
            let (x, y) = (a * (i as f64 + j as f64 / 2.0), h * j as f64);
            out.extend(basis.iter().map(|(bx, by)| (x + bx, y + by)));
        }
    }
    out
}

/// The `count` sites closest to the origin; ties resolved by angle from the +m axis.
fn nearest(mut sites: Vec<(f64, f64)>, count: usize) -> Vec<(f64, f64)> {
    let key = |&(x, y): &(f64, f64)| {
        let r = ((x * x + y * y).sqrt() * 1e6).round() as i64;
        (r, y.atan2(x).rem_euclid(TAU))
    };
    sites.sort_by(|a, b| {
        let (ra, aa) = key(a);
        let (rb, ab) = key(b);
        ra.cmp(&rb).then(aa.total_cmp(&ab))
    });
    sites.truncate(count);
    sites
}

fn round_half_up(x: f64) -> i32 {
    (x + 0.5).floor() as i32
}

/// Equal-amplitude, zero-phase pattern on the integer Fourier grid.
pub fn generate(spec: &GeometrySpec) -> Result<TweezerPattern> {
    spec.validate()?;
    let mut seen = HashSet::new();
    let mut positions = Vec::with_capacity(spec.count());
    for (x, y) in raw_sites(spec) {
        let p = Pos::new(
            round_half_up(x + spec.center.0),
            round_half_up(y + spec.center.1),
        );
        if !seen.insert(p) {
            return Err(Error::Collision(p.m, p.n));
        }
        positions.push(p);
    }
    TweezerPattern::uniform(positions)
}

/// Bernoulli occupancy per site, deterministic in `seed`.
pub fn load_stochastic(pattern: &TweezerPattern, p_load: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p_load) {
        return Err(Error::InvalidParameter(format!("p_load {p_load} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..pattern.len()).map(|_| rng.random_bool(p_load)).collect())
}

/// Distance from every site to its nearest neighbour.
pub fn nearest_neighbour_distances(pattern: &TweezerPattern) -> Vec<f64> {
    let pos: Vec<Pos> = pattern.positions().collect();
    pos.iter()
        .enumerate()
        .map(|(i, a)| {
            pos.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.dist(*b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
