//! Discrete Fourier-optics model of the SLM → focal-plane system.
//!
//! Both planes use centred coordinates: SLM pixel `(k, l)` and focal cell `(m, n)` run
//! over `[-N/2, N/2)`, with `(0, 0)` stored at array index `(N/2, N/2)`. The focal field is
//!
//! ```text
//! U(m, n) = N⁻½ Σ_{k,l} A(k, l) · exp(iφ(k + dx, l + dy)) · exp(2πi (k m / Nx + l n / Ny))
//! ```
//!
//! where `A` is the illumination centred on the optical axis and `(dx, dy)` is the offset of
//! the hologram's computational centre, applied as a circular roll of the hologram. For
//! uniform illumination this is the usual `(k - dx)` form, so a spot at `m` picks up an extra
//! phase `-2π m dx / Nx`.

mod fft;
mod types;

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use fft::Fft2;
pub use types::{
    shortest_angle, wrap_phase, ComplexField, Illumination, OpticalConfig, PhaseMap, Pos,
    TweezerPattern, TweezerSpec,
};

/// Maps an FFT-order index onto a centred coordinate.
fn fft_coord(i: usize, len: usize) -> i64 {
    if i < len / 2 {
        i as i64
    } else {
        i as i64 - len as i64
    }
}

/// Reusable FFT plans and illumination profile for one [`OpticalConfig`].
#[derive(Clone)]
pub struct Propagator {
    cfg: OpticalConfig,
    forward: Fft2,
    inverse: Fft2,
    // FFT order; `None` for uniform illumination
    illumination: Option<Vec<f64>>,
    norm: f64,
}

impl Propagator {
    pub fn new(cfg: &OpticalConfig) -> Result<Self> {
        cfg.validate()?;
        let (nx, ny) = (cfg.nx, cfg.ny);
        let illumination = match cfg.illumination {
            Illumination::Uniform => None,
            Illumination::Gaussian { .. } => {
                let mut a = vec![0.0; nx * ny];
                for ry in 0..ny {
                    for rx in 0..nx {
                        a[ry * nx + rx] = cfg.illumination_at(fft_coord(rx, nx), fft_coord(ry, ny));
                    }
                }
                Some(a)
            }
        };
        Ok(Propagator {
            cfg: cfg.clone(),
            forward: Fft2::new(nx, ny, FftDirection::Forward),
            inverse: Fft2::new(nx, ny, FftDirection::Inverse),
            illumination,
            norm: ((nx * ny) as f64).sqrt().recip(),
        })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.cfg
    }

    /// Focal-plane field produced by displaying `holo`.
    pub fn propagate(&self, holo: &PhaseMap) -> Result<ComplexField> {
        holo.check_dims(&self.cfg)?;
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let (dx, dy) = (self.cfg.dx, self.cfg.dy);
        let phases = holo.values();
        let illum = self.illumination.as_deref();

        let mut buf = vec![Complex64::default(); nx * ny];
        buf.par_chunks_mut(nx).enumerate().for_each(|(ry, row)| {
            let l = fft_coord(ry, ny);
            let hr = (l + dy + (ny / 2) as i64).rem_euclid(ny as i64) as usize;
            for (rx, z) in row.iter_mut().enumerate() {
                let k = fft_coord(rx, nx);
                let hc = (k + dx + (nx / 2) as i64).rem_euclid(nx as i64) as usize;
                let amp = illum.map_or(1.0, |a| a[ry * nx + rx]);
                *z = Complex64::from_polar(amp, phases[[hr, hc]]);
            }
        });
        self.inverse.process(&mut buf);

        let norm = self.norm;
        let values = Array2::from_shape_fn((ny, nx), |(r, c)| {
            buf[((r + ny / 2) % ny) * nx + (c + nx / 2) % nx] * norm
        });
        Ok(ComplexField::new(values))
    }

    /// Phase-only hologram whose focal field approximates the given spots.
    ///
    /// Spots are summed into a centred spectrum, inverse transformed and the amplitude is
    /// discarded. The computational centre is assumed to sit on the optical axis, so the
    /// configured displacement is not compensated. Coincident spots superpose.
    pub fn synthesize(&self, tweezers: &[TweezerSpec]) -> Result<PhaseMap> {
        if tweezers.is_empty() {
            return Err(Error::EmptyPattern);
        }
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut buf = vec![Complex64::default(); nx * ny];
        for t in tweezers {
            self.cfg.check_pos(t.pos)?;
            let r = (t.pos.n as i64).rem_euclid(ny as i64) as usize;
            let c = (t.pos.m as i64).rem_euclid(nx as i64) as usize;
            buf[r * nx + c] += Complex64::from_polar(t.amp, t.phase);
        }
        self.forward.process(&mut buf);

        let values = Array2::from_shape_fn((ny, nx), |(r, c)| {
            wrap_phase(buf[((r + ny / 2) % ny) * nx + (c + nx / 2) % nx].arg())
        });
        Ok(PhaseMap::from_wrapped(values))
    }
}

/// Focal-plane field of `hologram` under `cfg`.
pub fn propagate(hologram: &PhaseMap, cfg: &OpticalConfig) -> Result<ComplexField> {
    Propagator::new(cfg)?.propagate(hologram)
}

/// Amplitude and phase (in `[0, 2π)`) of the field at `pos`.
pub fn sample_tweezer(field: &ComplexField, pos: Pos) -> Result<(f64, f64)> {
    let z = field.get(pos).ok_or(Error::OutOfBounds {
        m: pos.m as i64,
        n: pos.n as i64,
        nx: field.nx(),
        ny: field.ny(),
    })?;
    Ok((z.norm(), wrap_phase(z.arg())))
}

pub fn pattern_to_hologram(pattern: &TweezerPattern, cfg: &OpticalConfig) -> Result<PhaseMap> {
    Propagator::new(cfg)?.synthesize(pattern.tweezers())
}

/// Extra tweezer phase per unit move for a computational-centre offset of `d` pixels.
pub fn phase_slip(d: f64, m: usize) -> f64 {
    TAU * d / m as f64
}

/// Focal-plane length of one Fourier unit, `λ f / (m L)`.
pub fn fourier_unit(cfg: &OpticalConfig) -> f64 {
    cfg.wavelength * cfg.focal_length / (cfg.demagnification * cfg.chip_size)
}

/// Element-wise sum of holograms, modulo 2π.
pub fn compose_holograms(parts: &[PhaseMap]) -> Result<PhaseMap> {
    let first = parts.first().ok_or(Error::EmptyPattern)?;
    let mut acc = first.values().clone();
    for p in &parts[1..] {
        if p.dims() != first.dims() {
            return Err(Error::Dimension {
                expected: first.dims(),
                got: p.dims(),
            });
        }
        acc += p.values();
    }
    Ok(PhaseMap::from_wrapped(acc))
}

/// Linear phase ramp `2π (kx k / Nx + ky l / Ny)`; moves spots by `(-kx, -ky)` cells.
pub fn blazed_grating(kx: f64, ky: f64, cfg: &OpticalConfig) -> PhaseMap {
    let (nx, ny) = (cfg.nx as f64, cfg.ny as f64);
    PhaseMap::from_fn(cfg.nx, cfg.ny, |k, l| {
        TAU * (kx * k as f64 / nx + ky * l as f64 / ny)
    })
}

/// Quadratic lens phase `-π / (λ f) · ((k Δx)² + (l Δy)²)`.
pub fn fresnel_lens(f_lens: f64, cfg: &OpticalConfig) -> Result<PhaseMap> {
    if f_lens == 0.0 || f_lens.is_nan() {
        return Err(Error::InvalidParameter(format!("lens focal length {f_lens}")));
    }
    let (px, py) = (cfg.pitch_x(), cfg.pitch_y());
    let scale = -PI / (cfg.wavelength * f_lens);
    Ok(PhaseMap::from_fn(cfg.nx, cfg.ny, |k, l| {
        let x = k as f64 * px;
        let y = l as f64 * py;
        scale * (x * x + y * y)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the focal field sum at one cell, `(k - d)` form, unnormalized.
    fn direct_field(holo: &PhaseMap, d: (i64, i64), m: i64, n: i64) -> Complex64 {
        let (nx, ny) = (holo.nx() as i64, holo.ny() as i64);
        let mut acc = Complex64::default();
        for l in -ny / 2..ny / 2 {
            for k in -nx / 2..nx / 2 {
                let arg = TAU
                    * (((k - d.0) * m) as f64 / nx as f64 + ((l - d.1) * n) as f64 / ny as f64)
                    + holo.at(k, l);
                acc += Complex64::from_polar(1.0, arg);
            }
        }
        acc
    }

    fn circ_diff(a: f64, b: f64) -> f64 {
        shortest_angle(b, a).abs()
    }

    #[test]
    fn flat_hologram_gives_delta_at_origin() {
        let cfg = OpticalConfig::square(256);
        let field = propagate(&PhaseMap::zeros(256, 256), &cfg).unwrap();
        let (pos, peak) = field.peak();
        assert_eq!(pos, Pos::new(0, 0));
        let side = field
            .values()
            .indexed_iter()
            .filter(|(idx, _)| *idx != (128, 128))
            .map(|(_, z)| z.norm())
            .fold(0.0_f64, f64::max);
        assert!(side < 1e-9 * peak.norm());
        // real positive spectrum of constant phase
        let (amp, phase) = sample_tweezer(&field, Pos::new(0, 0)).unwrap();
        assert!((amp - 256.0).abs() < 1e-9);
        assert!(circ_diff(phase, 0.0) < 1e-12);
        let (far, _) = sample_tweezer(&field, Pos::new(10, 10)).unwrap();
        assert!(far < 1e-6 * amp);
    }

    #[test]
    fn unit_gradient_moves_spot_to_minus_one() {
        let cfg = OpticalConfig::square(128);
        let holo = PhaseMap::from_fn(128, 128, |k, _| TAU * k as f64 / 128.0);
        let field = propagate(&holo, &cfg).unwrap();
        let (pos, peak) = field.peak();
        assert_eq!(pos, Pos::new(-1, 0));
        for ((r, c), z) in field.values().indexed_iter() {
            if (r, c) != (64, 63) {
                assert!(z.norm() <= 1e-9 * peak.norm());
            }
        }
    }

    #[test]
    fn propagate_matches_direct_sum() {
        let cfg = OpticalConfig::square(16).with_displacement(3, -2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let holo = PhaseMap::from_fn(16, 16, |_, _| rng.random::<f64>() * TAU);
        let field = propagate(&holo, &cfg).unwrap();
        for (m, n) in [(0, 0), (-8, 7), (3, -5), (5, 5)] {
            let direct = direct_field(&holo, (3, -2), m, n) / 16.0;
            let got = field.get(Pos::new(m as i32, n as i32)).unwrap();
            assert!((direct - got).norm() < 1e-10, "({m},{n}) {direct} vs {got}");
        }
    }

    #[test]
    fn displacement_adds_phase_per_unit_move() {
        // direct evaluation at both gradients, independent of the FFT path
        let n = 1024;
        let flat = PhaseMap::zeros(n, 2);
        let step = PhaseMap::from_fn(n, 2, |k, _| TAU * k as f64 / n as f64);
        let u0 = direct_field(&flat, (250, 0), 0, 0);
        let u1 = direct_field(&step, (250, 0), -1, 0);
        let expected = TAU * 250.0 / 1024.0;
        assert!(circ_diff(u1.arg() - u0.arg(), expected) < 1e-9);

        let cfg = OpticalConfig {
            nx: n,
            ny: 2,
            ..Default::default()
        }
        .with_displacement(250, 0);
        let prop = Propagator::new(&cfg).unwrap();
        let flat2 = PhaseMap::zeros(n, 2);
        let step2 = PhaseMap::from_fn(n, 2, |k, _| TAU * k as f64 / n as f64);
        let (_, p0) = sample_tweezer(&prop.propagate(&flat2).unwrap(), Pos::new(0, 0)).unwrap();
        let (_, p1) = sample_tweezer(&prop.propagate(&step2).unwrap(), Pos::new(-1, 0)).unwrap();
        assert!(circ_diff(p1 - p0, expected) < 1e-9);
        assert!(circ_diff(p1 - p0, phase_slip(250.0, 1024)) < 1e-9);
    }

    #[test]
    fn phase_slip_values() {
        assert!((phase_slip(250.0, 1024) / PI - 0.48828125).abs() < 1e-15);
        assert_eq!(phase_slip(0.0, 1024), 0.0);
        assert!((phase_slip(64.0, 1024) - PI / 8.0).abs() < 1e-15);
        assert!((phase_slip(-64.0, 1024) + PI / 8.0).abs() < 1e-15);
    }

    #[test]
    fn phase_slip_matches_measured_move_at_64px() {
        let cfg = OpticalConfig::square(1024).with_displacement(64, 0);
        let prop = Propagator::new(&cfg).unwrap();
        let at = |p: Pos| {
            let holo = prop.synthesize(&[TweezerSpec::new(p, 1.0, 0.0)]).unwrap();
            sample_tweezer(&prop.propagate(&holo).unwrap(), p).unwrap().1
        };
        let a = at(Pos::new(37, -12));
        let b = at(Pos::new(36, -12));
        assert!(circ_diff(b - a, PI / 8.0) < 1e-6);
    }

    #[test]
    fn fourier_unit_values() {
        let um = fourier_unit(&OpticalConfig::default()) * 1e6;
        assert!((um - 0.450).abs() < 5e-4, "{um}");
        let unit = OpticalConfig {
            wavelength: 1.0,
            focal_length: 1.0,
            demagnification: 1.0,
            chip_size: 1.0,
            ..Default::default()
        };
        assert_eq!(fourier_unit(&unit), 1.0);
        let doubled = OpticalConfig {
            chip_size: 2.0,
            ..unit.clone()
        };
        assert_eq!(fourier_unit(&doubled), 0.5);
    }

    #[test]
    fn single_tweezer_holograms() {
        let cfg = OpticalConfig::square(64);
        let prop = Propagator::new(&cfg).unwrap();
        let flat = prop.synthesize(&[TweezerSpec::new((0, 0), 1.0, 0.0)]).unwrap();
        assert!(flat.values().iter().all(|&v| v == 0.0));
        let (pos, _) = prop.propagate(&flat).unwrap().peak();
        assert_eq!(pos, Pos::new(0, 0));

        let left = prop.synthesize(&[TweezerSpec::new((-1, 0), 1.0, 0.0)]).unwrap();
        let grating = blazed_grating(1.0, 0.0, &cfg);
        for (a, b) in left.values().iter().zip(grating.values()) {
            assert!(circ_diff(*a, *b) < 1e-12);
        }
    }

    #[test]
    fn empty_pattern_is_rejected() {
        let prop = Propagator::new(&OpticalConfig::square(16)).unwrap();
        assert!(matches!(prop.synthesize(&[]), Err(Error::EmptyPattern)));
        let out = prop.synthesize(&[TweezerSpec::new((8, 0), 1.0, 0.0)]);
        assert!(matches!(out, Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cfg = OpticalConfig::square(32);
        assert!(matches!(
            propagate(&PhaseMap::zeros(16, 32), &cfg),
            Err(Error::Dimension { .. })
        ));
        let parts = [PhaseMap::zeros(16, 16), PhaseMap::zeros(16, 8)];
        assert!(compose_holograms(&parts).is_err());
    }

    #[test]
    fn four_equal_spots_roundtrip_near_equal() {
        // phase-only projection loss before any balancing; measured spread is < 1e-4
        let cfg = OpticalConfig::square(256);
        let pattern = TweezerPattern::new(vec![
            TweezerSpec::new((-20, -20), 1.0, 0.3),
            TweezerSpec::new((20, -20), 1.0, 2.0),
            TweezerSpec::new((-20, 20), 1.0, 4.1),
            TweezerSpec::new((20, 20), 1.0, 5.5),
        ])
        .unwrap();
        let holo = pattern_to_hologram(&pattern, &cfg).unwrap();
        let field = propagate(&holo, &cfg).unwrap();
        let amps: Vec<f64> = pattern
            .positions()
            .map(|p| sample_tweezer(&field, p).unwrap().0)
            .collect();
        let mean = amps.iter().sum::<f64>() / 4.0;
        for a in amps {
            assert!((a / mean - 1.0).abs() < 0.25);
        }
    }

    #[test]
    fn roundtrip_preserves_spot_phases() {
        // random positions and phases, up to 100 spots on 1024²
        let cfg = OpticalConfig::square(1024);
        let prop = Propagator::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for count in [1usize, 5, 30, 100] {
            let mut specs = Vec::new();
            let mut seen = std::collections::HashSet::new();
            while specs.len() < count {
                let p = Pos::new(rng.random_range(-200..200), rng.random_range(-200..200));
                if seen.insert(p) {
                    specs.push(TweezerSpec::new(p, 1.0, rng.random::<f64>() * TAU));
                }
            }
            let field = prop.propagate(&prop.synthesize(&specs).unwrap()).unwrap();
            let worst = specs
                .iter()
                .map(|t| circ_diff(sample_tweezer(&field, t.pos).unwrap().1, t.phase))
                .fold(0.0, f64::max);
            assert!(worst < crate::tolerances::ROUNDTRIP_PHASE, "{count} spots: {worst}");
        }
    }

    #[test]
    fn parseval_holds() {
        for cfg in [
            OpticalConfig::square(128),
            OpticalConfig::square(128).with_spot_waist(2.0).with_displacement(20, -7),
        ] {
            let prop = Propagator::new(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let holo = PhaseMap::from_fn(128, 128, |_, _| rng.random::<f64>() * TAU);
            let field = prop.propagate(&holo).unwrap();
            let illum: f64 = (-64..64)
                .flat_map(|l| (-64..64).map(move |k| (k, l)))
                .map(|(k, l)| cfg.illumination_at(k, l).powi(2))
                .sum();
            assert!((field.total_power() / illum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn grating_and_lens_limits() {
        let cfg = OpticalConfig::square(32);
        assert!(blazed_grating(0.0, 0.0, &cfg).values().iter().all(|&v| v == 0.0));
        let lens = fresnel_lens(1e30, &cfg).unwrap();
        assert!(lens.values().iter().all(|&v| v < 1e-12 || TAU - v < 1e-12));
        assert!(fresnel_lens(0.0, &cfg).is_err());
        let strong = fresnel_lens(0.5, &cfg).unwrap();
        let x = 3.0 * cfg.pitch_x();
        let expect = wrap_phase(-PI / (cfg.wavelength * 0.5) * x * x);
        assert!(circ_diff(strong.at(3, 0), expect) < 1e-9);
    }

    #[test]
    fn compose_identity_and_linearity() {
        let cfg = OpticalConfig::square(32);
        let a = blazed_grating(2.0, -1.0, &cfg);
        let b = blazed_grating(-5.0, 3.0, &cfg);
        let same = compose_holograms(&[a.clone(), PhaseMap::zeros(32, 32)]).unwrap();
        assert_eq!(same, a);
        let sum = compose_holograms(&[a, b]).unwrap();
        let direct = blazed_grating(-3.0, 2.0, &cfg);
        for (x, y) in sum.values().iter().zip(direct.values()) {
            assert!(circ_diff(*x, *y) < 1e-12);
        }
    }

    #[test]
    fn grating_translates_composite_target() {
        let cfg = OpticalConfig::square(128);
        let prop = Propagator::new(&cfg).unwrap();
        let target = TweezerPattern::uniform([Pos::new(0, 0), Pos::new(10, 3), Pos::new(-7, 12)])
            .unwrap();
        let holo = prop.synthesize(target.tweezers()).unwrap();
        let moved = compose_holograms(&[holo.clone(), blazed_grating(4.0, -2.0, &cfg)]).unwrap();
        let f0 = prop.propagate(&holo).unwrap();
        let f1 = prop.propagate(&moved).unwrap();
        for p in target.positions() {
            let a = f0.get(p).unwrap();
            let b = f1.get(Pos::new(p.m - 4, p.n + 2)).unwrap();
            assert!((a - b).norm() < 1e-9 * a.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn shift_theorem(seed in any::<u64>(), a in -20i32..20, b in -20i32..20) {
            let cfg = OpticalConfig::square(64);
            let prop = Propagator::new(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let holo = PhaseMap::from_fn(64, 64, |_, _| rng.random::<f64>() * TAU);
            let shifted = compose_holograms(&[holo.clone(), blazed_grating(a as f64, b as f64, &cfg)]).unwrap();
            let expect = prop.propagate(&holo).unwrap().rolled(-a as i64, -b as i64);
            let got = prop.propagate(&shifted).unwrap();
            let scale = expect.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
            for (x, y) in got.values().iter().zip(expect.values()) {
                prop_assert!((x - y).norm() <= 1e-9 * scale);
            }
        }

        #[test]
        fn phase_slip_law(d in -15i64..16, m in -20i32..20, n in -20i32..20) {
            // |d| < M/4 on a 64-wide grid
            let cfg = OpticalConfig::square(64).with_displacement(d, 0);
            let prop = Propagator::new(&cfg).unwrap();
            let phase_at = |p: Pos| {
                let holo = prop.synthesize(&[TweezerSpec::new(p, 1.0, 0.7)]).unwrap();
                sample_tweezer(&prop.propagate(&holo).unwrap(), p).unwrap().1
            };
            let before = phase_at(Pos::new(m, n));
            let after = phase_at(Pos::new(m - 1, n));
            prop_assert!(circ_diff(after - before, phase_slip(d as f64, 64)) < 1e-6);
        }
    }
}
