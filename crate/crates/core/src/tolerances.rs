//! Pinned numerical tolerances shared by the tests and the `reproduce` checks.

/// Off-peak field relative to the peak for an exact integer-grid delta spot.
pub const DELTA_SIDELOBE: f64 = 1e-9;

/// Measured vs predicted per-move phase slip (rad).
pub const PHASE_SLIP: f64 = 1e-6;

/// Parseval check, relative.
pub const PARSEVAL: f64 = 1e-10;

/// Worst spot-phase error after a hologram → field round trip with up to 100 randomly placed
/// spots on a 1024² grid (rad). Measured worst case is about 0.016 rad.
pub const ROUNDTRIP_PHASE: f64 = 0.05;

/// Re-propagating a stored hologram must reproduce the stored spot samples.
pub const SELF_CONSISTENCY: f64 = 1e-12;

/// Trap-depth deviation target: (max − min) / mean intensity.
pub const UNIFORMITY: f64 = 0.01;

/// Iteration budget for a 6×6 grid at 13-unit spacing to reach [`UNIFORMITY`].
pub const WGS_GRID_ITERS: usize = 50;

/// Iteration budget for a 2×2 grid at 13-unit spacing.
pub const WGS_SMALL_ITERS: usize = 30;

/// CrossFade of two opposite-phase coincident spots at τ = ½.
pub const DESTRUCTIVE_DIP: f64 = 1e-6;

/// CrossFade of two in-phase coincident spots at τ = ½.
pub const CONSTRUCTIVE_FLOOR: f64 = 0.999;

/// Corrected survival / rearrangement values against the published table.
pub const STATS_ABS: f64 = 1e-3;

/// Monte-Carlo defect-free fraction for 16 sites at 0.988 per atom.
pub const MC_SMALL_ARRAY: f64 = 0.01;

/// Monte-Carlo defect-free fraction for 1000 sites at 0.997 per atom.
pub const MC_LARGE_ARRAY: f64 = 0.005;

/// Relative spread allowed in the hologram compute stage between 9 and 2401 tweezers.
pub const BENCH_COMPUTE_SPREAD: f64 = 0.10;

/// Pipelined period vs max(display, compute path), relative.
pub const BENCH_PIPELINE: f64 = 0.10;
