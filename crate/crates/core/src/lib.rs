//! Hologram sequencing for parallel rearrangement of atoms in SLM optical tweezers.
//!
//! The crate covers the full software chain: phase-only hologram synthesis with weighted
//! Gerchberg–Saxton ([`wgs`]), atom-to-target assignment ([`assignment`]), linear
//! position/phase interpolation of hologram sequences ([`sequencer`]), transient flicker
//! simulation ([`flicker`]), SPAM-corrected statistics ([`stats`]), Monte-Carlo assembly
//! ([`montecarlo`]) and a stage timing harness ([`bench`]).

pub mod assignment;
pub mod bench;
pub mod error;
pub mod flicker;
pub mod io;
pub mod montecarlo;
pub mod optics;
pub mod patterns;
pub mod reproduce;
pub mod sequencer;
pub mod stats;
pub mod tolerances;
pub mod wgs;

pub use error::{Error, Result};
pub use optics::{
    ComplexField, Illumination, OpticalConfig, PhaseMap, Pos, Propagator, TweezerPattern,
    TweezerSpec,
};
