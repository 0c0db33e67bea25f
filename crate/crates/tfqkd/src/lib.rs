//! Twin-field quantum key distribution (TF-QKD) analysis toolkit.
//!
//! TF-QKD sends phase-randomised coherent "twin" fields from two users to an
//! untrusted middle station, where first-order single-photon interference
//! projects a key bit. Because only one photon has to survive half the link,
//! the secret key rate scales with the square root of the end-to-end channel
//! transmittance instead of linearly, which lets the protocol beat the
//! repeaterless point-to-point bounds over long fibre.
//!
//! The crate is organised around that comparison:
//!
//! * [`model`]: shared physical types plus the closed-form primitives
//!   (transmittance, binary entropy, log-space Poisson, the intrinsic QBER of
//!   phase-slice sifting, slicing helpers).
//! * [`rate`]: asymptotic decoy-state key rates, infinite-decoy single-photon
//!   bounds, and the twin-field composition that maps a half-link QKD rate to
//!   the TF-QKD rate.
//! * [`bounds`]: repeaterless benchmarks (secret key capacity, single-repeater
//!   bound), ideal reference curves, curve generators, crossover search, and a
//!   small static table of published experimental points.
//! * [`phase`]: differential phase drift of the twin fields (deterministic
//!   offsets, random-walk drift traces, visibility and residual-phase QBER,
//!   duty cycle estimation for phase stabilisation).
//! * [`sim`]: an event-level Monte Carlo of the protocol (draw, interfere,
//!   detect, sift, tally) with deterministic sharding.
//! * [`optimize`]: source-intensity and slice-count optimisation.
//! * [`seeding`]: labelled substream derivation from one master seed.
//!
//! All randomness is driven by explicit seeds; identical seeds give identical
//! results on every platform.

pub mod bounds;
pub mod model;
pub mod optimize;
pub mod phase;
pub mod rate;
pub mod seeding;
pub mod sim;

pub use bounds::{CurveKind, CurveSpec};
pub use model::{ChannelSpec, DetectorSpec, Phase, ProtocolSpec, SliceIndex};
pub use rate::{GainQber, RateKind, RatePoint, SinglePhotonBounds};
pub use sim::{SimParams, SimTally};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by the analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument or spec field violated its documented domain.
    #[error("invalid parameter {name} = {value}: must satisfy {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    /// A distance grid was empty, too short, or not strictly increasing.
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    /// More than one rate crossover inside the requested bracket.
    #[error("ambiguous crossover in [{lo}, {hi}] km: {count} sign changes")]
    AmbiguousCrossover { lo: f64, hi: f64, count: usize },
}

/// Checks a scalar domain constraint.
pub(crate) fn ensure(cond: bool, name: &'static str, value: f64, constraint: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, constraint })
    }
}
