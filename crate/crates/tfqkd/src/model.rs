//! Shared physical types and closed-form primitives.
//!
//! Everything downstream (rates, bounds, drift, simulation, optimisation)
//! builds on the types and small functions here: fibre transmittance, binary
//! entropy, log-space Poisson statistics, the intrinsic QBER of phase-slice
//! sifting, and the phase-slice helpers themselves.
//!
//! Parameter defaults: the fibre attenuation 0.2 dB/km is the standard
//! telecom value. The detector and protocol defaults (dark counts, detector
//! efficiency, misalignment error, error-correction inefficiency, duty
//! cycle) are toolkit choices of plausible hardware, pinned so that every
//! run is reproducible; override them through the spec structs or the CLI.

use crate::{ensure, Result};
use rand::Rng;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::TAU;
use std::ops::{Add, Sub};

/// Standard telecom fibre attenuation, dB/km.
pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;
/// Toolkit default dark-count probability per detector per gate.
pub const DEFAULT_DARK_COUNT_PROB: f64 = 1e-8;
/// Toolkit default detector efficiency.
pub const DEFAULT_DETECTOR_EFFICIENCY: f64 = 0.30;
/// Toolkit default optical misalignment error rate.
pub const DEFAULT_E_OPT: f64 = 0.01;
/// Toolkit default error-correction inefficiency factor.
pub const DEFAULT_EC_FACTOR: f64 = 1.15;
/// Toolkit default duty cycle of the quantum modality.
pub const DEFAULT_DUTY_CYCLE: f64 = 0.9;
/// Default number of phase slices.
pub const DEFAULT_M_SLICES: u32 = 16;

/// An optical phase canonicalised into `[0, 2pi)` radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Phase(f64);

impl Phase {
    /// Phase zero.
    pub const ZERO: Phase = Phase(0.0);

    /// Wraps an arbitrary finite angle into `[0, 2pi)`.
    pub fn new(radians: f64) -> Result<Phase> {
        ensure(radians.is_finite(), "phase", radians, "finite")?;
        Ok(Phase::wrap(radians))
    }

    /// The canonical representative in `[0, 2pi)`.
    pub fn radians(self) -> f64 {
        self.0
    }

    /// Uniform draw over `[0, 2pi)`.
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Phase {
        Phase::wrap(rng.gen::<f64>() * TAU)
    }

    fn wrap(radians: f64) -> Phase {
        debug_assert!(radians.is_finite());
        let mut r = radians.rem_euclid(TAU);
        // rem_euclid of a tiny negative can round up to exactly 2pi.
        if r >= TAU {
            r = 0.0;
        }
        Phase(r)
    }
}

impl Add for Phase {
    type Output = Phase;
    fn add(self, rhs: Phase) -> Phase {
        Phase::wrap(self.0 + rhs.0)
    }
}

impl Sub for Phase {
    type Output = Phase;
    fn sub(self, rhs: Phase) -> Phase {
        Phase::wrap(self.0 - rhs.0)
    }
}

/// A phase-slice label `k` out of `m` equal slices of `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceIndex {
    /// Slice number, `0 <= k < m`.
    pub k: u32,
    /// Total number of slices.
    pub m: u32,
}

/// One fibre span: attenuation plus length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    /// Attenuation coefficient, dB/km.
    pub alpha_db_per_km: f64,
    /// Span length, km. For TF-QKD curves this is the full user-to-user
    /// distance; each arm to the middle station is half of it.
    pub length_km: f64,
}

impl ChannelSpec {
    /// Validating constructor.
    pub fn new(alpha_db_per_km: f64, length_km: f64) -> Result<ChannelSpec> {
        let c = ChannelSpec { alpha_db_per_km, length_km };
        c.validate()?;
        Ok(c)
    }

    /// Checks field domains.
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.alpha_db_per_km.is_finite() && self.alpha_db_per_km >= 0.0,
            "alpha_db_per_km",
            self.alpha_db_per_km,
            ">= 0 and finite",
        )?;
        ensure(
            self.length_km.is_finite() && self.length_km >= 0.0,
            "length_km",
            self.length_km,
            ">= 0 and finite",
        )
    }

    /// Same attenuation at a different length.
    pub fn with_length(self, length_km: f64) -> Result<ChannelSpec> {
        ChannelSpec::new(self.alpha_db_per_km, length_km)
    }

    /// Power transmittance of the span.
    pub fn transmittance(&self) -> f64 {
        transmittance(self)
    }
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec { alpha_db_per_km: DEFAULT_ALPHA_DB_PER_KM, length_km: 0.0 }
    }
}

/// Threshold single-photon detector pair at the measurement station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    /// Dark-count probability per detector per gate.
    pub dark_count_prob: f64,
    /// Detection efficiency, folded into the optical transmittance.
    pub efficiency: f64,
}

impl DetectorSpec {
    /// Validating constructor.
    pub fn new(dark_count_prob: f64, efficiency: f64) -> Result<DetectorSpec> {
        let d = DetectorSpec { dark_count_prob, efficiency };
        d.validate()?;
        Ok(d)
    }

    /// Checks field domains.
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.dark_count_prob.is_finite() && (0.0..=1.0).contains(&self.dark_count_prob),
            "dark_count_prob",
            self.dark_count_prob,
            "in [0, 1]",
        )?;
        ensure(
            self.efficiency.is_finite() && (0.0..=1.0).contains(&self.efficiency),
            "efficiency",
            self.efficiency,
            "in [0, 1]",
        )
    }

    /// Noiseless, unit-efficiency detectors.
    pub fn ideal() -> DetectorSpec {
        DetectorSpec { dark_count_prob: 0.0, efficiency: 1.0 }
    }
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec {
            dark_count_prob: DEFAULT_DARK_COUNT_PROB,
            efficiency: DEFAULT_DETECTOR_EFFICIENCY,
        }
    }
}

/// Protocol-level parameters shared by the rate formulas and the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    /// Number of phase slices M used for twin sifting.
    pub m_slices: u32,
    /// Fraction of wall-clock time spent in the quantum modality.
    pub duty_cycle: f64,
    /// Error-correction inefficiency factor f >= 1.
    pub ec_factor: f64,
    /// Optical misalignment error rate.
    pub e_opt: f64,
    /// Source intensity of user A (mean photon number per pulse).
    pub mu_a: f64,
    /// Source intensity of user B.
    pub mu_b: f64,
    /// Optional decoy total intensities; a trial draws uniformly from
    /// {signal} + decoys. Empty means signal-only (decoy estimation is
    /// handled analytically by the infinite-decoy bounds).
    pub decoy_intensities: Vec<f64>,
}

impl ProtocolSpec {
    /// Checks field domains.
    pub fn validate(&self) -> Result<()> {
        ensure(self.m_slices >= 1, "m_slices", self.m_slices as f64, ">= 1")?;
        ensure(
            self.duty_cycle.is_finite() && self.duty_cycle > 0.0 && self.duty_cycle <= 1.0,
            "duty_cycle",
            self.duty_cycle,
            "in (0, 1]",
        )?;
        ensure(
            self.ec_factor.is_finite() && self.ec_factor >= 1.0,
            "ec_factor",
            self.ec_factor,
            ">= 1",
        )?;
        ensure(
            self.e_opt.is_finite() && (0.0..=0.5).contains(&self.e_opt),
            "e_opt",
            self.e_opt,
            "in [0, 0.5]",
        )?;
        ensure(self.mu_a.is_finite() && self.mu_a >= 0.0, "mu_a", self.mu_a, ">= 0")?;
        ensure(self.mu_b.is_finite() && self.mu_b >= 0.0, "mu_b", self.mu_b, ">= 0")?;
        for &d in &self.decoy_intensities {
            ensure(d.is_finite() && d >= 0.0, "decoy_intensity", d, ">= 0 and finite")?;
        }
        Ok(())
    }

    /// Total source intensity of the twin pair.
    pub fn mu(&self) -> f64 {
        self.mu_a + self.mu_b
    }

    /// Same protocol with a symmetric split of the given total intensity.
    pub fn with_mu(&self, mu_total: f64) -> ProtocolSpec {
        let mut p = self.clone();
        p.mu_a = mu_total / 2.0;
        p.mu_b = mu_total / 2.0;
        p
    }

    /// Same protocol with a different slice count.
    pub fn with_m(&self, m_slices: u32) -> ProtocolSpec {
        let mut p = self.clone();
        p.m_slices = m_slices;
        p
    }

    /// Noiseless reference protocol: no misalignment, no error-correction
    /// overhead, full duty cycle. Slice count and intensities are kept.
    pub fn ideal(&self) -> ProtocolSpec {
        let mut p = self.clone();
        p.e_opt = 0.0;
        p.ec_factor = 1.0;
        p.duty_cycle = 1.0;
        p
    }
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            m_slices: DEFAULT_M_SLICES,
            duty_cycle: DEFAULT_DUTY_CYCLE,
            ec_factor: DEFAULT_EC_FACTOR,
            e_opt: DEFAULT_E_OPT,
            mu_a: 0.25,
            mu_b: 0.25,
            decoy_intensities: Vec::new(),
        }
    }
}

/// Power transmittance `10^(-alpha L / 10)` of a fibre span.
pub fn transmittance(channel: &ChannelSpec) -> f64 {
    debug_assert!(channel.validate().is_ok());
    10f64.powf(-channel.alpha_db_per_km * channel.length_km / 10.0)
}

/// Binary entropy `h(x) = -x log2 x - (1-x) log2 (1-x)`, with h(0) = h(1) = 0.
pub fn binary_entropy(x: f64) -> Result<f64> {
    ensure(x.is_finite() && (0.0..=1.0).contains(&x), "x", x, "in [0, 1]")?;
    Ok(binary_entropy_unchecked(x))
}

pub(crate) fn binary_entropy_unchecked(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Poisson probability `e^(-mu) mu^n / n!`, evaluated in log space so large
/// `n` stays finite and cancellation-free.
pub fn poisson_pmf(n: u32, mu: f64) -> Result<f64> {
    ensure(mu.is_finite() && mu >= 0.0, "mu", mu, ">= 0 and finite")?;
    if mu == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let n_f = n as f64;
    Ok((-mu + n_f * mu.ln() - ln_gamma(n_f + 1.0)).exp())
}

/// Intrinsic sifted QBER of M-slice twin matching:
/// `E_M = 1/2 - sin(2pi/M) / (4pi/M)`.
///
/// A kept twin pair is offset by a differential phase uniform over one slice
/// width `2pi/M`; averaging the interferometric error `sin^2(t/2)` over that
/// offset gives the closed form. `E_1 = 1/2` (a single slice conveys no
/// phase information) and `E_M` falls off as `(2pi/M)^2 / 24` for large M.
pub fn intrinsic_qber(m: u32) -> Result<f64> {
    ensure(m >= 1, "m_slices", m as f64, ">= 1")?;
    let w = TAU / m as f64;
    // 1/2 - sin(w)/(2w); clamp against rounding at the edges of [0, 1/2].
    Ok((0.5 - (w).sin() / (2.0 * w)).clamp(0.0, 0.5))
}

/// Width of one phase slice, `2pi/m`.
pub fn slice_width(m: u32) -> Result<f64> {
    ensure(m >= 1, "m_slices", m as f64, ">= 1")?;
    Ok(TAU / m as f64)
}

/// Maps a phase to its slice: `k = floor(m rho / 2pi)`, clamped to `m - 1`
/// against boundary rounding.
pub fn slice_of(phase: Phase, m: u32) -> Result<SliceIndex> {
    ensure(m >= 1, "m_slices", m as f64, ">= 1")?;
    let k = (m as f64 * phase.radians() / TAU).floor() as u32;
    Ok(SliceIndex { k: k.min(m - 1), m })
}

/// Probability that two independent uniform phases are announced as twins,
/// exactly `1/m`.
pub fn slice_match_probability(m: u32) -> Result<f64> {
    ensure(m >= 1, "m_slices", m as f64, ">= 1")?;
    Ok(1.0 / m as f64)
}
