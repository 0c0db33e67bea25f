//! Asymptotic decoy-state key rates and the twin-field composition.
//!
//! The point-to-point building block is the asymptotic decoy-state rate
//!
//! ```text
//! R = Q1 [1 - h(e1)] - f Q h(E)      (clamped at 0)
//! ```
//!
//! with overall gain `Q`, measured QBER `E`, single-photon gain and phase
//! error bounds `Q1`, `e1` from the infinite-decoy limit, error-correction
//! inefficiency `f`, and binary entropy `h`.
//!
//! The TF-QKD rate reuses that block on one arm of half the total distance:
//! both users send intensity `mu/2` to the middle station, phase-slice
//! sifting keeps a fraction `1/M` of pairs and costs the intrinsic error
//! `E_M`, and phase stabilisation costs a duty-cycle factor `d`:
//!
//! ```text
//! R_tf(mu, L) = (d / M) R(mu, L/2)   with E_M composed into E and e1.
//! ```
//!
//! Composition of independent error mechanisms is the usual symmetric
//! binary-channel rule `a (+) b = a + b - 2ab`.
//!
//! Conventions: gains are probabilities per emitted pulse pair; the `1/M`
//! sifting fraction and the duty cycle appear exactly once, in the TF-QKD
//! prefactor; plain `qkd_rate` carries no duty-cycle factor.

use crate::model::{
    binary_entropy_unchecked, intrinsic_qber, transmittance, ChannelSpec, DetectorSpec,
    ProtocolSpec,
};
use crate::{ensure, Result};

/// Overall gain and QBER of one decoy-state channel use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainQber {
    /// Probability of a detection per emitted pulse.
    pub gain: f64,
    /// Error fraction among detections; 0.5 when the gain vanishes.
    pub qber: f64,
}

/// Infinite-decoy single-photon bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonBounds {
    /// Lower bound on the single-photon yield y1.
    pub y1_lower: f64,
    /// Upper bound on the single-photon error rate e1.
    pub e1_upper: f64,
    /// Lower bound on the single-photon gain `q1 = p(1|mu) y1`.
    pub q1_lower: f64,
}

/// One sampled point of a rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    /// Full user-to-user distance, km.
    pub distance_km: f64,
    /// End-to-end transmittance at that distance (detector excluded).
    pub eta: f64,
    /// Source intensity used (total twin intensity for TF-QKD).
    pub mu: f64,
    /// Secret bits per emitted pulse (pair).
    pub rate: f64,
}

/// Which of the two rate laws a generic routine should evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// Point-to-point decoy-state QKD over the full distance.
    Qkd,
    /// Twin-field QKD with arms of half the distance.
    Tfqkd,
}

/// Yield floor from dark counts: either detector fires spuriously.
fn dark_yield(det: &DetectorSpec) -> f64 {
    (2.0 * det.dark_count_prob).min(1.0)
}

/// Overall gain and QBER of a decoy-state channel at line transmittance
/// `eta` (detector efficiency is folded in here).
pub fn channel_gain_qber(mu: f64, eta: f64, det: &DetectorSpec, e_opt: f64) -> Result<GainQber> {
    ensure(mu.is_finite() && mu >= 0.0, "mu", mu, ">= 0 and finite")?;
    ensure(eta.is_finite() && (0.0..=1.0).contains(&eta), "eta", eta, "in [0, 1]")?;
    ensure(e_opt.is_finite() && (0.0..=0.5).contains(&e_opt), "e_opt", e_opt, "in [0, 0.5]")?;
    det.validate()?;
    let y0 = dark_yield(det);
    let eta_tot = eta * det.efficiency;
    let signal = 1.0 - (-eta_tot * mu).exp();
    let gain = 1.0 - (1.0 - y0) * (-eta_tot * mu).exp();
    let error_weight = 0.5 * y0 + e_opt * signal;
    let qber = if gain > 0.0 { (error_weight / gain).clamp(0.0, 0.5) } else { 0.5 };
    Ok(GainQber { gain, qber })
}

/// Infinite-decoy single-photon bounds at line transmittance `eta`.
pub fn single_photon_bounds(
    mu: f64,
    eta: f64,
    det: &DetectorSpec,
    e_opt: f64,
) -> Result<SinglePhotonBounds> {
    ensure(mu.is_finite() && mu >= 0.0, "mu", mu, ">= 0 and finite")?;
    ensure(eta.is_finite() && (0.0..=1.0).contains(&eta), "eta", eta, "in [0, 1]")?;
    ensure(e_opt.is_finite() && (0.0..=0.5).contains(&e_opt), "e_opt", e_opt, "in [0, 0.5]")?;
    det.validate()?;
    let y0 = dark_yield(det);
    let eta_tot = eta * det.efficiency;
    let y1 = 1.0 - (1.0 - y0) * (1.0 - eta_tot);
    let e1_weight = 0.5 * y0 + e_opt * eta_tot * (1.0 - y0);
    let e1 = if y1 > 0.0 { (e1_weight / y1).clamp(0.0, 0.5) } else { 0.5 };
    let q1 = mu * (-mu).exp() * y1;
    Ok(SinglePhotonBounds { y1_lower: y1, e1_upper: e1, q1_lower: q1 })
}

/// Asymptotic secret fraction `max(0, q1 [1 - h(e1)] - f Q h(E))`.
///
/// Error arguments are clamped into `[0, 1/2]` before entering the
/// entropies, so an all-error estimate crushes the rate to zero instead of
/// inflating it.
pub fn asymptotic_secret_rate(
    q1: f64,
    e1: f64,
    gain: f64,
    qber: f64,
    ec_factor: f64,
) -> Result<f64> {
    ensure(q1.is_finite() && q1 >= 0.0, "q1", q1, ">= 0 and finite")?;
    ensure(gain.is_finite() && gain >= 0.0, "gain", gain, ">= 0 and finite")?;
    ensure(e1.is_finite() && e1 >= 0.0, "e1", e1, ">= 0 and finite")?;
    ensure(qber.is_finite() && qber >= 0.0, "qber", qber, ">= 0 and finite")?;
    ensure(ec_factor.is_finite() && ec_factor >= 1.0, "ec_factor", ec_factor, ">= 1")?;
    let e1 = e1.min(0.5);
    let qber = qber.min(0.5);
    let r = q1 * (1.0 - binary_entropy_unchecked(e1))
        - ec_factor * gain * binary_entropy_unchecked(qber);
    Ok(r.max(0.0))
}

/// Symmetric-binary-channel composition of two error rates,
/// `a (+) b = a + b - 2ab`.
pub fn compose_qber(a: f64, b: f64) -> Result<f64> {
    ensure(a.is_finite() && (0.0..=0.5).contains(&a), "qber_a", a, "in [0, 0.5]")?;
    ensure(b.is_finite() && (0.0..=0.5).contains(&b), "qber_b", b, "in [0, 0.5]")?;
    Ok((a + b - 2.0 * a * b).clamp(0.0, 0.5))
}

/// Rate core shared by both laws; specs must be pre-validated.
/// `extra_qber` is composed into both the measured QBER and the
/// single-photon error bound before the entropies.
pub(crate) fn rate_at_eta_unchecked(
    mu: f64,
    eta: f64,
    det: &DetectorSpec,
    proto: &ProtocolSpec,
    extra_qber: f64,
) -> f64 {
    let y0 = dark_yield(det);
    let eta_tot = eta * det.efficiency;
    let att = (-eta_tot * mu).exp();
    let gain = 1.0 - (1.0 - y0) * att;
    let signal = 1.0 - att;
    let qber = if gain > 0.0 {
        ((0.5 * y0 + proto.e_opt * signal) / gain).clamp(0.0, 0.5)
    } else {
        0.5
    };
    let y1 = 1.0 - (1.0 - y0) * (1.0 - eta_tot);
    let e1 = if y1 > 0.0 {
        ((0.5 * y0 + proto.e_opt * eta_tot * (1.0 - y0)) / y1).clamp(0.0, 0.5)
    } else {
        0.5
    };
    let q1 = mu * (-mu).exp() * y1;
    let qber = (qber + extra_qber - 2.0 * qber * extra_qber).clamp(0.0, 0.5);
    let e1 = (e1 + extra_qber - 2.0 * e1 * extra_qber).clamp(0.0, 0.5);
    let r = q1 * (1.0 - binary_entropy_unchecked(e1))
        - proto.ec_factor * gain * binary_entropy_unchecked(qber);
    r.max(0.0)
}

fn check_rate_args(mu: f64, distance_km: f64, channel: &ChannelSpec, det: &DetectorSpec, proto: &ProtocolSpec) -> Result<()> {
    ensure(mu.is_finite() && mu >= 0.0, "mu", mu, ">= 0 and finite")?;
    ensure(
        distance_km.is_finite() && distance_km >= 0.0,
        "distance_km",
        distance_km,
        ">= 0 and finite",
    )?;
    channel.validate()?;
    det.validate()?;
    proto.validate()
}

/// Asymptotic decoy-state QKD rate over the full distance. The channel spec
/// supplies the attenuation coefficient; `distance_km` is the evaluation
/// distance (the spec's own length field is not consulted).
pub fn qkd_rate(
    mu: f64,
    distance_km: f64,
    channel: &ChannelSpec,
    det: &DetectorSpec,
    proto: &ProtocolSpec,
) -> Result<f64> {
    check_rate_args(mu, distance_km, channel, det, proto)?;
    let eta = transmittance(&ChannelSpec { length_km: distance_km, ..*channel });
    Ok(rate_at_eta_unchecked(mu, eta, det, proto, 0.0))
}

/// TF-QKD rate over the full user-to-user distance: the half-distance QKD
/// rate with the intrinsic slice error `E_M` composed into both error
/// terms, scaled by the sifting fraction `1/M` and the duty cycle.
pub fn tfqkd_rate(
    mu: f64,
    distance_km: f64,
    channel: &ChannelSpec,
    det: &DetectorSpec,
    proto: &ProtocolSpec,
) -> Result<f64> {
    check_rate_args(mu, distance_km, channel, det, proto)?;
    let e_m = intrinsic_qber(proto.m_slices)?;
    let arm = ChannelSpec { length_km: distance_km / 2.0, ..*channel };
    let eta_arm = transmittance(&arm);
    let inner = rate_at_eta_unchecked(mu, eta_arm, det, proto, e_m);
    Ok(proto.duty_cycle / proto.m_slices as f64 * inner)
}

/// Dispatches on the rate law; used by sweeps and the optimizer.
pub fn rate_of_kind(
    kind: RateKind,
    mu: f64,
    distance_km: f64,
    channel: &ChannelSpec,
    det: &DetectorSpec,
    proto: &ProtocolSpec,
) -> Result<f64> {
    match kind {
        RateKind::Qkd => qkd_rate(mu, distance_km, channel, det, proto),
        RateKind::Tfqkd => tfqkd_rate(mu, distance_km, channel, det, proto),
    }
}
