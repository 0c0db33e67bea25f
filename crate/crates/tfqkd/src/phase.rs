//! Differential-phase model for the twin fields.
//!
//! The phase between the two interferometer arms moves for two reasons: a
//! deterministic term from source detuning and path-length mismatch,
//!
//! ```text
//! delta = (2 pi / s) (dnu L + nu dL)
//! ```
//!
//! and a stochastic drift, modelled as a Gaussian random walk whose rate
//! standard deviation scales with the square root of fibre length,
//! calibrated to 2.4 rad/ms at 100 km. The remaining operations map
//! interference visibility and residual drift to QBER contributions and
//! estimate the duty cycle left over after active phase stabilization.

use crate::model::Phase;
use crate::seeding::derive_rng;
use crate::{ensure, Result};
use rand_distr::{Distribution, Normal};

/// Group velocity of light in silica fibre, m/s.
pub const FIBRE_LIGHT_SPEED_M_PER_S: f64 = 2.0e8;

/// Deterministic differential phase `(2 pi / s)(dnu L + nu dL)` in radians
/// (unreduced). `length_km` is converted to metres internally.
pub fn differential_phase(
    delta_nu_hz: f64,
    nu_hz: f64,
    length_km: f64,
    delta_length_m: f64,
    light_speed_m_per_s: f64,
) -> Result<f64> {
    ensure(
        light_speed_m_per_s.is_finite() && light_speed_m_per_s > 0.0,
        "light_speed_m_per_s",
        light_speed_m_per_s,
        "> 0",
    )?;
    ensure(delta_nu_hz.is_finite(), "delta_nu_hz", delta_nu_hz, "finite")?;
    ensure(nu_hz.is_finite(), "nu_hz", nu_hz, "finite")?;
    ensure(length_km.is_finite() && length_km >= 0.0, "length_km", length_km, ">= 0")?;
    ensure(delta_length_m.is_finite(), "delta_length_m", delta_length_m, "finite")?;
    let length_m = length_km * 1e3;
    Ok(std::f64::consts::TAU / light_speed_m_per_s * (delta_nu_hz * length_m + nu_hz * delta_length_m))
}

/// Random-walk drift calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    /// Drift-rate standard deviation at the reference length, rad/ms.
    pub sigma_rate_ref_rad_per_ms: f64,
    /// Reference length, km.
    pub length_ref_km: f64,
    /// Exponent of the length scaling (0.5 for a random walk in length).
    pub scaling_exponent: f64,
    /// Sampling step, ms.
    pub sample_dt_ms: f64,
}

impl DriftModel {
    /// Checks field domains. A zero reference sigma is allowed and yields a
    /// constant trace.
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.sigma_rate_ref_rad_per_ms.is_finite() && self.sigma_rate_ref_rad_per_ms >= 0.0,
            "sigma_rate_ref_rad_per_ms",
            self.sigma_rate_ref_rad_per_ms,
            ">= 0 and finite",
        )?;
        ensure(
            self.length_ref_km.is_finite() && self.length_ref_km > 0.0,
            "length_ref_km",
            self.length_ref_km,
            "> 0",
        )?;
        ensure(
            self.scaling_exponent.is_finite() && self.scaling_exponent >= 0.0,
            "scaling_exponent",
            self.scaling_exponent,
            ">= 0 and finite",
        )?;
        ensure(
            self.sample_dt_ms.is_finite() && self.sample_dt_ms > 0.0,
            "sample_dt_ms",
            self.sample_dt_ms,
            "> 0",
        )
    }
}

impl Default for DriftModel {
    /// 2.4 rad/ms at 100 km, square-root length scaling, 25 us sampling.
    fn default() -> Self {
        DriftModel {
            sigma_rate_ref_rad_per_ms: 2.4,
            length_ref_km: 100.0,
            scaling_exponent: 0.5,
            sample_dt_ms: 0.025,
        }
    }
}

/// Drift-rate standard deviation at a given length,
/// `sigma_ref * (L / L_ref)^exponent` in rad/ms.
pub fn drift_sigma(length_km: f64, model: &DriftModel) -> Result<f64> {
    model.validate()?;
    ensure(length_km.is_finite() && length_km > 0.0, "length_km", length_km, "> 0")?;
    Ok(model.sigma_rate_ref_rad_per_ms * (length_km / model.length_ref_km).powf(model.scaling_exponent))
}

/// A sampled drift realisation. Phases are cumulative and unreduced;
/// rates are forward finite differences, one fewer than the phases.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTrace {
    /// Sample times, ms, starting at 0.
    pub times_ms: Vec<f64>,
    /// Cumulative phase at each time, radians (not wrapped).
    pub phases_rad: Vec<f64>,
    /// Finite-difference rates `(phi[i+1] - phi[i]) / dt`, rad/ms.
    pub rates_rad_per_ms: Vec<f64>,
}

impl DriftTrace {
    /// Mean of the finite-difference rates.
    pub fn rate_mean(&self) -> f64 {
        let n = self.rates_rad_per_ms.len();
        if n == 0 {
            return 0.0;
        }
        self.rates_rad_per_ms.iter().sum::<f64>() / n as f64
    }

    /// Sample standard deviation of the finite-difference rates.
    pub fn rate_std(&self) -> f64 {
        let n = self.rates_rad_per_ms.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.rate_mean();
        let ss: f64 = self.rates_rad_per_ms.iter().map(|r| (r - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Simulates the drift over `duration_ms` at the given length. Increments
/// are i.i.d. Gaussian with per-step standard deviation `sigma(L) * dt`,
/// so the finite-difference rates are distributed with standard deviation
/// `sigma(L)`. Deterministic for a fixed seed. Requires at least ten steps.
pub fn simulate_drift(
    duration_ms: f64,
    length_km: f64,
    model: &DriftModel,
    seed: u64,
) -> Result<DriftTrace> {
    ensure(duration_ms.is_finite() && duration_ms > 0.0, "duration_ms", duration_ms, "> 0")?;
    let sigma = drift_sigma(length_km, model)?;
    let dt = model.sample_dt_ms;
    let n_steps = (duration_ms / dt + 1e-9).floor() as usize;
    ensure(n_steps >= 10, "duration_ms", duration_ms, ">= 10 sample steps")?;

    let step = Normal::new(0.0, sigma * dt).expect("validated std");
    let mut rng = derive_rng(seed, "phase-drift", 0);
    let mut phases = Vec::with_capacity(n_steps + 1);
    let mut acc = 0.0;
    phases.push(acc);
    for _ in 0..n_steps {
        acc += step.sample(&mut rng);
        phases.push(acc);
    }
    let times_ms = (0..=n_steps).map(|i| i as f64 * dt).collect();
    let rates_rad_per_ms = phases.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    Ok(DriftTrace { times_ms, phases_rad: phases, rates_rad_per_ms })
}

/// QBER contribution of imperfect interference visibility, `(1 - V) / 2`.
pub fn visibility_to_qber(visibility: f64) -> Result<f64> {
    ensure(
        visibility.is_finite() && (0.0..=1.0).contains(&visibility),
        "visibility",
        visibility,
        "in [0, 1]",
    )?;
    Ok((1.0 - visibility) / 2.0)
}

/// QBER left by drift between feedback corrections. The residual phase is
/// Gaussian with std `sigma_rate * sqrt(interval)`; the expectation of
/// `sin^2(delta/2)` under that law is `(1 - exp(-sigma_r^2 / 2)) / 2`.
pub fn residual_phase_qber(sigma_rate: f64, feedback_interval_ms: f64) -> Result<f64> {
    ensure(sigma_rate.is_finite() && sigma_rate >= 0.0, "sigma_rate", sigma_rate, ">= 0")?;
    ensure(
        feedback_interval_ms.is_finite() && feedback_interval_ms >= 0.0,
        "feedback_interval_ms",
        feedback_interval_ms,
        ">= 0",
    )?;
    let var = sigma_rate * sigma_rate * feedback_interval_ms;
    Ok((1.0 - (-var / 2.0).exp()) / 2.0)
}

/// Result of the duty-cycle estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DutyCycleEstimate {
    /// The target QBER is attainable with the returned feedback schedule.
    Feasible {
        /// Longest interval between corrections meeting the target, ms.
        feedback_interval_ms: f64,
        /// Fraction of time left for the quantum modality.
        duty_cycle: f64,
    },
    /// Stabilization overhead leaves no quantum time at this target.
    Infeasible,
}

/// Estimates the duty cycle available for key generation. Inverts
/// `residual_phase_qber` for the longest feedback interval `tau` whose
/// residual QBER stays at or below the target, then charges a fixed
/// stabilization cost per correction: `d = tau / (tau + cost)`.
/// A target of 0.5 or a quiet channel needs no feedback (`d = 1`).
pub fn duty_cycle_estimate(
    sigma_rate: f64,
    target_qber: f64,
    stabilization_cost_ms: f64,
) -> Result<DutyCycleEstimate> {
    ensure(sigma_rate.is_finite() && sigma_rate >= 0.0, "sigma_rate", sigma_rate, ">= 0")?;
    ensure(
        target_qber > 0.0 && target_qber <= 0.5,
        "target_qber",
        target_qber,
        "in (0, 0.5]",
    )?;
    ensure(
        stabilization_cost_ms.is_finite() && stabilization_cost_ms >= 0.0,
        "stabilization_cost_ms",
        stabilization_cost_ms,
        ">= 0",
    )?;
    if sigma_rate == 0.0 || target_qber >= 0.5 {
        return Ok(DutyCycleEstimate::Feasible {
            feedback_interval_ms: f64::INFINITY,
            duty_cycle: 1.0,
        });
    }
    // invert (1 - exp(-sigma^2 tau / 2)) / 2 = q
    let tau = -2.0 * (1.0 - 2.0 * target_qber).ln() / (sigma_rate * sigma_rate);
    let duty = if stabilization_cost_ms == 0.0 { 1.0 } else { tau / (tau + stabilization_cost_ms) };
    if duty > 0.0 {
        Ok(DutyCycleEstimate::Feasible { feedback_interval_ms: tau, duty_cycle: duty })
    } else {
        Ok(DutyCycleEstimate::Infeasible)
    }
}

/// Convenience: wraps a raw drift phase into canonical `[0, 2pi)` form.
pub fn wrap_phase(radians: f64) -> Result<Phase> {
    Phase::new(radians)
}
