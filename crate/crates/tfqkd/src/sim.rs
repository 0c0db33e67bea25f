//! Event-level Monte Carlo of the twin-field protocol.
//!
//! Each trial prepares two dim coherent pulses with independent uniform
//! random phases plus bit and basis encodings, sends them down the two arms
//! to the middle node, interferes them on a balanced beam splitter, and
//! records which of the two output detectors click. A pair is kept when
//!
//! * the difference of the two announced random phases falls in slice zero
//!   (probability exactly `1/M`, and the kept differential offset is then
//!   uniform over one slice width, which is what produces the intrinsic
//!   slice error rate),
//! * both parties chose the key basis, and
//! * exactly one detector clicked.
//!
//! The clicking detector announces the parity of the two bits; the sifted
//! error rate counts announcements that disagree with the true parity.
//!
//! `run_batch` evaluates this process with a reduced sampling scheme that
//! draws the phase difference directly and short-circuits the (dominant)
//! no-click branch; it is equivalent in distribution to composing
//! `draw_trial`, `misaligned_phase`, `interfere_and_detect`, and `sift`,
//! and a statistical test in this module holds the two paths together.
//! Gain convention: the reported gain counts every kept pair with at least
//! one click, matching the analytic channel model; the error rate is
//! estimated on the single-click subset (double clicks are discarded from
//! the key).

use crate::model::{intrinsic_qber, slice_of, DetectorSpec, Phase, ProtocolSpec};
use crate::rate::{asymptotic_secret_rate, compose_qber, single_photon_bounds};
use crate::seeding::derive_rng;
use crate::{ensure, Error, Result};
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

/// Per-arm channel and measurement parameters of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Transmittance of the arm from party A to the node (fibre only).
    pub eta_a: f64,
    /// Transmittance of the arm from party B to the node.
    pub eta_b: f64,
    /// Node detectors.
    pub det: DetectorSpec,
    /// Protocol parameters (intensities, slices, misalignment, duty, f).
    pub proto: ProtocolSpec,
    /// Probability that a party picks the key basis in a trial.
    pub basis_bias: f64,
}

impl SimParams {
    /// Parameters with both arms at the same transmittance.
    pub fn symmetric(eta_arm: f64, det: DetectorSpec, proto: ProtocolSpec, basis_bias: f64) -> SimParams {
        SimParams { eta_a: eta_arm, eta_b: eta_arm, det, proto, basis_bias }
    }

    /// Checks field domains.
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.eta_a.is_finite() && (0.0..=1.0).contains(&self.eta_a),
            "eta_a",
            self.eta_a,
            "in [0, 1]",
        )?;
        ensure(
            self.eta_b.is_finite() && (0.0..=1.0).contains(&self.eta_b),
            "eta_b",
            self.eta_b,
            "in [0, 1]",
        )?;
        ensure(
            self.basis_bias.is_finite() && self.basis_bias > 0.0 && self.basis_bias <= 1.0,
            "basis_bias",
            self.basis_bias,
            "in (0, 1]",
        )?;
        self.det.validate()?;
        self.proto.validate()
    }

    /// Mean photon number arriving at the node from arm A.
    pub fn arrival_intensity_a(&self) -> f64 {
        self.proto.mu_a * self.eta_a
    }

    /// Mean photon number arriving at the node from arm B.
    pub fn arrival_intensity_b(&self) -> f64 {
        self.proto.mu_b * self.eta_b
    }
}

/// Phase added on top of the random slice phase:
/// `bit * pi + (pi/2 if test basis)`.
pub fn encoding_phase(bit: bool, test_basis: bool) -> Phase {
    let r = if bit { PI } else { 0.0 } + if test_basis { PI / 2.0 } else { 0.0 };
    Phase::new(r).expect("finite encoding phase")
}

/// One prepared pulse pair before transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSetting {
    /// Party A's uniform random phase.
    pub rho_a: Phase,
    /// Party B's uniform random phase.
    pub rho_b: Phase,
    /// Party A's key bit.
    pub bit_a: bool,
    /// Party B's key bit.
    pub bit_b: bool,
    /// True when A chose the test basis.
    pub test_basis_a: bool,
    /// True when B chose the test basis.
    pub test_basis_b: bool,
}

impl TrialSetting {
    /// Total prepared phase of pulse A (random phase plus encoding).
    pub fn prepared_phase_a(&self) -> Phase {
        self.rho_a + encoding_phase(self.bit_a, self.test_basis_a)
    }

    /// Total prepared phase of pulse B.
    pub fn prepared_phase_b(&self) -> Phase {
        self.rho_b + encoding_phase(self.bit_b, self.test_basis_b)
    }
}

/// Draws phases, bits, and bases for one trial. `basis_bias` is the
/// per-party probability of the key basis.
pub fn draw_trial<R: Rng + ?Sized>(basis_bias: f64, rng: &mut R) -> TrialSetting {
    TrialSetting {
        rho_a: Phase::uniform(rng),
        rho_b: Phase::uniform(rng),
        bit_a: rng.gen::<bool>(),
        bit_b: rng.gen::<bool>(),
        test_basis_a: rng.gen::<f64>() >= basis_bias,
        test_basis_b: rng.gen::<f64>() >= basis_bias,
    }
}

/// Applies misalignment as a random-sign differential rotation by
/// `theta = 2 asin(sqrt(e_opt))`, so an otherwise perfect pair errs with
/// probability exactly `e_opt`. The random sign keeps the rotation
/// zero-mean, which is what lets it combine with other error sources as an
/// independent binary flip.
pub fn misaligned_phase<R: Rng + ?Sized>(phi: Phase, e_opt: f64, rng: &mut R) -> Result<Phase> {
    ensure(e_opt.is_finite() && (0.0..=0.5).contains(&e_opt), "e_opt", e_opt, "in [0, 0.5]")?;
    if e_opt == 0.0 {
        return Ok(phi);
    }
    let theta = 2.0 * e_opt.sqrt().asin();
    let signed = if rng.gen::<bool>() { theta } else { -theta };
    Phase::new(phi.radians() + signed)
}

/// Which detectors fired in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionOutcome {
    /// Constructive-port detector clicked (photon or dark).
    pub click_plus: bool,
    /// Destructive-port detector clicked.
    pub click_minus: bool,
    /// A dark count fired on the constructive port.
    pub dark_plus: bool,
    /// A dark count fired on the destructive port.
    pub dark_minus: bool,
}

impl DetectionOutcome {
    /// Exactly one detector clicked.
    pub fn exactly_one(&self) -> bool {
        self.click_plus != self.click_minus
    }

    /// No detector clicked.
    pub fn none(&self) -> bool {
        !self.click_plus && !self.click_minus
    }
}

/// Interferes the two arriving pulses on the balanced beam splitter and
/// samples both detectors. `arrival_a` and `arrival_b` are the mean photon
/// numbers reaching the node; detector efficiency thins them further. The
/// port intensities are
///
/// ```text
/// I(+-) = eta_det (a + b +- 2 sqrt(a b) cos(phi_a - phi_b)) / 2
/// ```
///
/// and each detector clicks with probability `1 - exp(-I)` for photons,
/// independently OR-ed with its dark count.
pub fn interfere_and_detect<R: Rng + ?Sized>(
    phi_a: Phase,
    phi_b: Phase,
    arrival_a: f64,
    arrival_b: f64,
    det: &DetectorSpec,
    rng: &mut R,
) -> Result<DetectionOutcome> {
    ensure(arrival_a.is_finite() && arrival_a >= 0.0, "arrival_a", arrival_a, ">= 0")?;
    ensure(arrival_b.is_finite() && arrival_b >= 0.0, "arrival_b", arrival_b, ">= 0")?;
    det.validate()?;
    let cos_d = (phi_a - phi_b).radians().cos();
    let sum = 0.5 * det.efficiency * (arrival_a + arrival_b);
    let cross = det.efficiency * (arrival_a * arrival_b).sqrt() * cos_d;
    let i_plus = (sum + cross).max(0.0);
    let i_minus = (sum - cross).max(0.0);
    let photon_plus = rng.gen::<f64>() < 1.0 - (-i_plus).exp();
    let photon_minus = rng.gen::<f64>() < 1.0 - (-i_minus).exp();
    let dark_plus = rng.gen::<f64>() < det.dark_count_prob;
    let dark_minus = rng.gen::<f64>() < det.dark_count_prob;
    Ok(DetectionOutcome {
        click_plus: photon_plus || dark_plus,
        click_minus: photon_minus || dark_minus,
        dark_plus,
        dark_minus,
    })
}

/// Classification of one trial after all announcements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiftResult {
    /// No detector clicked; nothing is announced.
    NoClick,
    /// Both detectors clicked; the event is discarded.
    DoubleClick,
    /// The announced phase difference was outside slice zero.
    SliceMismatch,
    /// The parties chose different bases, or a test basis.
    BasisMismatch,
    /// Kept: the node's announcement and whether it was wrong.
    Accepted {
        /// Announced bit parity: 0 for the constructive port, 1 otherwise.
        xor_bit: u8,
        /// Announcement disagrees with the true `bit_a xor bit_b`.
        error: bool,
    },
}

/// Applies the sifting rules to one trial. Click status is checked first
/// (nothing is announced without a click), then the phase-difference slice,
/// then the bases.
pub fn sift(setting: &TrialSetting, outcome: &DetectionOutcome, m_slices: u32) -> Result<SiftResult> {
    if outcome.none() {
        return Ok(SiftResult::NoClick);
    }
    if !outcome.exactly_one() {
        return Ok(SiftResult::DoubleClick);
    }
    let diff = setting.rho_a - setting.rho_b;
    if slice_of(diff, m_slices)?.k != 0 {
        return Ok(SiftResult::SliceMismatch);
    }
    if setting.test_basis_a || setting.test_basis_b {
        return Ok(SiftResult::BasisMismatch);
    }
    let xor_bit = u8::from(outcome.click_minus);
    let truth = setting.bit_a ^ setting.bit_b;
    Ok(SiftResult::Accepted { xor_bit, error: (xor_bit == 1) != truth })
}

/// Event counts from a batch of trials.
///
/// `n_matched` counts pairs passing slice and basis sifting regardless of
/// clicks; those pairs split exactly into `n_no_click + n_sift +
/// n_double_click`. Errors and dark attributions refer to sifted
/// (single-click) events only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimTally {
    /// Trials evaluated.
    pub n_trials: u64,
    /// Trials whose phase difference fell in slice zero.
    pub n_slice_match: u64,
    /// Slice matches where both parties chose the key basis.
    pub n_matched: u64,
    /// Matched pairs with no click.
    pub n_no_click: u64,
    /// Matched pairs with exactly one click (the sifted key events).
    pub n_sift: u64,
    /// Matched pairs where both detectors clicked.
    pub n_double_click: u64,
    /// Sifted events whose announcement was wrong.
    pub n_error: u64,
    /// Sifted events where the clicking detector's dark count fired.
    pub n_dark_sift: u64,
}

impl SimTally {
    /// Adds another tally into this one.
    pub fn merge(&mut self, other: &SimTally) {
        self.n_trials += other.n_trials;
        self.n_slice_match += other.n_slice_match;
        self.n_matched += other.n_matched;
        self.n_no_click += other.n_no_click;
        self.n_sift += other.n_sift;
        self.n_double_click += other.n_double_click;
        self.n_error += other.n_error;
        self.n_dark_sift += other.n_dark_sift;
    }

    /// Checks the counter ordering invariants.
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_slice_match <= self.n_trials
            && self.n_matched <= self.n_slice_match
            && self.n_no_click + self.n_sift + self.n_double_click == self.n_matched
            && self.n_error <= self.n_sift
            && self.n_dark_sift <= self.n_sift;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "tally",
                value: self.n_trials as f64,
                constraint: "counter ordering (slice >= matched >= outcomes, errors <= sifted)",
            })
        }
    }
}

/// Precomputed per-trial constants of the reduced sampling scheme.
struct HotLoop {
    m: f64,
    inv_m: f64,
    slice_w: f64,
    bias_sq: f64,
    /// `eta_det (a + b) / 2`: phase-independent half-sum of port intensities.
    sum_half: f64,
    /// `eta_det sqrt(a b)`: amplitude of the phase-dependent part.
    cross: f64,
    /// Probability that neither detector clicks (phase-independent because
    /// the two port intensities always add to the same total).
    p_none: f64,
    p_dark: f64,
    theta: f64,
}

impl HotLoop {
    fn new(params: &SimParams) -> HotLoop {
        let a = params.arrival_intensity_a();
        let b = params.arrival_intensity_b();
        let eta_det = params.det.efficiency;
        let sum_half = 0.5 * eta_det * (a + b);
        let p_dark = params.det.dark_count_prob;
        let p_none = (1.0 - p_dark).powi(2) * (-2.0 * sum_half).exp();
        let m = f64::from(params.proto.m_slices);
        HotLoop {
            m,
            inv_m: 1.0 / m,
            slice_w: TAU / m,
            bias_sq: params.basis_bias * params.basis_bias,
            sum_half,
            cross: eta_det * (a * b).sqrt(),
            p_none,
            p_dark,
            theta: 2.0 * params.proto.e_opt.sqrt().asin(),
        }
    }

    /// Runs `n` trials. Identical in distribution to the compositional
    /// pipeline: the phase difference is drawn directly (it is uniform and
    /// sufficient for slice sifting and interference), the constant
    /// no-click probability short-circuits most matched trials, and the
    /// click pattern is resolved from one conditional uniform once the
    /// port intensities are known.
    fn run<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> SimTally {
        let mut t = SimTally { n_trials: n, ..SimTally::default() };
        for _ in 0..n {
            let u: f64 = rng.gen();
            if u >= self.inv_m {
                continue;
            }
            t.n_slice_match += 1;
            if self.bias_sq < 1.0 && rng.gen::<f64>() >= self.bias_sq {
                continue;
            }
            t.n_matched += 1;
            let u_click: f64 = rng.gen();
            if u_click < self.p_none {
                t.n_no_click += 1;
                continue;
            }
            // click branch (rare at dim intensities)
            let word: u64 = rng.gen();
            let truth_one = word & 1 == 1;
            let mut delta = u * self.m * self.slice_w + if truth_one { PI } else { 0.0 };
            if self.theta != 0.0 {
                delta += if word & 2 == 0 { self.theta } else { -self.theta };
            }
            let cross_term = self.cross * delta.cos();
            let i_plus = (self.sum_half + cross_term).max(0.0);
            let i_minus = (self.sum_half - cross_term).max(0.0);
            let q_plus = 1.0 - (1.0 - self.p_dark) * (-i_plus).exp();
            let q_minus = 1.0 - (1.0 - self.p_dark) * (-i_minus).exp();
            let p_none_exact = (1.0 - q_plus) * (1.0 - q_minus);
            let p_only_plus = q_plus * (1.0 - q_minus);
            let p_only_minus = q_minus * (1.0 - q_plus);
            // u_click, conditioned on a click, rescaled to the click mass
            let s = (u_click - self.p_none) / (1.0 - self.p_none) * (1.0 - p_none_exact);
            let (clicked_minus, q_clicked) = if s < p_only_plus {
                (false, q_plus)
            } else if s < p_only_plus + p_only_minus {
                (true, q_minus)
            } else {
                t.n_double_click += 1;
                continue;
            };
            t.n_sift += 1;
            if clicked_minus != truth_one {
                t.n_error += 1;
            }
            if self.p_dark > 0.0 && rng.gen::<f64>() * q_clicked < self.p_dark {
                t.n_dark_sift += 1;
            }
        }
        t
    }
}

/// Runs `n_trials` of the protocol, split deterministically over `shards`
/// independent random streams (shard `i` uses the stream derived from
/// `(seed, "protocol-sim", i)`). The result depends only on `(n_trials,
/// params, seed, shards)`, not on thread scheduling.
pub fn run_batch(n_trials: u64, params: &SimParams, seed: u64, shards: u32) -> Result<SimTally> {
    params.validate()?;
    ensure(shards >= 1, "shards", f64::from(shards), ">= 1")?;
    let hot = HotLoop::new(params);
    let base = n_trials / u64::from(shards);
    let rem = n_trials % u64::from(shards);
    let parts: Vec<SimTally> = (0..shards)
        .into_par_iter()
        .map(|i| {
            let n = base + u64::from(u64::from(i) < rem);
            let mut rng = derive_rng(seed, "protocol-sim", u64::from(i));
            hot.run(n, &mut rng)
        })
        .collect();
    let mut total = SimTally::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Estimates derived from a tally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TallyEstimate {
    /// Any-click gain among matched pairs, `1 - n_no_click / n_matched`.
    pub gain: f64,
    /// Sifted error fraction; `None` when nothing was sifted.
    pub qber: Option<f64>,
    /// Fraction of trials passing slice sifting (expected `1/M`).
    pub slice_match_rate: f64,
    /// Fraction of sifted events attributed to a dark count.
    pub dark_fraction: f64,
    /// Secret rate per emitted pair: the asymptotic formula fed with the
    /// measured gain and error rate and analytic single-photon bounds,
    /// scaled by the duty cycle over the slice count.
    pub secret_rate: f64,
}

/// Turns counters into physical estimates. Single-photon bounds are taken
/// at the total intensity and the geometric mean of the arm transmittances,
/// with the intrinsic slice error composed into the phase-error bound, the
/// same convention as the analytic rate law.
pub fn estimate_from_tally(tally: &SimTally, params: &SimParams) -> Result<TallyEstimate> {
    params.validate()?;
    tally.validate()?;
    let slice_match_rate = if tally.n_trials == 0 {
        0.0
    } else {
        tally.n_slice_match as f64 / tally.n_trials as f64
    };
    let gain = if tally.n_matched == 0 {
        0.0
    } else {
        1.0 - tally.n_no_click as f64 / tally.n_matched as f64
    };
    let qber = (tally.n_sift > 0).then(|| tally.n_error as f64 / tally.n_sift as f64);
    let dark_fraction = if tally.n_sift == 0 {
        0.0
    } else {
        tally.n_dark_sift as f64 / tally.n_sift as f64
    };

    let secret_rate = if gain > 0.0 {
        let eta_geo = (params.eta_a * params.eta_b).sqrt();
        let bounds = single_photon_bounds(params.proto.mu(), eta_geo, &params.det, params.proto.e_opt)?;
        let e_m = intrinsic_qber(params.proto.m_slices)?;
        let e1 = compose_qber(bounds.e1_upper.min(0.5), e_m)?;
        let qber_used = qber.unwrap_or(0.5).min(0.5);
        let inner =
            asymptotic_secret_rate(bounds.q1_lower, e1, gain, qber_used, params.proto.ec_factor)?;
        params.proto.duty_cycle / f64::from(params.proto.m_slices) * inner
    } else {
        0.0
    };

    Ok(TallyEstimate { gain, qber, slice_match_rate, dark_fraction, secret_rate })
}
