//! Repeaterless benchmarks, reference curves, and crossover search.
//!
//! Two benchmark rates bound what any point-to-point protocol can do over a
//! lossy channel of transmittance `eta`:
//!
//! * secret key capacity `skc(eta) = -log2(1 - eta)`, and
//! * the single-repeater bound `-log2(1 - sqrt(eta))`, the same law with a
//!   middle node that effectively halves the loss exponent.
//!
//! The curve generators sample these alongside idealised QKD references and
//! the TF-QKD rate laws on a common distance grid, so a crossover search can
//! locate where one protocol overtakes another.

use crate::model::{transmittance, ChannelSpec, DetectorSpec, ProtocolSpec};
use crate::optimize::optimal_mu;
use crate::rate::{RateKind, RatePoint};
use crate::{ensure, Error, Result};

/// Secret key capacity of a lossy channel, `-log2(1 - eta)` bits per use.
pub fn skc_bound(eta: f64) -> Result<f64> {
    ensure(eta.is_finite() && (0.0..1.0).contains(&eta), "eta", eta, "in [0, 1)")?;
    Ok(-(-eta).ln_1p() / std::f64::consts::LN_2)
}

/// Single-repeater capacity bound, `-log2(1 - sqrt(eta))` bits per use.
pub fn single_repeater_bound(eta: f64) -> Result<f64> {
    ensure(eta.is_finite() && (0.0..1.0).contains(&eta), "eta", eta, "in [0, 1)")?;
    Ok(-(-eta.sqrt()).ln_1p() / std::f64::consts::LN_2)
}

/// A published experimental rate point, shipped for plot annotation only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentPoint {
    /// Short human-readable label.
    pub label: &'static str,
    /// Protocol family of the demonstration.
    pub protocol: &'static str,
    /// Reported fibre length, km.
    pub distance_km: f64,
    /// Reported rate in `rate_unit` (not bits per pulse).
    pub rate_value: f64,
    /// Unit the rate was published in.
    pub rate_unit: &'static str,
    /// Caveats for plotting.
    pub note: &'static str,
}

/// Literature reference points. These are measured throughputs in their
/// published units; they are not comparable to per-pulse rates without the
/// source clock and are provided purely as plot annotations.
pub const EXPERIMENT_POINTS: &[ExperimentPoint] = &[
    ExperimentPoint {
        label: "high-rate fibre QKD demonstration",
        protocol: "decoy-state BB84",
        distance_km: 50.0,
        rate_value: 1.26,
        rate_unit: "Mbit/s",
        note: "literature data",
    },
    ExperimentPoint {
        label: "long-distance MDI-QKD demonstration",
        protocol: "MDI-QKD",
        distance_km: 404.0,
        rate_value: 1.16,
        rate_unit: "bit/hour",
        note: "literature data; ultralow-loss fibre length as published",
    },
];

/// The curve families the sweep and crossover tools understand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// Secret key capacity of the full-distance channel.
    Skc,
    /// Single-repeater bound of the full-distance channel.
    SingleRepeater,
    /// Decoy-state QKD with ideal hardware, intensity optimised per point.
    IdealDecoyQkd,
    /// Ideal single-photon-source QKD; rate equals the channel
    /// transmittance (efficient sifting, no errors).
    IdealSinglePhotonQkd,
    /// TF-QKD with ideal hardware (no darks, unit efficiency, no
    /// misalignment, f = 1, full duty cycle), intensity optimised.
    TfqkdIdeal,
    /// TF-QKD with the configured realistic parameters, intensity optimised.
    TfqkdRealistic,
}

impl CurveKind {
    /// Stable identifier used in CSV output and CLI arguments.
    pub fn id(self) -> &'static str {
        match self {
            CurveKind::Skc => "skc",
            CurveKind::SingleRepeater => "single_repeater",
            CurveKind::IdealDecoyQkd => "ideal_decoy_qkd",
            CurveKind::IdealSinglePhotonQkd => "ideal_single_photon_qkd",
            CurveKind::TfqkdIdeal => "tfqkd_ideal",
            CurveKind::TfqkdRealistic => "tfqkd_realistic",
        }
    }

    /// All supported kinds, in output order.
    pub const ALL: [CurveKind; 6] = [
        CurveKind::Skc,
        CurveKind::SingleRepeater,
        CurveKind::IdealDecoyQkd,
        CurveKind::IdealSinglePhotonQkd,
        CurveKind::TfqkdIdeal,
        CurveKind::TfqkdRealistic,
    ];
}

impl std::str::FromStr for CurveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<CurveKind> {
        CurveKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or(Error::InvalidParameter {
                name: "curve",
                value: f64::NAN,
                constraint: "one of skc|single_repeater|ideal_decoy_qkd|ideal_single_photon_qkd|tfqkd_ideal|tfqkd_realistic",
            })
    }
}

impl std::fmt::Display for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// A fully pinned, samplable rate curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    /// Curve family.
    pub kind: CurveKind,
    /// Fibre attenuation, dB/km.
    pub alpha_db_per_km: f64,
    /// Detector parameters (used by the realistic TF-QKD curve).
    pub det: DetectorSpec,
    /// Protocol parameters (slice count is shared with the ideal TF curve).
    pub proto: ProtocolSpec,
}

impl CurveSpec {
    /// A curve of the given kind over standard fibre with toolkit defaults.
    pub fn with_defaults(kind: CurveKind) -> CurveSpec {
        CurveSpec {
            kind,
            alpha_db_per_km: crate::model::DEFAULT_ALPHA_DB_PER_KM,
            det: DetectorSpec::default(),
            proto: ProtocolSpec::default(),
        }
    }

    /// Checks parameter domains.
    pub fn validate(&self) -> Result<()> {
        ChannelSpec::new(self.alpha_db_per_km, 0.0)?;
        self.det.validate()?;
        self.proto.validate()
    }

    /// Rate at a full user-to-user distance in bits per pulse. Unbounded
    /// benchmarks return `+inf` at zero loss (`eta = 1`); protocol curves
    /// stay finite. `mu`-optimised kinds re-optimise at every distance.
    pub fn rate_at(&self, distance_km: f64) -> Result<f64> {
        Ok(self.point_at(distance_km)?.rate)
    }

    /// Rate plus the transmittance and intensity behind it.
    pub fn point_at(&self, distance_km: f64) -> Result<RatePoint> {
        self.validate()?;
        ensure(
            distance_km.is_finite() && distance_km >= 0.0,
            "distance_km",
            distance_km,
            ">= 0 and finite",
        )?;
        let channel = ChannelSpec::new(self.alpha_db_per_km, distance_km)?;
        let eta = transmittance(&channel);
        let (rate, mu) = match self.kind {
            CurveKind::Skc => (if eta >= 1.0 { f64::INFINITY } else { skc_bound(eta)? }, 0.0),
            CurveKind::SingleRepeater => {
                (if eta >= 1.0 { f64::INFINITY } else { single_repeater_bound(eta)? }, 0.0)
            }
            CurveKind::IdealSinglePhotonQkd => (eta, 0.0),
            CurveKind::IdealDecoyQkd => {
                let opt = optimal_mu(
                    distance_km,
                    &channel,
                    &DetectorSpec::ideal(),
                    &self.proto.ideal(),
                    RateKind::Qkd,
                )?;
                (opt.rate, opt.mu)
            }
            CurveKind::TfqkdIdeal => {
                let opt = optimal_mu(
                    distance_km,
                    &channel,
                    &DetectorSpec::ideal(),
                    &self.proto.ideal(),
                    RateKind::Tfqkd,
                )?;
                (opt.rate, opt.mu)
            }
            CurveKind::TfqkdRealistic => {
                let opt = optimal_mu(distance_km, &channel, &self.det, &self.proto, RateKind::Tfqkd)?;
                (opt.rate, opt.mu)
            }
        };
        Ok(RatePoint { distance_km, eta, mu, rate })
    }

    /// Samples the curve on a distance grid.
    pub fn sample(&self, grid: &[f64]) -> Result<Vec<RatePoint>> {
        check_grid(grid)?;
        grid.iter().map(|&d| self.point_at(d)).collect()
    }
}

/// The idealised reference curves sampled on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealCurves {
    /// Ideal decoy-state QKD, intensity optimised (rate `eta/e`).
    pub decoy_qkd: Vec<RatePoint>,
    /// Ideal single-photon QKD (rate `eta`).
    pub single_photon_qkd: Vec<RatePoint>,
    /// Secret key capacity.
    pub skc: Vec<RatePoint>,
    /// Single-repeater bound.
    pub single_repeater: Vec<RatePoint>,
}

/// Samples the idealised reference curves over standard fibre of the given
/// attenuation. Pointwise they order as
/// `decoy_qkd <= single_photon_qkd <= skc <= single_repeater`.
pub fn ideal_curves(alpha_db_per_km: f64, grid: &[f64]) -> Result<IdealCurves> {
    let base = CurveSpec {
        alpha_db_per_km,
        ..CurveSpec::with_defaults(CurveKind::Skc)
    };
    Ok(IdealCurves {
        decoy_qkd: CurveSpec { kind: CurveKind::IdealDecoyQkd, ..base.clone() }.sample(grid)?,
        single_photon_qkd: CurveSpec { kind: CurveKind::IdealSinglePhotonQkd, ..base.clone() }
            .sample(grid)?,
        skc: CurveSpec { kind: CurveKind::Skc, ..base.clone() }.sample(grid)?,
        single_repeater: CurveSpec { kind: CurveKind::SingleRepeater, ..base }.sample(grid)?,
    })
}

/// Builds the inclusive grid `start, start+step, ..., stop`.
pub fn distance_grid(start_km: f64, stop_km: f64, step_km: f64) -> Result<Vec<f64>> {
    ensure(start_km.is_finite() && start_km >= 0.0, "grid_start_km", start_km, ">= 0")?;
    ensure(stop_km.is_finite() && stop_km >= start_km, "grid_stop_km", stop_km, ">= start")?;
    ensure(step_km.is_finite() && step_km > 0.0, "grid_step_km", step_km, "> 0")?;
    let n = ((stop_km - start_km) / step_km).round() as usize;
    let mut grid: Vec<f64> = (0..=n)
        .map(|i| start_km + i as f64 * step_km)
        .filter(|&d| d <= stop_km + 1e-9 * step_km)
        .collect();
    if let Some(last) = grid.last_mut() {
        if (*last - stop_km).abs() <= 1e-9 * step_km {
            *last = stop_km;
        }
    }
    Ok(grid)
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty"));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid("not strictly increasing"));
        }
    }
    if grid.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidGrid("distances must be finite and >= 0"));
    }
    Ok(())
}

/// Sign of the rate gap `a - b`. Where both rates are positive this equals
/// the sign of the log-rate gap; infinities compare as equal to each other
/// and larger than anything finite.
fn gap_sign(ra: f64, rb: f64) -> i8 {
    if ra.is_infinite() && rb.is_infinite() {
        return 0;
    }
    if ra > rb {
        1
    } else if ra < rb {
        -1
    } else {
        0
    }
}

/// Whether a sampled rate takes part in curve comparison. A zero rate means
/// the curve has died (the protocol is infeasible there); a dead curve has
/// no value to intersect, so such points carry no sign information.
fn live(rate: f64) -> bool {
    rate > 0.0
}

/// Finds where curve `a` overtakes curve `b` (or vice versa) inside the
/// bracket. A coarse 1 km scan brackets sign changes of the rate gap, then
/// bisection refines the single change to within 0.1 km. Returns `None`
/// when the gap never changes sign; multiple sign changes are an error.
///
/// Crossings are sought only where both curves are alive: a sign flip
/// against a dead point is a curve endpoint, not an intersection (a
/// realistic protocol curve plunges through a benchmark on its way to zero
/// within metres), so a dead stretch resets the comparison.
pub fn crossover_distance(
    a: &CurveSpec,
    b: &CurveSpec,
    bracket_km: (f64, f64),
) -> Result<Option<f64>> {
    let (lo, hi) = bracket_km;
    ensure(lo.is_finite() && lo >= 0.0, "bracket_lo_km", lo, ">= 0 and finite")?;
    ensure(hi.is_finite() && hi > lo, "bracket_hi_km", hi, "> bracket low edge")?;
    a.validate()?;
    b.validate()?;

    // sign of the live gap; None where either curve is dead
    let gap = |d: f64| -> Result<Option<i8>> {
        let ra = a.rate_at(d)?;
        let rb = b.rate_at(d)?;
        Ok((live(ra) && live(rb)).then(|| gap_sign(ra, rb)))
    };

    // coarse scan at 1 km (finer if the bracket is tiny)
    let step = 1.0f64.min((hi - lo) / 8.0);
    let n = ((hi - lo) / step).ceil() as usize;
    let mut changes: Vec<(f64, f64)> = Vec::new();
    let mut last_sign = 0i8;
    let mut last_at = lo;
    for i in 0..=n {
        let d = if i == n { hi } else { lo + i as f64 * step };
        match gap(d)? {
            None => last_sign = 0,
            Some(s) if s != 0 => {
                if last_sign != 0 && s != last_sign {
                    changes.push((last_at, d));
                }
                last_sign = s;
                last_at = d;
            }
            Some(_) => {}
        }
    }
    match changes.len() {
        0 => Ok(None),
        1 => {
            let (mut x0, mut x1) = changes[0];
            let s0 = gap(x0)?.expect("change endpoints are live");
            while x1 - x0 > 0.05 {
                let mid = 0.5 * (x0 + x1);
                match gap(mid)? {
                    // death inside the interval: decaying curves cross on
                    // the near side of the dead stretch
                    None => x1 = mid,
                    Some(0) => return Ok(Some(mid)),
                    Some(sm) if sm == s0 => x0 = mid,
                    Some(_) => x1 = mid,
                }
            }
            Ok(Some(0.5 * (x0 + x1)))
        }
        count => Err(Error::AmbiguousCrossover { lo, hi, count }),
    }
}
