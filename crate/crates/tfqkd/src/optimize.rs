//! Intensity and slice-count optimisation.
//!
//! The secret rate trades off brighter pulses (more detections) against
//! multi-photon leakage, so for every distance there is a best total
//! intensity `mu`. `optimal_mu` finds it with a coarse logarithmic scan
//! followed by golden-section refinement. `optimal_m` compares slice
//! counts: more slices cost sifted events (`1/M`) but lower the intrinsic
//! slice error, and the figure of merit is the area between the candidate
//! curve and the repeaterless benchmark on a log-rate plot.

use crate::bounds::{check_grid, skc_bound};
use crate::model::{intrinsic_qber, transmittance, ChannelSpec, DetectorSpec, ProtocolSpec};
use crate::rate::{rate_of_kind, RateKind, RatePoint};
use crate::{ensure, Error, Result};

/// Search range for the total intensity.
pub const MU_BRACKET: (f64, f64) = (1e-6, 2.0);

/// Points in the coarse logarithmic scan.
const COARSE_POINTS: usize = 64;

/// Relative bracket-width tolerance of the golden-section refinement.
const GOLDEN_REL_TOL: f64 = 1e-4;

/// Slice counts tried by default.
pub const DEFAULT_M_CANDIDATES: [u32; 8] = [4, 8, 12, 16, 20, 24, 32, 64];

/// Whether an optimisation found a usable maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeStatus {
    /// A positive-rate maximum was bracketed and refined.
    Converged,
    /// The rate is zero everywhere in the bracket.
    Infeasible,
}

/// Result of an intensity optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct MuOptimum {
    /// Best total intensity (0 when infeasible).
    pub mu: f64,
    /// Rate at the optimum (0 when infeasible).
    pub rate: f64,
    /// Outcome of the search.
    pub status: OptimizeStatus,
    /// The coarse scan, `(mu, rate)` pairs, for diagnostics.
    pub trace: Vec<(f64, f64)>,
}

/// Golden-section search for the maximum of `f` on `[a, b]`. Assumes `f`
/// is unimodal there; stops when the bracket shrinks below `rel_tol`
/// relative to its upper end.
fn golden_section_max<F: Fn(f64) -> Result<f64>>(
    f: F,
    mut a: f64,
    mut b: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if b - a <= rel_tol * b.abs() {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Finds the total intensity maximising the rate law at one distance.
/// Scans `MU_BRACKET` logarithmically, then refines the best coarse cell
/// by golden section. An all-zero scan reports `Infeasible`.
pub fn optimal_mu(
    distance_km: f64,
    channel: &ChannelSpec,
    det: &DetectorSpec,
    proto: &ProtocolSpec,
    kind: RateKind,
) -> Result<MuOptimum> {
    ensure(
        distance_km.is_finite() && distance_km >= 0.0,
        "distance_km",
        distance_km,
        ">= 0 and finite",
    )?;
    let eval = |mu: f64| rate_of_kind(kind, mu, distance_km, channel, det, proto);

    let (lo, hi) = MU_BRACKET;
    let ratio = (hi / lo).ln();
    let mut trace = Vec::with_capacity(COARSE_POINTS);
    let mut best = 0usize;
    for i in 0..COARSE_POINTS {
        let mu = lo * (ratio * i as f64 / (COARSE_POINTS - 1) as f64).exp();
        let r = eval(mu)?;
        trace.push((mu, r));
        if r > trace[best].1 {
            best = i;
        }
    }
    if trace[best].1 <= 0.0 {
        return Ok(MuOptimum { mu: 0.0, rate: 0.0, status: OptimizeStatus::Infeasible, trace });
    }
    let a = if best == 0 { lo } else { trace[best - 1].0 };
    let b = if best + 1 == COARSE_POINTS { hi } else { trace[best + 1].0 };
    let (mu, rate) = golden_section_max(eval, a, b, GOLDEN_REL_TOL)?;
    // the refined point can only improve on the coarse cell centre
    let (mu, rate) = if rate >= trace[best].1 { (mu, rate) } else { trace[best] };
    Ok(MuOptimum { mu, rate, status: OptimizeStatus::Converged, trace })
}

/// One row of the slice-count comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCandidate {
    /// Slice count.
    pub m: u32,
    /// Intrinsic slice error at this count.
    pub intrinsic_qber: f64,
    /// Area between the intensity-optimised curve and the benchmark.
    pub area: f64,
}

/// Result of the slice-count comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MOptimum {
    /// Candidate with the largest area.
    pub best_m: u32,
    /// All candidates in input order.
    pub table: Vec<MCandidate>,
}

/// Area between a rate curve and a reference curve on a log-rate plot:
/// the trapezoidal integral of `max(0, log10 curve - log10 reference)`
/// over distance. Points where the curve is zero or the reference is
/// infinite or zero contribute nothing.
pub fn area_objective(curve: &[RatePoint], reference: &[RatePoint]) -> Result<f64> {
    if curve.len() != reference.len() || curve.len() < 2 {
        return Err(Error::InvalidGrid("curve and reference must share a grid of >= 2 points"));
    }
    let grid: Vec<f64> = curve.iter().map(|p| p.distance_km).collect();
    check_grid(&grid)?;
    for (c, r) in curve.iter().zip(reference) {
        if c.distance_km != r.distance_km {
            return Err(Error::InvalidGrid("curve and reference grids differ"));
        }
    }
    let gap = |c: &RatePoint, r: &RatePoint| -> f64 {
        if c.rate > 0.0 && r.rate.is_finite() && r.rate > 0.0 {
            (c.rate.log10() - r.rate.log10()).max(0.0)
        } else {
            0.0
        }
    };
    let mut area = 0.0;
    for i in 0..curve.len() - 1 {
        let g0 = gap(&curve[i], &reference[i]);
        let g1 = gap(&curve[i + 1], &reference[i + 1]);
        area += 0.5 * (g0 + g1) * (curve[i + 1].distance_km - curve[i].distance_km);
    }
    Ok(area)
}

/// Compares slice counts by the area their intensity-optimised twin-field
/// curve clears above the repeaterless benchmark on the given grid.
/// Ties keep the earliest candidate.
pub fn optimal_m(
    grid: &[f64],
    channel: &ChannelSpec,
    det: &DetectorSpec,
    proto: &ProtocolSpec,
    candidates: &[u32],
) -> Result<MOptimum> {
    check_grid(grid)?;
    if candidates.is_empty() {
        return Err(Error::InvalidGrid("no slice-count candidates"));
    }

    let reference: Vec<RatePoint> = grid
        .iter()
        .map(|&d| {
            let eta = transmittance(&ChannelSpec { length_km: d, ..*channel });
            let rate = if eta >= 1.0 { f64::INFINITY } else { skc_bound(eta)? };
            Ok(RatePoint { distance_km: d, eta, mu: 0.0, rate })
        })
        .collect::<Result<_>>()?;

    let mut table = Vec::with_capacity(candidates.len());
    for &m in candidates {
        let proto_m = proto.with_m(m);
        proto_m.validate()?;
        let curve: Vec<RatePoint> = grid
            .iter()
            .map(|&d| {
                let opt = optimal_mu(d, channel, det, &proto_m, RateKind::Tfqkd)?;
                let eta = transmittance(&ChannelSpec { length_km: d, ..*channel });
                Ok(RatePoint { distance_km: d, eta, mu: opt.mu, rate: opt.rate })
            })
            .collect::<Result<_>>()?;
        table.push(MCandidate {
            m,
            intrinsic_qber: intrinsic_qber(m)?,
            area: area_objective(&curve, &reference)?,
        });
    }
    let best_m = table
        .iter()
        .max_by(|a, b| a.area.partial_cmp(&b.area).expect("finite areas"))
        .map(|c| c.m)
        .expect("non-empty table");
    Ok(MOptimum { best_m, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::distance_grid;
    use crate::seeding::derive_rng;
    use rand::Rng;

    fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
        assert!(
            (got - want).abs() <= tol,
            "{what}: got {got}, want {want} (tol {tol})"
        );
    }

    fn defaults() -> (ChannelSpec, DetectorSpec, ProtocolSpec) {
        (ChannelSpec::default(), DetectorSpec::default(), ProtocolSpec::default())
    }

    #[test]
    fn noiseless_qkd_optimum_is_unit_intensity() {
        // with ideal hardware the rate is mu exp(-mu) eta: maximum at mu = 1
        let (channel, _, proto) = defaults();
        let det = DetectorSpec::ideal();
        let opt = optimal_mu(50.0, &channel, &det, &proto.ideal(), RateKind::Qkd).unwrap();
        assert_eq!(opt.status, OptimizeStatus::Converged);
        assert_close(opt.mu, 1.0, 1e-3, "optimal mu");
        // eta(50 km) / e
        assert_close(opt.rate, 0.03678794411714423, 1e-9, "optimal rate");
        assert_eq!(opt.trace.len(), 64);
    }

    #[test]
    fn heavy_darks_far_out_are_infeasible() {
        let (channel, _, proto) = defaults();
        let det = DetectorSpec::new(1e-2, 0.3).unwrap();
        let opt = optimal_mu(500.0, &channel, &det, &proto, RateKind::Tfqkd).unwrap();
        assert_eq!(opt.status, OptimizeStatus::Infeasible);
        assert_eq!(opt.mu, 0.0);
        assert_eq!(opt.rate, 0.0);
    }

    #[test]
    fn tfqkd_400_km_fixture() {
        // frozen regression values for the toolkit defaults
        let (channel, det, proto) = defaults();
        let opt = optimal_mu(400.0, &channel, &det, &proto, RateKind::Tfqkd).unwrap();
        assert_eq!(opt.status, OptimizeStatus::Converged);
        assert_close(opt.mu, 0.610, 2e-3, "optimal intensity at 400 km");
        let want = 2.8450964498040372e-7;
        assert!(
            (opt.rate - want).abs() / want < 1e-6,
            "rate {} vs fixture {want}",
            opt.rate
        );
    }

    #[test]
    fn golden_section_beats_brute_force_grid() {
        let (channel, _, base) = defaults();
        let mut rng = derive_rng(21, "optimize-fuzz", 0);
        for trial in 0..5 {
            let distance = 100.0 + 250.0 * rng.gen::<f64>();
            let det = DetectorSpec::new(10f64.powf(-9.0 + 3.0 * rng.gen::<f64>()), 0.3).unwrap();
            let proto = ProtocolSpec { e_opt: 0.03 * rng.gen::<f64>(), ..base.clone() };
            let kind = if trial % 2 == 0 { RateKind::Tfqkd } else { RateKind::Qkd };
            let opt = optimal_mu(distance, &channel, &det, &proto, kind).unwrap();
            // brute force on a fine logarithmic grid
            let mut brute = 0.0f64;
            for i in 0..10_000 {
                let mu = MU_BRACKET.0
                    * ((MU_BRACKET.1 / MU_BRACKET.0).ln() * i as f64 / 9_999.0).exp();
                brute = brute.max(rate_of_kind(kind, mu, distance, &channel, &det, &proto).unwrap());
            }
            if brute == 0.0 {
                assert_eq!(opt.status, OptimizeStatus::Infeasible, "trial {trial}");
            } else {
                assert!(
                    opt.rate >= brute * (1.0 - 1e-6),
                    "trial {trial}: golden {} below brute {brute}",
                    opt.rate
                );
            }
        }
    }

    #[test]
    fn optimum_is_locally_maximal() {
        let (channel, det, proto) = defaults();
        for distance in [100.0, 250.0, 350.0] {
            let opt = optimal_mu(distance, &channel, &det, &proto, RateKind::Tfqkd).unwrap();
            for factor in [0.99, 1.01] {
                let nearby =
                    rate_of_kind(RateKind::Tfqkd, opt.mu * factor, distance, &channel, &det, &proto)
                        .unwrap();
                assert!(
                    opt.rate >= nearby - opt.rate * 1e-7,
                    "rate at {distance} km not maximal against factor {factor}"
                );
            }
        }
    }

    #[test]
    fn area_objective_basics() {
        let mk = |d: f64, r: f64| RatePoint { distance_km: d, eta: 0.0, mu: 0.0, rate: r };
        // curve one decade above reference over a 10 km span: area 10
        let curve = vec![mk(0.0, 1e-2), mk(10.0, 1e-2)];
        let reference = vec![mk(0.0, 1e-3), mk(10.0, 1e-3)];
        assert_close(area_objective(&curve, &reference).unwrap(), 10.0, 1e-12, "one decade");
        // curve below reference: clamped to zero
        assert_eq!(area_objective(&reference, &curve).unwrap(), 0.0);
        // infinite reference or dead curve contributes nothing
        let inf_ref = vec![mk(0.0, f64::INFINITY), mk(10.0, f64::INFINITY)];
        assert_eq!(area_objective(&curve, &inf_ref).unwrap(), 0.0);
        let dead = vec![mk(0.0, 0.0), mk(10.0, 0.0)];
        assert_eq!(area_objective(&dead, &reference).unwrap(), 0.0);
        // mismatched grids rejected
        let off = vec![mk(0.0, 1e-3), mk(11.0, 1e-3)];
        assert!(area_objective(&curve, &off).is_err());
        assert!(area_objective(&curve[..1], &reference[..1]).is_err());
    }

    #[test]
    fn area_objective_grid_refinement_is_stable() {
        // halving the grid step moves the slice-count objective by < 1%
        let (channel, det, proto) = defaults();
        let mut areas = Vec::new();
        for step in [10.0, 5.0] {
            let grid = distance_grid(0.0, 600.0, step).unwrap();
            let m = optimal_m(&grid, &channel, &det, &proto, &[16]).unwrap();
            areas.push(m.table[0].area);
        }
        assert!(areas[0] > 0.0);
        let rel = (areas[1] - areas[0]).abs() / areas[1];
        assert!(rel < 0.01, "area changed {rel:.4} under refinement");
    }

    #[test]
    fn degenerate_slice_count_has_zero_area() {
        // one slice means a random phase reference: QBER 1/2, no key
        let (channel, det, proto) = defaults();
        let grid = distance_grid(0.0, 300.0, 50.0).unwrap();
        let m = optimal_m(&grid, &channel, &det, &proto, &[1]).unwrap();
        assert_eq!(m.table[0].area, 0.0);
        assert_eq!(m.best_m, 1);
    }

    #[test]
    fn slice_count_comparison_prefers_middling_m() {
        let (channel, det, proto) = defaults();
        let grid = distance_grid(0.0, 600.0, 25.0).unwrap();
        let m = optimal_m(&grid, &channel, &det, &proto, &DEFAULT_M_CANDIDATES).unwrap();
        assert!(
            [12u32, 16, 20].contains(&m.best_m),
            "best M = {} outside expected band",
            m.best_m
        );
        // extremes lose: too few slices cost too much error, too many cost
        // too much sifting
        let area_of = |m_val: u32| m.table.iter().find(|c| c.m == m_val).unwrap().area;
        assert!(area_of(m.best_m) > area_of(4));
        assert!(area_of(m.best_m) > area_of(64));
        // intrinsic error decreases with m
        for w in m.table.windows(2) {
            assert!(w[1].intrinsic_qber < w[0].intrinsic_qber);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (channel, det, proto) = defaults();
        assert!(optimal_mu(f64::NAN, &channel, &det, &proto, RateKind::Qkd).is_err());
        assert!(optimal_mu(-10.0, &channel, &det, &proto, RateKind::Qkd).is_err());
        let grid = distance_grid(0.0, 100.0, 10.0).unwrap();
        assert!(optimal_m(&grid, &channel, &det, &proto, &[]).is_err());
        // a single-point grid has no area to integrate
        assert!(optimal_m(&[50.0], &channel, &det, &proto, &[16]).is_err());
    }
}
