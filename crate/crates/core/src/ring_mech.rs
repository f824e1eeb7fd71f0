//! Mechanisms on the unit circle: the exactly optimal local-DP mechanism
//! with k equidistant modes, and the geographic-DP k = 2 parametric study
//! comparing the optimal valley-shaped noise against the Laplace shape.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::density::{Domain, ExpSegment, PiecewiseExpDensity, PrivacyMetric};
use crate::disutility::DisutilityFn;
use crate::error::{Error, Result};
use crate::line_mech::golden_min;
use crate::offsets::OffsetSet;

/// Local-DP mechanism on the ring: k equidistant result offsets and a
/// two-level density, high within angular distance beta * cell of an offset
/// and low elsewhere, with level ratio e^eps.
#[derive(Debug, Clone)]
pub struct RingMechanism {
    pub eps: f64,
    pub k: usize,
    /// beta = 1/(2 (e^{eps/2} + 1))
    pub beta: f64,
    /// cell = 2 pi / k
    pub cell: f64,
    pub density: PiecewiseExpDensity,
    pub offsets: OffsetSet,
}

/// beta as stated in the optimality theorem; algebraically equal to
/// (e^{eps/2} - 1) / (2 (e^eps - 1)).
pub fn local_ring_beta(eps: f64) -> f64 {
    1.0 / (2.0 * ((eps / 2.0).exp() + 1.0))
}

/// Exactly optimal local-DP ring mechanism and its cost
/// beta * cell = pi (e^{eps/2} - 1) / (k (e^eps - 1)).
pub fn local_ring_mechanism(eps: f64, k: usize) -> Result<(RingMechanism, f64)> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    if k < 1 {
        return Err(Error::InvalidK(k as i64));
    }
    let cell = TAU / k as f64;
    let beta = local_ring_beta(eps);
    let half_band = beta * cell; // beta < 1/4, so bands never overlap

    // normalizer alpha over one period: high bands have total length
    // 2 k beta cell = 2 k half_band
    let alpha = 1.0 / (TAU + 2.0 * k as f64 * half_band * (eps.exp() - 1.0));
    let (low, high) = (alpha.ln(), alpha.ln() + eps);

    // march around the circle: [0, half] high, then alternating low/high
    // bands around each offset, ending with the wrapped half-band
    let mut segs = Vec::with_capacity(2 * k + 1);
    segs.push(ExpSegment::new(0.0, half_band, high, 0.0));
    for i in 0..k {
        let center_next = (i + 1) as f64 * cell;
        segs.push(ExpSegment::new(i as f64 * cell + half_band, center_next - half_band, low, 0.0));
        segs.push(ExpSegment::new(center_next - half_band, (center_next + half_band).min(TAU), high, 0.0));
    }
    let flags = vec![true; 2 * k + 1];
    let density = PiecewiseExpDensity::normalize_flagged(segs, Domain::Ring(TAU), Some(flags))?;

    let offsets = OffsetSet::new((0..k).map(|i| i as f64 * cell).collect())?;
    let cost = PI * ((eps / 2.0).exp() - 1.0) / (k as f64 * (eps.exp() - 1.0));
    Ok((RingMechanism { eps, k, beta, cell, density, offsets }, cost))
}

/// Result of the geographic k = 2 parametric optimization.
#[derive(Debug, Clone)]
pub struct GeoRingResult {
    pub t_star: f64,
    pub cost: f64,
    pub density: PiecewiseExpDensity,
    pub offsets: OffsetSet,
}

/// Valley-parameterized density family for the geographic ring, k = 2.
///
/// On [0, pi) the density rises at rate +eps up to the peak t and decays at
/// rate -eps after it; the other half mirrors, giving valleys at 0 and pi
/// and peaks at +/-t. The result is continuous everywhere (wrap included)
/// and eps-geographically private under the ring geodesic.
fn geo_ring_density(eps: f64, t: f64) -> Result<PiecewiseExpDensity> {
    assert!(t > 0.0 && t < PI);
    let segs = vec![
        ExpSegment::new(0.0, t, 0.0, eps),
        ExpSegment::new(t, PI, 2.0 * eps * t, -eps),
        ExpSegment::new(PI, TAU - t, 2.0 * eps * t - TAU * eps, eps),
        ExpSegment::new(TAU - t, TAU, TAU * eps, -eps),
    ];
    PiecewiseExpDensity::normalize(segs, Domain::Ring(TAU))
}

/// Cost of the k = 2 mechanism built from `density`: offsets at the
/// conditional medians of the two half-rings, exact expected geodesic
/// distance to the nearer offset.
fn geo_ring_cost_from(density: &PiecewiseExpDensity) -> Result<(f64, OffsetSet)> {
    let a = density.invert_mass(0.25 * density.total_mass());
    let offsets = OffsetSet::new(vec![a, TAU - a])?;
    let cost = density.expected_min_disutility(&offsets, &DisutilityFn::Identity)?;
    Ok((cost, offsets))
}

/// Sweep the peak position t over a grid on (0, pi), take the conditional
/// median as the offset, and refine the best grid point by golden section to
/// |dt| < 1e-6. Deterministic for a fixed grid regardless of thread count.
pub fn geo_ring_optimize_k2(eps: f64, t_grid: usize) -> Result<GeoRingResult> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    assert!(t_grid >= 64, "grid too coarse");
    let ts: Vec<f64> = (0..t_grid).map(|i| PI * (i as f64 + 0.5) / t_grid as f64).collect();
    let costs: Vec<f64> = ts
        .par_iter()
        .map(|&t| {
            let d = geo_ring_density(eps, t).expect("grid t in (0, pi)");
            geo_ring_cost_from(&d).expect("cost").0
        })
        .collect();
    let best = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();

    let lo = if best == 0 { ts[0] * 0.25 } else { ts[best - 1] };
    let hi = if best + 1 == ts.len() { 0.5 * (ts[best] + PI) } else { ts[best + 1] };
    let f = |t: f64| {
        let d = geo_ring_density(eps, t).expect("t in (0, pi)");
        geo_ring_cost_from(&d).expect("cost").0
    };
    let (t_star, cost) = golden_min(&f, lo, hi, 1e-6);
    let density = geo_ring_density(eps, t_star)?;
    let (cost_exact, offsets) = geo_ring_cost_from(&density)?;
    debug_assert!((cost_exact - cost).abs() < 1e-9);
    debug_assert!(density.check_privacy(eps, PrivacyMetric::Geographic).satisfied);
    Ok(GeoRingResult { t_star, cost: cost_exact, density, offsets })
}

/// Laplace-shape baseline on the ring: single mode at 0, minimum at the
/// antipode, offsets at the conditional medians of the two half-rings.
pub fn geo_ring_laplace_k2(eps: f64) -> Result<GeoRingResult> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    let segs = vec![
        ExpSegment::new(0.0, PI, 0.0, -eps),
        ExpSegment::new(PI, TAU, -TAU * eps, eps),
    ];
    let density = PiecewiseExpDensity::normalize(segs, Domain::Ring(TAU))?;
    let (cost, offsets) = geo_ring_cost_from(&density)?;
    Ok(GeoRingResult { t_star: 0.0, cost, density, offsets })
}

/// Exact cost of the Laplace-shape k = 2 baseline.
pub fn geo_ring_laplace_cost_k2(eps: f64) -> Result<f64> {
    Ok(geo_ring_laplace_k2(eps)?.cost)
}
