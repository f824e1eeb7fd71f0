//! Assembled mechanism configurations: privacy budget, result count, noise
//! density and server offsets for each shipped mechanism family.

use std::f64::consts::TAU;

use crate::density::{Domain, PiecewiseExpDensity};
use crate::disutility::DisutilityFn;
use crate::error::Result;
use crate::line_mech;
use crate::offsets::OffsetSet;
use crate::ring_mech;

/// A complete client/server mechanism: the client perturbs with `noise`,
/// the server adds the `offsets` to the received signal.
#[derive(Debug, Clone)]
pub struct MechanismConfig {
    pub eps: f64,
    pub k: usize,
    pub domain: Domain,
    pub noise: PiecewiseExpDensity,
    pub offsets: OffsetSet,
    pub h: DisutilityFn,
}

impl MechanismConfig {
    /// Geographic line mechanism: Laplace noise with the closed-form optimal
    /// offsets for the identity disutility.
    pub fn line(eps: f64, k: usize) -> Result<Self> {
        Ok(Self {
            eps,
            k,
            domain: Domain::Line,
            noise: line_mech::laplace_density(eps)?,
            offsets: line_mech::optimal_offsets_closed(eps, k)?,
            h: DisutilityFn::Identity,
        })
    }

    /// Line mechanism with noise at twice the advertised rate (scale
    /// 1/(2 eps)); fails both the analytic check and the empirical audit.
    pub fn corrupted_line(eps: f64, k: usize) -> Result<Self> {
        Ok(Self {
            eps,
            k,
            domain: Domain::Line,
            noise: line_mech::corrupted_laplace_density(eps)?,
            offsets: line_mech::optimal_offsets_closed(eps, k)?,
            h: DisutilityFn::Identity,
        })
    }

    /// Local-DP ring mechanism with k equidistant offsets.
    pub fn ring_local(eps: f64, k: usize) -> Result<Self> {
        let (mech, _) = ring_mech::local_ring_mechanism(eps, k)?;
        Ok(Self {
            eps,
            k,
            domain: Domain::Ring(TAU),
            noise: mech.density,
            offsets: mech.offsets,
            h: DisutilityFn::Identity,
        })
    }

    /// Geographic ring mechanism for k = 2 from the parametric optimizer.
    pub fn ring_geo_k2(eps: f64, grid: usize) -> Result<Self> {
        let res = ring_mech::geo_ring_optimize_k2(eps, grid)?;
        Ok(Self {
            eps,
            k: 2,
            domain: Domain::Ring(TAU),
            noise: res.density,
            offsets: res.offsets,
            h: DisutilityFn::Identity,
        })
    }

    /// Exact expected disutility of this mechanism (identity: closed form).
    pub fn exact_cost(&self) -> Result<f64> {
        self.noise.expected_min_disutility(&self.offsets, &self.h)
    }
}
