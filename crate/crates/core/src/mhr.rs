//! Quantile placement for fixed symmetric log-concave noise.
//!
//! When the client's noise is not under our control but has a monotone
//! hazard rate (exponential, half-normal), placing results at survival
//! quantiles a_i = F^{-1}(1 - i/K) achieves cost O(log K / (K eps)). These
//! placements are utility-only: the mean-1/eps noise here does not itself
//! satisfy eps geographic privacy.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::offsets::OffsetSet;
use crate::quad;

/// One-sided noise magnitude X = |Y| described by its survival function
/// F(x) = Pr[X >= x], with E[X] = 1/eps by construction.
#[derive(Clone)]
pub enum SurvivalFn {
    /// F(x) = e^{-eps x}
    Exponential { eps: f64 },
    /// |N(0, sigma^2)| with sigma = sqrt(pi/2)/eps so that E[X] = 1/eps
    HalfNormal { eps: f64 },
    Custom {
        survival: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        quantile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        mean: f64,
    },
}

impl SurvivalFn {
    pub fn exponential(eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::NonPositiveEpsilon(eps));
        }
        Ok(SurvivalFn::Exponential { eps })
    }

    pub fn half_normal(eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::NonPositiveEpsilon(eps));
        }
        Ok(SurvivalFn::HalfNormal { eps })
    }

    fn sigma(eps: f64) -> f64 {
        (std::f64::consts::PI / 2.0).sqrt() / eps
    }

    pub fn survival(&self, x: f64) -> f64 {
        match self {
            SurvivalFn::Exponential { eps } => (-eps * x).exp(),
            SurvivalFn::HalfNormal { eps } => {
                libm::erfc(x / (Self::sigma(*eps) * std::f64::consts::SQRT_2))
            }
            SurvivalFn::Custom { survival, .. } => survival(x),
        }
    }

    /// Inverse survival F^{-1}: (0, 1] -> [0, inf).
    pub fn quantile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p <= 1.0, "survival level must be in (0, 1]");
        match self {
            SurvivalFn::Exponential { eps } => -p.ln() / eps,
            SurvivalFn::HalfNormal { .. } => {
                // bisection on the strictly decreasing survival function
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                while self.survival(hi) > p {
                    hi *= 2.0;
                    if hi > 1e9 {
                        break;
                    }
                }
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if self.survival(mid) > p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            SurvivalFn::Custom { quantile, .. } => quantile(p),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            SurvivalFn::Exponential { eps } | SurvivalFn::HalfNormal { eps } => 1.0 / eps,
            SurvivalFn::Custom { mean, .. } => *mean,
        }
    }

    /// Density of X (closed form for built-ins; central difference of the
    /// survival function for custom noise).
    fn density(&self, x: f64) -> f64 {
        match self {
            SurvivalFn::Exponential { eps } => eps * (-eps * x).exp(),
            SurvivalFn::HalfNormal { eps } => {
                let s = Self::sigma(*eps);
                (2.0 / (s * (std::f64::consts::TAU).sqrt())) * (-x * x / (2.0 * s * s)).exp()
            }
            SurvivalFn::Custom { survival, .. } => {
                let h = 1e-6 * self.mean();
                (survival((x - h).max(0.0)) - survival(x + h)) / (x.min(h) + h)
            }
        }
    }

    /// E[(X - a)^+], the mass-weighted overshoot beyond a.
    fn tail_moment(&self, a: f64) -> f64 {
        match self {
            SurvivalFn::Exponential { eps } => (-eps * a).exp() / eps,
            SurvivalFn::HalfNormal { eps } => {
                let s = Self::sigma(*eps);
                s * (2.0 / std::f64::consts::PI).sqrt() * (-a * a / (2.0 * s * s)).exp()
                    - a * self.survival(a)
            }
            SurvivalFn::Custom { .. } => {
                let rate = 1.0 / self.mean();
                quad::integrate_tail(|x| (x - a) * self.density(x), a, rate, 1e-11)
            }
        }
    }

    /// Check survival(0) = 1, strict decrease, and quantile/survival
    /// consistency on [0, 20 * mean].
    pub fn validate(&self) -> bool {
        if (self.survival(0.0) - 1.0).abs() > 1e-12 {
            return false;
        }
        let top = 20.0 * self.mean();
        let mut prev = self.survival(0.0);
        for i in 1..=400 {
            let x = top * i as f64 / 400.0;
            let s = self.survival(x);
            if !(s < prev) {
                return false;
            }
            if (self.quantile(s) - x).abs() > 1e-9 * x.max(1.0) {
                return false;
            }
            prev = s;
        }
        true
    }
}

/// Symmetric placement S = {-a_{K-1}, ..., -a_1, 0, a_1, ..., a_{K-1}} with
/// a_i = F^{-1}(1 - i/K); |S| = 2K - 1.
pub fn quantile_offsets(f: &SurvivalFn, big_k: usize) -> Result<OffsetSet> {
    if big_k < 1 {
        return Err(Error::InvalidK(big_k as i64));
    }
    let mut xs = vec![0.0];
    for i in 1..big_k {
        let a = f.quantile(1.0 - i as f64 / big_k as f64);
        xs.push(a);
        xs.push(-a);
    }
    OffsetSet::from_unsorted(xs)
}

/// phi = E[min_{v in S} |v - x|] for x ~ X, by adaptive quadrature over the
/// placement range plus the analytic overshoot tail (abs tol 1e-9).
pub fn mhr_cost(f: &SurvivalFn, big_k: usize) -> Result<f64> {
    let offsets = quantile_offsets(f, big_k)?;
    // for x >= 0 only the nonnegative placements can be nearest
    let pos: Vec<f64> = offsets.iter().filter(|&x| x >= 0.0).collect();
    let top = *pos.last().unwrap();
    let mind = |x: f64| pos.iter().map(|&v| (x - v).abs()).fold(f64::INFINITY, f64::min);
    let mut breaks: Vec<f64> = pos.clone();
    breaks.extend(pos.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let body = if top > 0.0 {
        quad::integrate_with_breaks(|x| mind(x) * f.density(x), 0.0, top, &breaks, 1e-10)
    } else {
        0.0
    };
    Ok(body + f.tail_moment(top))
}

/// One row of the bound check report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MhrBoundRow {
    pub k: usize,
    pub phi: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// Verify phi(K) <= (e (1 + log K) + 1) / (K eps) for each K; the reported
/// ratio is phi * K * eps / (1 + log K).
pub fn mhr_bound_check(f: &SurvivalFn, k_list: &[usize]) -> Result<Vec<MhrBoundRow>> {
    let eps = 1.0 / f.mean();
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let phi = mhr_cost(f, k)?;
        let log_k = (k as f64).ln();
        let bound = (std::f64::consts::E * (1.0 + log_k) + 1.0) / (k as f64 * eps);
        if phi > bound {
            return Err(Error::BoundViolated { k, phi, bound });
        }
        rows.push(MhrBoundRow { k, phi, bound, ratio: phi * k as f64 * eps / (1.0 + log_k) });
    }
    Ok(rows)
}
