//! Numerical dual-fitting certificate.
//!
//! For exponential-decay multipliers delta(r) = (zeta/2) e^{-zeta |r|} and
//! lambda(r) = lambda_hat * delta(r), the dual variable nu solves
//!
//!   nu'(r) = [min_a h(|r - a|)] delta(r) - lambda(r) - eps |nu(r)|,
//!   nu(v_med) = 0.
//!
//! When lambda_hat is below the certified threshold the solution has a
//! nonnegative right tail and a nonpositive left tail (a feasible dual
//! witness); above it the tail diverges. The integrator is classical RK4
//! with fixed steps, event splitting at the forcing kinks, sign-crossing
//! bisection at the |nu| kink, and a step-doubling local error monitor.

use crate::disutility::DisutilityFn;
use crate::error::{Error, Result};
use crate::line_mech::closed_form_cost;

/// Local error bound for the step-doubling monitor.
const LOCAL_ERR_TOL: f64 = 1e-8;
/// |nu| tolerance when bisecting a step onto a sign crossing.
const CROSSING_TOL: f64 = 1e-12;

/// Instance of the dual ODE.
#[derive(Debug, Clone)]
pub struct DualProblem {
    pub eps: f64,
    pub zeta: f64,
    pub lambda_hat: f64,
    /// sorted offset vector v
    pub v: Vec<f64>,
    pub h: DisutilityFn,
}

impl DualProblem {
    pub fn new(eps: f64, zeta: f64, lambda_hat: f64, mut v: Vec<f64>, h: DisutilityFn) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::NonPositiveEpsilon(eps));
        }
        if !(zeta > 0.0 && zeta < eps) {
            return Err(Error::NonPositiveEpsilon(zeta));
        }
        if v.is_empty() {
            return Err(Error::EmptyOffsets);
        }
        assert!(lambda_hat > 0.0, "lambda_hat must be positive");
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { eps, zeta, lambda_hat, v, h })
    }

    /// Lower median of v (tie rule for even length).
    pub fn v_med(&self) -> f64 {
        self.v[(self.v.len() - 1) / 2]
    }

    /// Default integration horizon: max|v| + 25/min(eps, zeta), beyond which
    /// both multipliers are below 1e-10 of their peak.
    pub fn default_r_max(&self) -> f64 {
        let vmax = self.v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        vmax + 25.0 / self.eps.min(self.zeta)
    }

    fn delta(&self, r: f64) -> f64 {
        0.5 * self.zeta * (-self.zeta * r.abs()).exp()
    }

    fn min_disutility(&self, r: f64) -> f64 {
        self.v
            .iter()
            .map(|&a| self.h.eval((r - a).abs()))
            .fold(f64::INFINITY, f64::min)
    }

    fn rhs(&self, r: f64, nu: f64) -> f64 {
        let d = self.delta(r);
        (self.min_disutility(r) - self.lambda_hat) * d - self.eps * nu.abs()
    }
}

/// Tail classification of a dual trace. `NonnegativeTail` means the right
/// tail stays >= -tol and the left tail stays <= tol (a valid witness);
/// `NegativeTail` means the trace diverges through the wrong sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailClass {
    NonnegativeTail,
    NegativeTail,
    Undetermined,
}

/// Sampled dual solution with tail diagnostics.
#[derive(Debug, Clone)]
pub struct DualTrace {
    pub r_grid: Vec<f64>,
    pub nu: Vec<f64>,
    pub tail_class: TailClass,
    /// Smallest r beyond which nu >= -tol everywhere (the bound U).
    pub nonneg_from: Option<f64>,
    /// Largest r below which nu <= tol everywhere (the bound L).
    pub nonpos_until: Option<f64>,
}

fn rk4(p: &DualProblem, r: f64, nu: f64, h: f64) -> f64 {
    let k1 = p.rhs(r, nu);
    let k2 = p.rhs(r + 0.5 * h, nu + 0.5 * h * k1);
    let k3 = p.rhs(r + 0.5 * h, nu + 0.5 * h * k2);
    let k4 = p.rhs(r + h, nu + h * k3);
    nu + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
}

/// One monitored step: full step vs two half steps; the halved result is
/// accepted and their difference bounds the local error.
fn step_checked(p: &DualProblem, r: f64, nu: f64, h: f64) -> Result<f64> {
    let full = rk4(p, r, nu, h);
    let mid = rk4(p, r, nu, 0.5 * h);
    let two = rk4(p, r + 0.5 * h, mid, 0.5 * h);
    let err = (full - two).abs() / 15.0;
    if err > LOCAL_ERR_TOL * two.abs().max(1.0) {
        return Err(Error::StepTooLarge { r, err });
    }
    Ok(two)
}

/// Integrate one direction from (r0, 0), returning (r, nu) samples beyond
/// the start point. `sign` is +1 for forward, -1 for backward.
fn integrate_direction(
    p: &DualProblem,
    r0: f64,
    r_end: f64,
    step: f64,
    sign: f64,
) -> Result<Vec<(f64, f64)>> {
    // forcing kinks: offsets, midpoints between adjacent offsets, and r = 0
    let mut events: Vec<f64> = p.v.clone();
    events.extend(p.v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    events.push(0.0);
    events.retain(|&x| (x - r0) * sign > 1e-15 && (r_end - x) * sign > 1e-15);
    events.sort_by(|a, b| (a * sign).partial_cmp(&(b * sign)).unwrap());
    events.push(r_end);
    events.dedup();

    let mut out = Vec::with_capacity((((r_end - r0) * sign / step) as usize) + events.len() + 8);
    let mut r = r0;
    let mut nu = 0.0f64;
    for &target in &events {
        let span = (target - r) * sign;
        if span <= 0.0 {
            continue;
        }
        let n = (span / step).ceil().max(1.0) as usize;
        let h = sign * span / n as f64;
        for _ in 0..n {
            let next = step_checked(p, r, nu, h)?;
            if nu != 0.0 && next != 0.0 && nu.signum() != next.signum() {
                // bisect the step onto the sign crossing
                let mut lo = 0.0;
                let mut hi = h;
                let mut val = next;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let trial = rk4(p, r, nu, mid);
                    if trial.abs() <= CROSSING_TOL {
                        hi = mid;
                        val = trial;
                        break;
                    }
                    if trial.signum() == nu.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                        val = trial;
                    }
                }
                r += hi;
                nu = val;
                out.push((r, nu));
                // finish the remainder of this step
                let rem = h - hi;
                if rem.abs() > 1e-15 {
                    nu = step_checked(p, r, nu, rem)?;
                    r += rem;
                    out.push((r, nu));
                }
            } else {
                nu = next;
                r += h;
                out.push((r, nu));
            }
        }
        r = target; // absorb fp drift at event boundaries
    }
    Ok(out)
}

/// Integrate the dual ODE from v_med out to +/- r_max and classify the
/// tails over the last 20% of each side (tol = 1e-6 * max |nu|).
pub fn solve_dual_ode(p: &DualProblem, r_max: f64, step: f64) -> Result<DualTrace> {
    let vmax = p.v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    assert!(r_max >= vmax + 20.0 / p.eps, "r_max too small for tail classification");
    assert!(step <= 1e-3, "step must be <= 1e-3");

    let v_med = p.v_med();
    let fwd = integrate_direction(p, v_med, r_max, step, 1.0)?;
    let bwd = integrate_direction(p, v_med, -r_max, step, -1.0)?;

    let mut r_grid = Vec::with_capacity(fwd.len() + bwd.len() + 1);
    let mut nu = Vec::with_capacity(fwd.len() + bwd.len() + 1);
    for &(r, x) in bwd.iter().rev() {
        r_grid.push(r);
        nu.push(x);
    }
    r_grid.push(v_med);
    nu.push(0.0);
    for &(r, x) in &fwd {
        r_grid.push(r);
        nu.push(x);
    }

    let max_abs = nu.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let tol = 1e-6 * max_abs;

    let right_window = v_med + 0.8 * (r_max - v_med);
    let left_window = v_med - 0.8 * (r_max + v_med);
    let right_ok = fwd.iter().filter(|(r, _)| *r >= right_window).all(|(_, x)| *x >= -tol);
    let left_ok = bwd.iter().filter(|(r, _)| *r <= left_window).all(|(_, x)| *x <= tol);
    let right_diverged = fwd.last().map(|&(_, x)| x < -tol).unwrap_or(false);
    let left_diverged = bwd.last().map(|&(_, x)| x > tol).unwrap_or(false);

    let tail_class = if right_ok && left_ok {
        TailClass::NonnegativeTail
    } else if right_diverged || left_diverged {
        TailClass::NegativeTail
    } else {
        TailClass::Undetermined
    };

    // U: smallest r with nu >= -tol from there on; L symmetric.
    let nonneg_from = if right_ok {
        let mut bound = v_med;
        for &(r, x) in fwd.iter().rev() {
            if x < -tol {
                bound = r;
                break;
            }
        }
        Some(bound)
    } else {
        None
    };
    let nonpos_until = if left_ok {
        let mut bound = v_med;
        for &(r, x) in bwd.iter().rev() {
            if x > tol {
                bound = r;
                break;
            }
        }
        Some(bound)
    } else {
        None
    };

    Ok(DualTrace { r_grid, nu, tail_class, nonneg_from, nonpos_until })
}

/// Largest lambda_hat for which the dual construction is guaranteed to be
/// feasible: (eps - zeta)/(eps + zeta) * f_hat(eps + zeta, k).
pub fn dual_threshold(eps: f64, zeta: f64, k: usize) -> Result<f64> {
    if !(zeta > 0.0 && zeta < eps) {
        return Err(Error::NonPositiveEpsilon(zeta));
    }
    Ok((eps - zeta) / (eps + zeta) * closed_form_cost(eps + zeta, k)?)
}

/// Locate the empirical phase-change threshold by bisection on lambda_hat.
pub fn empirical_crossing(
    eps: f64,
    zeta: f64,
    v: &[f64],
    h: &DisutilityFn,
    mut lo: f64,
    mut hi: f64,
    iters: usize,
) -> Result<f64> {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let p = DualProblem::new(eps, zeta, mid, v.to_vec(), h.clone())?;
        let trace = solve_dual_ode(&p, p.default_r_max(), 1e-3)?;
        if trace.tail_class == TailClass::NonnegativeTail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
