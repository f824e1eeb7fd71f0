//! The geographic-DP mechanism on the real line: Laplace noise plus the
//! optimal server offsets, computed both in closed form and by the
//! exponential-memorylessness recurrence, with first-order optimality
//! diagnostics.
//!
//! Cost normalization: the Laplace density is rho(x) = (eps/2) e^{-eps |x|},
//! so E|X| = 1/eps and the optimal k-result cost is 2/(eps (k+1)) for odd k
//! and log(1 + 2/k)/eps for even k. Both constants are certified against
//! exact integration and a brute-force search in the test suite.

use crate::density::{Domain, ExpSegment, PiecewiseExpDensity};
use crate::disutility::DisutilityFn;
use crate::error::{Error, Result};
use crate::offsets::OffsetSet;
use crate::quad;

/// Upper end of the gap search range, in units of 1/eps; beyond this the
/// e^{-s} tail contribution is below 1e-20 for every tested disutility.
const S_MAX: f64 = 50.0;
/// Grid size for the initial gap scan.
const S_GRID: usize = 200;
/// Width tolerance of the golden-section refinement in s.
const S_TOL: f64 = 1e-10;

/// Two-sided Laplace density rho(x) = (eps/2) e^{-eps |x|}.
pub fn laplace_density(eps: f64) -> Result<PiecewiseExpDensity> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    let lc = (eps / 2.0).ln();
    PiecewiseExpDensity::normalize(
        vec![
            ExpSegment::new(f64::NEG_INFINITY, 0.0, lc, eps),
            ExpSegment::new(0.0, f64::INFINITY, lc, -eps),
        ],
        Domain::Line,
    )
}

/// Laplace with the wrong scale (rate 2*eps); only provides eps/... privacy
/// at twice the advertised budget. Used as the corrupted mechanism in
/// negative privacy tests.
pub fn corrupted_laplace_density(eps: f64) -> Result<PiecewiseExpDensity> {
    laplace_density(2.0 * eps)
}

/// Effective epsilon of a g(.)-geographic guarantee: the mechanism for a
/// convex g with g(0) = 0 is the Laplace mechanism at eps = g'(0).
pub fn effective_epsilon(g_prime_at_zero: f64) -> Result<f64> {
    if !(g_prime_at_zero > 0.0) {
        return Err(Error::NonPositiveDerivative(g_prime_at_zero));
    }
    Ok(g_prime_at_zero)
}

/// Closed-form optimal offsets for the identity disutility.
///
/// Odd k with t = (k-1)/2: {0, +/- 2 log((t+1)/j) / eps} for j = t .. 1.
/// Even k with t = k/2: innermost at +/- log(1 + 2/k)/eps and inward gaps
/// x_{i+1} - x_i = 2 log(1 + 1/i)/eps, mirrored.
pub fn optimal_offsets_closed(eps: f64, k: usize) -> Result<OffsetSet> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    if k < 1 {
        return Err(Error::InvalidK(k as i64));
    }
    let mut xs = Vec::with_capacity(k);
    if k % 2 == 1 {
        let t = (k - 1) / 2;
        xs.push(0.0);
        for j in 1..=t {
            let v = 2.0 * ((t as f64 + 1.0) / j as f64).ln() / eps;
            xs.push(v);
            xs.push(-v);
        }
    } else {
        let t = k / 2;
        for j in 1..=t {
            // distance j from the center: log(t(t+1)/(t-j+1)^2)/eps
            let num = t as f64 * (t as f64 + 1.0);
            let den = (t - j + 1) as f64;
            let v = (num / (den * den)).ln() / eps;
            xs.push(v);
            xs.push(-v);
        }
    }
    OffsetSet::from_unsorted(xs)
}

/// Closed-form optimal cost for the identity disutility:
/// 2/(eps (k+1)) for odd k, log(1 + 2/k)/eps for even k.
pub fn closed_form_cost(eps: f64, k: usize) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    if k < 1 {
        return Err(Error::InvalidK(k as i64));
    }
    Ok(if k % 2 == 1 {
        2.0 / (eps * (k as f64 + 1.0))
    } else {
        (1.0 + 2.0 / k as f64).ln() / eps
    })
}

/// State of the server-response recurrence in normalized units (eps = 1):
/// `d` is the conditional cost given a positive signal and `s_gaps[j]` the
/// optimal gap chosen when growing the chain from j+1 to j+2 points.
#[derive(Debug, Clone)]
pub struct RecurrenceState {
    pub b: usize,
    pub d: f64,
    pub s_gaps: Vec<f64>,
}

/// Optimal offsets for a general disutility via the memorylessness
/// recurrence, with the cost of the resulting mechanism.
///
/// Works in normalized units (the conditional signal is a unit exponential)
/// with the rescaled disutility t -> h(t/eps), then maps gaps back by 1/eps.
/// Odd k = 2b-1 grows the chain one point at a time; even k = 2t adds a
/// symmetric innermost pair by optimizing the half-gap s0 on top of the
/// t-point chain. For h = Identity the result matches the closed form.
pub fn optimal_offsets_recurrence(
    eps: f64,
    k: usize,
    h: &DisutilityFn,
) -> Result<(OffsetSet, f64)> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    if k < 1 {
        return Err(Error::InvalidK(k as i64));
    }
    let hn = |t: f64| h.eval(t / eps);

    if k % 2 == 1 {
        let b = (k + 1) / 2;
        let state = run_chain(&hn, b)?;
        let ys = unroll_positions(&state.s_gaps);
        let mut xs = vec![0.0];
        for y in ys {
            xs.push(y / eps);
            xs.push(-y / eps);
        }
        Ok((OffsetSet::from_unsorted(xs)?, state.d))
    } else {
        let t = k / 2;
        let state = run_chain(&hn, t)?;
        // innermost half-gap: approach cost + memoryless restart of the chain
        let objective = |s0: f64| {
            let approach = quad::integrate(|u| hn(s0 - u) * (-u).exp(), 0.0, s0, 1e-12);
            approach + (-s0).exp() * state.d
        };
        let (s0, cost) = minimize_gap(&objective)?;
        let ys = unroll_positions(&state.s_gaps);
        let mut xs = Vec::with_capacity(k);
        xs.push(s0 / eps);
        xs.push(-s0 / eps);
        for y in ys {
            xs.push((s0 + y) / eps);
            xs.push(-(s0 + y) / eps);
        }
        Ok((OffsetSet::from_unsorted(xs)?, cost))
    }
}

/// Run the odd-chain recurrence up to b points on the positive half-line:
/// D_1 = int h(t) e^{-t} dt and
/// D_{j+1} = min_s [ int_0^s h(min(t, s-t)) e^{-t} dt + e^{-s} D_j ].
fn run_chain(hn: &impl Fn(f64) -> f64, b: usize) -> Result<RecurrenceState> {
    let mut d = quad::integrate_tail(|t| hn(t) * (-t).exp(), 0.0, 1.0, 1e-12);
    let mut s_gaps = Vec::with_capacity(b.saturating_sub(1));
    for _ in 1..b {
        let prev = d;
        let objective = |s: f64| {
            let half = 0.5 * s;
            let inner = quad::integrate(|t| hn(t) * (-t).exp(), 0.0, half, 1e-12)
                + quad::integrate(|t| hn(s - t) * (-t).exp(), half, s, 1e-12);
            inner + (-s).exp() * prev
        };
        let (s, value) = minimize_gap(&objective)?;
        s_gaps.push(s);
        d = value;
    }
    Ok(RecurrenceState { b, d, s_gaps })
}

/// Positions y_i of the positive offsets beyond the center: the chain gaps
/// are laid out outermost-first, so y_i = y_{i-1} + s_{b-i}.
fn unroll_positions(s_gaps: &[f64]) -> Vec<f64> {
    let mut ys = Vec::with_capacity(s_gaps.len());
    let mut acc = 0.0;
    for s in s_gaps.iter().rev() {
        acc += s;
        ys.push(acc);
    }
    ys
}

/// Scan a 200-point log-spaced grid on (0, S_MAX], then refine by
/// golden-section search around the best grid point.
fn minimize_gap(f: &impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let lo_exp = (1e-3f64).ln();
    let hi_exp = S_MAX.ln();
    let grid: Vec<f64> = (0..S_GRID)
        .map(|i| (lo_exp + (hi_exp - lo_exp) * i as f64 / (S_GRID - 1) as f64).exp())
        .collect();
    let mut best = 0usize;
    let mut best_v = f64::INFINITY;
    for (i, &s) in grid.iter().enumerate() {
        let v = f(s);
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    if best == 0 || best == grid.len() - 1 {
        return Err(Error::NonConvergent { at: grid[best] });
    }
    let (a, b) = (grid[best - 1], grid[best + 1]);
    Ok(golden_min(f, a, b, S_TOL))
}

/// Golden-section minimization on [a, b] to width `tol`.
pub(crate) fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// First-order optimality report: the mass on each side of every offset
/// within its cell, which vanishes exactly at the optimum.
#[derive(Debug, Clone)]
pub struct MedianReport {
    pub midpoints: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl MedianReport {
    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Per-cell median condition: with cell boundaries y_i = (x_i + x_{i+1})/2
/// (y_0 = -inf, y_k = +inf), residual_i = mass(y_{i-1}, x_i) - mass(x_i, y_i),
/// computed analytically.
pub fn median_condition(d: &PiecewiseExpDensity, a: &OffsetSet) -> MedianReport {
    assert!(
        !d.domain().is_ring(),
        "median condition is defined for line densities"
    );
    let xs = a.as_slice();
    let mut midpoints = Vec::with_capacity(xs.len() + 1);
    midpoints.push(f64::NEG_INFINITY);
    for w in xs.windows(2) {
        midpoints.push(0.5 * (w[0] + w[1]));
    }
    midpoints.push(f64::INFINITY);
    let residuals = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| d.mass_between(midpoints[i], x) - d.mass_between(x, midpoints[i + 1]))
        .collect();
    MedianReport { midpoints: midpoints[1..midpoints.len() - 1].to_vec(), residuals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::PrivacyMetric;

    const LN_2: f64 = std::f64::consts::LN_2;

    #[test]
    fn laplace_density_values() {
        let d1 = laplace_density(1.0).unwrap();
        assert!((d1.value(0.0) - 0.5).abs() < 1e-12);
        let d2 = laplace_density(2.0).unwrap();
        assert!((d2.value(0.0) - 1.0).abs() < 1e-12);
        let a = OffsetSet::new(vec![0.0]).unwrap();
        let e_abs = d2.expected_min_disutility(&a, &DisutilityFn::Identity).unwrap();
        assert!((e_abs - 0.5).abs() < 1e-12);
        assert!(d1.check_privacy(1.0, PrivacyMetric::Geographic).satisfied);
        assert!(matches!(laplace_density(0.0), Err(Error::NonPositiveEpsilon(_))));
    }

    #[test]
    fn closed_form_offsets_small_k() {
        let k3 = optimal_offsets_closed(1.0, 3).unwrap();
        let expect = [-2.0 * LN_2, 0.0, 2.0 * LN_2];
        for (a, b) in k3.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let k2 = optimal_offsets_closed(1.0, 2).unwrap();
        assert!((k2.as_slice()[0] + LN_2).abs() < 1e-12);
        assert!((k2.as_slice()[1] - LN_2).abs() < 1e-12);
        let k1 = optimal_offsets_closed(2.0, 1).unwrap();
        assert_eq!(k1.as_slice(), &[0.0]);
        assert!(matches!(optimal_offsets_closed(1.0, 0), Err(Error::InvalidK(0))));
    }

    #[test]
    fn closed_form_costs() {
        assert!((closed_form_cost(1.0, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((closed_form_cost(1.0, 3).unwrap() - 0.5).abs() < 1e-15);
        assert!((closed_form_cost(1.0, 2).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn cost_monotone_in_k() {
        for k in 1..=14 {
            assert!(closed_form_cost(1.0, k + 1).unwrap() < closed_form_cost(1.0, k).unwrap());
        }
    }

    #[test]
    fn scaling_law() {
        for k in 1..=8 {
            let base = optimal_offsets_closed(1.0, k).unwrap();
            let scaled = optimal_offsets_closed(4.0, k).unwrap();
            for (a, b) in base.iter().zip(scaled.iter()) {
                assert!((a / 4.0 - b).abs() < 1e-15);
            }
            assert!(
                (closed_form_cost(1.0, k).unwrap() / 4.0 - closed_form_cost(4.0, k).unwrap())
                    .abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn gap_identity_odd_k() {
        for k in [3usize, 5, 7, 9, 11] {
            let eps = 1.0;
            let xs = optimal_offsets_closed(eps, k).unwrap();
            let xs = xs.as_slice();
            for i in 1..=(k - 1) / 2 {
                let gap = xs[i] - xs[i - 1];
                let expect = 2.0 * (1.0 + 1.0 / i as f64).ln() / eps;
                assert!((gap - expect).abs() < 1e-12, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn recurrence_matches_closed_form_k3() {
        let (offs, cost) = optimal_offsets_recurrence(1.0, 3, &DisutilityFn::Identity).unwrap();
        let expect = [-2.0 * LN_2, 0.0, 2.0 * LN_2];
        for (a, b) in offs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert!((cost - 0.5).abs() < 1e-9);
    }

    #[test]
    fn recurrence_k1_base_case() {
        let (offs, cost) = optimal_offsets_recurrence(1.0, 1, &DisutilityFn::Square).unwrap();
        assert_eq!(offs.as_slice(), &[0.0]);
        // int_0^inf t^2 e^{-t} dt = 2
        assert!((cost - 2.0).abs() < 1e-9, "{cost}");
    }

    #[test]
    fn recurrence_k5_d_sequence() {
        let hn = |t: f64| t;
        let state = run_chain(&hn, 3).unwrap();
        assert!((state.d - 1.0 / 3.0).abs() < 1e-9);
        // gap values s_j = 2 ln(1 + 1/j)
        assert!((state.s_gaps[0] - 2.0 * LN_2).abs() < 1e-7);
        assert!((state.s_gaps[1] - 2.0 * (1.5f64).ln()).abs() < 1e-7);
        let (_, cost) = optimal_offsets_recurrence(1.0, 5, &DisutilityFn::Identity).unwrap();
        assert!((cost - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn recurrence_even_k_matches_closed_form() {
        for k in [2usize, 4, 6, 8] {
            let (offs, cost) = optimal_offsets_recurrence(1.0, k, &DisutilityFn::Identity).unwrap();
            let closed = optimal_offsets_closed(1.0, k).unwrap();
            for (a, b) in offs.iter().zip(closed.iter()) {
                assert!((a - b).abs() < 1e-7, "k={k}: {a} vs {b}");
            }
            assert!((cost - closed_form_cost(1.0, k).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn median_condition_at_optimum_and_off_optimum() {
        let d = laplace_density(1.0).unwrap();
        let a3 = optimal_offsets_closed(1.0, 3).unwrap();
        let rep = median_condition(&d, &a3);
        assert!(rep.max_abs_residual() < 1e-12, "{:?}", rep.residuals);

        // single offset away from the median flags suboptimality
        let a = OffsetSet::new(vec![1.0]).unwrap();
        let rep = median_condition(&d, &a);
        let expect = 1.0 - (-1.0f64).exp(); // P(X<1) - P(X>1) for Laplace(1)
        assert!((rep.residuals[0] - expect).abs() < 1e-12);

        // any symmetric density with A = {0} balances exactly
        let rep = median_condition(&d, &OffsetSet::new(vec![0.0]).unwrap());
        assert!(rep.residuals[0].abs() < 1e-15);
    }

    #[test]
    fn median_perturbation_is_detected() {
        let d = laplace_density(1.0).unwrap();
        for k in [3usize, 4, 7] {
            let base = optimal_offsets_closed(1.0, k).unwrap();
            for i in 0..k {
                let mut xs = base.as_slice().to_vec();
                xs[i] += 0.01;
                let rep = median_condition(&d, &OffsetSet::new(xs).unwrap());
                assert!(rep.max_abs_residual() > 1e-4, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn effective_epsilon_examples() {
        assert_eq!(effective_epsilon(1.0).unwrap(), 1.0);
        assert_eq!(effective_epsilon(2.0).unwrap(), 2.0);
        // g(t) = e^t - 1 has g'(0) = 1
        let g_prime = 1.0;
        assert_eq!(effective_epsilon(g_prime).unwrap(), 1.0);
        assert!(matches!(effective_epsilon(0.0), Err(Error::NonPositiveDerivative(_))));
    }
}
