//! Independent brute-force and Monte Carlo certification of the optimality
//! claims made elsewhere in the crate.
//!
//! The search knows nothing about closed forms: it runs cyclic coordinate
//! descent with golden-section line search on the exact cost, from several
//! jittered starts. Callers may pass a warm start; the certification tests
//! exercise both warm and purely random starts.

use rayon::prelude::*;

use crate::density::{Domain, PiecewiseExpDensity};
use crate::disutility::DisutilityFn;
use crate::error::Result;
use crate::line_mech::golden_min;
use crate::mechanism::MechanismConfig;
use crate::offsets::OffsetSet;
use crate::rng::{child_seed, Rng};

/// Budget for the brute-force search; all fields must be positive.
#[derive(Debug, Clone, Copy)]
pub struct SearchBudget {
    pub grid_points: usize,
    pub refine_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { grid_points: 64, refine_iters: 30, restarts: 8, seed: 1 }
    }
}

/// Outcome of the search. `budget_exhausted` is set when no start produced a
/// descent step; the best offsets found are still returned.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub offsets: OffsetSet,
    pub cost: f64,
    pub budget_exhausted: bool,
}

/// Monte Carlo cost estimate.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Search range on the line: essentially the full support of the density.
fn search_range(d: &PiecewiseExpDensity) -> (f64, f64) {
    match d.domain() {
        Domain::Line => {
            let q = 1e-7 * d.total_mass();
            (d.invert_mass(q), d.invert_mass(d.total_mass() - q))
        }
        Domain::Ring(c) => (0.0, c),
    }
}

fn exact_cost(d: &PiecewiseExpDensity, xs: &[f64], h: &DisutilityFn) -> f64 {
    let set = match OffsetSet::from_unsorted(xs.to_vec()) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY, // collided coordinates
    };
    d.expected_min_disutility(&set, h).unwrap_or(f64::INFINITY)
}

fn descend(
    d: &PiecewiseExpDensity,
    h: &DisutilityFn,
    start: Vec<f64>,
    budget: &SearchBudget,
) -> (Vec<f64>, f64, bool) {
    let (range_lo, range_hi) = search_range(d);
    let mut xs = start;
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = xs.len();
    let start_cost = exact_cost(d, &xs, h);
    let mut best = start_cost;
    let margin = 1e-9;

    for _ in 0..budget.refine_iters {
        let mut improved_sweep = false;
        for i in 0..k {
            // keep the coordinate order: move within the neighbor gap, or
            // out to the search range at the ends (ring: within the arc)
            let (lo, hi) = match d.domain() {
                Domain::Line => (
                    if i == 0 { range_lo } else { xs[i - 1] + margin },
                    if i + 1 == k { range_hi } else { xs[i + 1] - margin },
                ),
                Domain::Ring(c) => {
                    if k == 1 {
                        (0.0, c - margin)
                    } else {
                        let prev = if i == 0 { xs[k - 1] - c } else { xs[i - 1] };
                        let next = if i + 1 == k { xs[0] + c } else { xs[i + 1] };
                        (prev + margin, next - margin)
                    }
                }
            };
            if !(lo < hi) {
                continue;
            }
            let eval = |x: f64| {
                let mut trial = xs.clone();
                trial[i] = match d.domain() {
                    Domain::Line => x,
                    Domain::Ring(c) => x.rem_euclid(c),
                };
                exact_cost(d, &trial, h)
            };
            let m = budget.grid_points.max(8);
            let mut gbest = 0usize;
            let mut gbest_v = f64::INFINITY;
            for g in 0..m {
                let x = lo + (hi - lo) * g as f64 / (m - 1) as f64;
                let v = eval(x);
                if v < gbest_v {
                    gbest_v = v;
                    gbest = g;
                }
            }
            let a = lo + (hi - lo) * gbest.saturating_sub(1) as f64 / (m - 1) as f64;
            let b = lo + (hi - lo) * ((gbest + 1).min(m - 1)) as f64 / (m - 1) as f64;
            let (x_star, v_star) = golden_min(&eval, a, b, 1e-12 * (hi - lo).max(1.0));
            if v_star < best - 1e-15 {
                best = v_star;
                xs[i] = match d.domain() {
                    Domain::Line => x_star,
                    Domain::Ring(c) => x_star.rem_euclid(c),
                };
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                improved_sweep = true;
            }
        }
        if !improved_sweep {
            break;
        }
    }
    (xs, best, best < start_cost - 1e-15)
}

/// Multi-start coordinate-descent search for the best k offsets under `d`
/// and `h`. Deterministic given the budget seed, independent of thread
/// count. `warm_start` is searched first when provided.
pub fn brute_force_offsets(
    d: &PiecewiseExpDensity,
    k: usize,
    h: &DisutilityFn,
    budget: &SearchBudget,
    warm_start: Option<&OffsetSet>,
) -> Result<BruteForceResult> {
    assert!(k >= 1 && k <= 7, "brute force is intended for k <= 7");
    let starts: Vec<Vec<f64>> = (0..budget.restarts)
        .map(|i| {
            if i == 0 {
                if let Some(w) = warm_start {
                    return w.as_slice().to_vec();
                }
            }
            let mut rng = Rng::new(child_seed(budget.seed, i as u64));
            let mut xs: Vec<f64> = (0..k).map(|_| d.sample(&mut rng)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // separate collided draws
            for j in 1..xs.len() {
                if xs[j] - xs[j - 1] < 1e-9 {
                    xs[j] = xs[j - 1] + 1e-6;
                }
            }
            xs
        })
        .collect();

    let results: Vec<(Vec<f64>, f64, bool)> = starts
        .into_par_iter()
        .map(|s| descend(d, h, s, budget))
        .collect();

    let any_descent = results.iter().any(|r| r.2);
    let (xs, cost, _) = results
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("at least one restart");
    Ok(BruteForceResult {
        offsets: OffsetSet::from_unsorted(xs)?,
        cost,
        budget_exhausted: !any_descent,
    })
}

/// Monte Carlo estimate of the mechanism cost: sample the noise, apply the
/// server offsets, and score the nearest result. Batches use derived seeds
/// and compensated summation, so the estimate is deterministic for a fixed
/// seed regardless of thread count.
pub fn mc_cost(mech: &MechanismConfig, n: u64, seed: u64) -> CostEstimate {
    assert!(n >= 1_000, "need at least 1e3 samples");
    const BATCH: u64 = 1 << 16;
    let batches: Vec<(u64, u64)> = (0..n.div_ceil(BATCH))
        .map(|i| (i, (n - i * BATCH).min(BATCH)))
        .collect();

    let partials: Vec<(f64, f64)> = batches
        .par_iter()
        .map(|&(i, count)| {
            let mut rng = Rng::new(child_seed(seed, i));
            let mut sum = Kahan::default();
            let mut sum_sq = Kahan::default();
            for _ in 0..count {
                let x = mech.noise.sample(&mut rng);
                let val = mech
                    .offsets
                    .iter()
                    .map(|a| mech.h.eval(mech.domain.distance(x + a, 0.0)))
                    .fold(f64::INFINITY, f64::min);
                sum.add(val);
                sum_sq.add(val * val);
            }
            (sum.value(), sum_sq.value())
        })
        .collect();

    let mut sum = Kahan::default();
    let mut sum_sq = Kahan::default();
    for (s, q) in partials {
        sum.add(s);
        sum_sq.add(q);
    }
    let mean = sum.value() / n as f64;
    let var = (sum_sq.value() / n as f64 - mean * mean).max(0.0);
    CostEstimate { mean, stderr: (var / n as f64).sqrt(), n }
}

/// Compensated (Kahan) accumulator.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::line_mech::{closed_form_cost, laplace_density, optimal_offsets_closed};
    use crate::ring_mech::local_ring_mechanism;

    #[test]
    fn rediscovers_k3_line_optimum_from_random_starts() {
        let d = laplace_density(1.0).unwrap();
        let budget = SearchBudget { restarts: 8, seed: 11, ..Default::default() };
        let res = brute_force_offsets(&d, 3, &DisutilityFn::Identity, &budget, None).unwrap();
        assert!((res.cost - 0.5).abs() < 1e-6, "cost {}", res.cost);
        let expect = optimal_offsets_closed(1.0, 3).unwrap();
        for (a, b) in res.offsets.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn k1_line_is_origin() {
        let d = laplace_density(1.0).unwrap();
        let budget = SearchBudget { restarts: 4, seed: 5, ..Default::default() };
        let res = brute_force_offsets(&d, 1, &DisutilityFn::Identity, &budget, None).unwrap();
        assert!((res.cost - 1.0).abs() < 1e-6);
        assert!(res.offsets.as_slice()[0].abs() < 1e-3);
    }

    #[test]
    fn ring_uniform_two_offsets_antipodal() {
        let c = std::f64::consts::TAU;
        let d = PiecewiseExpDensity::normalize(
            vec![crate::density::ExpSegment::new(0.0, c, 0.0, 0.0)],
            Domain::Ring(c),
        )
        .unwrap();
        let budget = SearchBudget { restarts: 6, seed: 3, ..Default::default() };
        let res = brute_force_offsets(&d, 2, &DisutilityFn::Identity, &budget, None).unwrap();
        assert!((res.cost - std::f64::consts::PI / 4.0).abs() < 1e-6, "cost {}", res.cost);
        let xs = res.offsets.as_slice();
        let gap = xs[1] - xs[0];
        assert!((gap - std::f64::consts::PI).abs() < 1e-3, "gap {gap}");
    }

    #[test]
    fn never_beats_certified_line_costs() {
        for eps in [0.5, 1.0, 2.0] {
            for k in 1..=4usize {
                let d = laplace_density(eps).unwrap();
                let warm = optimal_offsets_closed(eps, k).unwrap();
                let budget = SearchBudget { restarts: 4, seed: 17, ..Default::default() };
                let res =
                    brute_force_offsets(&d, k, &DisutilityFn::Identity, &budget, Some(&warm))
                        .unwrap();
                let certified = closed_form_cost(eps, k).unwrap();
                assert!(res.cost >= certified - 1e-6, "eps={eps} k={k}: {} < {certified}", res.cost);
            }
        }
    }

    #[test]
    fn never_beats_certified_ring_local_cost() {
        let (mech, certified) = local_ring_mechanism(1.0, 3).unwrap();
        let budget = SearchBudget { restarts: 4, seed: 23, ..Default::default() };
        let res = brute_force_offsets(
            &mech.density,
            3,
            &DisutilityFn::Identity,
            &budget,
            Some(&mech.offsets),
        )
        .unwrap();
        assert!(res.cost >= certified - 1e-6, "{} < {certified}", res.cost);
    }

    #[test]
    fn mc_cost_matches_exact_and_is_deterministic() {
        let mech = MechanismConfig::line(1.0, 3).unwrap();
        let est = mc_cost(&mech, 1_000_000, 99);
        assert!((est.mean - 0.5).abs() < 4.0 * est.stderr, "{est:?}");
        let again = mc_cost(&mech, 1_000_000, 99);
        assert_eq!(est.mean.to_bits(), again.mean.to_bits());

        let ring = MechanismConfig::ring_local(1.0, 5).unwrap();
        let est = mc_cost(&ring, 1_000_000, 7);
        let exact = ring.exact_cost().unwrap();
        assert!((est.mean - exact).abs() < 4.0 * est.stderr, "{est:?} vs {exact}");
    }
}
