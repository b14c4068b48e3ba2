//! Ball growth bound and covering certification of compact sets.
//!
//! The radii involved are far below the smallest positive `f64` (for the `m = d = 2` table
//! `r ≈ e^{−9000}`), so radii are carried as natural logarithms throughout.

use alloc::vec::Vec;

use rand::Rng;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use super::hchain::diamonds_bound;
use super::params::ParameterSet;
use crate::error::{Error, Result};
use crate::geometry::{distance_to_vertices, Metric};
use crate::seeding::replica_rng;
use crate::stats::binomial_sigma;
use crate::testsets::CompactSetApprox;
use crate::vpso::OperatorCatalog;

/// `1 + γ + log m / log d`.
fn growth_exponent(params: &ParameterSet) -> f64 {
    1.0 + params.gamma + (params.m as f64).ln() / (params.d as f64).ln()
}

/// `1 − c·r^β` for `r = e^{ln_r}`.
pub fn simplified_bound_ln(ln_r: f64, params: &ParameterSet) -> f64 {
    -(params.c.ln() + params.beta * ln_r).exp_m1()
}

/// The two-factor bound `(1−e^{−α2 N})(1 − m κ^{−α1}(2d^{−l0})^{α1} e^{−γ α1 log(d) N})`.
pub fn exact_bound(n: f64, params: &ParameterSet) -> f64 {
    let first = -(-params.alpha2 * n).exp_m1();
    first * second_factor(n, params)
}

fn second_factor(n: f64, params: &ParameterSet) -> f64 {
    let d = params.d as f64;
    let h = 2.0 * d.powi(-(params.l0 as i32));
    let decay = (-params.gamma * params.alpha1 * d.ln() * n).exp();
    // equals diamonds_bound at the radius reached after N steps
    1.0 - (1.0 - diamonds_bound(h, params)) * decay
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BallBound {
    pub ln_r: f64,
    /// `1 − c r^β`.
    pub simplified: f64,
    /// `N = ⌈−log_d(r·d^{l0}) / (1+γ+log m/log d)⌉`.
    pub n: f64,
    pub exact: f64,
    /// `1 − e^{−α3 N}`.
    pub simplified_at_n: f64,
    /// Smallest `N` from which the exact form dominates `1 − e^{−α3 N}`, if any.
    pub crossover: Option<f64>,
}

pub fn ball_bound(r: f64, params: &ParameterSet) -> Result<BallBound> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("radius {r} must be positive")));
    }
    Ok(ball_bound_ln(r.ln(), params))
}

pub fn ball_bound_ln(ln_r: f64, params: &ParameterSet) -> BallBound {
    let ln_d = (params.d as f64).ln();
    let n = (-(ln_r + params.l0 as f64 * ln_d) / (growth_exponent(params) * ln_d)).ceil().max(0.0);
    BallBound {
        ln_r,
        simplified: simplified_bound_ln(ln_r, params),
        n,
        exact: exact_bound(n, params),
        simplified_at_n: -(-params.alpha3 * n).exp_m1(),
        crossover: crossover(params),
    }
}

/// The last sign change of `exact(N) − (1 − e^{−α3 N})`, when the difference is
/// eventually non-negative.
///
/// For large `N` the deficits behave like `e^{−α2 N} + K e^{−ρ N}` against `e^{−α3 N}`
/// with `ρ = γ α1 log d`, so domination needs `α3 < min{α2, ρ}`.
pub fn crossover(params: &ParameterSet) -> Option<f64> {
    let rho = params.gamma * params.alpha1 * (params.d as f64).ln();
    if !(params.alpha3 < params.alpha2.min(rho)) {
        return None;
    }
    let gap = |n: f64| exact_bound(n, params) + (-params.alpha3 * n).exp_m1();
    let mut hi = 1.0f64;
    while gap(hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    // bisection between the last negative and first non-negative dyadic point
    let mut lo = hi / 2.0;
    if gap(lo) >= 0.0 {
        return Some(lo.max(1.0).ceil());
    }
    while hi - lo > 0.5 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi.ceil())
}

/// A ball of the cover.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanBall {
    pub center: Vec<f64>,
    pub ln_radius: f64,
    pub members: usize,
    /// `1 − c·2^{−β}·diam^β` with `diam = 2r`.
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertificationPlan {
    /// `Δ`, the dimension being certified.
    pub dimension: f64,
    /// `δ = β − Δ`.
    pub delta: f64,
    pub epsilon: f64,
    /// `ε1 = ε / (c·2^{−β})`.
    pub epsilon1: f64,
    pub ln_r: f64,
    /// `ln ε2 = ln 2r`.
    pub ln_epsilon2: f64,
    /// Steps `N` associated with `r`.
    pub n: f64,
    pub balls: Vec<PlanBall>,
    /// `Σ c·2^{−β}·diam_i^β`.
    pub union_sum: f64,
    /// `1 − union_sum`.
    pub total_budget: f64,
}

fn ln_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    metric.distance(a, b).ln()
}

/// Greedy cover: each uncovered point opens a ball, which absorbs every point within `r`.
fn greedy_cover(points: &[Vec<f64>], ln_r: f64, metric: Metric) -> Vec<(usize, usize)> {
    let mut covered = alloc::vec![false; points.len()];
    let mut balls = Vec::new();
    for i in 0..points.len() {
        if covered[i] {
            continue;
        }
        let mut members = 0;
        for j in i..points.len() {
            if !covered[j] && ln_distance(&points[i], &points[j], metric) <= ln_r {
                covered[j] = true;
                members += 1;
            }
        }
        balls.push((i, members));
    }
    balls
}

/// Covers `set` with balls whose union-bound failure mass is below `ε`.
///
/// The radius starts from `c·r^β = ε/2` for a single ball and shrinks until the greedy
/// cover's ball count `k` satisfies `k·c·r^β <= ε/2`; it is also capped so that `N >= 1`.
pub fn cover_and_certify(
    set: &CompactSetApprox,
    dimension: f64,
    params: &ParameterSet,
    epsilon: f64,
) -> Result<CertificationPlan> {
    if !(dimension < params.beta) {
        return Err(Error::DimensionExceedsExponent {
            delta: dimension,
            beta: params.beta,
        });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("ε = {epsilon} outside (0, 1)")));
    }
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let ln_c = params.c.ln();
    let ln_d = (params.d as f64).ln();
    let ln_r_cap = -(params.l0 as f64 + growth_exponent(params)) * ln_d;
    let points = &set.points;
    let metric = Metric::Euclidean;
    let mut k = 1usize;
    let (ln_r, balls) = loop {
        let ln_r = (((0.5 * epsilon / k as f64).ln() - ln_c) / params.beta).min(ln_r_cap);
        let balls = greedy_cover(points, ln_r, metric);
        if balls.len() <= k {
            break (ln_r, balls);
        }
        k = balls.len();
    };
    let fail = (ln_c + params.beta * ln_r).exp();
    let plan_balls: Vec<PlanBall> = balls
        .iter()
        .map(|&(i, members)| PlanBall {
            center: points[i].clone(),
            ln_radius: ln_r,
            members,
            budget: 1.0 - fail,
        })
        .collect();
    let union_sum = fail * plan_balls.len() as f64;
    Ok(CertificationPlan {
        dimension,
        delta: params.beta - dimension,
        epsilon,
        epsilon1: epsilon / (params.c * 2f64.powf(-params.beta)),
        ln_r,
        ln_epsilon2: ln_r + core::f64::consts::LN_2,
        n: ball_bound_ln(ln_r, params).n,
        balls: plan_balls,
        union_sum,
        total_budget: 1.0 - union_sum,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpotCheck {
    pub balls: usize,
    pub trials: usize,
    pub successes: usize,
    pub frequency: f64,
    /// Mean budget of the checked balls.
    pub budget: f64,
    pub sigma: f64,
    pub pass: bool,
}

/// A point of the ball around `center` of radius `e^{ln_r}`, projected back to the simplex.
pub fn sample_in_ball<R: Rng + ?Sized>(center: &[f64], ln_r: f64, rng: &mut R) -> Vec<f64> {
    let m = center.len();
    let mut u: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
    let mean = u.iter().sum::<f64>() / m as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rad = ln_r.exp() * rng.random::<f64>();
    if norm == 0.0 || rad == 0.0 {
        return center.to_vec();
    }
    let mut x: Vec<f64> = center.iter().zip(&u).map(|(c, v)| (c + rad * v / norm).max(0.0)).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}

/// One trial: iterate from a ball sample until within `threshold` of a vertex.
pub fn spot_trial<R: Rng + ?Sized>(
    catalog: &OperatorCatalog,
    ball: &PlanBall,
    horizon: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<bool> {
    let mut x = sample_in_ball(&ball.center, ball.ln_radius, rng);
    crate::vpso::renormalize(&mut x)?;
    for _ in 0..=horizon {
        if distance_to_vertices(&x) < threshold {
            return Ok(true);
        }
        let draw = catalog.sample_with(rng, 1)[0];
        x = catalog.entry(draw.index).apply(&x)?;
    }
    Ok(false)
}

/// Monte Carlo check of the first `balls` cover balls (cycling if the plan has fewer).
#[allow(clippy::too_many_arguments)]
pub fn spot_check(
    plan: &CertificationPlan,
    catalog: &OperatorCatalog,
    balls: usize,
    trials_per_ball: usize,
    horizon: usize,
    threshold: f64,
    seed: u64,
) -> Result<SpotCheck> {
    if plan.balls.is_empty() || balls == 0 || trials_per_ball == 0 {
        return Err(Error::EmptySet);
    }
    let mut successes = 0;
    let mut budget = 0.0;
    for b in 0..balls {
        let ball = &plan.balls[b % plan.balls.len()];
        budget += ball.budget;
        for t in 0..trials_per_ball {
            let mut rng = replica_rng(seed, (b * trials_per_ball + t) as u64);
            if spot_trial(catalog, ball, horizon, threshold, &mut rng)? {
                successes += 1;
            }
        }
    }
    Ok(spot_summary(balls, balls * trials_per_ball, successes, budget / balls as f64))
}

pub fn spot_summary(balls: usize, trials: usize, successes: usize, budget: f64) -> SpotCheck {
    let frequency = successes as f64 / trials as f64;
    let sigma = binomial_sigma(budget.clamp(0.0, 1.0), trials);
    SpotCheck {
        balls,
        trials,
        successes,
        frequency,
        budget,
        sigma,
        pass: frequency >= budget - 3.0 * sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certification::params::Overrides;
    use crate::testsets::{cantor_log_ratio_for_dimension, make_cantor_cloud_log, Embedding, Recipe};

    fn table() -> ParameterSet {
        ParameterSet::reference_table().unwrap()
    }

    #[test]
    fn vacuous_threshold() {
        let ps = table();
        let ln_r = -ps.c.ln() / ps.beta;
        assert!(simplified_bound_ln(ln_r, &ps).abs() < 1e-9);
    }

    #[test]
    fn table_bound_at_small_radius() {
        let ps = table();
        let b = ball_bound(1e-3, &ps).unwrap();
        assert!(b.simplified > 0.0 && b.simplified < 1e-2);
        // N = ⌈(ln 1000 − 2 ln 2)/(2 ln 2)⌉ = ⌈3.98⌉
        assert_eq!(b.n, 4.0);
        // the second factor is negative until e^{−γ α1 ln2 N} < 1/(2 κ^{−α1} (1/2)^{α1})
        assert!(b.exact < 0.0);
        assert!(b.exact < b.simplified_at_n);
        assert_eq!(b.crossover, None);
    }

    #[test]
    fn crossover_when_alpha3_small() {
        let mut o = Overrides::new();
        o.insert(crate::certification::params::Param::Alpha3, 1e-14);
        let ps = ParameterSet::derive(2, 2, 0.5, &o).unwrap();
        let n = crossover(&ps).unwrap();
        let gap = |n: f64| exact_bound(n, &ps) - (1.0 - (-ps.alpha3 * n).exp());
        assert!(gap(n) >= 0.0 && gap(n - 1.0) < 0.0);
        assert!(gap(4.0 * n) >= 0.0);
    }

    #[test]
    fn singleton_plan() {
        let ps = table();
        let h = Recipe::Singleton { point: alloc::vec![0.5, 0.5] }.build().unwrap();
        let plan = cover_and_certify(&h, 0.0, &ps, 0.5).unwrap();
        assert_eq!(plan.balls.len(), 1);
        assert!((plan.union_sum - 0.25).abs() < 1e-12);
        assert!(plan.total_budget >= 1.0 - plan.epsilon);
        assert!(plan.ln_r < -8000.0);
    }

    #[test]
    fn cantor_plan_union_bound() {
        let ps = table();
        let lr = cantor_log_ratio_for_dimension(1e-5).unwrap();
        let emb = Embedding::SimplexEdge { m: 2, i: 1, j: 2, lo: 0.2, hi: 0.8 };
        let h = make_cantor_cloud_log(lr, 4, emb).unwrap();
        let plan = cover_and_certify(&h, h.nominal_dimension, &ps, 0.5).unwrap();
        assert!(!plan.balls.is_empty() && plan.balls.len() <= h.len());
        assert_eq!(plan.balls.iter().map(|b| b.members).sum::<usize>(), h.len());
        let fail: f64 = plan.balls.iter().map(|b| 1.0 - b.budget).sum();
        assert!((fail - plan.union_sum).abs() < 1e-12);
        assert!(plan.union_sum <= plan.epsilon && plan.total_budget > 0.0);
        let err = cover_and_certify(&h, 1.0, &ps, 0.5).unwrap_err();
        assert!(matches!(err, Error::DimensionExceedsExponent { .. }));
    }

    #[test]
    fn greedy_cover_merges_close_points() {
        let pts = alloc::vec![alloc::vec![0.0, 1.0], alloc::vec![0.1, 0.9], alloc::vec![0.5, 0.5]];
        let balls = greedy_cover(&pts, 0.2f64.ln(), Metric::Euclidean);
        assert_eq!(balls, alloc::vec![(0, 2), (2, 1)]);
    }

    #[test]
    fn spot_check_singleton() {
        let ps = table();
        let cat = OperatorCatalog::canonical(2, 2).unwrap();
        let h = Recipe::Singleton { point: alloc::vec![0.5, 0.5] }.build().unwrap();
        let plan = cover_and_certify(&h, 0.0, &ps, 0.5).unwrap();
        let sc = spot_check(&plan, &cat, 2, 50, 500, 0.05, 3).unwrap();
        assert_eq!(sc.trials, 100);
        assert!(sc.pass);
    }
}
