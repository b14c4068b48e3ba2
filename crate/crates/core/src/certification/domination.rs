//! Comparison of the VPSO level process with the dominating chain.

use alloc::vec::Vec;

use rand::Rng;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use super::lchain::run_l_chain;
use super::params::ParameterSet;
use crate::error::{Error, Result};
use crate::geometry::{check_simplex, level_index, level_threshold, LEVEL_INFINITE};
use crate::seeding::{mix64, replica_rng};
use crate::stats::binomial_sigma;
use crate::vpso::OperatorCatalog;

const L_CHAIN_TAG: u64 = 0x4c5f_4348_4149_4e00;

/// Seed base of the dominating-chain replicas, disjoint from the RDS replicas.
pub fn l_chain_base(seed: u64) -> u64 {
    mix64(seed ^ L_CHAIN_TAG)
}

/// `σ_γ(x, N)` for one noise realization: the first `n <= N` with `l(φ(n)x) >= γN`.
pub fn sigma_run<R: Rng + ?Sized>(
    catalog: &OperatorCatalog,
    params: &ParameterSet,
    x0: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Option<usize>> {
    check_simplex(x0)?;
    let thr = params.gamma * n as f64;
    let reached = |x: &[f64]| level_index(x, params.l0, params.d as u32) as f64 >= thr;
    let mut x = x0.to_vec();
    if reached(&x) {
        return Ok(Some(0));
    }
    for k in 1..=n {
        let draw = catalog.sample_with(rng, 1)[0];
        x = catalog.entry(draw.index).apply(&x)?;
        if reached(&x) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// `τ_γ(N)` for one run of the dominating chain.
pub fn tau_run<R: Rng + ?Sized>(params: &ParameterSet, n: usize, rng: &mut R) -> Option<usize> {
    run_l_chain(params, n, params.gamma * n as f64, rng).tau
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DominationRow {
    pub x0: Vec<f64>,
    pub n: usize,
    pub replicas: usize,
    pub p_sigma: f64,
    pub p_tau: f64,
    /// `sqrt(σ²_σ + σ²_τ)` from the two binomial frequencies.
    pub sigma_combined: f64,
    pub pass: bool,
}

impl DominationRow {
    pub fn from_counts(x0: Vec<f64>, n: usize, replicas: usize, sigma_hits: usize, tau_hits: usize) -> Self {
        let ps = sigma_hits as f64 / replicas as f64;
        let pt = tau_hits as f64 / replicas as f64;
        let s = (binomial_sigma(ps, replicas).powi(2) + binomial_sigma(pt, replicas).powi(2)).sqrt();
        Self {
            x0,
            n,
            replicas,
            p_sigma: ps,
            p_tau: pt,
            sigma_combined: s,
            pass: ps >= pt - 3.0 * s,
        }
    }
}

/// Estimates `P(σ_γ(x,N) <= N)` and `P(τ_γ(N) <= N)` for every start and horizon.
pub fn domination_check(
    catalog: &OperatorCatalog,
    params: &ParameterSet,
    x0s: &[Vec<f64>],
    ns: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<Vec<DominationRow>> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    check_catalog(catalog, params)?;
    let mut rows = Vec::new();
    for &n in ns {
        let tau_hits = (0..replicas as u64)
            .filter(|&i| tau_run(params, n, &mut replica_rng(l_chain_base(seed), i)).is_some())
            .count();
        for x0 in x0s {
            let mut sigma_hits = 0;
            for i in 0..replicas as u64 {
                if sigma_run(catalog, params, x0, n, &mut replica_rng(seed, i))?.is_some() {
                    sigma_hits += 1;
                }
            }
            rows.push(DominationRow::from_counts(x0.clone(), n, replicas, sigma_hits, tau_hits));
        }
    }
    Ok(rows)
}

pub fn check_catalog(catalog: &OperatorCatalog, params: &ParameterSet) -> Result<()> {
    if catalog.m() != params.m || catalog.d() != params.d {
        return Err(Error::InvalidArgument(alloc::format!(
            "catalog shape (m={}, d={}) differs from parameters (m={}, d={})",
            catalog.m(),
            catalog.d(),
            params.m,
            params.d
        )));
    }
    Ok(())
}

/// Counts of the two pathwise level bounds over random samples.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Step1Report {
    pub lift_checked: usize,
    pub lift_violations: usize,
    pub drop_checked: usize,
    pub drop_violations: usize,
}

/// A random point at level at least `l`: all coordinates but `top` are at most `d^{−l0−l}`.
pub fn sample_at_level<R: Rng + ?Sized>(m: usize, d: usize, l0: u32, l: u32, top: usize, rng: &mut R) -> Vec<f64> {
    let h = level_threshold(d as u32, l0, l);
    let mut x: Vec<f64> = (0..m).map(|_| h * rng.random::<f64>()).collect();
    x[top] = 0.0;
    let rest: f64 = x.iter().sum();
    x[top] = 1.0 - rest;
    x
}

/// Checks, from random points at level `l ∈ 1..=max_level`, that one purebred operator for
/// each non-dominant type lifts the level to at least `l0 − 2(m−1) + 2l`, and that any
/// `m−1` draws keep it at least `l − (m−1)`.
pub fn step1_pathwise(
    catalog: &OperatorCatalog,
    params: &ParameterSet,
    samples: usize,
    max_level: u32,
    seed: u64,
) -> Result<Step1Report> {
    check_catalog(catalog, params)?;
    let (m, d, l0) = (params.m, params.d, params.l0);
    let mut rng = replica_rng(seed, 0);
    let by_class: Vec<Vec<usize>> = (1..=m)
        .map(|k| (0..catalog.len()).filter(|&i| catalog.classes(i).contains(k)).collect())
        .collect();
    let mut rep = Step1Report::default();
    let back = m as i64 - 1;
    for _ in 0..samples {
        let l = rng.random_range(1..=max_level);
        let top = rng.random_range(0..m);
        let x = sample_at_level(m, d, l0, l, top, &mut rng);
        let start = level_index(&x, l0, d as u32);
        if start < l {
            return Err(Error::InvalidArgument(alloc::format!("sampled level {start} below {l}")));
        }
        let l = start.min(max_level * 4) as i64;

        let mut order: Vec<usize> = (0..m).filter(|&k| k != top).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut y = x.clone();
        for k in order {
            let choices = &by_class[k];
            if choices.is_empty() {
                return Err(Error::InvalidArgument(alloc::format!("no purebred operator for type {}", k + 1)));
            }
            y = catalog.entry(choices[rng.random_range(0..choices.len())]).apply(&y)?;
        }
        let lifted = level_as_i64(&y, l0, d);
        rep.lift_checked += 1;
        if lifted < l0 as i64 - 2 * back + 2 * l {
            rep.lift_violations += 1;
        }

        let mut z = x;
        for draw in catalog.sample_with(&mut rng, m - 1) {
            z = catalog.entry(draw.index).apply(&z)?;
        }
        rep.drop_checked += 1;
        if level_as_i64(&z, l0, d) < l - back {
            rep.drop_violations += 1;
        }
    }
    Ok(rep)
}

fn level_as_i64(x: &[f64], l0: u32, d: usize) -> i64 {
    match level_index(x, l0, d as u32) {
        LEVEL_INFINITE => i64::MAX,
        v => v as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::certification::params::Overrides;
    use crate::vpso::canonical_purebred;

    #[test]
    fn squaring_lifts_level_exactly() {
        let ps = ParameterSet::reference_table().unwrap();
        let v = canonical_purebred(2, 2, 1).unwrap();
        for l in 1..20u32 {
            let x1 = level_threshold(2, ps.l0, l);
            let y = v.apply(&[x1, 1.0 - x1]).unwrap();
            assert_eq!(y[0], x1 * x1);
            assert_eq!(level_index(&y, ps.l0, 2), ps.l0 + 2 * l);
            assert!(level_index(&y, ps.l0, 2) as i64 >= ps.l0 as i64 - 2 + 2 * l as i64);
        }
    }

    #[test]
    fn pathwise_bounds_hold() {
        for (m, d) in [(2, 2), (3, 2), (3, 3), (4, 2)] {
            let cat = OperatorCatalog::canonical(m, d).unwrap();
            let ps = ParameterSet::derive(m, d, cat.nu_lower(), &Overrides::new()).unwrap();
            let rep = step1_pathwise(&cat, &ps, 2000, 30, 17).unwrap();
            assert_eq!(rep.lift_violations, 0, "m={m} d={d}");
            assert_eq!(rep.drop_violations, 0, "m={m} d={d}");
        }
    }

    #[test]
    fn small_domination_run() {
        let cat = OperatorCatalog::canonical(2, 2).unwrap();
        let ps = ParameterSet::reference_table().unwrap();
        let rows = domination_check(&cat, &ps, &[vec![0.9, 0.1]], &[20], 500, 5).unwrap();
        // the start is already at level 1 and the chain passes γN after one step
        assert_eq!(rows[0].p_sigma, 1.0);
        assert_eq!(rows[0].p_tau, 1.0);
        assert!(rows[0].pass);
        assert!(domination_check(&cat, &ps, &[vec![0.5, 0.5]], &[20], 0, 5).is_err());
    }

    #[test]
    fn runs_are_reproducible() {
        let cat = OperatorCatalog::canonical(2, 2).unwrap();
        let ps = ParameterSet::reference_table().unwrap();
        let a = sigma_run(&cat, &ps, &[0.5, 0.5], 50, &mut replica_rng(4, 2)).unwrap();
        let b = sigma_run(&cat, &ps, &[0.5, 0.5], 50, &mut replica_rng(4, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(tau_run(&ps, 50, &mut replica_rng(4, 2)), Some(1));
    }
}
