//! Randomized checks of the Volterra operator properties and of the pathwise coupling
//! between the random dynamical system and the height chain.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use crate::certification::hchain::h_step;
use crate::error::{Error, Result};
use crate::geometry::{height, Metric, PointSimplex};
use crate::seeding::replica_rng;
use crate::vpso::{canonical_purebred, check_height_bounds, multisets, renormalize, ClassSet, OperatorCatalog, PsoTensor};

/// A uniform point of the simplex, from normalized exponentials.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut x: Vec<f64> = e.iter().map(|v| v / s).collect();
    // the sum of the quotients is within a few ulps of one
    renormalize(&mut x).expect("normalized exponentials");
    x
}

/// A random Volterra tensor that tries to keep every type of `pure` purebred.
///
/// A parent multiset whose types are distinct and all in `pure` has no admissible child;
/// it falls back to its first parent, and that type is dropped from the returned set.
pub fn random_volterra<R: Rng + ?Sized>(rng: &mut R, m: usize, d: usize, pure: ClassSet) -> Result<(PsoTensor, ClassSet)> {
    let mut kept = pure;
    let keys = multisets(m, d);
    let mut coeffs = vec![0.0; keys.len() * m];
    for (j, key) in keys.iter().enumerate() {
        let mut allowed: Vec<usize> = (0..m)
            .filter(|&k| {
                let ck = key.iter().filter(|&&i| i == k).count();
                ck >= 1 && (!pure.contains(k + 1) || ck >= 2)
            })
            .collect();
        if allowed.is_empty() {
            kept.0 &= !(1 << key[0]);
            allowed.push(key[0]);
        }
        let w: Vec<f64> = allowed.iter().map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = w.iter().sum();
        for (k, wk) in allowed.iter().zip(&w) {
            coeffs[j * m + k] = wk / s;
        }
    }
    let t = PsoTensor::from_fn(m, d, |p, k| {
        let key: Vec<usize> = p.iter().map(|i| i - 1).collect();
        coeffs[keys.binary_search(&key).unwrap() * m + k - 1]
    })?;
    Ok((t, kept))
}

/// A random stochastic tensor with sparse rows, not necessarily Volterra.
pub fn random_sparse_tensor<R: Rng + ?Sized>(rng: &mut R, m: usize, d: usize) -> Result<PsoTensor> {
    let keys = multisets(m, d);
    let rows: Vec<Vec<f64>> = keys
        .iter()
        .map(|_| {
            let mut w: Vec<f64> = (0..m)
                .map(|_| if rng.random::<f64>() < 0.5 { rng.random::<f64>() + 0.1 } else { 0.0 })
                .collect();
            if w.iter().all(|v| *v == 0.0) {
                w[rng.random_range(0..m)] = 1.0;
            }
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        })
        .collect();
    PsoTensor::from_fn(m, d, |p, k| {
        let key: Vec<usize> = p.iter().map(|i| i - 1).collect();
        rows[keys.binary_search(&key).unwrap()][k - 1]
    })
}

/// A random tensor that is purebred in every type; exists only for `d > m`.
pub fn random_all_purebred<R: Rng + ?Sized>(rng: &mut R, m: usize, d: usize) -> Result<PsoTensor> {
    if d <= m {
        return Err(Error::InvalidArgument(alloc::format!(
            "no all-purebred tensor for m = {m}, d = {d}"
        )));
    }
    let keys = multisets(m, d);
    let rows: Vec<Vec<f64>> = keys
        .iter()
        .map(|key| {
            let w: Vec<f64> = (0..m)
                .map(|k| {
                    if key.iter().filter(|&&i| i == k).count() >= 2 {
                        rng.random::<f64>() + 1e-3
                    } else {
                        0.0
                    }
                })
                .collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        })
        .collect();
    PsoTensor::from_fn(m, d, |p, k| {
        let key: Vec<usize> = p.iter().map(|i| i - 1).collect();
        rows[keys.binary_search(&key).unwrap()][k - 1]
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tally {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            violations: 0,
        }
    }

    fn record(&mut self, ok: bool) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
        }
    }
}

pub const PROPERTY_NAMES: [&str; 6] = [
    "simplex preservation",
    "vertex fixedness",
    "face invariance",
    "height bounds",
    "all purebred implies volterra",
    "lipschitz factor",
];

/// One tally per entry of [`PROPERTY_NAMES`].
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PropertyReport {
    pub cases: usize,
    pub tallies: Vec<Tally>,
}

impl PropertyReport {
    pub fn violations(&self) -> usize {
        self.tallies.iter().map(|t| t.violations).sum()
    }
}

/// Runs `cases` random cases of every property with `m ∈ 2..=max_m`, `d ∈ 2..=max_d`.
/// Case `i` draws from replica stream `i` of `seed`.
pub fn property_suite(cases: usize, max_m: usize, max_d: usize, seed: u64) -> Result<PropertyReport> {
    if max_m < 2 || max_d < 2 {
        return Err(Error::InvalidArgument("need max_m >= 2 and max_d >= 2".into()));
    }
    let mut t: Vec<Tally> = PROPERTY_NAMES.iter().map(|n| Tally::new(n)).collect();
    for i in 0..cases {
        let mut rng = replica_rng(seed, i as u64);
        let m = rng.random_range(2..=max_m);
        let d = rng.random_range(2..=max_d);
        property_case(&mut rng, m, d, &mut t)?;
    }
    Ok(PropertyReport { cases, tallies: t })
}

fn property_case<R: Rng + ?Sized>(rng: &mut R, m: usize, d: usize, t: &mut [Tally]) -> Result<()> {
    let mut pure = ClassSet::default();
    for k in 1..=m {
        if rng.random::<bool>() {
            pure.insert(k);
        }
    }
    let (v, kept) = random_volterra(rng, m, d, pure)?;
    let x = random_simplex(rng, m);

    let y = v.apply(&x)?;
    t[0].record(y.iter().all(|c| *c >= 0.0) && (y.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

    let mut fixed = true;
    for k in 1..=m {
        let e = PointSimplex::vertex(m, k)?;
        fixed &= v.apply(e.weights())? == e.weights();
    }
    t[1].record(fixed);

    // move coordinate j onto the largest remaining one
    let j = rng.random_range(0..m);
    let mut z = x.clone();
    let zj = z[j];
    z[j] = 0.0;
    let top = (0..m).fold(if j == 0 { 1 } else { 0 }, |a, i| if i != j && z[i] > z[a] { i } else { a });
    z[top] += zj;
    t[2].record(v.apply(&z)?[j] == 0.0);

    let kept_ok = kept.iter().all(|k| v.is_purebred(k));
    let canon = canonical_purebred(m, d, rng.random_range(1..=m))?;
    t[3].record(
        v.is_volterra()
            && kept_ok
            && check_height_bounds(&v, &x)?.is_empty()
            && check_height_bounds(&canon, &x)?.is_empty(),
    );

    if d > m {
        let w = random_all_purebred(rng, m, d)?;
        t[4].record(w.purebred_types().iter().count() == m && w.is_volterra());
    } else {
        let w = random_sparse_tensor(rng, m, d)?;
        t[4].record(w.purebred_types().iter().count() < m || w.is_volterra());
    }

    let x2 = random_simplex(rng, m);
    let lhs = Metric::Euclidean.distance(&y, &v.apply(&x2)?);
    t[5].record(lhs <= (d * m) as f64 * Metric::Euclidean.distance(&x, &x2) + 1e-15);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CouplingReport {
    pub pairs: usize,
    pub steps: usize,
    pub comparisons: usize,
    pub violations: usize,
    /// Largest `hei_k − H_n` seen, negative when the bound always held strictly.
    pub worst_excess: f64,
}

/// A cloud of `points` simplex points with `x_k <= h`; the first has `x_k = h` exactly.
pub fn sample_diamond<R: Rng + ?Sized>(rng: &mut R, m: usize, k: usize, h: f64, points: usize) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > m {
        return Err(Error::IndexOutOfRange { index: k, max: m });
    }
    let mut out = Vec::with_capacity(points);
    for p in 0..points {
        let xk = if p == 0 { h } else { h * rng.random::<f64>() };
        let rest = random_simplex(rng, m - 1);
        let mut x = Vec::with_capacity(m);
        let mut it = rest.iter();
        for i in 0..m {
            x.push(if i == k - 1 { xk } else { (1.0 - xk) * it.next().unwrap() });
        }
        renormalize(&mut x)?;
        out.push(x);
    }
    Ok(out)
}

/// Checks `hei_k(φ(n) C) <= H_n` along `steps` draws for `pairs` random pairs of a sample
/// `C ⊂ D^k_h` and a noise stream, with `h ∈ (0, h_max]` and `H_0 = h`.
pub fn coupling_check(
    catalog: &OperatorCatalog,
    h_max: f64,
    pairs: usize,
    steps: usize,
    cloud: usize,
    seed: u64,
) -> Result<CouplingReport> {
    if !(h_max > 0.0 && h_max <= 1.0) || cloud == 0 {
        return Err(Error::InvalidArgument(alloc::format!("bad coupling setup h_max = {h_max}, cloud = {cloud}")));
    }
    let (m, d) = (catalog.m(), catalog.d());
    let mut rep = CouplingReport {
        pairs,
        steps,
        comparisons: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    for i in 0..pairs {
        let mut rng = replica_rng(seed, i as u64);
        let k = rng.random_range(1..=m);
        let h = h_max * (1.0 - rng.random::<f64>());
        let mut set = sample_diamond(&mut rng, m, k, h, cloud)?;
        let mut big_h = h;
        for draw in catalog.sample_with(&mut rng, steps) {
            catalog.step_set(draw, &mut set)?;
            big_h = h_step(big_h, draw.classes.contains(k), d);
            let hei = height(&set, k)?;
            rep.comparisons += 1;
            rep.worst_excess = rep.worst_excess.max(hei - big_h);
            if hei > big_h {
                rep.violations += 1;
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certification::ParameterSet;
    use crate::geometry::check_simplex;

    #[test]
    fn small_suite_is_clean() {
        let r = property_suite(500, 4, 4, 3).unwrap();
        assert_eq!(r.tallies.len(), 6);
        assert!(r.tallies.iter().all(|t| t.checked == 500));
        assert_eq!(r.violations(), 0, "{r:?}");
    }

    #[test]
    fn all_purebred_needs_repeats() {
        let mut rng = replica_rng(1, 0);
        assert!(random_all_purebred(&mut rng, 3, 3).is_err());
        let w = random_all_purebred(&mut rng, 2, 3).unwrap();
        assert!(w.is_purebred(1) && w.is_purebred(2) && w.is_volterra());
    }

    #[test]
    fn diamond_samples() {
        let mut rng = replica_rng(2, 0);
        let s = sample_diamond(&mut rng, 3, 2, 0.01, 20).unwrap();
        assert_eq!(s[0][1], 0.01);
        for x in &s {
            check_simplex(x).unwrap();
            assert!(x[1] <= 0.01);
        }
    }

    #[test]
    fn coupling_small() {
        let cat = OperatorCatalog::canonical(2, 2).unwrap();
        let ps = ParameterSet::reference_table().unwrap();
        let r = coupling_check(&cat, ps.kappa, 50, 100, 4, 9).unwrap();
        assert_eq!(r.comparisons, 5000);
        assert_eq!(r.violations, 0);
        assert!(r.worst_excess <= 0.0);
    }
}
