//! Polynomial stochastic operators on the simplex, their Volterra and purebred classes,
//! and the random dynamical system obtained by iterating i.i.d. draws from a catalog.
//!
//! Types are one-based in the public API. Coefficients are stored once per sorted parent
//! multiset, which makes the permutation symmetry structural; `apply` expands each
//! multiset with its multinomial multiplicity.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::geometry::{check_simplex, PointSimplex, SIMPLEX_TOL};

/// Largest supported number of types (class labels are bit sets).
pub const MAX_TYPES: usize = 64;

/// All sorted multisets of size `d` over `0..m`, in lexicographic order.
pub fn multisets(m: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; d];
    loop {
        out.push(cur.clone());
        // next non-decreasing sequence
        let mut i = d;
        while i > 0 && cur[i - 1] == m - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        let v = cur[i - 1] + 1;
        for c in cur[i - 1..].iter_mut() {
            *c = v;
        }
    }
}

/// Number of orderings of a sorted multiset: `d! / Π c_i!`.
fn multiplicity(key: &[usize]) -> f64 {
    let mut r = 1.0;
    let mut run = 0;
    for i in 0..key.len() {
        run = if i > 0 && key[i] == key[i - 1] { run + 1 } else { 1 };
        // multiply by (i+1)/run incrementally
        r = r * (i + 1) as f64 / run as f64;
    }
    r.round()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Formats a zero-based key as the one-based tuple `(i1,...,id)`.
pub fn key_label(key: &[usize]) -> String {
    let parts: Vec<String> = key.iter().map(|i| format!("{}", i + 1)).collect();
    format!("({})", parts.join(","))
}

/// A set of one-based type labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ClassSet(pub u64);

impl ClassSet {
    pub fn contains(self, k: usize) -> bool {
        (1..=MAX_TYPES).contains(&k) && self.0 >> (k - 1) & 1 == 1
    }

    pub fn insert(&mut self, k: usize) {
        self.0 |= 1 << (k - 1);
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (1..=MAX_TYPES).filter(move |&k| self.contains(k))
    }
}

/// Heredity coefficients `p^{i1..id}_k` of a PSO of degree `d` on `m` types.
#[derive(Debug, Clone, PartialEq)]
pub struct PsoTensor {
    m: usize,
    d: usize,
    keys: Vec<Vec<usize>>,
    mult: Vec<f64>,
    /// `coeffs[key * m + k]`
    coeffs: Vec<f64>,
}

impl PsoTensor {
    /// Builds a tensor from a rule `f(parents, k)` with one-based sorted parents and child.
    pub fn from_fn(m: usize, d: usize, f: impl Fn(&[usize], usize) -> f64) -> Result<Self> {
        check_shape(m, d)?;
        let keys = multisets(m, d);
        let mut coeffs = Vec::with_capacity(keys.len() * m);
        let mut one = vec![0usize; d];
        for key in &keys {
            for (o, i) in one.iter_mut().zip(key) {
                *o = i + 1;
            }
            for k in 1..=m {
                coeffs.push(f(&one, k));
            }
        }
        Self::from_parts(m, d, keys, coeffs)
    }

    /// Builds a tensor from explicit `(parents, child, value)` entries, one-based; parents
    /// must be sorted. Missing entries are zero.
    pub fn from_entries<I>(m: usize, d: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, usize, f64)>,
    {
        check_shape(m, d)?;
        let keys = multisets(m, d);
        let mut coeffs = vec![0.0; keys.len() * m];
        let mut seen = vec![false; keys.len() * m];
        for (parents, k, v) in entries {
            let label = parents.iter().map(|p| format!("{p}")).collect::<Vec<_>>().join(",");
            let label = format!("({label}) {k}");
            if parents.len() != d {
                return Err(Error::InvalidTensor {
                    key: label,
                    reason: format!("expected {d} parents"),
                });
            }
            if parents.iter().chain(core::iter::once(&k)).any(|&i| i == 0 || i > m) {
                return Err(Error::InvalidTensor {
                    key: label,
                    reason: format!("type index outside 1..={m}"),
                });
            }
            if parents.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidTensor {
                    key: label,
                    reason: "parent indices not sorted".into(),
                });
            }
            let zero: Vec<usize> = parents.iter().map(|p| p - 1).collect();
            let idx = keys.binary_search(&zero).expect("sorted key") * m + (k - 1);
            if seen[idx] {
                return Err(Error::InvalidTensor {
                    key: label,
                    reason: "duplicate entry".into(),
                });
            }
            seen[idx] = true;
            coeffs[idx] = v;
        }
        Self::from_parts(m, d, keys, coeffs)
    }

    fn from_parts(m: usize, d: usize, keys: Vec<Vec<usize>>, coeffs: Vec<f64>) -> Result<Self> {
        for (j, key) in keys.iter().enumerate() {
            let row = &coeffs[j * m..(j + 1) * m];
            if let Some(k) = row.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidTensor {
                    key: format!("{} {}", key_label(key), k + 1),
                    reason: format!("coefficient {} is not a finite non-negative number", row[k]),
                });
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidTensor {
                    key: key_label(key),
                    reason: format!("child probabilities sum to {s}"),
                });
            }
        }
        let mult = keys.iter().map(|k| multiplicity(k)).collect();
        Ok(Self {
            m,
            d,
            keys,
            mult,
            coeffs,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `p^{parents}_k` for one-based parents in any order.
    pub fn coeff(&self, parents: &[usize], k: usize) -> f64 {
        let mut key: Vec<usize> = parents.iter().map(|p| p - 1).collect();
        key.sort_unstable();
        match self.keys.binary_search(&key) {
            Ok(j) => self.coeffs[j * self.m + k - 1],
            Err(_) => 0.0,
        }
    }

    /// Non-zero entries as one-based `(parents, child, value)`, in key order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, usize, f64)> + '_ {
        self.keys.iter().enumerate().flat_map(move |(j, key)| {
            (0..self.m).filter_map(move |k| {
                let v = self.coeffs[j * self.m + k];
                (v != 0.0).then(|| (key.iter().map(|i| i + 1).collect(), k + 1, v))
            })
        })
    }

    /// The polynomial of the operator evaluated as written, without renormalization.
    pub fn apply_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.m];
        for (j, key) in self.keys.iter().enumerate() {
            let mut mono = x[key[0]];
            for &i in &key[1..] {
                mono *= x[i];
            }
            if mono == 0.0 {
                continue;
            }
            let w = self.mult[j] * mono;
            for (o, p) in out.iter_mut().zip(&self.coeffs[j * self.m..(j + 1) * self.m]) {
                if *p != 0.0 {
                    *o += p * w;
                }
            }
        }
        Ok(out)
    }

    /// `Vx`, renormalized onto the simplex. The image of a simplex point sums to one up to
    /// rounding; a drift beyond `1e-12` is an error. The residual is absorbed by the
    /// largest coordinate, so zero coordinates stay exactly zero and small coordinates keep
    /// the values of the polynomial.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.apply_raw(x)?;
        renormalize(&mut y)?;
        Ok(y)
    }

    pub fn apply_point(&self, x: &PointSimplex) -> Result<PointSimplex> {
        PointSimplex::new(self.apply(x.weights())?)
    }

    pub fn is_volterra(&self) -> bool {
        self.keys.iter().enumerate().all(|(j, key)| {
            (0..self.m).all(|k| key.contains(&k) || self.coeffs[j * self.m + k] == 0.0)
        })
    }

    /// Type `k` (one-based) is purebred: `p_k` vanishes unless at least two parents are `k`.
    pub fn is_purebred(&self, k: usize) -> bool {
        if k == 0 || k > self.m {
            return false;
        }
        self.keys.iter().enumerate().all(|(j, key)| {
            let others = key.iter().filter(|&&i| i != k - 1).count();
            others < self.d - 1 || self.coeffs[j * self.m + k - 1] == 0.0
        })
    }

    pub fn purebred_types(&self) -> ClassSet {
        let mut c = ClassSet::default();
        for k in 1..=self.m {
            if self.is_purebred(k) {
                c.insert(k);
            }
        }
        c
    }
}

fn check_shape(m: usize, d: usize) -> Result<()> {
    if !(2..=MAX_TYPES).contains(&m) {
        return Err(Error::InvalidArgument(format!("type count {m} outside 2..={MAX_TYPES}")));
    }
    if d < 2 {
        return Err(Error::InvalidArgument(format!("degree {d} below 2")));
    }
    Ok(())
}

/// Puts the residual of the sum onto the largest coordinate.
pub fn renormalize(y: &mut [f64]) -> Result<()> {
    let s: f64 = y.iter().sum();
    let drift = s - 1.0;
    if !(drift.abs() <= SIMPLEX_TOL) {
        return Err(Error::SimplexDrift { drift });
    }
    if drift == 0.0 {
        return Ok(());
    }
    let top = (0..y.len()).fold(0, |a, i| if y[i] > y[a] { i } else { a });
    let rest: f64 = y.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, v)| v).sum();
    y[top] = (1.0 - rest).max(0.0);
    Ok(())
}

/// The canonical operator in which type `k` is purebred: if `k` appears at least twice
/// among the parents the child is `k`; otherwise the child is one of the non-`k` parents,
/// chosen in proportion to its multiplicity.
pub fn canonical_purebred(m: usize, d: usize, k: usize) -> Result<PsoTensor> {
    if k == 0 || k > m {
        return Err(Error::IndexOutOfRange { index: k, max: m });
    }
    PsoTensor::from_fn(m, d, |parents, child| {
        let ck = parents.iter().filter(|&&i| i == k).count();
        if ck >= 2 {
            return if child == k { 1.0 } else { 0.0 };
        }
        if child == k {
            return 0.0;
        }
        let c = parents.iter().filter(|&&i| i == child).count();
        c as f64 / (d - ck) as f64
    })
}

/// Result of evaluating both height bounds at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub k: usize,
    /// `"purebred"` for `(Vx)_k <= C(d,2) x_k^2`, `"volterra"` for `(Vx)_k <= d x_k`.
    pub bound: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluates `(Vx)_k <= C(d,2) x_k^2` for every purebred `k` and, for Volterra `V`,
/// `(Vx)_k <= d x_k` for every `k`, on the polynomial as written. Returns the violations.
pub fn check_height_bounds(v: &PsoTensor, x: &[f64]) -> Result<Vec<BoundViolation>> {
    let y = v.apply_raw(x)?;
    let c2 = binomial(v.d as u32, 2);
    let d = v.d as f64;
    let volterra = v.is_volterra();
    let mut out = Vec::new();
    for k in 1..=v.m {
        let xk = x[k - 1];
        if v.is_purebred(k) && y[k - 1] > c2 * (xk * xk) {
            out.push(BoundViolation {
                k,
                bound: "purebred",
                lhs: y[k - 1],
                rhs: c2 * (xk * xk),
            });
        }
        if volterra && y[k - 1] > d * xk {
            out.push(BoundViolation {
                k,
                bound: "volterra",
                lhs: y[k - 1],
                rhs: d * xk,
            });
        }
    }
    Ok(out)
}

/// A probability measure `ν` on finitely many Volterra operators.
#[derive(Debug, Clone)]
pub struct OperatorCatalog {
    entries: Vec<PsoTensor>,
    weights: Vec<f64>,
    classes: Vec<ClassSet>,
    sampler: WeightedIndex<f64>,
}

/// One draw `ω_n` of the noise: the operator index and the purebred classes it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub index: usize,
    pub classes: ClassSet,
}

impl OperatorCatalog {
    pub fn new(entries: Vec<PsoTensor>, weights: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptySet);
        }
        if entries.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: entries.len(),
                got: weights.len(),
            });
        }
        let (m, d) = (entries[0].m, entries[0].d);
        for (i, e) in entries.iter().enumerate() {
            if e.m != m || e.d != d {
                return Err(Error::InvalidArgument(format!(
                    "operator {i} has shape (m={}, d={}), expected (m={m}, d={d})",
                    e.m, e.d
                )));
            }
            if !e.is_volterra() {
                return Err(Error::InvalidArgument(format!("operator {i} is not Volterra")));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("negative catalog weight".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("catalog weights sum to {s}")));
        }
        let classes: Vec<ClassSet> = entries.iter().map(PsoTensor::purebred_types).collect();
        let sampler = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("catalog weights: {e}")))?;
        let cat = Self {
            entries,
            weights,
            classes,
            sampler,
        };
        for k in 1..=m {
            if cat.nu(k) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "no operator with positive weight has type {k} purebred"
                )));
            }
        }
        Ok(cat)
    }

    /// The `m` canonical purebred operators with uniform weights.
    pub fn canonical(m: usize, d: usize) -> Result<Self> {
        let entries = (1..=m).map(|k| canonical_purebred(m, d, k)).collect::<Result<Vec<_>>>()?;
        Self::new(entries, vec![1.0 / m as f64; m])
    }

    pub fn m(&self) -> usize {
        self.entries[0].m
    }

    pub fn d(&self) -> usize {
        self.entries[0].d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, i: usize) -> &PsoTensor {
        &self.entries[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn classes(&self, i: usize) -> ClassSet {
        self.classes[i]
    }

    /// `ν_k = ν(𝓥_k)`.
    pub fn nu(&self, k: usize) -> f64 {
        self.weights
            .iter()
            .zip(&self.classes)
            .filter(|(_, c)| c.contains(k))
            .map(|(w, _)| w)
            .sum()
    }

    /// `ν̲ = min_k ν_k`.
    pub fn nu_lower(&self) -> f64 {
        (1..=self.m()).map(|k| self.nu(k)).fold(f64::INFINITY, f64::min)
    }

    /// `n` i.i.d. draws from `ν`, reproducible from `seed`.
    pub fn sample_stream(&self, seed: u64, n: usize) -> Vec<Draw> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Draw> {
        (0..n)
            .map(|_| {
                let index = self.sampler.sample(rng);
                Draw {
                    index,
                    classes: self.classes[index],
                }
            })
            .collect()
    }

    /// `φ(n, ω) x` for `n = 0..=stream.len()`.
    pub fn iterate_rds(&self, stream: &[Draw], x0: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_simplex(x0)?;
        if x0.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: x0.len(),
            });
        }
        let mut traj = Vec::with_capacity(stream.len() + 1);
        traj.push(x0.to_vec());
        let mut x = x0.to_vec();
        for draw in stream {
            x = self.entries[draw.index].apply(&x)?;
            traj.push(x.clone());
        }
        Ok(traj)
    }

    /// Applies one draw to every point of a set in place.
    pub fn step_set(&self, draw: Draw, set: &mut [Vec<f64>]) -> Result<()> {
        let v = &self.entries[draw.index];
        for x in set.iter_mut() {
            *x = v.apply(x)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_simplex<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
        crate::properties::random_simplex(rng, m)
    }

    fn random_volterra<R: Rng>(rng: &mut R, m: usize, d: usize, pure: ClassSet) -> (PsoTensor, ClassSet) {
        crate::properties::random_volterra(rng, m, d, pure).unwrap()
    }

    #[test]
    fn multiset_enumeration() {
        assert_eq!(multisets(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
        assert_eq!(multisets(3, 3).len(), 10);
        assert_eq!(multiplicity(&[0, 0, 1]), 3.0);
        assert_eq!(multiplicity(&[0, 1, 2]), 6.0);
        assert_eq!(multiplicity(&[2, 2, 2, 2]), 1.0);
        assert_eq!(binomial(5, 2), 10.0);
        // multiplicities count all m^d ordered tuples
        for (m, d) in [(2, 2), (3, 3), (4, 2), (2, 5)] {
            let total: f64 = multisets(m, d).iter().map(|k| multiplicity(k)).sum();
            assert_eq!(total, (m as f64).powi(d as i32));
        }
    }

    #[test]
    fn canonical_two_types() {
        let v = canonical_purebred(2, 2, 1).unwrap();
        assert_eq!(v.coeff(&[1, 1], 1), 1.0);
        assert_eq!(v.coeff(&[2, 1], 2), 1.0);
        assert_eq!(v.coeff(&[2, 2], 2), 1.0);
        assert_eq!(v.apply(&[0.5, 0.5]).unwrap(), vec![0.25, 0.75]);
        assert!(v.is_volterra() && v.is_purebred(1) && !v.is_purebred(2));
    }

    #[test]
    fn canonical_three_types() {
        let v = canonical_purebred(3, 2, 1).unwrap();
        assert_eq!(v.coeff(&[1, 2], 2), 1.0);
        assert_eq!(v.coeff(&[2, 3], 2), 0.5);
        assert_eq!(v.coeff(&[2, 3], 3), 0.5);
        for (m, d) in [(2, 2), (3, 2), (3, 3), (4, 3), (2, 4)] {
            for k in 1..=m {
                let v = canonical_purebred(m, d, k).unwrap();
                assert!(v.is_volterra() && v.is_purebred(k), "m={m} d={d} k={k}");
            }
        }
    }

    #[test]
    fn non_volterra_detected() {
        let v = PsoTensor::from_entries(2, 2, [(vec![1, 1], 1, 1.0), (vec![1, 2], 1, 1.0), (vec![2, 2], 1, 1.0)]).unwrap();
        assert!(!v.is_volterra());
        let bad = PsoTensor::from_entries(2, 2, [(vec![1, 1], 1, 0.5)]);
        assert!(matches!(bad, Err(Error::InvalidTensor { .. })));
        let unsorted = PsoTensor::from_entries(2, 2, [(vec![2, 1], 1, 1.0)]);
        assert!(matches!(unsorted, Err(Error::InvalidTensor { .. })));
    }

    #[test]
    fn stream_and_iteration() {
        let cat = OperatorCatalog::canonical(2, 2).unwrap();
        assert_eq!(cat.nu_lower(), 0.5);
        assert!(cat.sample_stream(1, 0).is_empty());
        assert_eq!(cat.sample_stream(9, 20), cat.sample_stream(9, 20));
        let pb1 = Draw {
            index: 0,
            classes: cat.classes(0),
        };
        let traj = cat.iterate_rds(&[pb1, pb1], &[0.5, 0.5]).unwrap();
        assert_eq!(traj, vec![vec![0.5, 0.5], vec![0.25, 0.75], vec![0.0625, 0.9375]]);
        assert_eq!(cat.iterate_rds(&[], &[0.3, 0.7]).unwrap(), vec![vec![0.3, 0.7]]);
        let s = cat.sample_stream(3, 50);
        assert_eq!(cat.iterate_rds(&s, &[1.0, 0.0]).unwrap(), vec![vec![1.0, 0.0]; 51]);
    }

    #[test]
    fn cocycle_identity() {
        let cat = OperatorCatalog::canonical(3, 3).unwrap();
        let s = cat.sample_stream(4, 30);
        let x = [0.2, 0.3, 0.5];
        let full = cat.iterate_rds(&s, &x).unwrap();
        let head = cat.iterate_rds(&s[..12], &x).unwrap();
        let tail = cat.iterate_rds(&s[12..], head.last().unwrap()).unwrap();
        assert_eq!(full.last(), tail.last());
    }

    #[test]
    fn class_frequencies() {
        let cat = OperatorCatalog::new(
            vec![canonical_purebred(2, 2, 1).unwrap(), canonical_purebred(2, 2, 2).unwrap()],
            vec![0.3, 0.7],
        )
        .unwrap();
        let n = 100_000;
        let s = cat.sample_stream(11, n);
        let ones = s.iter().filter(|d| d.classes.contains(1)).count() as f64 / n as f64;
        let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((ones - 0.3).abs() < 3.0 * sigma);
    }

    #[test]
    fn bound_equality_case() {
        let v = canonical_purebred(2, 2, 1).unwrap();
        assert!(check_height_bounds(&v, &[0.5, 0.5]).unwrap().is_empty());
        assert_eq!(v.apply_raw(&[0.5, 0.5]).unwrap()[0], 0.25);
        let w = canonical_purebred(3, 2, 2).unwrap();
        assert_eq!(w.apply(&[1.0, 0.0, 0.0]).unwrap()[1], 0.0);
    }

    #[test]
    fn long_iteration_drift() {
        let cat = OperatorCatalog::canonical(4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = random_simplex(&mut rng, 4);
            let s = cat.sample_with(&mut rng, 1000);
            let traj = cat.iterate_rds(&s, &x).unwrap();
            for y in &traj {
                assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(y.iter().all(|v| *v >= 0.0));
            }
        }
    }

    proptest! {
        #[test]
        fn simplex_faces_vertices(seed in any::<u64>(), m in 2usize..5, d in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (v, _) = random_volterra(&mut rng, m, d, ClassSet::default());
            let mut x = random_simplex(&mut rng, m);
            let y = v.apply(&x).unwrap();
            prop_assert!(y.iter().all(|c| *c >= 0.0));
            prop_assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for k in 1..=m {
                let e = PointSimplex::vertex(m, k).unwrap();
                prop_assert_eq!(v.apply(e.weights()).unwrap(), e.weights().to_vec());
            }
            let j = rng.random_range(0..m);
            let xj = x[j];
            x[j] = 0.0;
            let top = (0..m).fold(0, |a, i| if x[i] > x[a] { i } else { a });
            x[top] += xj;
            let y = v.apply(&x).unwrap();
            prop_assert_eq!(y[j], 0.0);
        }

        #[test]
        fn height_bounds_hold(seed in any::<u64>(), m in 2usize..5, d in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pure = ClassSet::default();
            for k in 1..=m {
                if rng.random::<bool>() {
                    pure.insert(k);
                }
            }
            let (v, kept) = random_volterra(&mut rng, m, d, pure);
            prop_assert!(v.is_volterra());
            for k in kept.iter() {
                prop_assert!(v.is_purebred(k));
            }
            let x = random_simplex(&mut rng, m);
            prop_assert!(check_height_bounds(&v, &x).unwrap().is_empty());
            let c = canonical_purebred(m, d, 1 + rng.random_range(0..m)).unwrap();
            prop_assert!(check_height_bounds(&c, &x).unwrap().is_empty());
        }

        #[test]
        fn all_purebred_is_volterra(seed in any::<u64>(), m in 2usize..4, d in 2usize..6) {
            // random sparse support; each row keeps at least one child
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let keys = multisets(m, d);
            let mut rows = Vec::new();
            for _ in &keys {
                let mut w: Vec<f64> = (0..m).map(|_| if rng.random::<f64>() < 0.5 { rng.random::<f64>() + 0.1 } else { 0.0 }).collect();
                if w.iter().all(|v| *v == 0.0) { w[rng.random_range(0..m)] = 1.0; }
                let s: f64 = w.iter().sum();
                rows.push(w.iter().map(|v| v / s).collect::<Vec<f64>>());
            }
            let v = PsoTensor::from_fn(m, d, |p, k| {
                let key: Vec<usize> = p.iter().map(|i| i - 1).collect();
                rows[keys.binary_search(&key).unwrap()][k - 1]
            }).unwrap();
            if v.purebred_types().iter().count() == m {
                prop_assert!(v.is_volterra());
            }
            if !v.is_volterra() {
                prop_assert!(v.purebred_types().iter().count() < m);
            }
        }

        #[test]
        fn lipschitz_and_balls(seed in any::<u64>(), m in 2usize..5, d in 2usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (v, _) = random_volterra(&mut rng, m, d, ClassSet::default());
            let x = random_simplex(&mut rng, m);
            let y = random_simplex(&mut rng, m);
            let lhs = Metric::Euclidean.distance(&v.apply(&x).unwrap(), &v.apply(&y).unwrap());
            let lip = (d * m) as f64;
            prop_assert!(lhs <= lip * Metric::Euclidean.distance(&x, &y) + 1e-15);
            // boundary of a small ball around x, along a random tangent direction
            let h = 1e-3;
            let mut u: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
            let mean = u.iter().sum::<f64>() / m as f64;
            u.iter_mut().for_each(|c| *c -= mean);
            let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
            let z: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + h * b / norm).collect();
            if z.iter().all(|c| *c >= 0.0) {
                let mut z = z;
                let s: f64 = z.iter().sum();
                z.iter_mut().for_each(|c| *c /= s);
                let dist = Metric::Euclidean.distance(&v.apply(&z).unwrap(), &v.apply(&x).unwrap());
                prop_assert!(dist <= lip * h * (1.0 + 1e-9));
            }
        }
    }
}
