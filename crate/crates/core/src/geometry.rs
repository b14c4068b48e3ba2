//! Metric and set primitives on the cube `[0,1]^d` and the simplex `S^{m-1}`.
//!
//! Point sets are plain slices of coordinate vectors; the validated newtypes
//! [`PointCube`] and [`PointSimplex`] exist for API boundaries where the
//! invariant matters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};

/// Tolerance for the sum-to-one invariant of simplex points.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Level reported for points that lie in every neighborhood `Ū_h` (vertices).
pub const LEVEL_INFINITE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Maximum norm, the default on the cube.
    #[default]
    Uniform,
    /// Euclidean norm, the default on the simplex.
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Uniform => a
                .iter()
                .zip(b)
                .fold(0.0, |acc, (x, y)| acc.max((x - y).abs())),
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// A point of the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCube(Vec<f64>);

impl PointCube {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::OutsideStateSpace(format!("{coords:?} not in unit cube")));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for PointCube {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A probability vector on `m` types.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSimplex(Vec<f64>);

impl PointSimplex {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights)?;
        Ok(Self(weights))
    }

    /// The vertex `e_k`, with `k` one-based.
    pub fn vertex(m: usize, k: usize) -> Result<Self> {
        if k == 0 || k > m {
            return Err(Error::IndexOutOfRange { index: k, max: m });
        }
        let mut w = vec![0.0; m];
        w[k - 1] = 1.0;
        Ok(Self(w))
    }

    pub fn barycenter(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for PointSimplex {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn check_simplex(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::EmptySet);
    }
    if w.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::OutsideStateSpace(format!("{w:?} has a negative weight")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::OutsideStateSpace(format!("{w:?} sums to {s}")));
    }
    Ok(())
}

/// `sup_{a in A} min_{b in B} d(a, b)`. Not symmetric.
pub fn hausdorff_semidistance<P, Q>(a: &[P], b: &[Q], metric: Metric) -> Result<f64>
where
    P: AsRef<[f64]>,
    Q: AsRef<[f64]>,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let dim = a[0].as_ref().len();
    for p in a.iter().map(AsRef::as_ref).chain(b.iter().map(AsRef::as_ref)) {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
    }
    let mut sup = 0.0f64;
    for p in a {
        let p = p.as_ref();
        let mut best = f64::INFINITY;
        for q in b {
            best = best.min(metric.distance(p, q.as_ref()));
            if best <= sup {
                // cannot raise the supremum any more
                break;
            }
        }
        sup = sup.max(best);
    }
    Ok(sup)
}

/// `hei_k(C) = max_{x in C} x_k`, one-based `k`.
pub fn height<P: AsRef<[f64]>>(set: &[P], k: usize) -> Result<f64> {
    let first = set.first().ok_or(Error::EmptySet)?;
    let m = first.as_ref().len();
    if k == 0 || k > m {
        return Err(Error::IndexOutOfRange { index: k, max: m });
    }
    Ok(set
        .iter()
        .map(|x| x.as_ref()[k - 1])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Which of the neighborhoods of the vertex set to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diamond {
    /// `D^i_h = {x : x_i <= h}`
    D,
    /// `Ū^i_h = ∩_{j != i} D^j_h`
    UbarI,
    /// `Ū_h = ∪_i Ū^i_h`
    Ubar,
}

pub fn diamond_membership(x: &[f64], h: f64, variant: Diamond, i: Option<usize>) -> Result<bool> {
    let m = x.len();
    let idx = |name| -> Result<usize> {
        let i = i.ok_or(Error::MissingIndex(name))?;
        if i == 0 || i > m {
            return Err(Error::IndexOutOfRange { index: i, max: m });
        }
        Ok(i - 1)
    };
    Ok(match variant {
        Diamond::D => x[idx("D_i")?] <= h,
        Diamond::UbarI => {
            let i = idx("Ubar_i")?;
            x.iter().enumerate().all(|(j, v)| j == i || *v <= h)
        }
        Diamond::Ubar => second_largest(x) <= h,
    })
}

/// The second largest coordinate (with multiplicity). `x ∈ Ū_h` iff this is `<= h`,
/// because dropping the largest coordinate minimizes the maximum of the rest.
pub fn second_largest(x: &[f64]) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in x {
        if v > top {
            second = top;
            top = v;
        } else if v > second {
            second = v;
        }
    }
    if x.len() < 2 {
        0.0
    } else {
        second
    }
}

/// `d^{-l0} d^{-l}`, the radius of the `l`-th neighborhood of the vertex set.
pub fn level_threshold(d: u32, l0: u32, l: u32) -> f64 {
    let e = l0.saturating_add(l);
    let e = i32::try_from(e).unwrap_or(i32::MAX);
    (d as f64).powi(-e)
}

/// The level `l(x)`: the `l` with `x ∈ Q_l`.
///
/// Equivalently the largest `l >= 1` with `x ∈ Ū_{d^{-l0} d^{-l}}`, or 0 if there is none.
/// Membership is inclusive, so boundary points take the higher level. Vertices lie in every
/// neighborhood and get [`LEVEL_INFINITE`].
pub fn level_index(x: &[f64], l0: u32, d: u32) -> u32 {
    let s2 = second_largest(x);
    if s2 <= 0.0 {
        return LEVEL_INFINITE;
    }
    let dl = (d as f64).ln();
    let guess = ((-s2.ln() / dl).floor() - l0 as f64).max(0.0);
    let mut l = if guess >= (LEVEL_INFINITE - 2) as f64 {
        LEVEL_INFINITE - 2
    } else {
        guess as u32
    };
    // correct the logarithmic guess against the exact thresholds
    while l > 0 && s2 > level_threshold(d, l0, l) {
        l -= 1;
    }
    while s2 <= level_threshold(d, l0, l + 1) {
        l += 1;
    }
    l
}

/// A face `Γ_α` of the cube: coordinate `i` is fixed at `(1 + α_i) / 2` when `α_i != 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FaceIndex(Vec<i8>);

impl FaceIndex {
    pub fn new(alpha: Vec<i8>) -> Result<Self> {
        if alpha.iter().any(|a| !(-1..=1).contains(a)) {
            return Err(Error::InvalidArgument(format!("face index {alpha:?} outside {{-1,0,1}}")));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(&self) -> &[i8] {
        &self.0
    }

    /// Number of fixed coordinates, `‖α‖`.
    pub fn fixed(&self) -> usize {
        self.0.iter().filter(|a| **a != 0).count()
    }

    /// Dimension of the face.
    pub fn dim(&self) -> usize {
        self.0.len() - self.fixed()
    }

    /// All faces of `[0,1]^d` of dimension `m`.
    pub fn all_of_dim(d: usize, m: usize) -> Vec<FaceIndex> {
        let mut out = Vec::new();
        let total = 3usize.pow(d as u32);
        for code in 0..total {
            let mut c = code;
            let alpha: Vec<i8> = (0..d)
                .map(|_| {
                    let a = (c % 3) as i8 - 1;
                    c /= 3;
                    a
                })
                .collect();
            let f = FaceIndex(alpha);
            if f.dim() == m {
                out.push(f);
            }
        }
        out
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.0.iter().zip(x).all(|(a, v)| match a {
            -1 => *v == 0.0,
            1 => *v == 1.0,
            _ => true,
        })
    }
}

fn grid_values(grid: usize) -> Vec<f64> {
    match grid {
        0 => Vec::new(),
        1 => vec![0.5],
        n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Grid discretization of the face `Γ_α` with `grid` points per free coordinate.
pub fn face_points(alpha: &FaceIndex, grid: usize) -> Vec<Vec<f64>> {
    let vals = grid_values(grid);
    let mut pts: Vec<Vec<f64>> = vec![Vec::new()];
    for &a in alpha.alpha() {
        let choices: Vec<f64> = if a == 0 {
            vals.clone()
        } else {
            vec![(1.0 + a as f64) / 2.0]
        };
        pts = pts
            .into_iter()
            .flat_map(|p| {
                choices.iter().map(move |c| {
                    let mut q = p.clone();
                    q.push(*c);
                    q
                })
            })
            .collect();
    }
    pts
}

/// Grid discretization of `H^m`, the union of all `m`-dimensional faces of `[0,1]^d`.
///
/// Every point appears once; `H^0` is exactly the vertex set and `H^d` the full grid.
pub fn h_union(m_level: usize, d: usize, grid: usize) -> Result<Vec<Vec<f64>>> {
    if m_level > d {
        return Err(Error::InvalidArgument(format!("face dimension {m_level} exceeds {d}")));
    }
    let grid = grid.max(2);
    let vals = grid_values(grid);
    let mut out = Vec::new();
    let total = grid.pow(d as u32);
    for code in 0..total {
        let mut c = code;
        let p: Vec<f64> = (0..d)
            .map(|_| {
                let v = vals[c % grid];
                c /= grid;
                v
            })
            .collect();
        if distance_to_h_union(&p, m_level) == 0.0 {
            out.push(p);
        }
    }
    Ok(out)
}

/// Uniform-norm distance from a cube point to `H^m`: the `(d-m)`-th smallest of the
/// per-coordinate distances to `{0,1}`.
pub fn distance_to_h_union(x: &[f64], m_level: usize) -> f64 {
    let d = x.len();
    if m_level >= d {
        return 0.0;
    }
    let mut gaps: Vec<f64> = x.iter().map(|v| v.min(1.0 - v).max(0.0)).collect();
    gaps.sort_by(f64::total_cmp);
    gaps[d - m_level - 1]
}

/// Euclidean distance from a simplex point to the vertex set `Λ = {e_1, …, e_m}`.
pub fn distance_to_vertices(x: &[f64]) -> f64 {
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    // |x - e_k|^2 = |x|^2 - 2 x_k + 1, minimized at the largest coordinate
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (norm2 - 2.0 * top + 1.0).max(0.0).sqrt()
}
