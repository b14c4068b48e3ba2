//! Compact test sets of prescribed Hausdorff dimension, approximated by point clouds.
//!
//! The cloud is always finite; `nominal_dimension` is the dimension of the idealized
//! (infinite depth) set the recipe describes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::geometry::{face_points, h_union, FaceIndex};

/// How a one-dimensional cloud in `[0,1]` is placed in the ambient space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Embedding {
    /// The unit interval itself (`d = 1`).
    Line,
    /// Along coordinate `axis` of `[0,1]^dim`, other coordinates set to `fill`.
    CubeAxis { dim: usize, axis: usize, fill: f64 },
    /// On the edge of `S^{m-1}` between types `i` and `j` (one-based):
    /// `x_i = lo + (hi - lo) s`, `x_j = 1 - x_i`.
    SimplexEdge {
        m: usize,
        i: usize,
        j: usize,
        lo: f64,
        hi: f64,
    },
}

impl Embedding {
    fn check(&self) -> Result<()> {
        match *self {
            Embedding::Line => Ok(()),
            Embedding::CubeAxis { dim, axis, fill } => {
                if axis >= dim || !(0.0..=1.0).contains(&fill) {
                    Err(Error::InvalidArgument(format!("bad cube embedding {self:?}")))
                } else {
                    Ok(())
                }
            }
            Embedding::SimplexEdge { m, i, j, lo, hi } => {
                if i == 0 || j == 0 || i > m || j > m || i == j {
                    Err(Error::InvalidArgument(format!("bad edge embedding {self:?}")))
                } else if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
                    Err(Error::InvalidArgument(format!("edge range outside [0,1]: {self:?}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn place(&self, s: f64) -> Vec<f64> {
        match *self {
            Embedding::Line => vec![s],
            Embedding::CubeAxis { dim, axis, fill } => {
                let mut p = vec![fill; dim];
                p[axis] = s;
                p
            }
            Embedding::SimplexEdge { m, i, j, lo, hi } => {
                let mut p = vec![0.0; m];
                let xi = lo + (hi - lo) * s;
                p[i - 1] = xi;
                p[j - 1] = 1.0 - xi;
                p
            }
        }
    }
}

/// Construction recipe of a test set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "construction", rename_all = "snake_case"))]
pub enum Recipe {
    /// Two-branch self-similar set with contraction ratio `exp(log_ratio)`.
    Cantor {
        log_ratio: f64,
        depth: u32,
        embed: Embedding,
    },
    /// Cartesian product of cube recipes; coordinates are concatenated.
    Product { factors: Vec<Recipe> },
    /// Straight segment `from + s (to - from)`, `s` on a uniform grid.
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
        points: usize,
    },
    /// Grid on a face of the cube.
    Face { alpha: Vec<i8>, grid: usize },
    /// Grid on the union of all `m_level`-dimensional faces of `[0,1]^d`.
    HUnion { m_level: usize, d: usize, grid: usize },
    Singleton { point: Vec<f64> },
}

impl Recipe {
    pub fn build(&self) -> Result<CompactSetApprox> {
        match self {
            Recipe::Cantor {
                log_ratio,
                depth,
                embed,
            } => make_cantor_cloud_log(*log_ratio, *depth, embed.clone()),
            Recipe::Product { factors } => {
                let mut it = factors.iter();
                let first = it
                    .next()
                    .ok_or_else(|| Error::InvalidArgument("empty product".into()))?
                    .build()?;
                it.try_fold(first, |acc, f| Ok(acc.product(&f.build()?)))
            }
            Recipe::Segment { from, to, points } => segment(from.clone(), to.clone(), *points),
            Recipe::Face { alpha, grid } => {
                let f = FaceIndex::new(alpha.clone())?;
                Ok(CompactSetApprox {
                    points: face_points(&f, *grid),
                    nominal_dimension: f.dim() as f64,
                    depth: *grid as u32,
                    recipe: self.clone(),
                })
            }
            Recipe::HUnion { m_level, d, grid } => Ok(CompactSetApprox {
                points: h_union(*m_level, *d, *grid)?,
                nominal_dimension: *m_level as f64,
                depth: *grid as u32,
                recipe: self.clone(),
            }),
            Recipe::Singleton { point } => Ok(CompactSetApprox {
                points: vec![point.clone()],
                nominal_dimension: 0.0,
                depth: 0,
                recipe: self.clone(),
            }),
        }
    }

    /// Parametrization `s -> point` for connected one-parameter recipes.
    pub fn curve_point(&self, s: f64) -> Option<Vec<f64>> {
        match self {
            Recipe::Segment { from, to, .. } => {
                Some(from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect())
            }
            _ => None,
        }
    }
}

/// A finite point cloud standing in for a compact set.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSetApprox {
    pub points: Vec<Vec<f64>>,
    pub nominal_dimension: f64,
    pub depth: u32,
    pub recipe: Recipe,
}

impl CompactSetApprox {
    pub fn ambient_dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Cartesian product; nominal dimensions add.
    pub fn product(&self, other: &CompactSetApprox) -> CompactSetApprox {
        let mut points = Vec::with_capacity(self.len() * other.len());
        for a in &self.points {
            for b in &other.points {
                let mut p = a.clone();
                p.extend_from_slice(b);
                points.push(p);
            }
        }
        let mut factors = Vec::new();
        for r in [&self.recipe, &other.recipe] {
            match r {
                Recipe::Product { factors: f } => factors.extend(f.iter().cloned()),
                other => factors.push(other.clone()),
            }
        }
        CompactSetApprox {
            points,
            nominal_dimension: self.nominal_dimension + other.nominal_dimension,
            depth: self.depth.max(other.depth),
            recipe: Recipe::Product { factors },
        }
    }
}

/// Dimension `log 2 / log(1/r)` of the two-branch self-similar set with ratio `r`.
pub fn cantor_dimension(log_ratio: f64) -> f64 {
    core::f64::consts::LN_2 / -log_ratio
}

/// Log-ratio of the two-branch self-similar set with the given dimension. Dimensions
/// below about `0.0014` give ratios that underflow `f64`, hence the log form.
pub fn cantor_log_ratio_for_dimension(dim: f64) -> Result<f64> {
    if !(dim > 0.0 && dim <= 1.0) {
        return Err(Error::InvalidArgument(format!("cantor dimension {dim} outside (0,1]")));
    }
    Ok(-core::f64::consts::LN_2 / dim)
}

/// Endpoints of the depth-`depth` intervals of the two-branch self-similar set with
/// contraction ratio `ratio ∈ (0, 1/2]`.
pub fn make_cantor_cloud(ratio: f64, depth: u32, embed: Embedding) -> Result<CompactSetApprox> {
    if !(ratio > 0.0 && ratio <= 0.5) {
        return Err(Error::InvalidArgument(format!("ratio {ratio} outside (0, 1/2]")));
    }
    make_cantor_cloud_log(ratio.ln(), depth, embed)
}

/// As [`make_cantor_cloud`], with the ratio given by its natural logarithm. When the ratio
/// underflows, coinciding endpoints are merged and only the metadata keeps the dimension.
pub fn make_cantor_cloud_log(log_ratio: f64, depth: u32, embed: Embedding) -> Result<CompactSetApprox> {
    if !(log_ratio <= -core::f64::consts::LN_2) || !log_ratio.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "log ratio {log_ratio} outside (-inf, -ln 2]"
        )));
    }
    embed.check()?;
    if depth > 24 {
        return Err(Error::InvalidArgument(format!("depth {depth} too large")));
    }
    let ratio = log_ratio.exp();
    // children reuse their parent's outer endpoints so clouds nest exactly across depths
    let mut intervals = vec![(0.0f64, 1.0f64)];
    let mut len = 1.0f64;
    for _ in 0..depth {
        len *= ratio;
        intervals = intervals
            .iter()
            .flat_map(|&(lo, hi)| [(lo, lo + len), (hi - len, hi)])
            .collect();
    }
    let mut s: Vec<f64> = intervals.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    Ok(CompactSetApprox {
        points: s.iter().map(|v| embed.place(*v)).collect(),
        nominal_dimension: cantor_dimension(log_ratio),
        depth,
        recipe: Recipe::Cantor {
            log_ratio,
            depth,
            embed,
        },
    })
}

/// Uniform grid of `points` points on the segment from `from` to `to`.
pub fn segment(from: Vec<f64>, to: Vec<f64>, points: usize) -> Result<CompactSetApprox> {
    if from.len() != to.len() {
        return Err(Error::DimensionMismatch {
            expected: from.len(),
            got: to.len(),
        });
    }
    if points < 2 {
        return Err(Error::InvalidArgument("segment needs at least two points".into()));
    }
    let recipe = Recipe::Segment { from, to, points };
    let pts = (0..points)
        .map(|i| recipe.curve_point(i as f64 / (points - 1) as f64).unwrap())
        .collect();
    Ok(CompactSetApprox {
        points: pts,
        nominal_dimension: if recipe_is_degenerate(&recipe) { 0.0 } else { 1.0 },
        depth: points as u32,
        recipe,
    })
}

fn recipe_is_degenerate(r: &Recipe) -> bool {
    matches!(r, Recipe::Segment { from, to, .. } if from == to)
}
