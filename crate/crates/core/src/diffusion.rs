//! The product martingale diffusion `dX = X(1-X) dW` on `[0,1]^d` and its inverse flow
//! `dY = Y(1-Y)(1-2Y) dt - Y(1-Y) dW`, simulated by Euler–Maruyama under shared noise.
//!
//! Both flows act coordinate-wise, so every routine here advances one coordinate column
//! at a time. In logit coordinates both equations have additive noise:
//! `G = ln(x/(1-x))` solves `dG = ½ tanh(G/2) dt + dW` for the forward flow and
//! `Z = -ln(y/(1-y))` solves `dZ = -½ tanh(Z/2) dt + dW` for the inverse flow.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::geometry::{distance_to_h_union, hausdorff_semidistance, Metric};
use crate::noise::{step_level, to_ticks, Increments, NoiseSource, WienerPath2S};
use crate::testsets::{CompactSetApprox, Recipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Integrator {
    /// Euler–Maruyama on the original equation, clamped to `[0,1]`.
    DirectEm,
    /// Euler–Maruyama on the logit-transformed equation.
    #[default]
    LogitEm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FlowConfig {
    pub d: usize,
    pub dt: f64,
    pub horizon: f64,
    pub boundary_eps: f64,
    /// Basin classification gives up after `cap_factor * horizon`.
    pub cap_factor: u32,
    pub integrator: Integrator,
    /// Spacing of recorded snapshots; `None` records only the start and the horizon.
    pub record_every: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            d: 1,
            dt: 1.0 / 1024.0,
            horizon: 50.0,
            boundary_eps: 1e-4,
            cap_factor: 4,
            integrator: Integrator::LogitEm,
            record_every: None,
        }
    }
}

impl FlowConfig {
    pub fn with_d(d: usize) -> Self {
        Self {
            d,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be at least 1".into()));
        }
        step_level(self.dt)?;
        self.steps_for(self.horizon)?;
        if let Some(r) = self.record_every {
            self.steps_for(r)?;
        }
        if !(self.boundary_eps > 0.0 && self.boundary_eps < 0.5) {
            return Err(Error::InvalidArgument(alloc::format!(
                "boundary_eps {} outside (0, 1/2)",
                self.boundary_eps
            )));
        }
        if self.cap_factor == 0 {
            return Err(Error::InvalidArgument("cap_factor must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps covering a time span that is a positive multiple of `dt`.
    pub fn steps_for(&self, span: f64) -> Result<usize> {
        let n = span / self.dt;
        if !(span > 0.0) || n.fract() != 0.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "time span {span} is not a positive multiple of dt = {}",
                self.dt
            )));
        }
        to_ticks(span)?;
        Ok(n as usize)
    }

    fn record_times(&self, horizon: f64) -> Result<Vec<f64>> {
        let every = self.record_every.unwrap_or(horizon).min(horizon);
        let step = self.steps_for(every)?;
        let total = self.steps_for(horizon)?;
        let mut t = vec![0.0];
        let mut k = step;
        while k < total {
            t.push(k as f64 * self.dt);
            k += step;
        }
        t.push(horizon);
        Ok(t)
    }
}

/// Drift of the logit-transformed inverse equation, up to its sign:
/// `b̃(z) = (1 - e^{-z}) / (2 (1 + e^{-z})) = ½ tanh(z/2)`.
pub fn logit_drift(z: f64) -> f64 {
    0.5 * (0.5 * z).tanh()
}

/// The transform `f(y) = -ln(y/(1-y))` used for the inverse flow.
pub fn logit_inv_coord(y: f64) -> f64 {
    -(y / (1.0 - y)).ln()
}

/// `f^{-1}(z) = e^{-z}/(1+e^{-z})`.
pub fn logit_inv_coord_back(z: f64) -> f64 {
    1.0 / (1.0 + z.exp())
}

/// Scale function of the inverse diffusion, `p(y) = (2 ln(y/(1-y)) - (1-2y)/(y(1-y))) / 16`.
pub fn scale_function(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::OutsideStateSpace(alloc::format!("scale function at {y}")));
    }
    Ok((2.0 * (y / (1.0 - y)).ln() - (1.0 - 2.0 * y) / (y * (1.0 - y))) / 16.0)
}

/// Advances a column of values of one coordinate through the increments `dw` with shared
/// noise. Values `0` and `1` are fixed points and never move.
pub fn advance(values: &mut [f64], dw: &[f64], dt: f64, dir: Direction, integrator: Integrator) {
    match (dir, integrator) {
        (Direction::Forward, Integrator::DirectEm) => {
            for v in values.iter_mut() {
                let mut x = *v;
                for w in dw {
                    x = (x + x * (1.0 - x) * w).clamp(0.0, 1.0);
                }
                *v = x;
            }
        }
        (Direction::Inverse, Integrator::DirectEm) => {
            for v in values.iter_mut() {
                let mut y = *v;
                for w in dw {
                    let s = y * (1.0 - y);
                    y = (y + s * (1.0 - 2.0 * y) * dt - s * w).clamp(0.0, 1.0);
                }
                *v = y;
            }
        }
        (Direction::Forward, Integrator::LogitEm) => {
            let mut g: Vec<f64> = values.iter().map(|&v| (v / (1.0 - v)).ln()).collect();
            step_columns(&mut g, dw, dt, 1.0);
            for (v, g) in values.iter_mut().zip(g) {
                if *v > 0.0 && *v < 1.0 {
                    *v = 1.0 / (1.0 + (-g).exp());
                }
            }
        }
        (Direction::Inverse, Integrator::LogitEm) => {
            let mut z: Vec<f64> = values.iter().map(|&v| logit_inv_coord(v)).collect();
            step_columns(&mut z, dw, dt, -1.0);
            for (v, z) in values.iter_mut().zip(z) {
                if *v > 0.0 && *v < 1.0 {
                    *v = logit_inv_coord_back(z);
                }
            }
        }
    }
}

/// Euler steps of `z += sign·b̃(z)·dt + w` for a column sharing the increments. The step
/// loop is outermost so that the independent updates of a step can overlap. Infinite
/// entries (the fixed points 0 and 1) stay infinite.
fn step_columns(z: &mut [f64], dw: &[f64], dt: f64, sign: f64) {
    let h = sign * dt;
    if z.len() == 1 {
        let mut v = z[0];
        for w in dw {
            v += logit_drift(v) * h + w;
        }
        z[0] = v;
        return;
    }
    for w in dw {
        for v in z.iter_mut() {
            *v += logit_drift(*v) * h + w;
        }
    }
}

/// Recorded snapshots of a flow: `states[r][p]` is point `p` at `times[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn last(&self) -> &[Vec<f64>] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_points(points: &[Vec<f64>], d: usize, dir: Direction, integrator: Integrator) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutsideStateSpace(alloc::format!("{p:?} not in the unit cube")));
        }
        if dir == Direction::Inverse
            && integrator == Integrator::LogitEm
            && p.iter().any(|&v| v == 0.0 || v == 1.0)
        {
            return Err(Error::OutsideStateSpace(alloc::format!(
                "{p:?} on the boundary; the logit integrator needs interior points"
            )));
        }
    }
    Ok(())
}

/// Flows columns (one per coordinate) over `[0, horizon]` and records snapshots.
fn flow_columns(
    columns: &mut [Vec<f64>],
    inc: &Increments,
    cfg: &FlowConfig,
    dir: Direction,
    times: &[f64],
) -> Vec<Vec<Vec<f64>>> {
    let mut snaps = vec![columns.to_vec()];
    let mut prev = 0usize;
    for &t in &times[1..] {
        let k = (t / cfg.dt) as usize;
        for (c, col) in columns.iter_mut().enumerate() {
            advance(col, &inc.coord(c)[prev..k], cfg.dt, dir, cfg.integrator);
        }
        snaps.push(columns.to_vec());
        prev = k;
    }
    snaps
}

fn run_flow<S: NoiseSource>(
    x0: &[Vec<f64>],
    path: &S,
    cfg: &FlowConfig,
    dir: Direction,
    horizon: f64,
) -> Result<Trajectory> {
    cfg.validate()?;
    if path.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: path.dim(),
        });
    }
    check_points(x0, cfg.d, dir, cfg.integrator)?;
    let times = cfg.record_times(horizon)?;
    let inc = path.increments(0.0, horizon, cfg.dt)?;
    let mut columns: Vec<Vec<f64>> = (0..cfg.d).map(|c| x0.iter().map(|p| p[c]).collect()).collect();
    let snaps = flow_columns(&mut columns, &inc, cfg, dir, &times);
    let states = snaps
        .into_iter()
        .map(|cols| (0..x0.len()).map(|i| cols.iter().map(|col| col[i]).collect()).collect())
        .collect();
    Ok(Trajectory { times, states })
}

/// Forward flow of a set of points under one noise path, over `[0, cfg.horizon]`.
pub fn forward_flow<S: NoiseSource>(x0: &[Vec<f64>], path: &S, cfg: &FlowConfig) -> Result<Trajectory> {
    run_flow(x0, path, cfg, Direction::Forward, cfg.horizon)
}

/// Inverse flow of a set of points under one noise path, over `[0, cfg.horizon]`.
pub fn inverse_flow<S: NoiseSource>(y0: &[Vec<f64>], path: &S, cfg: &FlowConfig) -> Result<Trajectory> {
    run_flow(y0, path, cfg, Direction::Inverse, cfg.horizon)
}

/// The value of the flow at a single time `t`, without recording.
pub fn flow_to<S: NoiseSource>(
    x0: &[Vec<f64>],
    path: &S,
    cfg: &FlowConfig,
    dir: Direction,
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut c = cfg.clone();
    c.record_every = None;
    Ok(run_flow(x0, path, &c, dir, t)?.states.pop().unwrap_or_default())
}

/// Estimate of the random point `b`, the threshold between the basins of 0 and 1 of each
/// coordinate of the forward flow.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BasinEstimate {
    pub b: Vec<f64>,
    /// Final bisection brackets: `lower[i]` flows to 0, `upper[i]` to 1.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tolerance: f64,
    pub horizon_used: f64,
}

/// Lazily extended forward increments for basin classification.
struct Classifier<'a, S> {
    path: &'a S,
    cfg: &'a FlowConfig,
    segments: Vec<Increments>,
    used: usize,
}

impl<S: NoiseSource> Classifier<'_, S> {
    fn segment(&mut self, k: usize) -> Result<&Increments> {
        while self.segments.len() <= k {
            let j = self.segments.len() as f64;
            let h = self.cfg.horizon;
            self.segments.push(self.path.increments(j * h, (j + 1.0) * h, self.cfg.dt)?);
        }
        Ok(&self.segments[k])
    }

    /// `Some(false)` for the basin of 0, `Some(true)` for the basin of 1.
    fn classify(&mut self, x: f64, c: usize) -> Result<Option<bool>> {
        if x <= 0.0 {
            return Ok(Some(false));
        }
        if x >= 1.0 {
            return Ok(Some(true));
        }
        let mut v = [x];
        for k in 0..self.cfg.cap_factor as usize {
            let dt = self.cfg.dt;
            let integrator = self.cfg.integrator;
            let seg = self.segment(k)?;
            advance(&mut v, seg.coord(c), dt, Direction::Forward, integrator);
            self.used = self.used.max(k + 1);
            let eps = self.cfg.boundary_eps;
            if v[0] < eps {
                return Ok(Some(false));
            }
            if v[0] > 1.0 - eps {
                return Ok(Some(true));
            }
        }
        Ok(None)
    }
}

/// Bisection estimate of `b`, started from the bracket `[0, 1]`.
pub fn estimate_b<S: NoiseSource>(path: &S, cfg: &FlowConfig, tol: f64) -> Result<BasinEstimate> {
    estimate_b_with_grid(path, cfg, tol, &[])
}

/// As [`estimate_b`], first narrowing the bracket with the classification of `grid`.
pub fn estimate_b_with_grid<S: NoiseSource>(
    path: &S,
    cfg: &FlowConfig,
    tol: f64,
    grid: &[f64],
) -> Result<BasinEstimate> {
    bisect_basins(path, cfg, tol, grid, false).map(|(e, _)| e)
}

/// As [`estimate_b`], but a coordinate whose bisection meets an undecided point stops
/// there and reports the midpoint of its bracket. The flags mark those coordinates.
pub fn estimate_b_or_midpoint<S: NoiseSource>(path: &S, cfg: &FlowConfig, tol: f64) -> Result<(BasinEstimate, Vec<bool>)> {
    bisect_basins(path, cfg, tol, &[], true)
}

fn bisect_basins<S: NoiseSource>(
    path: &S,
    cfg: &FlowConfig,
    tol: f64,
    grid: &[f64],
    lenient: bool,
) -> Result<(BasinEstimate, Vec<bool>)> {
    cfg.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("tolerance {tol} must be positive")));
    }
    if path.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: path.dim(),
        });
    }
    let mut grid: Vec<f64> = grid.iter().copied().filter(|g| *g > 0.0 && *g < 1.0).collect();
    grid.sort_by(f64::total_cmp);
    let mut cl = Classifier {
        path,
        cfg,
        segments: Vec::new(),
        used: 1,
    };
    let mut est = BasinEstimate {
        b: Vec::with_capacity(cfg.d),
        lower: Vec::with_capacity(cfg.d),
        upper: Vec::with_capacity(cfg.d),
        tolerance: tol,
        horizon_used: 0.0,
    };
    let mut undecided = Vec::with_capacity(cfg.d);
    for c in 0..cfg.d {
        let (mut lo, mut hi) = (0.0, 1.0);
        for &g in &grid {
            match cl.classify(g, c)? {
                Some(false) => lo = g,
                Some(true) => {
                    hi = g;
                    break;
                }
                None => {}
            }
        }
        let mut stuck = false;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            match cl.classify(mid, c)? {
                Some(false) => lo = mid,
                Some(true) => hi = mid,
                None if lenient => {
                    stuck = true;
                    break;
                }
                None => {
                    return Err(Error::UndecidedBasin {
                        coord: c,
                        lo,
                        hi,
                        x: mid,
                        horizon: cfg.horizon * cfg.cap_factor as f64,
                    })
                }
            }
        }
        est.b.push(0.5 * (lo + hi));
        est.lower.push(lo);
        est.upper.push(hi);
        undecided.push(stuck);
    }
    est.horizon_used = cl.used as f64 * cfg.horizon;
    Ok((est, undecided))
}

/// What a pullback or forward distance is measured against.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Points(Vec<Vec<f64>>),
    /// The union `H^m` of all `m`-dimensional faces; `H^d` is the whole cube.
    HUnion(usize),
}

impl Target {
    pub fn distance_from(&self, set: &[Vec<f64>]) -> Result<f64> {
        match self {
            Target::Points(t) => hausdorff_semidistance(set, t, Metric::Uniform),
            Target::HUnion(m) => {
                if set.is_empty() {
                    return Err(Error::EmptySet);
                }
                Ok(set.iter().map(|x| distance_to_h_union(x, *m)).fold(0.0, f64::max))
            }
        }
    }
}

/// `d(φ(t, θ_{-t}ω) C, target)` for each `t`: the flow over `[0, t]` is driven by
/// `shift(path, -t)`.
pub fn pullback_distance<S: NoiseSource>(
    set: &[Vec<f64>],
    target: &Target,
    times: &[f64],
    path: &S,
    cfg: &FlowConfig,
    dir: Direction,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0.0 {
            check_points(set, cfg.d, dir, cfg.integrator)?;
            out.push(target.distance_from(set)?);
            continue;
        }
        let view = path.shift(-t)?;
        let image = flow_to(set, &view, cfg, dir, t)?;
        out.push(target.distance_from(&image)?);
    }
    Ok(out)
}

/// Per-seed outcome of the face-attraction experiment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FaceAttraction {
    pub seed: u64,
    pub times: Vec<f64>,
    /// `d(φ(t)C, H^m)` at each recorded time.
    pub distances: Vec<f64>,
    /// Number of points in the final (possibly refined) image.
    pub points: usize,
}

impl FaceAttraction {
    pub fn terminal(&self) -> f64 {
        self.distances.last().copied().unwrap_or(f64::NAN)
    }
}

/// Forward-flows `set` under the path of `seed` and tracks its distance to `H^m`.
///
/// Point clouds flow coordinate-wise on their distinct coordinate values. A segment recipe
/// is refined adaptively: parameters are bisected wherever consecutive image points are
/// more than `refine_tol` apart at some recorded time, so the image curve stays connected
/// at that resolution.
pub fn face_attraction_seed(
    set: &CompactSetApprox,
    m_level: usize,
    seed: u64,
    cfg: &FlowConfig,
    refine_tol: Option<f64>,
) -> Result<FaceAttraction> {
    cfg.validate()?;
    if set.ambient_dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: set.ambient_dim(),
        });
    }
    check_points(&set.points, cfg.d, Direction::Forward, cfg.integrator)?;
    let path = WienerPath2S::new(seed, cfg.d);
    let times = cfg.record_times(cfg.horizon)?;
    let inc = path.increments(0.0, cfg.horizon, cfg.dt)?;
    let target = Target::HUnion(m_level);

    // one trajectory per distinct value per coordinate
    let flow_values = |vals: &[f64], c: usize| -> Vec<Vec<f64>> {
        flow_column(vals.to_vec(), inc.coord(c), cfg, &times, Direction::Forward)
    };

    let images: Vec<Vec<Vec<f64>>> = match (&set.recipe, refine_tol) {
        (Recipe::Segment { from, to, .. }, Some(tol)) => {
            refine_segment(from, to, set.points.len().max(2), tol, &flow_values, times.len())
        }
        _ => {
            let mut per_coord = Vec::with_capacity(cfg.d);
            for c in 0..cfg.d {
                let mut vals: Vec<f64> = set.points.iter().map(|p| p[c]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                let snaps = flow_values(&vals, c);
                per_coord.push((vals, snaps));
            }
            (0..times.len())
                .map(|r| {
                    set.points
                        .iter()
                        .map(|p| {
                            (0..cfg.d)
                                .map(|c| {
                                    let (vals, snaps) = &per_coord[c];
                                    let i = vals.binary_search_by(|v| v.total_cmp(&p[c])).unwrap_or(0);
                                    snaps[r][i]
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        }
    };
    let distances = images
        .iter()
        .map(|img| target.distance_from(img))
        .collect::<Result<Vec<_>>>()?;
    Ok(FaceAttraction {
        seed,
        times,
        distances,
        points: images.last().map_or(0, Vec::len),
    })
}

/// Smallest parameter gap the segment refinement will bisect.
const MIN_PARAM_GAP: f64 = 1e-15;

fn refine_segment(
    from: &[f64],
    to: &[f64],
    initial: usize,
    tol: f64,
    flow_values: &dyn Fn(&[f64], usize) -> Vec<Vec<f64>>,
    records: usize,
) -> Vec<Vec<Vec<f64>>> {
    let d = from.len();
    let point = |s: f64| -> Vec<f64> { (0..d).map(|c| from[c] + s * (to[c] - from[c])).collect() };
    // images[j][r] is the image of parameter s[j] at record r
    let flow_params = |ss: &[f64]| -> Vec<Vec<Vec<f64>>> {
        let pts: Vec<Vec<f64>> = ss.iter().map(|&s| point(s)).collect();
        let per_coord: Vec<Vec<Vec<f64>>> = (0..d)
            .map(|c| flow_values(&pts.iter().map(|p| p[c]).collect::<Vec<_>>(), c))
            .collect();
        (0..ss.len())
            .map(|j| (0..records).map(|r| (0..d).map(|c| per_coord[c][r][j]).collect()).collect())
            .collect()
    };
    let mut s: Vec<f64> = (0..initial).map(|i| i as f64 / (initial - 1) as f64).collect();
    let mut img = flow_params(&s);
    loop {
        let mut mids = Vec::new();
        for j in 0..s.len() - 1 {
            let far = (0..records).any(|r| Metric::Uniform.distance(&img[j][r], &img[j + 1][r]) > tol);
            if far && s[j + 1] - s[j] > MIN_PARAM_GAP {
                mids.push((j, 0.5 * (s[j] + s[j + 1])));
            }
        }
        if mids.is_empty() {
            break;
        }
        let new_params: Vec<f64> = mids.iter().map(|m| m.1).collect();
        let new_img = flow_params(&new_params);
        let mut s2 = Vec::with_capacity(s.len() + mids.len());
        let mut img2 = Vec::with_capacity(s.len() + mids.len());
        let mut k = 0;
        for j in 0..s.len() {
            s2.push(s[j]);
            img2.push(core::mem::take(&mut img[j]));
            if k < mids.len() && mids[k].0 == j {
                s2.push(mids[k].1);
                img2.push(new_img[k].clone());
                k += 1;
            }
        }
        s = s2;
        img = img2;
    }
    (0..records).map(|r| img.iter().map(|traj| traj[r].clone()).collect()).collect()
}

/// The truncated sequence `z_i = i · mesh`, `|z_i| ≤ z_max`.
pub fn z_grid(mesh: f64, z_max: f64) -> Result<Vec<f64>> {
    if !(mesh > 0.0 && z_max >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("bad z grid mesh {mesh}, bound {z_max}")));
    }
    let n = (z_max / mesh + 1e-9).floor() as i64;
    Ok((-n..=n).map(|i| i as f64 * mesh).collect())
}

/// The countable set `{0, 1} ∪ {f^{-1}(z_i)}` in increasing order.
pub fn cc_set(z: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = z.iter().map(|&z| logit_inv_coord_back(z)).collect();
    b.push(0.0);
    b.push(1.0);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Largest gap between consecutive values of a set in `[0,1]`.
pub fn max_gap(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Per-seed outcome of the countable-set density experiment (`d = 1`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CcDensity {
    pub seed: u64,
    pub times: Vec<f64>,
    pub max_gap: Vec<f64>,
    /// `pair_distances[k][r]`: `|φ(t)x_k - φ(t)y_k|` at record `r`.
    pub pair_distances: Vec<Vec<f64>>,
}

/// Flows the set `{0,1} ∪ {f^{-1}(z_i)}` and the given pairs in dimension 1.
pub fn cc_density_seed(
    z: &[f64],
    pairs: &[(f64, f64)],
    seed: u64,
    cfg: &FlowConfig,
    dir: Direction,
) -> Result<CcDensity> {
    cfg.validate()?;
    if cfg.d != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: cfg.d });
    }
    let path = WienerPath2S::new(seed, 1);
    let times = cfg.record_times(cfg.horizon)?;
    let inc = path.increments(0.0, cfg.horizon, cfg.dt)?;
    let snaps = flow_column(cc_set(z), inc.coord(0), cfg, &times, dir);
    let max_gap = snaps.iter().map(|s| max_gap(s)).collect();
    let mut pair_distances = Vec::with_capacity(pairs.len());
    for &(x, y) in pairs {
        let s = flow_column(vec![x, y], inc.coord(0), cfg, &times, dir);
        pair_distances.push(s.iter().map(|v| (v[0] - v[1]).abs()).collect());
    }
    Ok(CcDensity {
        seed,
        times,
        max_gap,
        pair_distances,
    })
}

/// Flows one column of values through `dw` and records it at `times`.
fn flow_column(mut col: Vec<f64>, dw: &[f64], cfg: &FlowConfig, times: &[f64], dir: Direction) -> Vec<Vec<f64>> {
    let mut snaps = vec![col.clone()];
    let mut prev = 0usize;
    for &t in &times[1..] {
        let k = (t / cfg.dt) as usize;
        advance(&mut col, &dw[prev..k], cfg.dt, dir, cfg.integrator);
        snaps.push(col.clone());
        prev = k;
    }
    snaps
}

/// Per-seed outcome of the synchronization experiment (`d = 1`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Synchronization {
    pub seed: u64,
    /// Estimate of `b` for the time-reversed path, the pullback limit of the inverse flow.
    pub b: f64,
    /// True when bisection stopped at an undecided point and `b` is a bracket midpoint.
    pub b_undecided: bool,
    pub times: Vec<f64>,
    /// Pullback distance of the starting points to `{b}` at each time.
    pub pullback: Vec<f64>,
    /// `|φ̄(t)x - φ̄(t)y|` along the forward-in-time inverse flow.
    pub pairwise: Vec<f64>,
}

/// Pullback of the inverse flow towards `b` and forward pairwise synchronization.
pub fn synchronization_seed(
    starts: &[f64],
    times: &[f64],
    seed: u64,
    cfg: &FlowConfig,
    tol: f64,
) -> Result<Synchronization> {
    if cfg.d != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: cfg.d });
    }
    let path = WienerPath2S::new(seed, 1);
    // the inverse flow driven by shift(path, -t) over [0, t] is the inverse of the forward
    // flow driven by the time-reversed path over [0, t]
    let reversed = path.time_reversed();
    let (est, undecided) = estimate_b_or_midpoint(&reversed, cfg, tol)?;
    let (b, b_undecided) = (est.b[0], undecided[0]);
    let set: Vec<Vec<f64>> = starts.iter().map(|&x| vec![x]).collect();
    let pullback = pullback_distance(&set, &Target::Points(vec![vec![b]]), times, &path, cfg, Direction::Inverse)?;
    let mut pairwise = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0.0 {
            pairwise.push(spread(&set));
        } else {
            pairwise.push(spread(&flow_to(&set, &path, cfg, Direction::Inverse, t)?));
        }
    }
    Ok(Synchronization {
        seed,
        b,
        b_undecided,
        times: times.to_vec(),
        pullback,
        pairwise,
    })
}

fn spread(set: &[Vec<f64>]) -> f64 {
    let lo = set.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let hi = set.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsets::{make_cantor_cloud, segment, Embedding};
    use proptest::prelude::*;

    fn cfg(d: usize, horizon: f64) -> FlowConfig {
        FlowConfig {
            d,
            horizon,
            ..FlowConfig::default()
        }
    }

    #[test]
    fn scale_function_values() {
        assert_eq!(scale_function(0.5).unwrap(), 0.0);
        // (2 ln 3 + 0.5/0.1875) / 16 evaluated by hand to 16 digits
        let expected = (2.0 * 1.098_612_288_668_109_7 + 8.0 / 3.0) / 16.0;
        assert!((scale_function(0.75).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.304).abs() < 5e-4);
        assert!(scale_function(0.0).is_err() && scale_function(1.0).is_err());
    }

    #[test]
    fn scale_function_derivative() {
        // p'(y) = 1 / (16 y²(1-y)²), from the drift and diffusion of the inverse equation
        for &y in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let h = 1e-6;
            let num = (scale_function(y + h).unwrap() - scale_function(y - h).unwrap()) / (2.0 * h);
            let exact = 1.0 / (16.0 * y * y * (1.0 - y) * (1.0 - y));
            assert!((num / exact - 1.0).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn scale_function_antisymmetric(y in 1e-6f64..(1.0 - 1e-6)) {
            let s = scale_function(y).unwrap() + scale_function(1.0 - y).unwrap();
            prop_assert!(s.abs() <= 1e-9 * scale_function(y).unwrap().abs().max(1.0));
        }

        #[test]
        fn drift_odd_and_bounded(z in -800.0f64..800.0) {
            prop_assert_eq!(logit_drift(-z), -logit_drift(z));
            prop_assert!(logit_drift(z).abs() <= 0.5);
            if z.abs() < 30.0 {
                prop_assert!(logit_drift(z).abs() < 0.5);
                let e = (-z).exp();
                prop_assert!((logit_drift(z) - (1.0 - e) / (2.0 * (1.0 + e))).abs() < 1e-14);
            }
        }

        #[test]
        fn forward_order_preserved(seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            let mut c = cfg(1, 4.0);
            c.record_every = Some(0.25);
            for integ in [Integrator::DirectEm, Integrator::LogitEm] {
                c.integrator = integ;
                let tr = forward_flow(&[vec![x], vec![y]], &WienerPath2S::new(seed, 1), &c).unwrap();
                for s in &tr.states {
                    prop_assert!(s[0][0] <= s[1][0]);
                }
            }
        }
    }

    #[test]
    fn fixed_points_and_faces() {
        let path = WienerPath2S::new(3, 2);
        for integ in [Integrator::DirectEm, Integrator::LogitEm] {
            let mut c = cfg(2, 8.0);
            c.integrator = integ;
            c.record_every = Some(1.0);
            let tr = forward_flow(&[vec![0.0, 0.3], vec![1.0, 0.6], vec![0.0, 1.0]], &path, &c).unwrap();
            for s in &tr.states {
                assert_eq!(s[0][0], 0.0);
                assert_eq!(s[1][0], 1.0);
                assert_eq!(s[2], vec![0.0, 1.0]);
            }
        }
        let mut c = cfg(2, 8.0);
        c.integrator = Integrator::DirectEm;
        let tr = inverse_flow(&[vec![0.0, 1.0]], &path, &c).unwrap();
        assert_eq!(tr.last()[0], vec![0.0, 1.0]);
        c.integrator = Integrator::LogitEm;
        assert!(matches!(
            inverse_flow(&[vec![0.0, 0.5]], &path, &c),
            Err(Error::OutsideStateSpace(_))
        ));
        assert!(forward_flow(&[vec![1.5, 0.5]], &path, &c).is_err());
    }

    #[test]
    fn inverse_start_at_half() {
        assert_eq!(logit_inv_coord(0.5), 0.0);
        assert_eq!(logit_drift(0.0), 0.0);
        assert!((logit_inv_coord_back(logit_inv_coord(0.2)) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn logit_and_direct_agree() {
        // the logit scheme integrates the same equations, so both discretizations are
        // close for interior starts over a moderate horizon
        let tol = 10.0 * (1.0f64 / 1024.0).sqrt();
        for seed in 0..20 {
            let path = WienerPath2S::new(seed, 1);
            for dir in [Direction::Forward, Direction::Inverse] {
                let mut worst = 0.0f64;
                let mut c = cfg(1, 10.0);
                c.record_every = Some(0.5);
                let starts = [vec![0.2], vec![0.5], vec![0.8]];
                c.integrator = Integrator::DirectEm;
                let a = run_flow(&starts, &path, &c, dir, 10.0).unwrap();
                c.integrator = Integrator::LogitEm;
                let b = run_flow(&starts, &path, &c, dir, 10.0).unwrap();
                for (sa, sb) in a.states.iter().zip(&b.states) {
                    for (pa, pb) in sa.iter().zip(sb) {
                        worst = worst.max((pa[0] - pb[0]).abs());
                    }
                }
                assert!(worst < tol, "seed {seed} {dir:?}: {worst}");
            }
        }
    }

    #[test]
    fn bisection_brackets_nest() {
        let path = WienerPath2S::new(21, 1);
        let c = cfg(1, 50.0);
        let coarse = estimate_b(&path, &c, 0.1).unwrap();
        let fine = estimate_b(&path, &c, 0.01).unwrap();
        assert!(coarse.lower[0] <= fine.lower[0] && fine.upper[0] <= coarse.upper[0]);
        assert!(fine.upper[0] - fine.lower[0] <= 0.01);
        // bracket invariant: the lower end flows to 0, the upper end to 1
        let long = FlowConfig {
            horizon: 200.0,
            ..c.clone()
        };
        let end = flow_to(&[vec![fine.lower[0]], vec![fine.upper[0]]], &path, &long, Direction::Forward, 200.0).unwrap();
        assert!(end[0][0] < 1e-4 && end[1][0] > 1.0 - 1e-4);
    }

    #[test]
    fn estimate_independent_of_grid() {
        let path = WienerPath2S::new(5, 2);
        let c = cfg(2, 50.0);
        let tol = 1e-3;
        let a = estimate_b(&path, &c, tol).unwrap();
        let b = estimate_b_with_grid(&path, &c, tol, &[0.13, 0.37, 0.61, 0.89]).unwrap();
        for i in 0..2 {
            assert!((a.b[i] - b.b[i]).abs() <= tol);
            assert!(a.b[i] > 0.0 && a.b[i] < 1.0);
        }
    }

    #[test]
    fn pullback_identity_and_whole_cube() {
        let path = WienerPath2S::new(9, 1);
        let c = cfg(1, 50.0);
        let set = vec![vec![0.1], vec![0.9]];
        let target = Target::Points(vec![vec![0.5]]);
        let d = pullback_distance(&set, &target, &[0.0, 4.0], &path, &c, Direction::Inverse).unwrap();
        assert!((d[0] - 0.4).abs() < 1e-15);
        let whole = pullback_distance(&set, &Target::HUnion(1), &[0.0, 1.0, 2.0], &path, &c, Direction::Inverse).unwrap();
        assert_eq!(whole, vec![0.0; 3]);
    }

    #[test]
    fn pullback_reuses_noise() {
        // the flow over [0, t] driven by shift(path, -t) consumes exactly the increments on
        // [-t, 0]; lengthening t only draws the newly exposed unit intervals
        let path = WienerPath2S::new(4, 1);
        let c = cfg(1, 50.0);
        let set = vec![vec![0.3]];
        let target = Target::Points(vec![vec![0.5]]);
        pullback_distance(&set, &target, &[4.0], &path, &c, Direction::Inverse).unwrap();
        let before = path.blocks_generated();
        pullback_distance(&set, &target, &[4.0], &path, &c, Direction::Inverse).unwrap();
        assert_eq!(path.blocks_generated(), before);
        pullback_distance(&set, &target, &[6.0], &path, &c, Direction::Inverse).unwrap();
        assert_eq!(path.blocks_generated(), before + 2 * 11);
    }

    #[test]
    fn pullback_converges_to_b() {
        let mut hits = 0;
        let n = 40;
        for seed in 0..n {
            let s = synchronization_seed(&[0.1, 0.9], &[0.0, 50.0], seed, &cfg(1, 50.0), 1e-4).unwrap();
            if s.pullback[1] < 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= 36, "{hits}/{n}");
    }

    #[test]
    fn invariant_faces_stay_at_distance_zero() {
        let c = {
            let mut c = cfg(2, 10.0);
            c.record_every = Some(1.0);
            c
        };
        let face = segment(vec![0.0, 0.0], vec![0.0, 1.0], 11).unwrap();
        let out = face_attraction_seed(&face, 1, 3, &c, None).unwrap();
        assert!(out.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn cantor_product_distance_is_recorded() {
        let a = make_cantor_cloud(1.0 / 3.0, 2, Embedding::Line).unwrap();
        let set = a.product(&a);
        let mut c = cfg(2, 4.0);
        c.record_every = Some(1.0);
        let out = face_attraction_seed(&set, 1, 1, &c, None).unwrap();
        assert_eq!(out.times.len(), 5);
        assert_eq!(out.points, set.len());
        // at t = 0 the farthest point from the edges is (1/3, 1/3) up to symmetry
        assert!((out.distances[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn segment_refinement_keeps_curve_connected() {
        let seg = segment(vec![0.0, 0.5], vec![1.0, 0.5], 5).unwrap();
        let out = face_attraction_seed(&seg, 0, 2, &cfg(2, 20.0), Some(0.05)).unwrap();
        // the image of s ↦ (s, 1/2) joins opposite edges, so some point is near the middle
        assert!(out.terminal() >= 0.25);
        assert!(out.points > 5);
    }

    #[test]
    fn cc_set_and_gaps() {
        let z = z_grid(0.05, 12.0).unwrap();
        assert_eq!(z.len(), 481);
        let b = cc_set(&z);
        assert_eq!(b.len(), 483);
        let g0 = max_gap(&b);
        let c = cfg(1, 1.0);
        let out = cc_density_seed(&z, &[(0.1, 0.9)], 1, &c, Direction::Inverse).unwrap();
        assert_eq!(out.max_gap[0], g0);
        assert!((out.pair_distances[0][0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = FlowConfig::default();
        assert!(c.validate().is_ok());
        c.dt = 0.001;
        assert!(c.validate().is_err());
        c.dt = 1.0 / 1024.0;
        c.boundary_eps = 0.5;
        assert!(c.validate().is_err());
    }
}
