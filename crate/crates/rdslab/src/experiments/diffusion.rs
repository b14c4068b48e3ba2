use rayon::ThreadPool;
use rdslab_core::diffusion::{
    cc_density_seed, estimate_b_or_midpoint, face_attraction_seed, inverse_flow, synchronization_seed, z_grid,
    Direction, FlowConfig,
};
use rdslab_core::noise::WienerPath2S;
use rdslab_core::seeding::seed_replica;
use rdslab_core::stats::{ks_uniform, pearson};
use rdslab_core::testsets::{CompactSetApprox, Embedding, Recipe};
use serde::{Deserialize, Serialize};

use super::{fraction_line, Context, Prepare, RunError};
use crate::config::{load_set, ConfigError, ExperimentConfig};
use crate::formats;
use crate::runner::{par_replicas, Assertion, Outcome};

fn check_flow(flow: &FlowConfig, path: &str) -> Result<(), ConfigError> {
    flow.validate().map_err(|e| ConfigError::new(path, e.to_string()))
}

fn check_fraction(v: f64, path: &str) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(path, "must be in [0, 1]"))
    }
}

fn check_positive(v: f64, path: &str) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, "must be positive"))
    }
}

/// `b` for one path; undecided coordinates get their bracket midpoint.
fn b_or_midpoint(path: &WienerPath2S, flow: &FlowConfig, tol: f64) -> Result<(Vec<f64>, bool), RunError> {
    let (est, undecided) = estimate_b_or_midpoint(path, flow, tol).ctx("basin estimate")?;
    Ok((est.b, undecided.iter().any(|&u| u)))
}

// estimate-b

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateBParams {
    pub flow: FlowConfig,
    pub tolerance: f64,
}

impl Default for EstimateBParams {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            tolerance: 1e-3,
        }
    }
}

impl Prepare for EstimateBParams {
    type Ready = Self;
    fn prepare(self, _cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        check_flow(&self.flow, "params.flow")?;
        check_positive(self.tolerance, "params.tolerance")?;
        Ok(self)
    }
}

fn b_table(flow: &FlowConfig, tol: f64, seed: u64, n: usize, pool: &ThreadPool) -> Result<Vec<(u64, Vec<f64>, bool)>, RunError> {
    par_replicas(pool, n, |i| {
        let s = seed_replica(seed, i as u64);
        let (b, undecided) = b_or_midpoint(&WienerPath2S::new(s, flow.d), flow, tol)?;
        Ok((s, b, undecided))
    })
}

fn b_csv(d: usize, rows: &[(u64, Vec<f64>, bool)]) -> String {
    let mut header: Vec<String> = vec!["seed".into()];
    header.extend((1..=d).map(|i| format!("b{i}")));
    header.push("undecided".into());
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(s, b, u)| {
            let mut r = vec![s.to_string()];
            r.extend(b.iter().map(|v| format!("{v:?}")));
            r.push(u.to_string());
            r
        })
        .collect();
    formats::table_csv(&h, &cells)
}

pub(super) fn estimate_b(p: EstimateBParams, seed: u64, n: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let rows = b_table(&p.flow, p.tolerance, seed, n, pool)?;
    let mut out = Outcome::default();
    let undecided = rows.iter().filter(|r| r.2).count();
    out.note(format!("estimated b for {n} seeds in dimension {}, {undecided} undecided", p.flow.d));
    for c in 0..p.flow.d {
        let mean = rows.iter().map(|r| r.1[c]).sum::<f64>() / n as f64;
        out.note(format!("  mean b{} = {mean:.4}", c + 1));
    }
    out.put("seeds", n);
    out.put("undecided", undecided);
    out.put("b", rows.iter().map(|r| &r.1).collect::<Vec<_>>());
    out.file("b.csv", b_csv(p.flow.d, &rows));
    Ok(out)
}

// verify-uniform

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyUniformParams {
    pub flow: FlowConfig,
    /// Dimensions tested in turn; `flow.d` is replaced by each.
    pub dims: Vec<usize>,
    pub tolerance: f64,
    pub min_p_value: f64,
    pub max_abs_correlation: f64,
}

impl Default for VerifyUniformParams {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            dims: vec![1, 2],
            tolerance: 1e-3,
            min_p_value: 0.01,
            max_abs_correlation: 0.1,
        }
    }
}

impl Prepare for VerifyUniformParams {
    type Ready = Self;
    fn prepare(self, _cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        check_flow(&self.flow, "params.flow")?;
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(ConfigError::new("params.dims", "dimensions must be positive"));
        }
        check_positive(self.tolerance, "params.tolerance")?;
        check_fraction(self.min_p_value, "params.min_p_value")?;
        check_positive(self.max_abs_correlation, "params.max_abs_correlation")?;
        Ok(self)
    }
}

pub(super) fn verify_uniform(p: VerifyUniformParams, seed: u64, n: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    let mut per_dim = serde_json::Map::new();
    for &d in &p.dims {
        let flow = FlowConfig { d, ..p.flow.clone() };
        let rows = b_table(&flow, p.tolerance, seed, n, pool)?;
        let undecided = rows.iter().filter(|r| r.2).count();
        out.note(format!("d = {d}: {n} seeds, {undecided} undecided estimates (bracket midpoints)"));
        let cols: Vec<Vec<f64>> = (0..d).map(|c| rows.iter().map(|r| r.1[c]).collect()).collect();
        let mut ks = Vec::new();
        for (c, col) in cols.iter().enumerate() {
            let k = ks_uniform(col);
            out.note(format!("  coordinate {}: KS D = {:.5}, p = {:.4}", c + 1, k.statistic, k.p_value));
            out.check(Assertion::new(format!("d = {d}: KS p-value of b{}", c + 1), k.p_value, ">", p.min_p_value));
            ks.push(serde_json::json!({ "statistic": k.statistic, "p_value": k.p_value }));
        }
        let mut corr = Vec::new();
        for a in 0..d {
            for b in a + 1..d {
                let r = pearson(&cols[a], &cols[b]);
                out.note(format!("  corr(b{}, b{}) = {r:.4}", a + 1, b + 1));
                out.check(Assertion::new(
                    format!("d = {d}: |corr(b{}, b{})|", a + 1, b + 1),
                    r.abs(),
                    "<",
                    p.max_abs_correlation,
                ));
                corr.push(r);
            }
        }
        per_dim.insert(
            format!("d{d}"),
            serde_json::json!({ "seeds": n, "undecided": undecided, "ks": ks, "correlations": corr }),
        );
        out.file(format!("b_d{d}.csv"), b_csv(d, &rows));
    }
    out.put("dims", per_dim);
    Ok(out)
}

// simulate-diffusion

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateDiffusionParams {
    pub flow: FlowConfig,
    pub starts: Vec<f64>,
    pub times: Vec<f64>,
    pub tolerance: f64,
    pub threshold: f64,
    pub min_fraction: f64,
    /// Seeds whose inverse-flow trajectories are exported.
    pub export: usize,
    pub export_every: f64,
}

impl Default for SimulateDiffusionParams {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            starts: vec![0.1, 0.9],
            times: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            tolerance: 1e-3,
            threshold: 0.05,
            min_fraction: 0.9,
            export: 5,
            export_every: 0.5,
        }
    }
}

impl Prepare for SimulateDiffusionParams {
    type Ready = Self;
    fn prepare(self, _cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        check_flow(&self.flow, "params.flow")?;
        if self.flow.d != 1 {
            return Err(ConfigError::new("params.flow.d", "synchronization runs in dimension 1"));
        }
        if self.starts.len() < 2 {
            return Err(ConfigError::new("params.starts", "at least two starting points"));
        }
        for (i, &x) in self.starts.iter().enumerate() {
            if !(x > 0.0 && x < 1.0) {
                return Err(ConfigError::new(format!("params.starts[{i}]"), "must be in (0, 1)"));
            }
        }
        if self.times.is_empty() {
            return Err(ConfigError::new("params.times", "at least one time"));
        }
        for (i, &t) in self.times.iter().enumerate() {
            if t != 0.0 {
                self.flow
                    .steps_for(t)
                    .map_err(|e| ConfigError::new(format!("params.times[{i}]"), e.to_string()))?;
            }
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::new("params.times", "must be increasing"));
        }
        check_positive(self.tolerance, "params.tolerance")?;
        check_positive(self.threshold, "params.threshold")?;
        check_fraction(self.min_fraction, "params.min_fraction")?;
        if self.export > 0 {
            self.flow
                .steps_for(self.export_every)
                .map_err(|e| ConfigError::new("params.export_every", e.to_string()))?;
        }
        Ok(self)
    }
}

pub(super) fn simulate_diffusion(p: SimulateDiffusionParams, seed: u64, n: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let runs = par_replicas(pool, n, |i| {
        synchronization_seed(&p.starts, &p.times, seed_replica(seed, i as u64), &p.flow, p.tolerance)
            .ctx("synchronization run")
    })?;
    let mut out = Outcome::default();
    let t_end = *p.times.last().expect("times");
    let pull = runs.iter().filter(|r| r.pullback.last().is_some_and(|&v| v < p.threshold)).count();
    let pair = runs.iter().filter(|r| r.pairwise.last().is_some_and(|&v| v < p.threshold)).count();
    let undecided = runs.iter().filter(|r| r.b_undecided).count();
    out.note(format!("starts {:?}, {n} seeds, {undecided} undecided estimates of b", p.starts));
    out.note(fraction_line(&format!("pullback distance to b below {} at t = {t_end}", p.threshold), pull, n));
    out.note(fraction_line(&format!("pairwise distance below {} at t = {t_end}", p.threshold), pair, n));
    out.check(Assertion::new("pullback synchronization fraction", pull as f64 / n as f64, ">=", p.min_fraction));
    out.check(Assertion::new("pairwise synchronization fraction", pair as f64 / n as f64, ">=", p.min_fraction));
    out.put("seeds", n);
    out.put("undecided", undecided);
    out.put("pullback_hits", pull);
    out.put("pairwise_hits", pair);

    let rows: Vec<Vec<String>> = runs
        .iter()
        .flat_map(|r| {
            r.times.iter().enumerate().map(move |(k, t)| {
                vec![
                    r.seed.to_string(),
                    format!("{t:?}"),
                    format!("{:?}", r.b),
                    format!("{:?}", r.pullback[k]),
                    format!("{:?}", r.pairwise[k]),
                ]
            })
        })
        .collect();
    out.file(
        "synchronization.csv",
        formats::table_csv(&["seed", "t", "b", "pullback", "pairwise"], &rows),
    );

    let export = p.export.min(n);
    let flow = FlowConfig {
        record_every: Some(p.export_every),
        horizon: t_end.max(p.export_every),
        ..p.flow.clone()
    };
    let set: Vec<Vec<f64>> = p.starts.iter().map(|&x| vec![x]).collect();
    let trajs = par_replicas(pool, export, |i| -> Result<_, RunError> {
        let s = seed_replica(seed, i as u64);
        Ok((s, inverse_flow(&set, &WienerPath2S::new(s, 1), &flow).ctx("inverse flow")?))
    })?;
    out.file(
        "trajectories.csv",
        formats::trajectories_csv(
            1,
            trajs.iter().flat_map(|(s, tr)| {
                tr.times.iter().zip(&tr.states).flat_map(move |(t, pts)| {
                    pts.iter().enumerate().map(move |(k, x)| formats::TrajectoryRow {
                        seed: *s,
                        t: *t,
                        point: k,
                        coords: x,
                    })
                })
            }),
        ),
    );
    Ok(out)
}

// face-attraction

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceAttractionParams {
    pub flow: FlowConfig,
    /// Attracted set; `None` means the product of two middle-third Cantor clouds.
    pub set: Option<toml::Table>,
    pub m_level: usize,
    pub threshold: f64,
    pub min_fraction: f64,
    /// Negative control: a set kept away from `H^{control_level}`.
    pub control: Option<toml::Table>,
    pub control_level: usize,
    pub control_refine: f64,
    pub control_distance: f64,
    pub cantor_depth: u32,
}

impl Default for FaceAttractionParams {
    fn default() -> Self {
        Self {
            flow: FlowConfig {
                d: 2,
                record_every: Some(10.0),
                ..FlowConfig::default()
            },
            set: None,
            m_level: 1,
            threshold: 0.05,
            min_fraction: 0.9,
            control: None,
            control_level: 0,
            control_refine: 0.05,
            control_distance: 0.25,
            cantor_depth: 8,
        }
    }
}

pub struct FaceAttractionReady {
    p: FaceAttractionParams,
    set: CompactSetApprox,
    control: CompactSetApprox,
}

pub fn cantor_square(depth: u32) -> Recipe {
    let c = Recipe::Cantor {
        log_ratio: (1.0f64 / 3.0).ln(),
        depth,
        embed: Embedding::Line,
    };
    Recipe::Product {
        factors: vec![c.clone(), c],
    }
}

pub fn diagonal(points: usize) -> Recipe {
    Recipe::Segment {
        from: vec![0.0, 0.0],
        to: vec![1.0, 1.0],
        points,
    }
}

fn build_set(cfg: &ExperimentConfig, path: &str, t: Option<&toml::Table>, default: Recipe, d: usize) -> Result<CompactSetApprox, ConfigError> {
    let recipe = match t {
        Some(t) => load_set(cfg, path, t)?,
        None => default,
    };
    let set = recipe.build().map_err(|e| ConfigError::new(path, e.to_string()))?;
    if set.ambient_dim() != d {
        return Err(ConfigError::new(path, format!("set lives in dimension {}, flow in {d}", set.ambient_dim())));
    }
    Ok(set)
}

impl Prepare for FaceAttractionParams {
    type Ready = FaceAttractionReady;
    fn prepare(self, cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError> {
        check_flow(&self.flow, "params.flow")?;
        let d = self.flow.d;
        if self.m_level > d {
            return Err(ConfigError::new("params.m_level", format!("must be at most d = {d}")));
        }
        if self.control_level > d {
            return Err(ConfigError::new("params.control_level", format!("must be at most d = {d}")));
        }
        check_positive(self.threshold, "params.threshold")?;
        check_fraction(self.min_fraction, "params.min_fraction")?;
        check_positive(self.control_refine, "params.control_refine")?;
        let set = build_set(cfg, "params.set", self.set.as_ref(), cantor_square(self.cantor_depth), d)?;
        let control = build_set(cfg, "params.control", self.control.as_ref(), diagonal(65), d)?;
        Ok(FaceAttractionReady { p: self, set, control })
    }
}

pub(super) fn face_attraction(r: FaceAttractionReady, seed: u64, n: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let p = &r.p;
    let runs = par_replicas(pool, n, |i| -> Result<_, RunError> {
        let s = seed_replica(seed, i as u64);
        let a = face_attraction_seed(&r.set, p.m_level, s, &p.flow, None).ctx("attracted set")?;
        let c = face_attraction_seed(&r.control, p.control_level, s, &p.flow, Some(p.control_refine))
            .ctx("control set")?;
        Ok((a, c))
    })?;
    let mut out = Outcome::default();
    let hits = runs.iter().filter(|(a, _)| a.terminal() < p.threshold).count();
    let min_control = |c: &rdslab_core::diffusion::FaceAttraction| c.distances.iter().copied().fold(f64::INFINITY, f64::min);
    let kept = runs.iter().filter(|(_, c)| min_control(c) >= p.control_distance).count();
    out.note(format!(
        "set of {} points (dimension {:.3}) against H^{}",
        r.set.len(),
        r.set.nominal_dimension,
        p.m_level
    ));
    out.note(fraction_line(
        &format!("distance to H^{} below {} at t = {}", p.m_level, p.threshold, p.flow.horizon),
        hits,
        n,
    ));
    out.note(fraction_line(
        &format!("control: distance to H^{} at least {} at every recorded time", p.control_level, p.control_distance),
        kept,
        n,
    ));
    out.check(Assertion::new("face attraction fraction", hits as f64 / n as f64, ">=", p.min_fraction));
    out.check(Assertion::new("negative control fraction", kept as f64 / n as f64, ">=", p.min_fraction));
    out.put("seeds", n);
    out.put("attracted", hits);
    out.put("control_kept", kept);
    let rows: Vec<Vec<String>> = runs
        .iter()
        .flat_map(|(a, c)| {
            a.times.iter().enumerate().map(move |(k, t)| {
                vec![
                    a.seed.to_string(),
                    format!("{t:?}"),
                    format!("{:?}", a.distances[k]),
                    format!("{:?}", c.distances[k]),
                    c.points.to_string(),
                ]
            })
        })
        .collect();
    out.file(
        "distances.csv",
        formats::table_csv(&["seed", "t", "set_distance", "control_distance", "control_points"], &rows),
    );
    Ok(out)
}

// cc-density

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcDensityParams {
    pub flow: FlowConfig,
    pub mesh: f64,
    pub z_max: f64,
    pub direction: Direction,
    pub pairs: Vec<(f64, f64)>,
    pub max_gap: f64,
    pub min_fraction: f64,
}

impl Default for CcDensityParams {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            mesh: 0.05,
            z_max: 12.0,
            direction: Direction::Inverse,
            pairs: vec![(0.1, 0.9)],
            max_gap: 0.1,
            min_fraction: 0.8,
        }
    }
}

impl Prepare for CcDensityParams {
    type Ready = (Self, Vec<f64>);
    fn prepare(self, _cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError> {
        check_flow(&self.flow, "params.flow")?;
        if self.flow.d != 1 {
            return Err(ConfigError::new("params.flow.d", "the countable set lives in dimension 1"));
        }
        let z = z_grid(self.mesh, self.z_max).map_err(|e| ConfigError::new("params.mesh", e.to_string()))?;
        for (i, &(x, y)) in self.pairs.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(ConfigError::new(format!("params.pairs[{i}]"), "points must be in [0, 1]"));
            }
        }
        check_positive(self.max_gap, "params.max_gap")?;
        check_fraction(self.min_fraction, "params.min_fraction")?;
        Ok((self, z))
    }
}

pub(super) fn cc_density(r: (CcDensityParams, Vec<f64>), seed: u64, n: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let (p, z) = (&r.0, &r.1);
    let runs = par_replicas(pool, n, |i| {
        cc_density_seed(z, &p.pairs, seed_replica(seed, i as u64), &p.flow, p.direction).ctx("cc-density run")
    })?;
    let mut out = Outcome::default();
    let terminal: Vec<f64> = runs.iter().map(|r| *r.max_gap.last().expect("recorded")).collect();
    let hits = terminal.iter().filter(|&&g| g < p.max_gap).count();
    let mut sorted = terminal.clone();
    sorted.sort_by(f64::total_cmp);
    out.note(format!(
        "{} grid points, {:?} flow, horizon {}",
        z.len() + 2,
        p.direction,
        p.flow.horizon
    ));
    out.note(format!(
        "terminal max gap: median {:.4}, 10% {:.4}, 90% {:.4}",
        sorted[n / 2],
        sorted[n / 10],
        sorted[(9 * n / 10).min(n - 1)]
    ));
    out.note(fraction_line(&format!("max gap below {} at t = {}", p.max_gap, p.flow.horizon), hits, n));
    out.check(Assertion::new("dense image fraction", hits as f64 / n as f64, ">=", p.min_fraction));
    for (k, pair) in p.pairs.iter().enumerate() {
        let close = runs
            .iter()
            .filter(|r| r.pair_distances[k].last().is_some_and(|&v| v < p.max_gap))
            .count();
        out.note(fraction_line(&format!("pair {pair:?} closer than {} at the horizon", p.max_gap), close, n));
    }
    out.put("seeds", n);
    out.put("hits", hits);
    out.put("terminal_max_gap", &terminal);
    let rows: Vec<Vec<String>> = runs
        .iter()
        .flat_map(|r| {
            r.times
                .iter()
                .zip(&r.max_gap)
                .map(move |(t, g)| vec![r.seed.to_string(), format!("{t:?}"), format!("{g:?}")])
        })
        .collect();
    out.file("max_gap.csv", formats::table_csv(&["seed", "t", "max_gap"], &rows));
    Ok(out)
}
