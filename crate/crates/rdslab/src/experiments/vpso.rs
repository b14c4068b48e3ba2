use std::collections::BTreeSet;

use rand::Rng;
use rayon::ThreadPool;
use rdslab_core::certification::cover::{cover_and_certify, spot_check};
use rdslab_core::certification::domination::{l_chain_base, sigma_run, step1_pathwise, tau_run};
use rdslab_core::certification::hchain::{kappa_grid, run_h_chain, supermartingale_certificate};
use rdslab_core::certification::lchain::{l_chain_tail, step_certificates};
use rdslab_core::certification::{DominationRow, Overrides, Param, ParameterSet};
use rdslab_core::geometry::{check_simplex, distance_to_vertices};
use rdslab_core::properties::{coupling_check, property_suite};
use rdslab_core::seeding::{mix64, replica_rng, seed_replica};
use rdslab_core::stats::binomial_sigma;
use rdslab_core::testsets::{cantor_log_ratio_for_dimension, Embedding, Recipe};
use rdslab_core::vpso::OperatorCatalog;
use serde::{Deserialize, Serialize};

use super::{fraction_line, Context, Prepare, RunError};
use crate::config::{load_set, CatalogSpec, ConfigError, ExperimentConfig, ParamsInput, ParamsSpec};
use crate::formats;
use crate::runner::{par_replicas, Assertion, Outcome};

const RANDOM_SETS_TAG: u64 = 0x5345_5453;

// derive-params

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeriveParamsParams {
    pub params: ParamsSpec,
    /// Compare with the printed `m = d = 2` table.
    pub check_table: bool,
}

impl Default for DeriveParamsParams {
    fn default() -> Self {
        Self {
            params: ParamsSpec::default(),
            check_table: true,
        }
    }
}

pub struct DeriveParamsReady {
    input: ParamsInput,
    check_table: bool,
}

impl Prepare for DeriveParamsParams {
    type Ready = DeriveParamsReady;
    fn prepare(self, cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError> {
        Ok(DeriveParamsReady {
            input: self.params.resolve(cfg, "params.params", None)?,
            check_table: self.check_table,
        })
    }
}

/// Printed table values and their tolerances.
pub const TABLE_TARGETS: [(Param, f64, f64); 4] = [
    (Param::A, 0.999846, 5e-7),
    (Param::B, 0.999791, 5e-6),
    (Param::D, 0.989288, 5e-7),
    (Param::Alpha2, 1.54012e-4, 1e-9),
];

pub(super) fn derive_params(r: DeriveParamsReady) -> Result<Outcome, RunError> {
    let i = &r.input;
    let ps = ParameterSet::evaluate(i.m, i.d, i.nu_lower, &i.overrides).ctx("parameter derivation")?;
    let mut out = Outcome::default();
    out.put("parameters", &ps);
    out.note(format!("m = {}, d = {}, nu_lower = {}", ps.m, ps.d, ps.nu_lower));
    for p in Param::ALL {
        out.note(format!("  {:<7} {:<24} {:?}", p.name(), ps.get(p), ps.provenance(p)));
    }
    for c in ps.validity.iter().filter(|c| !c.pass) {
        out.note(format!("violated: {}", formats::check_line(c)));
    }
    for w in &ps.warnings {
        out.note(formats::warning_line(w));
    }
    out.check(Assertion::new(
        "violated conditions",
        ps.validity.iter().filter(|c| !c.pass).count() as f64,
        "==",
        0.0,
    ));
    if r.check_table {
        for (p, target, tol) in TABLE_TARGETS {
            out.check(Assertion::new(
                format!("|{} - {target}|", p.name()),
                (ps.get(p) - target).abs(),
                "<=",
                tol,
            ));
        }
        let got: BTreeSet<Param> = ps.warnings.iter().map(|w| w.param).collect();
        let want: BTreeSet<Param> = [Param::L0, Param::M, Param::Beta].into_iter().collect();
        out.check(Assertion::flag("warnings are exactly l0, M, beta", got == want));
    }
    out.file("params.tsv", formats::write_params(&ps));
    Ok(out)
}

// chain-certificates

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainCertificatesParams {
    pub params: ParamsSpec,
    pub grid_points: usize,
    pub random_sets: usize,
    /// Starting height as a fraction of `κ`.
    pub h_fraction: f64,
    pub h_threshold: f64,
    pub h_steps: usize,
    /// High levels covered by the per-state L-chain certificates.
    pub l_levels: u64,
    /// Horizons of the L-chain tail estimate.
    pub l_horizons: Vec<usize>,
}

impl Default for ChainCertificatesParams {
    fn default() -> Self {
        Self {
            params: ParamsSpec::default(),
            grid_points: 1000,
            random_sets: 50,
            h_fraction: 0.1,
            h_threshold: 1e-8,
            h_steps: 10_000,
            l_levels: 30,
            l_horizons: vec![20, 50],
        }
    }
}

pub struct ChainReady {
    ps: ParameterSet,
    p: ChainCertificatesParams,
}

impl Prepare for ChainCertificatesParams {
    type Ready = ChainReady;
    fn prepare(self, cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError> {
        if self.grid_points == 0 {
            return Err(ConfigError::new("params.grid_points", "must be at least 1"));
        }
        if !(self.h_fraction > 0.0 && self.h_fraction <= 1.0) {
            return Err(ConfigError::new("params.h_fraction", "must be in (0, 1]"));
        }
        if self.l_horizons.contains(&0) {
            return Err(ConfigError::new("params.l_horizons", "horizons must be positive"));
        }
        Ok(ChainReady {
            ps: self.params.derive(cfg, "params.params", None)?,
            p: self,
        })
    }
}

/// A random valid parameter set: `m, d ∈ 2..=5`, `ν̲` and `α1` drawn inside their ranges.
/// Returns `None` when the draw is not representable in `f64`.
pub fn random_parameter_set<R: Rng + ?Sized>(rng: &mut R) -> Option<ParameterSet> {
    let m = rng.random_range(2..=5usize);
    let d = rng.random_range(2..=5usize);
    let nu = rng.random_range(0.05..1.0) / m as f64;
    let amax = -(1.0 - nu).ln() / (d as f64).ln();
    let mut o = Overrides::new();
    o.insert(Param::Alpha1, rng.random_range(0.05..0.99) * amax);
    ParameterSet::derive(m, d, nu, &o).ok()
}

pub(super) fn chain_certificates(r: ChainReady, seed: u64, replicas: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let (ps, p) = (&r.ps, &r.p);
    let mut out = Outcome::default();

    let grid = kappa_grid(ps, p.grid_points);
    let table = supermartingale_certificate(ps, &grid);
    match &table {
        Ok(c) => out.note(format!(
            "supermartingale certificate on {} points of [0, {}]: min margin {:e} at s = {}",
            c.points, ps.kappa, c.min_margin, c.argmin
        )),
        Err(e) => out.note(format!("supermartingale certificate failed: {e}")),
    }
    out.put("certificate", table.as_ref().ok());
    out.check(Assertion::flag("supermartingale certificate, configured set", table.is_ok()));

    let mut rows = Vec::new();
    let mut attempts = 0u64;
    let mut passed = 0usize;
    let base = mix64(seed ^ RANDOM_SETS_TAG);
    while rows.len() < p.random_sets && attempts < 100 * p.random_sets as u64 + 100 {
        let mut rng = replica_rng(base, attempts);
        attempts += 1;
        let Some(rs) = random_parameter_set(&mut rng) else {
            continue;
        };
        let c = supermartingale_certificate(&rs, &kappa_grid(&rs, p.grid_points));
        passed += c.is_ok() as usize;
        rows.push(vec![
            rs.m.to_string(),
            rs.d.to_string(),
            format!("{:?}", rs.nu_lower),
            format!("{:?}", rs.alpha1),
            format!("{:?}", rs.kappa),
            c.as_ref().map_or(String::from("nan"), |c| format!("{:?}", c.min_margin)),
            c.is_ok().to_string(),
        ]);
    }
    out.note(format!(
        "random parameter sets: {passed}/{} certified ({attempts} draws)",
        rows.len()
    ));
    out.put("random_sets", serde_json::json!({ "sets": rows.len(), "certified": passed, "draws": attempts }));
    out.check(Assertion::new("random sets certified", passed as f64, ">=", p.random_sets as f64));
    out.file(
        "random_sets.csv",
        formats::table_csv(&["m", "d", "nu_lower", "alpha1", "kappa", "min_margin", "certified"], &rows),
    );

    let h = p.h_fraction * ps.kappa;
    let runs = par_replicas(pool, replicas, |i| -> Result<_, RunError> {
        let mut rng = replica_rng(seed, i as u64);
        Ok(run_h_chain(h, ps, ps.nu_lower, p.h_threshold, p.h_steps, &mut rng))
    })?;
    let hits = runs.iter().filter(|r| r.hit.is_some()).count();
    let bound = (1.0 - ps.kappa.powf(-ps.alpha1) * h.powf(ps.alpha1)).clamp(0.0, 1.0);
    let sigma = binomial_sigma(bound, replicas);
    out.note(fraction_line(&format!("H-chain below {:e} within {} steps", p.h_threshold, p.h_steps), hits, replicas));
    out.note(format!("  bound 1 - κ^-α1 h^α1 = {bound:.6}, σ = {sigma:.6}"));
    out.put(
        "h_chain",
        serde_json::json!({ "h": h, "replicas": replicas, "hits": hits, "frequency": hits as f64 / replicas as f64, "bound": bound, "sigma": sigma }),
    );
    out.check(Assertion::new(
        "H-chain convergence frequency",
        hits as f64 / replicas as f64,
        ">=",
        bound - 3.0 * sigma,
    ));
    let h_rows: Vec<Vec<String>> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                r.hit.map_or(String::new(), |n| n.to_string()),
                r.stopped.to_string(),
                format!("{:?}", r.last),
            ]
        })
        .collect();
    out.file("h_chain.csv", formats::table_csv(&["replica", "hit_step", "stopped", "last"], &h_rows));

    let certs = step_certificates(ps, p.l_levels);
    let failing: Vec<_> = certs.iter().filter(|c| !c.pass).collect();
    out.note(format!("L-chain step certificates: {} of {} hold", certs.len() - failing.len(), certs.len()));
    for c in &failing {
        out.note(format!(
            "  {:?} at {}: E[e^(-λΔL)] = {:.9} > {:.9}",
            c.class, c.state, c.expectation, c.bound
        ));
    }
    out.put("l_certificates", &certs);
    let mut tails = Vec::new();
    for &n in &p.l_horizons {
        let t = l_chain_tail(ps, n, replicas, l_chain_base(seed)).ctx("L-chain tail")?;
        out.note(format!(
            "L-chain P(L_{n} >= γN): empirical {:.4}, bound 1 - e^(-α2 N) = {:.3e}",
            t.empirical, t.analytic
        ));
        tails.push(t);
    }
    out.put("l_tails", &tails);
    Ok(out)
}

// simulate-vpso

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateVpsoParams {
    pub params: ParamsSpec,
    pub catalog: CatalogSpec,
    pub starts: Vec<Vec<f64>>,
    pub steps: usize,
    /// Distance to the vertices counted as arrival in the trajectory summary.
    pub vertex_threshold: f64,
    pub coupling_pairs: usize,
    pub coupling_steps: usize,
    pub coupling_cloud: usize,
    pub property_cases: usize,
    pub property_max_m: usize,
    pub property_max_d: usize,
}

impl Default for SimulateVpsoParams {
    fn default() -> Self {
        Self {
            params: ParamsSpec::default(),
            catalog: CatalogSpec::default(),
            starts: vec![vec![0.5, 0.5], vec![0.9, 0.1]],
            steps: 200,
            vertex_threshold: 0.05,
            coupling_pairs: 1000,
            coupling_steps: 200,
            coupling_cloud: 8,
            property_cases: 10_000,
            property_max_m: 4,
            property_max_d: 4,
        }
    }
}

pub struct SimulateVpsoReady {
    ps: ParameterSet,
    catalog: OperatorCatalog,
    p: SimulateVpsoParams,
}

fn check_starts(starts: &[Vec<f64>], m: usize, path: &str) -> Result<(), ConfigError> {
    for (i, x) in starts.iter().enumerate() {
        if x.len() != m {
            return Err(ConfigError::new(format!("{path}[{i}]"), format!("expected {m} coordinates")));
        }
        check_simplex(x).map_err(|e| ConfigError::new(format!("{path}[{i}]"), e.to_string()))?;
    }
    Ok(())
}

fn catalog_and_params(
    cfg: &ExperimentConfig,
    params: &ParamsSpec,
    catalog: &CatalogSpec,
) -> Result<(ParameterSet, OperatorCatalog), ConfigError> {
    let cat = catalog.build(cfg, "params.catalog")?;
    let ps = params.derive(cfg, "params.params", Some(cat.nu_lower()))?;
    if (ps.m, ps.d) != (cat.m(), cat.d()) {
        return Err(ConfigError::new(
            "params.catalog",
            format!("catalog shape (m={}, d={}) differs from parameters (m={}, d={})", cat.m(), cat.d(), ps.m, ps.d),
        ));
    }
    if ps.nu_lower > cat.nu_lower() {
        return Err(ConfigError::new(
            "params.params.nu_lower",
            format!("{} exceeds the catalog's smallest class probability {}", ps.nu_lower, cat.nu_lower()),
        ));
    }
    Ok((ps, cat))
}

impl Prepare for SimulateVpsoParams {
    type Ready = SimulateVpsoReady;
    fn prepare(self, cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError> {
        let (ps, catalog) = catalog_and_params(cfg, &self.params, &self.catalog)?;
        check_starts(&self.starts, catalog.m(), "params.starts")?;
        if self.coupling_cloud == 0 {
            return Err(ConfigError::new("params.coupling_cloud", "must be at least 1"));
        }
        if self.property_max_m < 2 || self.property_max_m > 8 {
            return Err(ConfigError::new("params.property_max_m", "must be in 2..=8"));
        }
        if self.property_max_d < 2 || self.property_max_d > 6 {
            return Err(ConfigError::new("params.property_max_d", "must be in 2..=6"));
        }
        Ok(SimulateVpsoReady { ps, catalog, p: self })
    }
}

pub(super) fn simulate_vpso(r: SimulateVpsoReady, seed: u64, replicas: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let (cat, p) = (&r.catalog, &r.p);
    let mut out = Outcome::default();

    let trajs = par_replicas(pool, replicas, |i| -> Result<_, RunError> {
        let s = seed_replica(seed, i as u64);
        let stream = cat.sample_stream(s, p.steps);
        let mut per_start = Vec::with_capacity(p.starts.len());
        for x0 in &p.starts {
            per_start.push(cat.iterate_rds(&stream, x0).ctx("iteration")?);
        }
        Ok((s, per_start))
    })?;
    let mut rows = Vec::new();
    let mut arrived = vec![0usize; p.starts.len()];
    for (s, per_start) in &trajs {
        for (k, traj) in per_start.iter().enumerate() {
            if distance_to_vertices(traj.last().expect("nonempty")) < p.vertex_threshold {
                arrived[k] += 1;
            }
            for (n, x) in traj.iter().enumerate() {
                rows.push((*s, n as f64, k, x.clone()));
            }
        }
    }
    for (k, x0) in p.starts.iter().enumerate() {
        out.note(fraction_line(
            &format!("start {x0:?}: within {} of a vertex after {} steps", p.vertex_threshold, p.steps),
            arrived[k],
            replicas,
        ));
    }
    out.put("arrivals", &arrived);
    out.file(
        "trajectories.csv",
        formats::trajectories_csv(
            cat.m(),
            rows.iter().map(|(s, t, k, x)| formats::TrajectoryRow {
                seed: *s,
                t: *t,
                point: *k,
                coords: x,
            }),
        ),
    );

    let coupling = coupling_check(cat, r.ps.kappa, p.coupling_pairs, p.coupling_steps, p.coupling_cloud, seed)
        .ctx("coupling check")?;
    out.note(format!(
        "coupling: {} comparisons over {} pairs, {} violations, largest hei - H = {:e}",
        coupling.comparisons, coupling.pairs, coupling.violations, coupling.worst_excess
    ));
    out.check(Assertion::new("coupling violations", coupling.violations as f64, "==", 0.0));
    out.put("coupling", &coupling);

    let props = property_suite(p.property_cases, p.property_max_m, p.property_max_d, mix64(seed))
        .ctx("property suite")?;
    for t in &props.tallies {
        out.note(format!("property {}: {} cases, {} violations", t.name, t.checked, t.violations));
        out.check(Assertion::new(format!("{} violations", t.name), t.violations as f64, "==", 0.0));
    }
    out.put("properties", &props);
    Ok(out)
}

// domination

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominationParams {
    pub params: ParamsSpec,
    pub catalog: CatalogSpec,
    pub starts: Vec<Vec<f64>>,
    pub horizons: Vec<usize>,
    pub step1_samples: usize,
    pub step1_max_level: u32,
}

impl Default for DominationParams {
    fn default() -> Self {
        Self {
            params: ParamsSpec::default(),
            catalog: CatalogSpec::default(),
            starts: vec![vec![0.5, 0.5], vec![0.9, 0.1]],
            horizons: vec![20, 50],
            step1_samples: 2000,
            step1_max_level: 30,
        }
    }
}

pub struct DominationReady {
    ps: ParameterSet,
    catalog: OperatorCatalog,
    p: DominationParams,
}

impl Prepare for DominationParams {
    type Ready = DominationReady;
    fn prepare(self, cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError> {
        let (ps, catalog) = catalog_and_params(cfg, &self.params, &self.catalog)?;
        check_starts(&self.starts, catalog.m(), "params.starts")?;
        if self.horizons.is_empty() {
            return Err(ConfigError::new("params.horizons", "at least one horizon is needed"));
        }
        if self.step1_max_level == 0 {
            return Err(ConfigError::new("params.step1_max_level", "must be at least 1"));
        }
        Ok(DominationReady { ps, catalog, p: self })
    }
}

pub(super) fn domination(r: DominationReady, seed: u64, replicas: usize, pool: &ThreadPool) -> Result<Outcome, RunError> {
    let (ps, cat, p) = (&r.ps, &r.catalog, &r.p);
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for &n in &p.horizons {
        let taus = par_replicas(pool, replicas, |i| -> Result<_, RunError> {
            Ok(tau_run(ps, n, &mut replica_rng(l_chain_base(seed), i as u64)).is_some())
        })?;
        let tau_hits = taus.iter().filter(|t| **t).count();
        for x0 in &p.starts {
            let sig = par_replicas(pool, replicas, |i| {
                sigma_run(cat, ps, x0, n, &mut replica_rng(seed, i as u64)).ctx("RDS run")
            })?;
            let sigma_hits = sig.iter().filter(|s| s.is_some()).count();
            let row = DominationRow::from_counts(x0.clone(), n, replicas, sigma_hits, tau_hits);
            out.note(format!(
                "N = {n}, x = {x0:?}: P(σ <= N) = {:.4}, P(τ <= N) = {:.4}, σ_combined = {:.4}",
                row.p_sigma, row.p_tau, row.sigma_combined
            ));
            out.check(Assertion::new(
                format!("domination N = {n}, x = {x0:?}"),
                row.p_sigma,
                ">=",
                row.p_tau - 3.0 * row.sigma_combined,
            ));
            rows.push(row);
        }
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                format!("{:?}", r.x0),
                r.replicas.to_string(),
                format!("{:?}", r.p_sigma),
                format!("{:?}", r.p_tau),
                format!("{:?}", r.sigma_combined),
                r.pass.to_string(),
            ]
        })
        .collect();
    out.file(
        "domination.csv",
        formats::table_csv(&["n", "x0", "replicas", "p_sigma", "p_tau", "sigma_combined", "pass"], &csv_rows),
    );
    out.put("rows", &rows);

    let step1 = step1_pathwise(cat, ps, p.step1_samples, p.step1_max_level, mix64(seed))
        .ctx("pathwise level bounds")?;
    out.note(format!(
        "pathwise level bounds: lift {}/{} violations, drop {}/{} violations",
        step1.lift_violations, step1.lift_checked, step1.drop_violations, step1.drop_checked
    ));
    out.check(Assertion::new(
        "pathwise level-bound violations",
        (step1.lift_violations + step1.drop_violations) as f64,
        "==",
        0.0,
    ));
    out.put("step1", &step1);
    Ok(out)
}

// certify-delta

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyDeltaParams {
    pub params: ParamsSpec,
    pub catalog: CatalogSpec,
    /// Recipes, inline or as `{ file = "..." }`; empty means the two default sets.
    pub sets: Vec<toml::Table>,
    pub epsilon: f64,
    pub spot_balls: usize,
    pub horizon: usize,
    pub threshold: f64,
}

impl Default for CertifyDeltaParams {
    fn default() -> Self {
        Self {
            params: ParamsSpec::default(),
            catalog: CatalogSpec::default(),
            sets: Vec::new(),
            epsilon: 0.5,
            spot_balls: 10,
            horizon: 500,
            threshold: 0.05,
        }
    }
}

/// A singleton and a depth-4 Cantor cloud of dimension `1e-5` on an edge of `S^1`.
pub fn default_delta_sets() -> Vec<Recipe> {
    vec![
        Recipe::Singleton { point: vec![0.5, 0.5] },
        Recipe::Cantor {
            log_ratio: cantor_log_ratio_for_dimension(1e-5).expect("valid dimension"),
            depth: 4,
            embed: Embedding::SimplexEdge {
                m: 2,
                i: 1,
                j: 2,
                lo: 0.2,
                hi: 0.8,
            },
        },
    ]
}

pub struct CertifyDeltaReady {
    ps: ParameterSet,
    catalog: OperatorCatalog,
    sets: Vec<Recipe>,
    p: CertifyDeltaParams,
}

impl Prepare for CertifyDeltaParams {
    type Ready = CertifyDeltaReady;
    fn prepare(self, cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError> {
        let sets = if self.sets.is_empty() {
            default_delta_sets()
        } else {
            self.sets
                .iter()
                .enumerate()
                .map(|(i, t)| load_set(cfg, &format!("params.sets[{i}]"), t))
                .collect::<Result<_, _>>()?
        };
        let (ps, catalog) = catalog_and_params(cfg, &self.params, &self.catalog)?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::new("params.epsilon", "must be in (0, 1)"));
        }
        if self.spot_balls == 0 {
            return Err(ConfigError::new("params.spot_balls", "must be at least 1"));
        }
        Ok(CertifyDeltaReady { ps, catalog, sets, p: self })
    }
}

pub(super) fn certify_delta(r: CertifyDeltaReady, seed: u64, replicas: usize, _pool: &ThreadPool) -> Result<Outcome, RunError> {
    let (ps, cat, p) = (&r.ps, &r.catalog, &r.p);
    let mut out = Outcome::default();
    let mut results = Vec::new();
    for (i, recipe) in r.sets.iter().enumerate() {
        let set = recipe.build().ctx(format!("set {i}"))?;
        let plan = cover_and_certify(&set, set.nominal_dimension, ps, p.epsilon).ctx(format!("certification of set {i}"))?;
        let finite = plan.ln_r.is_finite() && plan.n.is_finite() && !plan.balls.is_empty();
        out.note(format!(
            "set {i}: {} points, dimension {:e}, {} balls, ln r = {:.1}, N = {:e}, total budget {:.4}",
            set.len(),
            set.nominal_dimension,
            plan.balls.len(),
            plan.ln_r,
            plan.n,
            plan.total_budget
        ));
        out.check(Assertion::flag(format!("set {i}: finite plan"), finite));
        out.check(Assertion::new(format!("set {i}: total budget"), plan.total_budget, ">", 0.0));
        let spot = spot_check(&plan, cat, p.spot_balls, replicas, p.horizon, p.threshold, mix64(seed ^ i as u64))
            .ctx(format!("spot check of set {i}"))?;
        out.note(format!(
            "  spot check: {}/{} trials reached distance < {} within {} steps (budget {:.4}, σ {:.4})",
            spot.successes, spot.trials, p.threshold, p.horizon, spot.budget, spot.sigma
        ));
        out.check(Assertion::new(
            format!("set {i}: spot-check frequency"),
            spot.frequency,
            ">=",
            spot.budget - 3.0 * spot.sigma,
        ));
        out.file(format!("plan_{i}.csv"), formats::plan_csv(&plan));
        out.file(format!("cloud_{i}.csv"), formats::cloud_csv(&set));
        out.file(format!("recipe_{i}.toml"), formats::write_recipe(recipe));
        results.push(serde_json::json!({
            "points": set.len(),
            "dimension": set.nominal_dimension,
            "plan": {
                "ln_r": plan.ln_r,
                "n": plan.n,
                "balls": plan.balls.len(),
                "union_sum": plan.union_sum,
                "total_budget": plan.total_budget,
                "delta": plan.delta,
                "epsilon": plan.epsilon,
            },
            "spot_check": spot,
        }));
    }
    out.put("sets", results);
    Ok(out)
}
