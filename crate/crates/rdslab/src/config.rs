//! Experiment configuration files.
//!
//! ```toml
//! experiment = "domination"
//! model = "vpso"
//!
//! [seeds]
//! base = 20261016
//! replicas = 10000
//!
//! [output]
//! dir = "out/domination"
//!
//! [params]
//! horizons = [20, 50]
//! ```
//!
//! `[params]` is specific to the experiment; every field has a default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rdslab_core::certification::params::reference_overrides;
use rdslab_core::certification::{Overrides, Param, ParameterSet};
use rdslab_core::testsets::Recipe;
use rdslab_core::vpso::{OperatorCatalog, PsoTensor};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::formats;

pub const DEFAULT_SEED: u64 = 20261016;

/// A configuration problem, located by the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DeriveParams,
    SimulateDiffusion,
    EstimateB,
    VerifyUniform,
    FaceAttraction,
    CcDensity,
    SimulateVpso,
    ChainCertificates,
    Domination,
    CertifyDelta,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::DeriveParams,
        ExperimentKind::SimulateDiffusion,
        ExperimentKind::EstimateB,
        ExperimentKind::VerifyUniform,
        ExperimentKind::FaceAttraction,
        ExperimentKind::CcDensity,
        ExperimentKind::SimulateVpso,
        ExperimentKind::ChainCertificates,
        ExperimentKind::Domination,
        ExperimentKind::CertifyDelta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DeriveParams => "derive-params",
            ExperimentKind::SimulateDiffusion => "simulate-diffusion",
            ExperimentKind::EstimateB => "estimate-b",
            ExperimentKind::VerifyUniform => "verify-uniform",
            ExperimentKind::FaceAttraction => "face-attraction",
            ExperimentKind::CcDensity => "cc-density",
            ExperimentKind::SimulateVpso => "simulate-vpso",
            ExperimentKind::ChainCertificates => "chain-certificates",
            ExperimentKind::Domination => "domination",
            ExperimentKind::CertifyDelta => "certify-delta",
        }
    }

    pub fn model(self) -> Model {
        match self {
            ExperimentKind::SimulateDiffusion
            | ExperimentKind::EstimateB
            | ExperimentKind::VerifyUniform
            | ExperimentKind::FaceAttraction
            | ExperimentKind::CcDensity => Model::Diffusion,
            _ => Model::Vpso,
        }
    }

    pub fn default_replicas(self) -> usize {
        match self {
            ExperimentKind::DeriveParams => 1,
            ExperimentKind::SimulateVpso => 10,
            ExperimentKind::CertifyDelta => 100,
            ExperimentKind::VerifyUniform => 2000,
            ExperimentKind::ChainCertificates | ExperimentKind::Domination => 10_000,
            _ => 200,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Diffusion,
    Vpso,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeeds {
    base: Option<u64>,
    replicas: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<ExperimentKind>,
    model: Option<Model>,
    #[serde(default)]
    seeds: RawSeeds,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    params: toml::Table,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub replicas: Option<i64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub base: u64,
    pub replicas: usize,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: Model,
    pub seeds: Seeds,
    pub out_dir: PathBuf,
    /// Directory that relative paths in the file are resolved against.
    pub base_dir: PathBuf,
    pub params: toml::Table,
}

impl ExperimentConfig {
    pub fn load(path: &Path, cli: &CliOverrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<config>", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base, cli)
    }

    pub fn from_toml(text: &str, base_dir: &Path, cli: &CliOverrides) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_path_to_error::deserialize(toml::Deserializer::new(text)).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(if path == "." { "<config>".into() } else { path }, e.inner().message().to_string())
        })?;
        Self::from_raw(raw, base_dir, cli)
    }

    /// The defaults of `experiment`, with command-line values applied.
    pub fn defaults(experiment: ExperimentKind, cli: &CliOverrides) -> Result<Self, ConfigError> {
        let raw = RawConfig {
            experiment: Some(experiment),
            ..RawConfig::default()
        };
        Self::from_raw(raw, Path::new("."), cli)
    }

    fn from_raw(raw: RawConfig, base_dir: &Path, cli: &CliOverrides) -> Result<Self, ConfigError> {
        let experiment = match (raw.experiment, cli.experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(ConfigError::new(
                    "experiment",
                    format!("file names {a} but the command is {b}"),
                ))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(ConfigError::new("experiment", "missing")),
        };
        let model = experiment.model();
        if let Some(m) = raw.model {
            if m != model {
                return Err(ConfigError::new("model", format!("{experiment} runs the {model:?} model, not {m:?}")));
            }
        }
        let replicas = cli
            .replicas
            .or(raw.seeds.replicas)
            .unwrap_or(experiment.default_replicas() as i64);
        if replicas < 1 {
            return Err(ConfigError::new("seeds.replicas", format!("must be at least 1, got {replicas}")));
        }
        let out_dir = cli
            .out
            .clone()
            .or_else(|| raw.output.dir.map(|d| base_dir.join(d)))
            .unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
        let cfg = Self {
            experiment,
            model,
            seeds: Seeds {
                base: cli.seed.or(raw.seeds.base).unwrap_or(DEFAULT_SEED),
                replicas: replicas as usize,
            },
            out_dir,
            base_dir: base_dir.to_path_buf(),
            params: raw.params,
        };
        crate::experiments::validate(&cfg)?;
        Ok(cfg)
    }

    /// Deserializes `[params]` into the experiment's parameter struct.
    pub fn typed_params<T: DeserializeOwned>(&self) -> Result<T, ConfigError> {
        serde_path_to_error::deserialize(toml::Value::Table(self.params.clone()))
            .map_err(|e| ConfigError::new(format!("params.{}", e.path()), e.inner().to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn existing_file(&self, path: &str, p: &Path) -> Result<PathBuf, ConfigError> {
        let full = self.resolve(p);
        if full.is_file() {
            Ok(full)
        } else {
            Err(ConfigError::new(path, format!("file {} does not exist", full.display())))
        }
    }
}

fn read(path: &str, file: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(file).map_err(|e| ConfigError::new(path, format!("cannot read {}: {e}", file.display())))
}

/// Where a parameter set comes from.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSpec {
    /// Start from the `m = d = 2` table overrides.
    pub table: bool,
    pub m: Option<usize>,
    pub d: Option<usize>,
    pub nu_lower: Option<f64>,
    /// Parameter name to value, applied on top of the table when `table` is set.
    pub overrides: BTreeMap<String, f64>,
    /// A parameter-set record; its override rows are used.
    pub file: Option<PathBuf>,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        Self {
            table: true,
            m: None,
            d: None,
            nu_lower: None,
            overrides: BTreeMap::new(),
            file: None,
        }
    }
}

/// Resolved shape and overrides, ready for derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsInput {
    pub m: usize,
    pub d: usize,
    pub nu_lower: f64,
    pub overrides: Overrides,
}

impl ParamsSpec {
    /// `nu_default` is the `ν̲` of the experiment's catalog, when it has one.
    pub fn resolve(&self, cfg: &ExperimentConfig, path: &str, nu_default: Option<f64>) -> Result<ParamsInput, ConfigError> {
        let mut input = if let Some(f) = &self.file {
            let fpath = format!("{path}.file");
            let full = cfg.existing_file(&fpath, f)?;
            let rec = formats::parse_params(&read(&fpath, &full)?).map_err(|e| ConfigError::new(fpath, e.to_string()))?;
            ParamsInput {
                m: rec.m,
                d: rec.d,
                nu_lower: rec.nu_lower,
                overrides: rec.overrides(),
            }
        } else if self.table {
            ParamsInput {
                m: 2,
                d: 2,
                nu_lower: 0.5,
                overrides: reference_overrides(),
            }
        } else {
            ParamsInput {
                m: 2,
                d: 2,
                nu_lower: nu_default.unwrap_or(0.5),
                overrides: Overrides::new(),
            }
        };
        if let Some(m) = self.m {
            input.m = m;
        }
        if let Some(d) = self.d {
            input.d = d;
        }
        if let Some(nu) = self.nu_lower.or(if self.file.is_none() && !self.table { nu_default } else { None }) {
            input.nu_lower = nu;
        }
        if !(2..=rdslab_core::vpso::MAX_TYPES).contains(&input.m) {
            return Err(ConfigError::new(format!("{path}.m"), "must be in 2..=64"));
        }
        if input.d < 2 {
            return Err(ConfigError::new(format!("{path}.d"), "must be at least 2"));
        }
        if !(input.nu_lower > 0.0 && input.nu_lower <= 1.0 / input.m as f64) {
            return Err(ConfigError::new(format!("{path}.nu_lower"), "must be in (0, 1/m]"));
        }
        for (name, v) in &self.overrides {
            let p = Param::from_name(name)
                .ok_or_else(|| ConfigError::new(format!("{path}.overrides.{name}"), "unknown parameter"))?;
            if !p.is_overridable() {
                return Err(ConfigError::new(format!("{path}.overrides.{name}"), "not overridable"));
            }
            input.overrides.insert(p, *v);
        }
        Ok(input)
    }

    pub fn derive(&self, cfg: &ExperimentConfig, path: &str, nu_default: Option<f64>) -> Result<ParameterSet, ConfigError> {
        let i = self.resolve(cfg, path, nu_default)?;
        ParameterSet::derive(i.m, i.d, i.nu_lower, &i.overrides).map_err(|e| ConfigError::new(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub tensor: PathBuf,
    pub weight: f64,
}

/// The operator catalog: the canonical purebred catalog, or tensor files with weights.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSpec {
    pub m: usize,
    pub d: usize,
    pub operators: Vec<OperatorSpec>,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        Self {
            m: 2,
            d: 2,
            operators: Vec::new(),
        }
    }
}

impl CatalogSpec {
    pub fn build(&self, cfg: &ExperimentConfig, path: &str) -> Result<OperatorCatalog, ConfigError> {
        if self.operators.is_empty() {
            return OperatorCatalog::canonical(self.m, self.d).map_err(|e| ConfigError::new(path, e.to_string()));
        }
        let mut tensors: Vec<PsoTensor> = Vec::new();
        for (i, op) in self.operators.iter().enumerate() {
            let p = format!("{path}.operators[{i}].tensor");
            let full = cfg.existing_file(&p, &op.tensor)?;
            tensors.push(formats::parse_tensor(&read(&p, &full)?).map_err(|e| ConfigError::new(&p, e.to_string()))?);
        }
        let weights = self.operators.iter().map(|o| o.weight).collect();
        OperatorCatalog::new(tensors, weights).map_err(|e| ConfigError::new(format!("{path}.operators"), e.to_string()))
    }
}

/// A test set given inline as a recipe table or as `{ file = "recipe.toml" }`.
pub fn load_set(cfg: &ExperimentConfig, path: &str, table: &toml::Table) -> Result<Recipe, ConfigError> {
    if let Some(f) = table.get("file") {
        if table.len() != 1 {
            return Err(ConfigError::new(path, "a file reference takes no other keys"));
        }
        let f = f
            .as_str()
            .ok_or_else(|| ConfigError::new(format!("{path}.file"), "must be a string"))?;
        let fp = format!("{path}.file");
        let full = cfg.existing_file(&fp, Path::new(f))?;
        return formats::parse_recipe(&read(&fp, &full)?).map_err(|e| ConfigError::new(fp, e.to_string()));
    }
    serde_path_to_error::deserialize(toml::Value::Table(table.clone()))
        .map_err(|e| ConfigError::new(format!("{path}.{}", e.path()), e.inner().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml(text, Path::new("."), &CliOverrides::default())
    }

    #[test]
    fn zero_replicas_rejected() {
        let e = parse("experiment = \"verify-uniform\"\n[seeds]\nreplicas = 0\n").unwrap_err();
        assert_eq!(e.path, "seeds.replicas");
        let cli = CliOverrides {
            replicas: Some(0),
            ..CliOverrides::default()
        };
        let e = ExperimentConfig::defaults(ExperimentKind::Domination, &cli).unwrap_err();
        assert_eq!(e.path, "seeds.replicas");
    }

    #[test]
    fn paths_of_bad_fields() {
        assert_eq!(parse("experiment = \"nope\"\n").unwrap_err().path, "experiment");
        assert_eq!(parse("experiment = \"domination\"\n[seeds]\nbase = \"x\"\n").unwrap_err().path, "seeds.base");
        assert_eq!(parse("experiment = \"domination\"\nextra = 1\n").unwrap_err().path, "extra");
        assert_eq!(parse("experiment = \"domination\"\nmodel = \"diffusion\"\n").unwrap_err().path, "model");
        let e = parse("experiment = \"domination\"\n[params]\nhorizons = [20, \"x\"]\n").unwrap_err();
        assert_eq!(e.path, "params.horizons[1]");
        let e = parse("experiment = \"derive-params\"\n[params.params.overrides]\nzeta = 1.0\n").unwrap_err();
        assert_eq!(e.path, "params.params.overrides.zeta");
    }

    #[test]
    fn missing_files_reported_at_load() {
        let e = parse(
            "experiment = \"simulate-vpso\"\n[[params.catalog.operators]]\ntensor = \"missing.tensor\"\nweight = 1.0\n",
        )
        .unwrap_err();
        assert_eq!(e.path, "params.catalog.operators[0].tensor");
        let e = parse("experiment = \"certify-delta\"\n[[params.sets]]\nfile = \"nowhere.toml\"\n").unwrap_err();
        assert_eq!(e.path, "params.sets[0].file");
    }

    #[test]
    fn cli_precedence() {
        let cli = CliOverrides {
            seed: Some(7),
            replicas: Some(3),
            out: Some(PathBuf::from("x")),
            experiment: Some(ExperimentKind::Domination),
        };
        let c = ExperimentConfig::from_toml("[seeds]\nbase = 1\nreplicas = 9\n", Path::new("."), &cli).unwrap();
        assert_eq!((c.seeds.base, c.seeds.replicas), (7, 3));
        assert_eq!(c.out_dir, PathBuf::from("x"));
        let e = ExperimentConfig::from_toml("experiment = \"cc-density\"\n", Path::new("."), &cli).unwrap_err();
        assert_eq!(e.path, "experiment");
    }

    #[test]
    fn experiment_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
    }
}
