//! The named experiments. Each reads its `[params]` table, runs replica-parallel, and
//! returns an [`Outcome`] whose assertions decide the exit status.

mod diffusion;
mod vpso;

use serde::de::DeserializeOwned;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind};
use crate::runner::Outcome;

pub use diffusion::{CcDensityParams, EstimateBParams, FaceAttractionParams, SimulateDiffusionParams, VerifyUniformParams};
pub use vpso::{CertifyDeltaParams, ChainCertificatesParams, DeriveParamsParams, DominationParams, SimulateVpsoParams};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error at {0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: rdslab_core::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) trait Context<T> {
    fn ctx(self, context: impl Into<String>) -> Result<T, RunError>;
}

impl<T> Context<T> for rdslab_core::Result<T> {
    fn ctx(self, context: impl Into<String>) -> Result<T, RunError> {
        self.map_err(|source| RunError::Core {
            context: context.into(),
            source,
        })
    }
}

/// An experiment's parameters: parsed from `[params]` and checked without running.
pub(crate) trait Prepare: DeserializeOwned {
    type Ready;
    fn prepare(self, cfg: &ExperimentConfig) -> Result<Self::Ready, ConfigError>;
}

fn prepared<P: Prepare>(cfg: &ExperimentConfig) -> Result<P::Ready, ConfigError> {
    cfg.typed_params::<P>()?.prepare(cfg)
}

/// Checks the experiment-specific part of `cfg`, including referenced files.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    match cfg.experiment {
        ExperimentKind::DeriveParams => prepared::<DeriveParamsParams>(cfg).map(drop),
        ExperimentKind::ChainCertificates => prepared::<ChainCertificatesParams>(cfg).map(drop),
        ExperimentKind::SimulateVpso => prepared::<SimulateVpsoParams>(cfg).map(drop),
        ExperimentKind::Domination => prepared::<DominationParams>(cfg).map(drop),
        ExperimentKind::CertifyDelta => prepared::<CertifyDeltaParams>(cfg).map(drop),
        ExperimentKind::EstimateB => prepared::<EstimateBParams>(cfg).map(drop),
        ExperimentKind::VerifyUniform => prepared::<VerifyUniformParams>(cfg).map(drop),
        ExperimentKind::SimulateDiffusion => prepared::<SimulateDiffusionParams>(cfg).map(drop),
        ExperimentKind::FaceAttraction => prepared::<FaceAttractionParams>(cfg).map(drop),
        ExperimentKind::CcDensity => prepared::<CcDensityParams>(cfg).map(drop),
    }
}

/// Runs the configured experiment on `pool`.
pub fn run(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Outcome, RunError> {
    let (base, n) = (cfg.seeds.base, cfg.seeds.replicas);
    match cfg.experiment {
        ExperimentKind::DeriveParams => vpso::derive_params(prepared::<DeriveParamsParams>(cfg)?),
        ExperimentKind::ChainCertificates => {
            vpso::chain_certificates(prepared::<ChainCertificatesParams>(cfg)?, base, n, pool)
        }
        ExperimentKind::SimulateVpso => vpso::simulate_vpso(prepared::<SimulateVpsoParams>(cfg)?, base, n, pool),
        ExperimentKind::Domination => vpso::domination(prepared::<DominationParams>(cfg)?, base, n, pool),
        ExperimentKind::CertifyDelta => vpso::certify_delta(prepared::<CertifyDeltaParams>(cfg)?, base, n, pool),
        ExperimentKind::EstimateB => diffusion::estimate_b(prepared::<EstimateBParams>(cfg)?, base, n, pool),
        ExperimentKind::VerifyUniform => {
            diffusion::verify_uniform(prepared::<VerifyUniformParams>(cfg)?, base, n, pool)
        }
        ExperimentKind::SimulateDiffusion => {
            diffusion::simulate_diffusion(prepared::<SimulateDiffusionParams>(cfg)?, base, n, pool)
        }
        ExperimentKind::FaceAttraction => {
            diffusion::face_attraction(prepared::<FaceAttractionParams>(cfg)?, base, n, pool)
        }
        ExperimentKind::CcDensity => diffusion::cc_density(prepared::<CcDensityParams>(cfg)?, base, n, pool),
    }
}

/// `p ± z·σ` style formatting for summaries.
pub(crate) fn fraction_line(label: &str, hits: usize, n: usize) -> String {
    let (lo, hi) = rdslab_core::stats::wilson_interval(hits, n, 1.96);
    format!("{label}: {hits}/{n} = {:.4} (95% interval {lo:.4}..{hi:.4})", hits as f64 / n as f64)
}
