//! Configuration-driven experiments on top of `rdslab-core`: file formats, the replica
//! runner and the ten named experiments behind the `rdslab` command.

pub mod config;
pub mod experiments;
pub mod formats;
pub mod runner;

use config::ExperimentConfig;
use experiments::RunError;
use runner::Outcome;

/// First line of the human summary.
pub fn header(cfg: &ExperimentConfig) -> String {
    format!(
        "{} (seed {}, {} replicas)",
        cfg.experiment, cfg.seeds.base, cfg.seeds.replicas
    )
}

/// The `meta` record of `results.json`. Thread count and timings are left out so that
/// results are byte-identical across machines.
pub fn meta(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "experiment": cfg.experiment.name(),
        "model": cfg.model,
        "seed": cfg.seeds.base,
        "replicas": cfg.seeds.replicas,
        "params": cfg.params,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

/// Runs `cfg` on `threads` workers and writes its artifacts into `cfg.out_dir`.
pub fn execute(cfg: &ExperimentConfig, threads: usize) -> Result<Outcome, RunError> {
    let outcome = experiments::run(cfg, &runner::pool(threads))?;
    outcome
        .write(&cfg.out_dir, &header(cfg), meta(cfg))
        .map_err(|source| RunError::Io {
            path: cfg.out_dir.clone(),
            source,
        })?;
    Ok(outcome)
}
