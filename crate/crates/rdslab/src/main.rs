use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rdslab::config::{CliOverrides, ConfigError, ExperimentConfig, ExperimentKind};
use rdslab::experiments::RunError;

#[derive(Parser)]
#[command(name = "rdslab", version, about = "Experiments on random dynamical systems of the cube and the simplex")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the configuration file.
    Run(Common),
    DeriveParams(Common),
    SimulateDiffusion(Common),
    EstimateB(Common),
    VerifyUniform(Common),
    FaceAttraction(Common),
    CcDensity(Common),
    SimulateVpso(Common),
    ChainCertificates(Common),
    Domination(Common),
    CertifyDelta(Common),
    /// List the experiments with their default replica counts.
    List,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; without it the experiment's defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicas.
    #[arg(long, allow_negative_numbers = true)]
    replicas: Option<i64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn split(c: Command) -> Option<(Option<ExperimentKind>, Common)> {
    use ExperimentKind as K;
    Some(match c {
        Command::Run(a) => (None, a),
        Command::DeriveParams(a) => (Some(K::DeriveParams), a),
        Command::SimulateDiffusion(a) => (Some(K::SimulateDiffusion), a),
        Command::EstimateB(a) => (Some(K::EstimateB), a),
        Command::VerifyUniform(a) => (Some(K::VerifyUniform), a),
        Command::FaceAttraction(a) => (Some(K::FaceAttraction), a),
        Command::CcDensity(a) => (Some(K::CcDensity), a),
        Command::SimulateVpso(a) => (Some(K::SimulateVpso), a),
        Command::ChainCertificates(a) => (Some(K::ChainCertificates), a),
        Command::Domination(a) => (Some(K::Domination), a),
        Command::CertifyDelta(a) => (Some(K::CertifyDelta), a),
        Command::List => return None,
    })
}

fn config_error(e: &ConfigError) -> ExitCode {
    eprintln!("configuration error at {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some((kind, args)) = split(cli.command) else {
        for k in ExperimentKind::ALL {
            println!("{:<20} {:?}, {} replicas by default", k.name(), k.model(), k.default_replicas());
        }
        return ExitCode::SUCCESS;
    };
    let overrides = CliOverrides {
        experiment: kind,
        seed: args.seed,
        replicas: args.replicas,
        out: args.out,
    };
    let cfg = match (&args.config, kind) {
        (Some(path), _) => ExperimentConfig::load(path, &overrides),
        (None, Some(k)) => ExperimentConfig::defaults(k, &overrides),
        (None, None) => Err(ConfigError::new("--config", "`run` needs a configuration file")),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    let threads = match rdslab::runner::thread_count() {
        Ok(n) => n,
        Err(e) => return config_error(&e),
    };
    let start = Instant::now();
    let outcome = match rdslab::execute(&cfg, threads) {
        Ok(o) => o,
        Err(RunError::Config(e)) => return config_error(&e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    print!("{}", outcome.summary(&rdslab::header(&cfg)));
    println!("artifacts in {}", cfg.out_dir.display());
    eprintln!("runtime {:.2} s on {threads} threads", start.elapsed().as_secs_f64());
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        for a in outcome.failing() {
            eprintln!("{}: failed criterion {}", cfg.experiment, a.line());
        }
        ExitCode::from(1)
    }
}
