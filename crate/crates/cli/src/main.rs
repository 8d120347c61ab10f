use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delay_smp::harness::{
    resolve_out_dir, run_to, ExperimentConfig, ExperimentKind, GeometricOracle, ProblemConfig, Status,
};
use delay_smp::Error;

/// Experiments for controlled delay SDEs: simulation, expansion and
/// cross-term studies, maximum-principle scans and the LQ benchmark.
#[derive(Parser)]
#[command(name = "delay-smp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the state and optionally one spike variation.
    Simulate(RunArgs),
    /// Slopes of the first and second variations along a spike ladder.
    ConvergeExpansion(RunArgs),
    /// Cross-term identity along a spike ladder.
    CrosstermCheck(RunArgs),
    /// Maximum-principle gaps over random (tau, v) cells.
    MpScan(RunArgs),
    /// Solve the LQ problem by damped Picard iteration.
    LqSolve(RunArgs),
    /// Solve the LQ problem and compare against challenger controls.
    LqVerify(RunArgs),
    /// Compare adjoints with closed-form solutions.
    AdjointOracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory [default: config `out`, then $DELAY_SMP_OUT, then ./delay-smp-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Set a configuration key, e.g. `grid.steps_per_delay=32`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Simulate(a) => (ExperimentKind::Simulate, a),
            Command::ConvergeExpansion(a) => (ExperimentKind::ConvergeExpansion, a),
            Command::CrosstermCheck(a) => (ExperimentKind::CrosstermCheck, a),
            Command::MpScan(a) => (ExperimentKind::MpScan, a),
            Command::LqSolve(a) => (ExperimentKind::LqSolve, a),
            Command::LqVerify(a) => (ExperimentKind::LqVerify, a),
            Command::AdjointOracle(a) => (ExperimentKind::AdjointOracle, a),
        }
    }
}

fn default_config(kind: ExperimentKind) -> ExperimentConfig {
    let problem = match kind {
        ExperimentKind::AdjointOracle => ProblemConfig::GeometricOracle(GeometricOracle::default()),
        _ => ProblemConfig::LqBenchmark,
    };
    let mut cfg = ExperimentConfig::new(kind, problem, 1, 10_000);
    if matches!(kind, ExperimentKind::ConvergeExpansion | ExperimentKind::CrosstermCheck) {
        // eight steps per spike on the narrowest default width
        cfg.grid.steps_per_delay = 256;
    }
    cfg
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut overrides = vec![format!("kind=\"{}\"", kind.name())];
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(p) = args.paths {
        overrides.push(format!("paths={p}"));
    }
    overrides.extend(args.overrides.iter().cloned());
    match &args.config {
        Some(path) => ExperimentConfig::load(path, &overrides),
        None => ExperimentConfig::parse(&default_config(kind).to_toml(), &overrides),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} worker threads: {e}");
            return ExitCode::from(Status::ConfigError.code() as u8);
        }
    }
    let result = load(kind, &args).and_then(|cfg| {
        let dir = resolve_out_dir(args.out.clone(), &cfg);
        run_to(&cfg, &dir).map(|out| (out, dir))
    });
    let status = match &result {
        Ok((out, dir)) => {
            let status = if out.passed { Status::Pass } else { Status::Fail };
            let verdict = if out.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {} -> {}", kind.name(), dir.display());
            status
        }
        Err(e) => {
            eprintln!("error: {e}");
            Status::of_error(e)
        }
    };
    ExitCode::from(status.code() as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn subcommands_cover_every_kind() {
        let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
        for k in ExperimentKind::ALL {
            assert!(names.iter().any(|n| n == k.name()), "missing {}", k.name());
        }
    }

    #[test]
    fn defaults_parse_for_every_kind() {
        for k in ExperimentKind::ALL {
            let args = RunArgs {
                config: None,
                seed: Some(3),
                paths: Some(50),
                out: None,
                overrides: vec![],
                threads: None,
            };
            let cfg = load(k, &args).unwrap();
            assert_eq!((cfg.kind, cfg.seed, cfg.paths), (k, 3, 50));
        }
    }
}
