//! Configuration-driven experiments with reproducible outputs.
//!
//! A run reads an [`ExperimentConfig`], executes one experiment and writes
//! its CSV and JSON outputs together with `manifest.json`, which records the
//! hash of the resolved configuration, the seed and the crate version. The
//! same configuration and seed give byte-identical files for any number of
//! worker threads.
//!
//! | kind                 | outputs                                                    |
//! |----------------------|------------------------------------------------------------|
//! | `simulate`           | `state_moments.csv` (t, mean, stderr), `ensemble.csv`      |
//! | `converge-expansion` | `slopes.csv` (epsilon, metric, value, stderr, slope)       |
//! | `crossterm-check`    | `crossterm.csv` (epsilon, lhs, rhs, residual, stderr)      |
//! | `mp-scan`            | `mp_scan.csv` (tau, v, gap, stderr), `mp_scan_detect.csv`  |
//! | `lq-solve`           | `picard.csv`, `adjoint_means.csv`, `trajectories.csv`      |
//! | `lq-verify`          | `challengers.csv` and the `lq-solve` files                 |
//! | `adjoint-oracle`     | `oracle.csv`                                               |
//!
//! Every kind also writes `summary.json`. `ensemble.csv` (path, t, x, x1, x2,
//! u) and `trajectories.csv` (path, t, x, u, p, q, P, Q) are only written when
//! `output.dump_paths` is positive.

mod config;
mod emit;
mod experiments;

use std::path::{Path, PathBuf};

pub use config::{
    ControlChoice, CrossConfig, DeterministicOracle, ExperimentConfig, ExperimentKind, ExprProblem, GeometricOracle,
    GridConfig, History, OutputConfig, ProblemConfig, ScanConfig, SpikeConfig, VerifyConfig, WeightChoice,
};
pub use emit::{Artifacts, Cell, Csv, FileEntry, Manifest};
pub use experiments::{scan_cells, Outcome};

use crate::error::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DELAY_SMP_OUT";
/// Output directory when neither the command line, the config nor
/// [`OUT_ENV`] names one.
pub const DEFAULT_OUT: &str = "delay-smp-out";

/// Exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Fail = 1,
    ConfigError = 2,
    NumericalError = 3,
}

impl Status {
    pub fn of(result: &Result<Outcome>) -> Status {
        match result {
            Ok(o) if o.passed => Status::Pass,
            Ok(_) => Status::Fail,
            Err(e) => Status::of_error(e),
        }
    }

    /// I/O failures count as configuration errors: the output location is
    /// part of the configuration.
    pub fn of_error(e: &Error) -> Status {
        if e.is_config() || matches!(e, Error::Io(_)) {
            Status::ConfigError
        } else {
            Status::NumericalError
        }
    }

    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Runs the experiment and adds `manifest.json` to its outputs.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = experiments::run_experiment(cfg)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind.name(),
        seed: cfg.seed,
        paths: cfg.paths,
        config_sha256: cfg.hash(),
        config: cfg.to_toml(),
        passed: out.passed,
        files: Manifest::entries(&out.artifacts),
    };
    out.artifacts.json("manifest.json", &manifest);
    Ok(out)
}

/// Runs the experiment and writes its outputs into `dir`.
pub fn run_to(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let out = run(cfg)?;
    out.artifacts.write_to(dir)?;
    Ok(out)
}

/// Output directory: the explicit choice, then the config, then
/// [`OUT_ENV`], then [`DEFAULT_OUT`].
pub fn resolve_out_dir(explicit: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    explicit
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}
