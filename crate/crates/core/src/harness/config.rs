use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adjoint::AdjointConfig;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lq::{LqProblem, LqSolveConfig, PicardConfig, R2Placement};
use crate::model::{check_derivatives, AffineQuadratic, ControlDomain, ExprCoefficients, ExprSource, NonlinearDelayBenchmark, ProblemSpec};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    ConvergeExpansion,
    CrosstermCheck,
    MpScan,
    LqSolve,
    LqVerify,
    AdjointOracle,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Simulate,
        ExperimentKind::ConvergeExpansion,
        ExperimentKind::CrosstermCheck,
        ExperimentKind::MpScan,
        ExperimentKind::LqSolve,
        ExperimentKind::LqVerify,
        ExperimentKind::AdjointOracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::ConvergeExpansion => "converge-expansion",
            ExperimentKind::CrosstermCheck => "crossterm-check",
            ExperimentKind::MpScan => "mp-scan",
            ExperimentKind::LqSolve => "lq-solve",
            ExperimentKind::LqVerify => "lq-verify",
            ExperimentKind::AdjointOracle => "adjoint-oracle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ExperimentKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Problem selected from the built-in registry or given inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ProblemConfig {
    /// The delayed LQ benchmark on `(-inf, -1] U [1, inf)`.
    LqBenchmark,
    /// The benchmark without delay effects over `U = R`.
    LqNoDelay,
    /// A user-defined LQ parameter set.
    Lq(LqProblem),
    /// The benchmark dynamics with smooth nonlinearities.
    NonlinearDelay(History),
    /// `b = c x`, `sigma = s x`, `h = x^2 / 2` on `horizon = delay = 1`.
    GeometricOracle(GeometricOracle),
    /// Affine dynamics with quadratic costs on `horizon = delay = 1`, whose
    /// second adjoint is deterministic.
    DeterministicOracle(DeterministicOracle),
    /// Coefficients given as expressions.
    Expr(ExprProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct History {
    /// Constant initial state.
    pub a: f64,
    /// Constant initial control.
    pub eta: f64,
    pub delay: f64,
    pub horizon: f64,
    pub domain: ControlDomain,
}

impl Default for History {
    fn default() -> Self {
        History {
            a: 1.0,
            eta: 1.0,
            delay: 0.25,
            horizon: 1.0,
            domain: ControlDomain::split_unit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricOracle {
    pub c: f64,
    pub s: f64,
}

impl Default for GeometricOracle {
    fn default() -> Self {
        GeometricOracle { c: 0.3, s: 0.4 }
    }
}

impl GeometricOracle {
    pub fn coefficients(&self) -> AffineQuadratic {
        AffineQuadratic {
            drift_x: self.c,
            diffusion_x: self.s,
            terminal_x2: 1.0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeterministicOracle {
    pub c: f64,
    pub e: f64,
    pub s: f64,
    pub d: f64,
    pub s0: f64,
    pub l: f64,
    pub eta: f64,
}

impl Default for DeterministicOracle {
    fn default() -> Self {
        DeterministicOracle {
            c: 0.3,
            e: 0.2,
            s: 0.2,
            d: 0.5,
            s0: 0.3,
            l: 1.0,
            eta: 1.0,
        }
    }
}

impl DeterministicOracle {
    pub fn coefficients(&self) -> AffineQuadratic {
        AffineQuadratic {
            drift_x: self.c,
            drift_xd: self.e,
            diffusion_x: self.s,
            diffusion_xd: self.d,
            diffusion_const: self.s0,
            cost_x2: self.l,
            terminal_x2: self.eta,
            ..Default::default()
        }
    }

    /// Closed-form `P(t)` on `[0, 1]`.
    pub fn second_adjoint(&self, t: f64) -> f64 {
        let beta = self.e / self.d;
        let gap = beta - self.s;
        let alpha = 2.0 * self.c + self.s * self.s + gap * (2.0 * beta + 2.0 * self.s);
        let gamma = 0.5 * self.l;
        (0.5 * self.eta + gamma / alpha) * (alpha * (1.0 - t)).exp() - gamma / alpha
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprProblem {
    pub coefficients: ExprSource,
    #[serde(default)]
    pub history: History,
}

/// Number of samples in the derivative audit of expression coefficients.
const AUDIT_SAMPLES: usize = 200;

impl ProblemConfig {
    /// The LQ parameters, for problems in the LQ family.
    pub fn lq(&self) -> Option<LqProblem> {
        match self {
            ProblemConfig::LqBenchmark => Some(LqProblem::benchmark()),
            ProblemConfig::LqNoDelay => Some(LqProblem::no_delay_reduction()),
            ProblemConfig::Lq(p) => Some(p.clone()),
            _ => None,
        }
    }

    /// `(horizon, delay)`.
    pub fn horizon_delay(&self) -> (f64, f64) {
        match self {
            ProblemConfig::GeometricOracle(_) | ProblemConfig::DeterministicOracle(_) => (1.0, 1.0),
            ProblemConfig::NonlinearDelay(h) => (h.horizon, h.delay),
            ProblemConfig::Expr(e) => (e.history.horizon, e.history.delay),
            other => {
                let lq = other.lq().expect("remaining problems are LQ");
                (lq.horizon, lq.delay)
            }
        }
    }

    pub fn grid(&self, steps_per_delay: usize) -> Result<TimeGrid> {
        let (horizon, delay) = self.horizon_delay();
        TimeGrid::new(horizon, delay, steps_per_delay)
    }

    /// Builds the problem on `grid`. Expression coefficients must pass the
    /// derivative audit.
    pub fn spec(&self, grid: TimeGrid) -> Result<ProblemSpec> {
        match self {
            ProblemConfig::NonlinearDelay(h) => {
                ProblemSpec::with_constant_history(Arc::new(NonlinearDelayBenchmark), h.domain.clone(), grid, h.a, h.eta)
            }
            ProblemConfig::GeometricOracle(o) => {
                ProblemSpec::with_constant_history(Arc::new(o.coefficients()), ControlDomain::Real, grid, 1.0, 0.0)
            }
            ProblemConfig::DeterministicOracle(o) => {
                ProblemSpec::with_constant_history(Arc::new(o.coefficients()), ControlDomain::Real, grid, 1.0, 0.0)
            }
            ProblemConfig::Expr(e) => {
                let coeffs = ExprCoefficients::new(e.coefficients.clone())?;
                let audit = check_derivatives(&coeffs, AUDIT_SAMPLES, 0)?;
                if let Some(bad) = audit.flagged().next() {
                    return Err(Error::config(
                        format!("problem.coefficients.{}.{}", bad.coefficient, bad.derivative),
                        format!(
                            "declared derivative disagrees with finite differences (max error {:.3e})",
                            bad.max_error
                        ),
                    ));
                }
                let h = &e.history;
                ProblemSpec::with_constant_history(Arc::new(coeffs), h.domain.clone(), grid, h.a, h.eta)
            }
            other => other.lq().expect("remaining problems are LQ").spec(grid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub steps_per_delay: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { steps_per_delay: 16 }
    }
}

/// Control the experiment runs along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlChoice {
    /// The initial control held constant on `[0, horizon]`.
    Initial,
    Constant { value: f64 },
    /// The solved LQ control; LQ problems only.
    Solved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeConfig {
    pub tau: f64,
    pub value: f64,
    /// Spike widths; empty means `delay / 4, ..., delay / 32`.
    pub epsilons: Vec<f64>,
    /// Width of the single spike used by `simulate`.
    pub epsilon: f64,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        SpikeConfig {
            tau: 0.25,
            value: -1.0,
            epsilons: Vec::new(),
            epsilon: 0.0625,
        }
    }
}

/// Weight process in the cross-term check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightChoice {
    Constant { value: f64 },
    /// `H_xxd / sigma_xd` along the first adjoint.
    Hamiltonian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossConfig {
    pub weight: WeightChoice,
}

impl Default for CrossConfig {
    fn default() -> Self {
        CrossConfig {
            weight: WeightChoice::Constant { value: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Number of random `(tau, v)` cells.
    pub cells: usize,
    pub values: Vec<f64>,
    /// Seed of the cell sampler.
    pub seed: u64,
    /// A constant control whose scan must show at least one violation.
    pub detect_with: Option<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            cells: 100,
            values: vec![-3.0, -2.0, -1.5, -1.0, 1.0, 1.5, 2.0, 3.0],
            seed: 1,
            detect_with: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub challengers: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { challengers: 20, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct OutputConfig {
    /// Paths written to trajectory CSVs; `0` disables the dump.
    pub dump_paths: usize,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_control")]
    pub control: ControlChoice,
    #[serde(default)]
    pub spike: SpikeConfig,
    #[serde(default)]
    pub cross: CrossConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub adjoint: AdjointConfig,
    #[serde(default)]
    pub r2_placement: R2Placement,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_control() -> ControlChoice {
    ControlChoice::Initial
}

impl ExperimentConfig {
    /// A config for `kind` on `problem` with every other setting at its default.
    pub fn new(kind: ExperimentKind, problem: ProblemConfig, seed: u64, paths: usize) -> Self {
        ExperimentConfig {
            kind,
            seed,
            paths,
            out: None,
            problem,
            grid: GridConfig::default(),
            control: default_control(),
            spike: SpikeConfig::default(),
            cross: CrossConfig::default(),
            scan: ScanConfig::default(),
            picard: PicardConfig::default(),
            adjoint: AdjointConfig::default(),
            r2_placement: R2Placement::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
            tolerances: Tolerances::default(),
        }
    }

    /// Parses TOML text, applying `key.path=value` overrides first.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| toml_error(&e, text))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| toml_error(&e, text))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialise to TOML")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn lq_solve_config(&self) -> LqSolveConfig {
        LqSolveConfig {
            picard: self.picard,
            adjoint: self.adjoint,
            r2_placement: self.r2_placement,
        }
    }

    /// Spike widths, defaulting to `delay / 4, ..., delay / 32`.
    pub fn epsilons(&self) -> Vec<f64> {
        if self.spike.epsilons.is_empty() {
            let (_, delay) = self.problem.horizon_delay();
            crate::forward::dyadic_ladder(delay, 2, 5)
        } else {
            self.spike.epsilons.clone()
        }
    }

    /// Checks everything that can be checked before simulating, including the
    /// grid and the spike ladder.
    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::config("paths", "need at least two paths"));
        }
        // TOML integers are signed 64-bit
        for (field, seed) in [("seed", self.seed), ("scan.seed", self.scan.seed), ("verify.seed", self.verify.seed)] {
            if seed > i64::MAX as u64 {
                return Err(Error::config(field, format!("seed {seed} exceeds {}", i64::MAX)));
            }
        }
        let grid = self.problem.grid(self.grid.steps_per_delay).map_err(|e| prefix(e, "grid"))?;
        self.problem.spec(grid)?;
        self.tolerances.validate()?;
        self.lq_solve_config().validate()?;
        let lq = self.problem.lq();
        let needs_lq = matches!(self.kind, ExperimentKind::LqSolve | ExperimentKind::LqVerify)
            || self.control == ControlChoice::Solved;
        if needs_lq
            && lq.is_none() {
                return Err(Error::config("problem.name", "this experiment needs an LQ problem"));
            }
        match self.kind {
            ExperimentKind::ConvergeExpansion | ExperimentKind::CrosstermCheck => {
                let eps = self.epsilons();
                if eps.len() < 2 {
                    return Err(Error::config("spike.epsilons", "a slope needs at least two widths"));
                }
                for e in eps {
                    crate::forward::SpikeSpec::new(self.spike.tau, e, self.spike.value)
                        .window(&grid, &self.problem.spec(grid)?.domain)?;
                }
            }
            ExperimentKind::Simulate if self.spike.epsilon > 0.0 => {
                crate::forward::SpikeSpec::new(self.spike.tau, self.spike.epsilon, self.spike.value)
                    .window(&grid, &self.problem.spec(grid)?.domain)?;
            }
            ExperimentKind::MpScan => {
                if self.scan.cells == 0 || self.scan.values.is_empty() {
                    return Err(Error::config("scan", "need at least one cell and one value"));
                }
                let domain = self.problem.spec(grid)?.domain;
                if let Some(v) = self.scan.values.iter().find(|v| !domain.contains(**v)) {
                    return Err(Error::config("scan.values", format!("{v} lies outside the control domain")));
                }
            }
            ExperimentKind::LqVerify if self.verify.challengers == 0 => {
                return Err(Error::config("verify.challengers", "need at least one challenger"));
            }
            ExperimentKind::AdjointOracle
                if !matches!(
                    self.problem,
                    ProblemConfig::GeometricOracle(_) | ProblemConfig::DeterministicOracle(_)
                ) =>
            {
                return Err(Error::config("problem.name", "adjoint-oracle needs an oracle problem"));
            }
            _ => {}
        }
        Ok(())
    }
}

fn prefix(err: Error, scope: &str) -> Error {
    match err {
        Error::Config { field, message } => Error::Config {
            field: format!("{scope}.{field}"),
            message,
        },
        other => other,
    }
}

/// Converts a TOML error into a config error naming the line.
fn toml_error(e: &toml::de::Error, text: &str) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
    let field = match line {
        Some(l) => format!("line {l}"),
        None => "config".to_string(),
    };
    Error::config(field, e.message().to_string())
}

/// Sets `key.path` to `value`, read as a TOML value when it parses as one
/// and as a string otherwise.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config("override", format!("`{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config("override", format!("`{key}` is not a valid key path")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config("override", format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
