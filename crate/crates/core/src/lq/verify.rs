use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::streamed_path_costs;
use crate::lq::LqSolution;
use crate::model::ControlPath;
use crate::noise::NoiseEnsemble;
use crate::paths::PathEnsemble;
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChallengerKind {
    /// The solved control itself.
    Identity,
    /// The solved control plus a deterministic perturbation, mapped into `U`.
    Perturbation,
    /// A deterministic sign pattern in `{-1, 1}`.
    Bang,
    /// A constant in `U`.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Challenger {
    pub kind: ChallengerKind,
    pub label: String,
    /// Paired estimate of `J(v) - J(v*)`.
    pub difference: Estimate,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub cost: Estimate,
    /// Discretisation allowance `C dt` added to `3 stderr`.
    pub allowance: f64,
    pub challengers: Vec<Challenger>,
    pub passed: bool,
}

const CONSTANTS: [f64; 8] = [-3.0, -2.0, -1.5, -1.0, 1.0, 1.5, 2.0, 3.0];

/// Compares `J(v*)` with `n_challengers` admissible controls under common
/// noise. The challengers cycle through perturbations of `v*`, sign patterns
/// and constants; a challenger outside `U` is a generation bug and fails hard.
pub fn verify_optimality(
    sol: &LqSolution,
    noise: &NoiseEnsemble,
    n_challengers: usize,
    seed: u64,
    allowance: f64,
) -> Result<VerificationReport> {
    let spec = &sol.spec;
    let grid = spec.grid;
    let n = noise.n_paths();
    sol.control.validate(&grid, &spec.domain, n)?;
    let base = streamed_path_costs(spec, &sol.control, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, len) = (grid.steps_per_delay(), grid.path_len());
    let history = sol.problem.initial_control();
    let kinds = [ChallengerKind::Perturbation, ChallengerKind::Bang, ChallengerKind::Constant];

    let mut challengers = Vec::with_capacity(n_challengers);
    for c in 0..n_challengers {
        let kind = kinds[c % 3];
        let (label, control) = match kind {
            ChallengerKind::Perturbation => {
                let scale = 0.25 + 0.75 * rng.random::<f64>();
                let shift: Vec<f64> = (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                let mut paths = PathEnsemble::zeros(n, len);
                for i in 0..n {
                    let row = paths.row_mut(i);
                    let v = sol.control.row(i);
                    row[..m].copy_from_slice(&v[..m]);
                    for j in m..len {
                        row[j] = crate::lq::law(v[j] + shift[j], &spec.domain);
                    }
                }
                (
                    format!("perturbation scale {scale:.3}"),
                    ControlPath::Ensemble { paths, adapted: true },
                )
            }
            ChallengerKind::Bang => {
                let block = rng.random_range(1..=m.max(1));
                let signs: Vec<f64> = (0..len.div_ceil(block))
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let v: Vec<f64> = (0..len)
                    .map(|j| if j < m { history } else { signs[(j - m) / block] })
                    .collect();
                (format!("bang block {block}"), ControlPath::Deterministic(v))
            }
            ChallengerKind::Constant => {
                let value = CONSTANTS[rng.random_range(0..CONSTANTS.len())];
                let v: Vec<f64> = (0..len).map(|j| if j < m { history } else { value }).collect();
                (format!("constant {value}"), ControlPath::Deterministic(v))
            }
            ChallengerKind::Identity => unreachable!(),
        };
        challengers.push(evaluate(sol, noise, &base, kind, label, &control, allowance)?);
    }
    Ok(VerificationReport {
        cost: Estimate::from_samples(&base),
        allowance,
        passed: challengers.iter().all(|c| c.passed),
        challengers,
    })
}

/// Evaluates one challenger against the solved control.
pub(crate) fn evaluate(
    sol: &LqSolution,
    noise: &NoiseEnsemble,
    base: &[f64],
    kind: ChallengerKind,
    label: String,
    control: &ControlPath,
    allowance: f64,
) -> Result<Challenger> {
    control
        .validate(&sol.spec.grid, &sol.spec.domain, noise.n_paths())
        .map_err(|e| Error::Oracle(format!("challenger `{label}` is not admissible: {e}")))?;
    let costs = streamed_path_costs(&sol.spec, control, noise)?;
    let difference = Estimate::paired_difference(&costs, base);
    Ok(Challenger {
        kind,
        label,
        passed: difference.mean >= -(3.0 * difference.stderr + allowance),
        difference,
    })
}

/// The solved control as its own challenger; the difference is exactly zero.
pub fn identity_challenger(sol: &LqSolution, noise: &NoiseEnsemble) -> Result<Challenger> {
    let base = streamed_path_costs(&sol.spec, &sol.control, noise)?;
    evaluate(sol, noise, &base, ChallengerKind::Identity, "identity".into(), &sol.control, 0.0)
}
