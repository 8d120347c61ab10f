use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoints, solve_first_adjoint, AdjointConfig, AdjointSolution};
use crate::error::{Error, Result};
use crate::forward::{path_costs, simulate_state};
use crate::grid::TimeGrid;
use crate::lq::{law, LqProblem, R2Placement};
use crate::model::{ControlPath, ProblemSpec};
use crate::noise::NoiseEnsemble;
use crate::paths::PathEnsemble;
use crate::stats::{stable_sum, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub max_iters: usize,
    /// Weight of the new candidate in `u <- u + theta (u_new - u)`.
    pub damping: f64,
    /// From this iteration on the damping decays like `1 / iteration`.
    pub averaging_after: usize,
    /// Bound on the candidate change that stops the iteration.
    pub tolerance: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            max_iters: 60,
            damping: 0.5,
            averaging_after: 10,
            tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqSolveConfig {
    pub picard: PicardConfig,
    pub adjoint: AdjointConfig,
    pub r2_placement: R2Placement,
}

impl PicardConfig {
    /// Damping used in iteration `j`, counted from zero.
    pub fn damping_at(&self, j: usize) -> f64 {
        if j < self.averaging_after {
            self.damping
        } else {
            self.damping * (self.averaging_after + 1) as f64 / (j + 2) as f64
        }
    }
}

impl LqSolveConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.picard;
        if p.max_iters == 0 {
            return Err(Error::config("picard.max_iters", "need at least one iteration"));
        }
        if !(p.damping > 0.0 && p.damping <= 1.0) {
            return Err(Error::config("picard.damping", format!("damping must lie in (0, 1], got {}", p.damping)));
        }
        if p.averaging_after == 0 {
            return Err(Error::config("picard.averaging_after", "need at least one undamped-schedule iteration"));
        }
        if !(p.tolerance > 0.0) {
            return Err(Error::config("picard.tolerance", "tolerance must be positive"));
        }
        self.adjoint.validate()
    }
}

/// Sup over nodes of the root-mean-square change across paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PicardTrace {
    /// Change of the control in `U` per iteration.
    pub control_changes: Vec<f64>,
    /// Change of the unconstrained candidate `-(p B + q D) / L` per iteration.
    pub candidate_changes: Vec<f64>,
    pub converged: bool,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.control_changes.len()
    }

    /// Largest ratio of successive candidate changes.
    pub fn worst_contraction(&self) -> f64 {
        self.candidate_changes
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct LqSolution {
    pub problem: LqProblem,
    pub spec: ProblemSpec,
    /// Control on the nodes of `[-delay, horizon]`, one row per path.
    pub control: ControlPath,
    /// States and adjoints along `control`.
    pub adjoints: AdjointSolution,
    pub cost: Estimate,
    pub trace: PicardTrace,
}

impl LqSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.spec.grid
    }
}

fn sup_rms_change(a: &PathEnsemble, b: &PathEnsemble, nodes: std::ops::Range<usize>) -> f64 {
    let n = a.n_paths();
    nodes
        .into_par_iter()
        .map(|j| {
            let sq: Vec<f64> = (0..n).map(|i| (a.get(i, j) - b.get(i, j)).powi(2)).collect();
            (stable_sum(&sq) / n as f64).sqrt()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Damped Picard iteration between the state, the first adjoint and the
/// control law.
///
/// The damping acts on the unconstrained candidate, which is then mapped into
/// `U` by the law. Paths whose state hovers near zero keep switching sign
/// across the jump of the law, so the control itself need not settle; the
/// iteration stops on the candidate change. Starting from candidate `0`, i.e. the control `law(0)`, each
/// iteration simulates the state, solves the first adjoint and updates the
/// candidate on every path and node.
pub fn solve_lq(prob: &LqProblem, grid: TimeGrid, noise: &NoiseEnsemble, cfg: &LqSolveConfig) -> Result<LqSolution> {
    cfg.validate()?;
    let spec = prob.spec(grid)?;
    let adj_spec = prob.spec_with(grid, Arc::new(prob.adjoint_coefficients(cfg.r2_placement)))?;
    if noise.grid().steps() != grid.steps() {
        return Err(Error::config("noise", "noise grid does not match the problem grid"));
    }
    let n = noise.n_paths();
    let (m, len) = (grid.steps_per_delay(), grid.path_len());
    let history = prob.initial_control();

    let mut candidate = PathEnsemble::zeros(n, len);
    let mut control = PathEnsemble::zeros(n, len);
    let to_control = |cand: &PathEnsemble, out: &mut PathEnsemble| {
        out.as_mut_slice()
            .par_chunks_mut(len)
            .zip(cand.as_slice().par_chunks(len))
            .for_each(|(v, c)| {
                v[..m].fill(history);
                for j in m..len {
                    v[j] = law(c[j], &prob.domain);
                }
            });
    };
    to_control(&candidate, &mut control);

    let mut trace = PicardTrace::default();
    let mut next_candidate = PathEnsemble::zeros(n, len);
    let mut next_control = PathEnsemble::zeros(n, len);
    for iter in 0..cfg.picard.max_iters {
        let ctrl = ControlPath::Ensemble {
            paths: control.clone(),
            adapted: true,
        };
        let states = simulate_state(&spec, &ctrl, noise)?;
        let first = solve_first_adjoint(&adj_spec, &ctrl, &states, noise, &cfg.adjoint)?;
        let theta = cfg.picard.damping_at(iter);
        next_candidate
            .as_mut_slice()
            .par_chunks_mut(len)
            .zip(candidate.as_slice().par_chunks(len))
            .enumerate()
            .for_each(|(i, (nc, c))| {
                for k in 0..=grid.steps() {
                    let u = -(first.p(i, k) * prob.b + first.q(i, k) * prob.d) / prob.l;
                    nc[m + k] = c[m + k] + theta * (u - c[m + k]);
                }
            });
        to_control(&next_candidate, &mut next_control);
        let nodes = m..m + grid.steps();
        trace.control_changes.push(sup_rms_change(&control, &next_control, nodes.clone()));
        trace.candidate_changes.push(sup_rms_change(&candidate, &next_candidate, nodes));
        std::mem::swap(&mut candidate, &mut next_candidate);
        std::mem::swap(&mut control, &mut next_control);
        let tol = cfg.picard.tolerance;
        if trace.candidate_changes.last() < Some(&tol) {
            trace.converged = true;
            break;
        }
    }

    let ctrl = ControlPath::Ensemble {
        paths: control,
        adapted: true,
    };
    let adjoints = solve_adjoints(&adj_spec, &ctrl, noise, &cfg.adjoint)?;
    let cost = Estimate::from_samples(&path_costs(&spec, &ctrl, &adjoints.states));
    Ok(LqSolution {
        problem: prob.clone(),
        spec,
        control: ctrl,
        adjoints,
        cost,
        trace,
    })
}
