//! Processes behind the cross-term identity
//! `E int sigma_xd Phi x1 x1(t - delay) dt = E int (b_xd / sigma_xd - sigma_x) Phi x1^2 dt`.

use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::first::FirstAdjoint;
use crate::error::{Error, Result};
use crate::forward::{base_records, check_guard, check_inputs, run_expansion, Integrate, SpikeSpec, StateEnsemble};
use crate::grid::TimeGrid;
use crate::model::{ControlPath, ProblemSpec};
use crate::noise::NoiseEnsemble;
use crate::paths::PathEnsemble;
use crate::stats::{Estimate, CHUNK};

fn check_states(spec: &ProblemSpec, states: &StateEnsemble, noise: &NoiseEnsemble) -> Result<()> {
    if states.n_paths() != noise.n_paths() || states.grid() != &spec.grid {
        return Err(Error::config("states", "states do not match the noise ensemble or grid"));
    }
    Ok(())
}

/// The exponential
/// `P0(t) = exp(-int_0^t (alpha + beta^2 / 2) ds - int_0^t beta dB)` with
/// `beta = b_xd / sigma_xd` and `alpha = b_x - beta sigma_x`, on steps `0..=N`.
pub fn simulate_p0(
    spec: &ProblemSpec,
    control: &ControlPath,
    states: &StateEnsemble,
    noise: &NoiseEnsemble,
    guard: f64,
) -> Result<PathEnsemble> {
    check_inputs(spec, control, noise)?;
    check_states(spec, states, noise)?;
    let grid = spec.grid;
    let (big_n, dt) = (grid.steps(), grid.dt());
    let coeffs = spec.coeffs();
    let mut out = PathEnsemble::zeros(noise.n_paths(), big_n + 1);
    let res: Vec<Result<()>> = out
        .as_mut_slice()
        .par_chunks_mut((big_n + 1) * CHUNK)
        .enumerate()
        .map(|(c, block)| {
            let mut rec = Vec::new();
            let mut db = vec![0.0; big_n];
            for (r, row) in block.chunks_mut(big_n + 1).enumerate() {
                let i = c * CHUNK + r;
                noise.fill_path(i, &mut db);
                base_records(coeffs, &grid, states.path(i), control.row(i), &mut rec);
                check_guard(&rec, guard, i)?;
                row[0] = 1.0;
                let mut log = 0.0;
                for k in 0..big_n {
                    let beta = rec[k].b.dxd / rec[k].sigma.dxd;
                    let alpha = rec[k].b.dx - beta * rec[k].sigma.dx;
                    log -= (alpha + 0.5 * beta * beta) * dt + beta * db[k];
                    row[k + 1] = log.exp();
                    if !(row[k + 1].is_finite() && row[k + 1] > 0.0) {
                        return Err(Error::Simulation {
                            path: i,
                            step: k,
                            quantity: "P0",
                        });
                    }
                }
            }
            Ok(())
        })
        .collect();
    res.into_iter().collect::<Result<()>>()?;
    Ok(out)
}

/// `phi(t) = -int_t^T P0^{-1} Phi x1 dB`, on steps `0..=N`.
///
/// `weight` and `x1` hold one row per path: per-step weights, and the first
/// variation on the nodes of `[-delay, horizon]`.
pub fn phi_process(
    grid: &TimeGrid,
    p0: &PathEnsemble,
    weight: &PathEnsemble,
    x1: &PathEnsemble,
    noise: &NoiseEnsemble,
) -> Result<PathEnsemble> {
    let (big_n, m) = (grid.steps(), grid.steps_per_delay());
    let n = noise.n_paths();
    if p0.n_paths() != n || weight.n_paths() != n || x1.n_paths() != n {
        return Err(Error::config("phi", "inputs have different path counts"));
    }
    if p0.len() != big_n + 1 || weight.len() != big_n || x1.len() != grid.path_len() || noise.grid().steps() != big_n {
        return Err(Error::config("phi", "inputs do not match the grid"));
    }
    let mut out = PathEnsemble::zeros(n, big_n + 1);
    out.as_mut_slice()
        .par_chunks_mut((big_n + 1) * CHUNK)
        .enumerate()
        .for_each(|(c, block)| {
            let mut db = vec![0.0; big_n];
            for (r, row) in block.chunks_mut(big_n + 1).enumerate() {
                let i = c * CHUNK + r;
                noise.fill_path(i, &mut db);
                let (p, w, a) = (p0.row(i), weight.row(i), x1.row(i));
                row[big_n] = 0.0;
                for k in (0..big_n).rev() {
                    row[k] = row[k + 1] - w[k] * a[m + k] * db[k] / p[k];
                }
            }
        });
    Ok(out)
}

/// `Phi = H_xxd / sigma_xd` with `H = L + p b + q sigma`, per path and step.
pub fn hamiltonian_cross_weight(
    spec: &ProblemSpec,
    control: &ControlPath,
    states: &StateEnsemble,
    first: &FirstAdjoint,
    guard: f64,
) -> Result<PathEnsemble> {
    let grid = spec.grid;
    let n = states.n_paths();
    if first.grid() != &grid || first.n_paths() != n || states.grid() != &grid {
        return Err(Error::config("first", "first adjoint does not match the states"));
    }
    let big_n = grid.steps();
    let coeffs = spec.coeffs();
    let mut out = PathEnsemble::zeros(n, big_n);
    let res: Vec<Result<()>> = out
        .as_mut_slice()
        .par_chunks_mut(big_n * CHUNK)
        .enumerate()
        .map(|(c, block)| {
            let mut rec = Vec::new();
            for (r, row) in block.chunks_mut(big_n).enumerate() {
                let i = c * CHUNK + r;
                base_records(coeffs, &grid, states.path(i), control.row(i), &mut rec);
                check_guard(&rec, guard, i)?;
                for (k, w) in row.iter_mut().enumerate() {
                    let e = &rec[k];
                    let hxxd = e.cost.dxxd + first.p(i, k) * e.b.dxxd + first.q(i, k) * e.sigma.dxxd;
                    *w = hxxd / e.sigma.dxd;
                }
            }
            Ok(())
        })
        .collect();
    res.into_iter().collect::<Result<()>>()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptedCrossRung {
    pub epsilon: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub residual: Estimate,
}

/// Cross-term sums for an adapted weight process over a ladder of spike widths.
#[allow(clippy::too_many_arguments)]
pub fn adapted_cross_term(
    spec: &ProblemSpec,
    control: &ControlPath,
    states: &StateEnsemble,
    weight: &PathEnsemble,
    tau: f64,
    value: f64,
    epsilons: &[f64],
    noise: &NoiseEnsemble,
    guard: f64,
) -> Result<Vec<AdaptedCrossRung>> {
    check_states(spec, states, noise)?;
    if weight.n_paths() != noise.n_paths() || weight.len() != spec.grid.steps() {
        return Err(Error::config("weight", "weight needs one row of per-step values per path"));
    }
    let n = noise.n_paths();
    let len = spec.grid.path_len();
    let mut x1 = PathEnsemble::zeros(n, len);
    let mut x2 = PathEnsemble::zeros(n, len);
    epsilons
        .iter()
        .map(|&eps| {
            let spike = SpikeSpec::new(tau, eps, value);
            let sums = run_expansion(
                spec,
                control,
                &spike,
                noise,
                states,
                &mut x1,
                &mut x2,
                Integrate::Both,
                Some((weight, guard)),
            )?;
            let lhs: Vec<f64> = sums.iter().map(|s| s.cross_lhs).collect();
            let rhs: Vec<f64> = sums.iter().map(|s| s.cross_rhs).collect();
            Ok(AdaptedCrossRung {
                epsilon: eps,
                lhs: Estimate::from_samples(&lhs),
                rhs: Estimate::from_samples(&rhs),
                residual: Estimate::paired_difference(&lhs, &rhs),
            })
        })
        .collect()
}
