use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::first::FirstAdjoint;
use crate::error::{Error, Result};
use crate::forward::{base_records, simulate_first_variation, SpikeSpec, SpikedRecords, StateEnsemble};
use crate::model::{ControlPath, ProblemSpec};
use crate::noise::NoiseEnsemble;
use crate::stats::{Estimate, CHUNK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityReport {
    /// `E[h_x(x(T)) x1(T) + int (L_x x1 + L_xd x1(t - delay)) dt]`.
    pub lhs: Estimate,
    /// `E[int (p Db + q Dsigma) dt]`, with `Db = b(Theta^eps) - b(Theta)`.
    pub rhs: Estimate,
    /// Paired `lhs - rhs`.
    pub residual: Estimate,
}

/// Pairs the first adjoint with the first variation of a spike.
///
/// For exact conditional expectations both sides agree exactly on the grid,
/// so the residual measures regression error.
pub fn duality_check(
    spec: &ProblemSpec,
    control: &ControlPath,
    states: &StateEnsemble,
    first: &FirstAdjoint,
    spike: &SpikeSpec,
    noise: &NoiseEnsemble,
) -> Result<DualityReport> {
    if first.grid() != &spec.grid || first.n_paths() != noise.n_paths() {
        return Err(Error::config("first", "first adjoint does not match the noise ensemble or grid"));
    }
    let x1 = simulate_first_variation(spec, control, spike, noise, states)?;
    let window = spike.window(&spec.grid, &spec.domain)?;
    let grid = spec.grid;
    let coeffs = spec.coeffs();
    let (m, dt) = (grid.steps_per_delay(), grid.dt());
    let n = noise.n_paths();
    let pairs: Vec<(f64, f64)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rec = Vec::new();
            let mut sp = SpikedRecords::default();
            let mut ue = vec![0.0; grid.path_len()];
            let range = c * CHUNK..((c + 1) * CHUNK).min(n);
            range
                .map(|i| {
                    let (x, u, a) = (states.path(i), control.row(i), x1.row(i));
                    base_records(coeffs, &grid, x, u, &mut rec);
                    ue.copy_from_slice(u);
                    crate::forward::spike_row(&mut ue, &grid, window, spike.value);
                    sp.build(coeffs, &grid, &rec, u, &ue, window);
                    let (mut lhs, mut rhs) = (0.0, 0.0);
                    for k in 0..grid.steps() {
                        let r = &rec[k];
                        let e = sp.get(k, &rec);
                        lhs += r.cost.dx * a[m + k] + r.cost.dxd * a[k];
                        rhs += first.continuation.get(i, k) * (e.b.value - r.b.value)
                            + first.q.get(i, k) * (e.sigma.value - r.sigma.value);
                    }
                    let nt = grid.terminal_index();
                    let h = coeffs.terminal_cost(x[nt]).dx;
                    (h * a[nt] + lhs * dt, rhs * dt)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let lhs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(DualityReport {
        lhs: Estimate::from_samples(&lhs),
        rhs: Estimate::from_samples(&rhs),
        residual: Estimate::paired_difference(&lhs, &rhs),
    })
}
