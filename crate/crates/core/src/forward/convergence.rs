use serde::Serialize;

use crate::error::Result;
use crate::forward::state::simulate_state;
use crate::model::ProblemSpec;
use crate::noise::NoiseEnsemble;
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConvergencePoint {
    pub dt: f64,
    /// Paired estimate of `x_coarse(T) - x_fine(T)`.
    pub difference: Estimate,
}

/// Terminal-mean self-convergence: the problem is simulated on the grid of
/// `noise` and on grids coarsened by each factor, all driven by the same
/// Brownian paths. The control is the deterministic `control(t)`.
pub fn terminal_mean_convergence(
    spec: &ProblemSpec,
    control: impl Fn(f64) -> f64 + Copy,
    noise: &NoiseEnsemble,
    factors: &[usize],
) -> Result<Vec<GridConvergencePoint>> {
    let fine_spec = spec.regrid(*noise.grid())?;
    let fine = simulate_state(&fine_spec, &fine_spec.control_from(control), noise)?;
    let fine_terminal: Vec<f64> = (0..fine.n_paths()).map(|i| fine.terminal(i)).collect();
    factors
        .iter()
        .map(|&f| {
            let coarse_noise = noise.coarsen(f)?;
            let coarse_spec = spec.regrid(*coarse_noise.grid())?;
            let coarse = simulate_state(&coarse_spec, &coarse_spec.control_from(control), &coarse_noise)?;
            let terminal: Vec<f64> = (0..coarse.n_paths()).map(|i| coarse.terminal(i)).collect();
            Ok(GridConvergencePoint {
                dt: coarse_noise.grid().dt(),
                difference: Estimate::paired_difference(&terminal, &fine_terminal),
            })
        })
        .collect()
}
