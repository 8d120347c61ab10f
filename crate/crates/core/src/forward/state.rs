use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{Coefficients, ControlPath, Point, ProblemSpec, ThetaRecord};
use crate::noise::NoiseEnsemble;
use crate::paths::PathEnsemble;
use crate::stats::{Estimate, CHUNK};

/// Monte Carlo estimate of the cost functional.
pub type CostEstimate = Estimate;

/// Simulated states on the nodes of `[-delay, horizon]`, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEnsemble {
    grid: TimeGrid,
    paths: PathEnsemble,
}

impl StateEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.paths.n_paths()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        self.paths.row(i)
    }

    /// State of path `i` at global node `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.paths.get(i, j)
    }

    /// State of path `i` at step index `k` (`t = k dt`).
    pub fn at_step(&self, i: usize, k: usize) -> f64 {
        self.paths.get(i, self.grid.steps_per_delay() + k)
    }

    pub fn terminal(&self, i: usize) -> f64 {
        self.paths.get(i, self.grid.terminal_index())
    }

    pub fn paths(&self) -> &PathEnsemble {
        &self.paths
    }
}

pub(crate) fn check_noise(grid: &TimeGrid, noise: &NoiseEnsemble) -> Result<()> {
    let ng = noise.grid();
    if ng.steps() != grid.steps() || (ng.dt() - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::config(
            "noise",
            format!(
                "noise grid (dt = {}, {} steps) does not match problem grid (dt = {}, {} steps)",
                ng.dt(),
                ng.steps(),
                grid.dt(),
                grid.steps()
            ),
        ));
    }
    Ok(())
}

pub(crate) fn check_inputs(spec: &ProblemSpec, control: &ControlPath, noise: &NoiseEnsemble) -> Result<()> {
    check_noise(&spec.grid, noise)?;
    control.validate(&spec.grid, &spec.domain, noise.n_paths())
}

/// Euler-Maruyama for one path. On failure returns the offending step.
pub(crate) fn state_kernel(
    coeffs: &dyn Coefficients,
    grid: &TimeGrid,
    xi: &[f64],
    u: &[f64],
    db: &[f64],
    x: &mut [f64],
    from_step: usize,
) -> std::result::Result<(), usize> {
    let m = grid.steps_per_delay();
    let dt = grid.dt();
    if from_step == 0 {
        x[..=m].copy_from_slice(xi);
    }
    for k in from_step..grid.steps() {
        let j = m + k;
        let at = Point::new(k as f64 * dt, x[j], x[j - m], u[j], u[j - m]);
        let next = x[j] + coeffs.drift_value(&at) * dt + coeffs.diffusion_value(&at) * db[k];
        if !next.is_finite() {
            return Err(k);
        }
        x[j + 1] = next;
    }
    Ok(())
}

/// Coefficient records at the left endpoint of every step.
pub(crate) fn base_records(coeffs: &dyn Coefficients, grid: &TimeGrid, x: &[f64], u: &[f64], out: &mut Vec<ThetaRecord>) {
    let m = grid.steps_per_delay();
    let dt = grid.dt();
    out.clear();
    out.extend((0..grid.steps()).map(|k| {
        let j = m + k;
        ThetaRecord::eval(coeffs, Point::new(k as f64 * dt, x[j], x[j - m], u[j], u[j - m]))
    }));
}

/// Left-endpoint quadrature of the running cost plus the terminal cost.
pub(crate) fn path_cost(coeffs: &dyn Coefficients, grid: &TimeGrid, x: &[f64], u: &[f64]) -> f64 {
    let m = grid.steps_per_delay();
    let dt = grid.dt();
    let mut running = 0.0;
    for k in 0..grid.steps() {
        let j = m + k;
        running += coeffs.running_cost_value(&Point::new(k as f64 * dt, x[j], x[j - m], u[j], u[j - m]));
    }
    running * dt + coeffs.terminal_cost(x[grid.terminal_index()]).value
}

/// Simulates the state under `control` with Euler-Maruyama.
pub fn simulate_state(spec: &ProblemSpec, control: &ControlPath, noise: &NoiseEnsemble) -> Result<StateEnsemble> {
    check_inputs(spec, control, noise)?;
    let grid = spec.grid;
    let len = grid.path_len();
    let mut paths = PathEnsemble::zeros(noise.n_paths(), len);
    let coeffs = spec.coeffs();
    let outcome: Vec<Result<()>> = paths
        .as_mut_slice()
        .par_chunks_mut(len * CHUNK)
        .enumerate()
        .map(|(c, block)| {
            let mut db = vec![0.0; grid.steps()];
            for (r, x) in block.chunks_mut(len).enumerate() {
                let i = c * CHUNK + r;
                noise.fill_path(i, &mut db);
                state_kernel(coeffs, &grid, &spec.initial_state, control.row(i), &db, x, 0).map_err(|step| {
                    Error::Simulation {
                        path: i,
                        step,
                        quantity: "x",
                    }
                })?;
            }
            Ok(())
        })
        .collect();
    outcome.into_iter().collect::<Result<()>>()?;
    Ok(StateEnsemble { grid, paths })
}

/// Per-path costs of already simulated states.
pub fn path_costs(spec: &ProblemSpec, control: &ControlPath, states: &StateEnsemble) -> Vec<f64> {
    let coeffs = spec.coeffs();
    (0..states.n_paths())
        .into_par_iter()
        .map(|i| path_cost(coeffs, &spec.grid, states.path(i), control.row(i)))
        .collect()
}

/// Estimates `J(control)` with a fixed summation order.
pub fn evaluate_cost(spec: &ProblemSpec, control: &ControlPath, noise: &NoiseEnsemble) -> Result<CostEstimate> {
    let states = simulate_state(spec, control, noise)?;
    Ok(Estimate::from_samples(&path_costs(spec, control, &states)))
}

/// Per-path costs without keeping the states in memory.
pub fn streamed_path_costs(spec: &ProblemSpec, control: &ControlPath, noise: &NoiseEnsemble) -> Result<Vec<f64>> {
    check_inputs(spec, control, noise)?;
    let grid = spec.grid;
    let coeffs = spec.coeffs();
    let n = noise.n_paths();
    let blocks: Vec<Result<Vec<f64>>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut db = vec![0.0; grid.steps()];
            let mut x = vec![0.0; grid.path_len()];
            (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|i| {
                    noise.fill_path(i, &mut db);
                    let u = control.row(i);
                    state_kernel(coeffs, &grid, &spec.initial_state, u, &db, &mut x, 0).map_err(|step| {
                        Error::Simulation {
                            path: i,
                            step,
                            quantity: "x",
                        }
                    })?;
                    Ok(path_cost(coeffs, &grid, &x, u))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}
