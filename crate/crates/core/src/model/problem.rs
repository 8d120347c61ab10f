use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{Coefficients, ControlDomain, ControlPath};

/// A controlled delay system together with its cost and initial segments.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub coefficients: Arc<dyn Coefficients>,
    pub domain: ControlDomain,
    /// Initial state path on the nodes of `[-delay, 0]`.
    pub initial_state: Vec<f64>,
    /// Initial control path on the nodes of `[-delay, 0]`.
    pub initial_control: Vec<f64>,
    pub grid: TimeGrid,
}

impl ProblemSpec {
    pub fn new(
        coefficients: Arc<dyn Coefficients>,
        domain: ControlDomain,
        grid: TimeGrid,
        initial_state: impl Fn(f64) -> f64,
        initial_control: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        domain.validate()?;
        let m = grid.steps_per_delay();
        let xi: Vec<f64> = (0..=m).map(|j| initial_state(grid.time(j))).collect();
        let eta: Vec<f64> = (0..=m).map(|j| initial_control(grid.time(j))).collect();
        if let Some(j) = xi.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(
                "initial_state",
                format!("initial state is not finite at t = {}", grid.time(j)),
            ));
        }
        if let Some(j) = eta.iter().position(|v| !domain.contains(*v)) {
            return Err(Error::config(
                "initial_control",
                format!("initial control {} at t = {} lies outside the control domain", eta[j], grid.time(j)),
            ));
        }
        Ok(ProblemSpec {
            coefficients,
            domain,
            initial_state: xi,
            initial_control: eta,
            grid,
        })
    }

    /// Constant initial state `a` and constant initial control `eta`.
    pub fn with_constant_history(
        coefficients: Arc<dyn Coefficients>,
        domain: ControlDomain,
        grid: TimeGrid,
        a: f64,
        eta: f64,
    ) -> Result<Self> {
        ProblemSpec::new(coefficients, domain, grid, |_| a, |_| eta)
    }

    pub fn coeffs(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    /// Deterministic control equal to the initial control on `[-delay, 0)`
    /// and to `f(t)` on `[0, horizon]`.
    pub fn control_from(&self, f: impl Fn(f64) -> f64) -> ControlPath {
        let m = self.grid.steps_per_delay();
        ControlPath::Deterministic(
            (0..self.grid.path_len())
                .map(|j| if j < m { self.initial_control[j] } else { f(self.grid.time(j)) })
                .collect(),
        )
    }

    pub fn constant_control(&self, value: f64) -> ControlPath {
        self.control_from(|_| value)
    }

    /// Same problem on another grid with the same horizon and delay.
    pub fn regrid(&self, grid: TimeGrid) -> Result<Self> {
        if grid.horizon() != self.grid.horizon() || grid.delay() != self.grid.delay() {
            return Err(Error::config("grid", "regridding must keep horizon and delay"));
        }
        let old = self.grid;
        let sample = |values: &[f64], t: f64| -> f64 {
            // piecewise constant lookup on the old grid
            let j = ((t + old.delay()) / old.dt()).floor().clamp(0.0, old.steps_per_delay() as f64) as usize;
            values[j]
        };
        let xi = self.initial_state.clone();
        let eta = self.initial_control.clone();
        ProblemSpec::new(
            self.coefficients.clone(),
            self.domain.clone(),
            grid,
            |t| sample(&xi, t + 1e-12),
            |t| sample(&eta, t + 1e-12),
        )
    }
}
