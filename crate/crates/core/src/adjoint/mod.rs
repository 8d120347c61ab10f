//! Backward adjoint equations solved by least-squares Monte Carlo.
//!
//! With `c_k = E[p_{k+1} | F_k]` and `q_k = E[(p_{k+1} - c_k) dB_k | F_k] / dt`
//! the first adjoint steps as
//!
//! ```text
//! p_k = c_k (1 + b_x dt) + (sigma_x q_k + L_x + A_k) dt
//! A_k = E[b_xd c_{k+m} + sigma_xd q_{k+m} + L_xd | F_k]   (coefficients at step k+m)
//! ```
//!
//! with `A_k = 0` once `k + m` reaches the horizon. This makes the discrete
//! duality with the Euler first variation exact up to regression error. The
//! second adjoint uses the same backward scheme.

mod cross;
mod duality;
mod first;
mod regression;
mod second;
mod sweep;

use serde::{Deserialize, Serialize};

pub use cross::{adapted_cross_term, hamiltonian_cross_weight, phi_process, simulate_p0, AdaptedCrossRung};
pub use duality::{duality_check, DualityReport};
pub use first::{solve_first_adjoint, FirstAdjoint};
pub use regression::{Projector, RegressionBasis};
pub use second::{solve_second_adjoint, SecondAdjoint};

use crate::error::{Error, Result};
use crate::forward::{simulate_state, StateEnsemble};
use crate::model::{ControlPath, ProblemSpec};
use crate::noise::NoiseEnsemble;

/// How the driver treats the unknown at the current node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverScheme {
    /// The driver reads the conditional expectation of the next value.
    #[default]
    Explicit,
    /// The driver reads the current value; the linear equation is solved exactly.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjointForm {
    /// Anticipated terms, the `b_xd / sigma_xd` block and the `|sigma_xd|` guard.
    #[default]
    General,
    /// Coefficients without delayed state: no anticipated terms, basis in `x`
    /// only. Any delayed-state derivative is rejected.
    NoStateDelay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjointConfig {
    pub basis: RegressionBasis,
    pub scheme: DriverScheme,
    pub form: AdjointForm,
    /// Lower bound on `|sigma_xd|` for the general second adjoint.
    pub guard: f64,
}

impl Default for AdjointConfig {
    fn default() -> Self {
        AdjointConfig {
            basis: RegressionBasis::default(),
            scheme: DriverScheme::Explicit,
            form: AdjointForm::General,
            guard: 1e-6,
        }
    }
}

impl AdjointConfig {
    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if !(self.guard > 0.0 && self.guard.is_finite()) {
            return Err(Error::config("adjoint.guard", format!("guard must be positive, got {}", self.guard)));
        }
        Ok(())
    }
}

/// States and both adjoint pairs along one control.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub states: StateEnsemble,
    pub first: FirstAdjoint,
    pub second: SecondAdjoint,
}

/// Simulates the state and solves both adjoints on the same noise.
pub fn solve_adjoints(
    spec: &ProblemSpec,
    control: &ControlPath,
    noise: &NoiseEnsemble,
    cfg: &AdjointConfig,
) -> Result<AdjointSolution> {
    cfg.validate()?;
    let states = simulate_state(spec, control, noise)?;
    let sw = sweep::Sweep::new(spec, control, &states, noise)?;
    let first = first::first_sweep(&sw, cfg)?;
    let second = second::second_sweep(&sw, &first, cfg)?;
    drop(sw);
    Ok(AdjointSolution { states, first, second })
}

/// Solves only the first adjoint, with the state.
pub fn solve_first(
    spec: &ProblemSpec,
    control: &ControlPath,
    noise: &NoiseEnsemble,
    cfg: &AdjointConfig,
) -> Result<(StateEnsemble, FirstAdjoint)> {
    cfg.validate()?;
    let states = simulate_state(spec, control, noise)?;
    let first = {
        let sw = sweep::Sweep::new(spec, control, &states, noise)?;
        first::first_sweep(&sw, cfg)?
    };
    Ok((states, first))
}
