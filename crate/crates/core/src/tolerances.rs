//! Pinned pass thresholds.
//!
//! Every experiment reads its thresholds from [`Tolerances`]; the defaults
//! here are the shipped values and a configuration may override them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretisation constant `C` in the allowance `3 stderr + C dt`.
///
/// Calibrated on the LQ benchmark by solving at `m = 4, 8, 16, 32` steps per
/// delay with `1e5` paths and taking the largest `|J_m - J_2m| / (dt_m - dt_2m)`,
/// rounded up.
pub const DISCRETIZATION_C: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub discretization_c: f64,
    /// Accepted range of the `sup_t E|x1|^2` slope.
    pub x1_slope: [f64; 2],
    pub x2_slope: [f64; 2],
    /// Lower bound on the slope of `|lhs - rhs|` in the cross-term check.
    pub cross_residual_slope: f64,
    pub cross_lhs_slope: [f64; 2],
    /// Relative error allowed against closed-form and Riccati references.
    pub oracle_relative: f64,
    /// Bound on successive Picard candidate-change ratios.
    pub contraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            discretization_c: DISCRETIZATION_C,
            x1_slope: [0.8, 1.2],
            x2_slope: [1.7, 2.3],
            cross_residual_slope: 1.0,
            cross_lhs_slope: [0.8, 1.2],
            oracle_relative: 0.02,
            contraction: 0.9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("tolerances.x1_slope", self.x1_slope),
            ("tolerances.x2_slope", self.x2_slope),
            ("tolerances.cross_lhs_slope", self.cross_lhs_slope),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(name, format!("need a finite range lo <= hi, got [{lo}, {hi}]")));
            }
        }
        let positive = [
            ("tolerances.oracle_relative", self.oracle_relative),
            ("tolerances.contraction", self.contraction),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.discretization_c >= 0.0 && self.discretization_c.is_finite()) {
            return Err(Error::config("tolerances.discretization_c", "must be finite and >= 0"));
        }
        if !self.cross_residual_slope.is_finite() {
            return Err(Error::config("tolerances.cross_residual_slope", "must be finite"));
        }
        Ok(())
    }

    /// `C dt` for step `dt`.
    pub fn allowance(&self, dt: f64) -> f64 {
        self.discretization_c * dt
    }

    pub fn in_range(range: [f64; 2], v: f64) -> bool {
        v >= range[0] && v <= range[1]
    }
}
