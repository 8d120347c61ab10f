//! Delayed linear-quadratic problem on a non-convex control set.
//!
//! ```text
//! dx = (A1 x + A2 x(t - delay) + B v) dt + (C1 x + C2 x(t - delay) + D v) dB
//! J  = E[ int (R1 x^2 + R2 x(t - delay)^2 + L v^2) dt + H x(T)^2 ] / 2
//! ```
//!
//! with constant initial path `a` and `U = (-inf, -1] U [1, inf)` by default.

mod riccati;
mod solve;
mod verify;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use riccati::{riccati_reference, RiccatiSolution};
pub use solve::{solve_lq, LqSolution, LqSolveConfig, PicardConfig, PicardTrace};
pub use verify::{identity_challenger, verify_optimality, Challenger, ChallengerKind, VerificationReport};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{AffineQuadratic, ControlDomain, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqProblem {
    pub a1: f64,
    pub a2: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub d: f64,
    pub r1: f64,
    pub r2: f64,
    pub l: f64,
    pub h: f64,
    /// Initial state, constant on `[-delay, 0]`.
    pub a: f64,
    pub delay: f64,
    pub horizon: f64,
    #[serde(default)]
    pub domain: ControlDomain,
}

/// Where the first adjoint places the `R2` source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum R2Placement {
    /// `R2 x(t)` on all of `[0, T]`, and `R2 / 2` in the second adjoint.
    #[default]
    AsWritten,
    /// `E[L_xd]` one delay ahead, which vanishes on `(T - delay, T]`.
    Shifted,
}

impl LqProblem {
    pub fn benchmark() -> Self {
        LqProblem {
            a1: 0.1,
            a2: 0.05,
            b: 1.0,
            c1: 0.2,
            c2: 0.1,
            d: 0.3,
            r1: 1.0,
            r2: 0.5,
            l: 1.0,
            h: 1.0,
            a: 1.0,
            delay: 0.25,
            horizon: 1.0,
            domain: ControlDomain::split_unit(),
        }
    }

    /// The benchmark without delay effects, over `U = R`. `C2` stays at a small
    /// nonzero value so the standing assumptions hold.
    pub fn no_delay_reduction() -> Self {
        LqProblem {
            a2: 0.0,
            r2: 0.0,
            c2: 1e-3,
            domain: ControlDomain::Real,
            ..LqProblem::benchmark()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b", self.b),
            ("c1", self.c1),
            ("c2", self.c2),
            ("d", self.d),
            ("r1", self.r1),
            ("r2", self.r2),
            ("l", self.l),
            ("h", self.h),
            ("a", self.a),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::config(format!("lq.{name}"), format!("must be finite, got {v}")));
        }
        if self.c2 == 0.0 {
            return Err(Error::config("lq.c2", "C2 must be nonzero"));
        }
        for (name, v) in [("r1", self.r1), ("r2", self.r2), ("h", self.h)] {
            if v < 0.0 {
                return Err(Error::config(format!("lq.{name}"), format!("must be >= 0, got {v}")));
            }
        }
        if !(self.l > 0.0) {
            return Err(Error::config("lq.l", format!("L must be positive, got {}", self.l)));
        }
        self.domain.validate()
    }

    pub fn coefficients(&self) -> AffineQuadratic {
        AffineQuadratic {
            drift_x: self.a1,
            drift_xd: self.a2,
            drift_v: self.b,
            diffusion_x: self.c1,
            diffusion_xd: self.c2,
            diffusion_v: self.d,
            cost_x2: self.r1,
            cost_xd2: self.r2,
            cost_v2: self.l,
            terminal_x2: self.h,
            ..Default::default()
        }
    }

    /// Coefficients whose general adjoints are the adjoints of this problem
    /// under `placement`.
    pub fn adjoint_coefficients(&self, placement: R2Placement) -> AffineQuadratic {
        let c = self.coefficients();
        match placement {
            R2Placement::Shifted => c,
            R2Placement::AsWritten => AffineQuadratic {
                cost_x2: self.r1 + self.r2,
                cost_xd2: 0.0,
                ..c
            },
        }
    }

    pub fn grid(&self, steps_per_delay: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.delay, steps_per_delay)
    }

    /// Initial control on `[-delay, 0)`: the value of the law at zero adjoints.
    pub fn initial_control(&self) -> f64 {
        lq_candidate_control(0.0, 0.0, self)
    }

    pub fn spec(&self, grid: TimeGrid) -> Result<ProblemSpec> {
        self.spec_with(grid, Arc::new(self.coefficients()))
    }

    pub(crate) fn spec_with(&self, grid: TimeGrid, coeffs: Arc<AffineQuadratic>) -> Result<ProblemSpec> {
        self.validate()?;
        if (grid.horizon() - self.horizon).abs() > 1e-12 || (grid.delay() - self.delay).abs() > 1e-12 {
            return Err(Error::config("grid", "grid horizon and delay differ from the problem"));
        }
        ProblemSpec::with_constant_history(coeffs, self.domain.clone(), grid, self.a, self.initial_control())
    }
}

/// Candidate law `u = -(p B + q D) / L` mapped into `U`.
///
/// On `(-inf, -1] U [1, inf)` the map sends `[0, 1)` to `1` and `(-1, 0)` to
/// `-1`; other domains use the nearest point.
pub fn lq_candidate_control(p: f64, q: f64, prob: &LqProblem) -> f64 {
    law(-(p * prob.b + q * prob.d) / prob.l, &prob.domain)
}

pub(crate) fn law(u: f64, domain: &ControlDomain) -> f64 {
    if domain.is_split_unit() {
        if u >= 1.0 || u <= -1.0 {
            u
        } else if u >= 0.0 {
            1.0
        } else {
            -1.0
        }
    } else {
        domain.project(u)
    }
}
