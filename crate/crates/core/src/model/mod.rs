//! Problem specification: coefficients, control domain, controls.

mod audit;
mod builtin;
mod coefficients;
mod control;
mod domain;
mod expr;
mod problem;

pub use audit::{check_derivatives, DerivativeCheck, DerivativeReport, FD_STEP, FD_TOLERANCE};
pub use builtin::{AffineQuadratic, NonlinearDelayBenchmark};
pub use coefficients::{
    theta_eval, Coefficients, DeclaredBounds, Jet, Point, TerminalJet, ThetaRecord, ZeroCoefficients,
};
pub use control::ControlPath;
pub use domain::{ControlDomain, Interval};
pub use expr::{Expr, ExprCoefficients, ExprSource, JetSource, TerminalSource};
pub use problem::ProblemSpec;
