use std::fmt;

use crate::error::{Error, Result};

/// Arguments of a coefficient: `(t, x, x(t - delay), v, v(t - delay))`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub t: f64,
    pub x: f64,
    pub xd: f64,
    pub v: f64,
    pub vd: f64,
}

impl Point {
    pub fn new(t: f64, x: f64, xd: f64, v: f64, vd: f64) -> Self {
        Point { t, x, xd, v, vd }
    }

    /// Same state arguments, different control arguments.
    pub fn with_controls(self, v: f64, vd: f64) -> Self {
        Point { v, vd, ..self }
    }
}

/// Value and state derivatives of a scalar coefficient up to second order.
///
/// `dxd` is the derivative in the delayed state, `dxxd` the mixed one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub dx: f64,
    pub dxd: f64,
    pub dxx: f64,
    pub dxxd: f64,
    pub dxdxd: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet {
        value: 0.0,
        dx: 0.0,
        dxd: 0.0,
        dxx: 0.0,
        dxxd: 0.0,
        dxdxd: 0.0,
    };

    fn first_nonfinite(&self) -> bool {
        ![self.value, self.dx, self.dxd, self.dxx, self.dxxd, self.dxdxd]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Terminal cost `h` and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerminalJet {
    pub value: f64,
    pub dx: f64,
    pub dxx: f64,
}

/// Declared bounds, checked by sampling rather than trusted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeclaredBounds {
    /// Uniform bound on every declared state derivative of `b`, `sigma`, `L`, `h`.
    pub derivative: Option<f64>,
    /// Positive lower bound on `|sigma_xd|`.
    pub sigma_xd_lower: Option<f64>,
}

/// Drift `b`, diffusion `sigma`, running cost `L` and terminal cost `h`.
///
/// Implementations must be pure functions of their arguments. Derivatives are
/// declared by the implementation; [`crate::model::check_derivatives`] audits
/// them against finite differences.
pub trait Coefficients: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn drift(&self, at: &Point) -> Jet;
    fn diffusion(&self, at: &Point) -> Jet;
    fn running_cost(&self, at: &Point) -> Jet;
    fn terminal_cost(&self, x: f64) -> TerminalJet;

    fn drift_value(&self, at: &Point) -> f64 {
        self.drift(at).value
    }

    fn diffusion_value(&self, at: &Point) -> f64 {
        self.diffusion(at).value
    }

    fn running_cost_value(&self, at: &Point) -> f64 {
        self.running_cost(at).value
    }

    fn bounds(&self) -> DeclaredBounds {
        DeclaredBounds::default()
    }
}

/// Every coefficient value a downstream equation reads at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThetaRecord {
    pub at: Point,
    pub b: Jet,
    pub sigma: Jet,
    pub cost: Jet,
}

impl ThetaRecord {
    /// Unchecked evaluation for inner loops.
    #[inline]
    pub fn eval(coeffs: &dyn Coefficients, at: Point) -> Self {
        ThetaRecord {
            at,
            b: coeffs.drift(&at),
            sigma: coeffs.diffusion(&at),
            cost: coeffs.running_cost(&at),
        }
    }
}

/// Evaluates all coefficients and derivatives at `(t, x, xd, v, vd)`.
pub fn theta_eval(coeffs: &dyn Coefficients, t: f64, x: f64, xd: f64, v: f64, vd: f64) -> Result<ThetaRecord> {
    let at = Point::new(t, x, xd, v, vd);
    let rec = ThetaRecord::eval(coeffs, at);
    let bad = if rec.b.first_nonfinite() {
        Some("b")
    } else if rec.sigma.first_nonfinite() {
        Some("sigma")
    } else if rec.cost.first_nonfinite() {
        Some("L")
    } else {
        None
    };
    match bad {
        Some(coefficient) => Err(Error::Evaluation {
            coefficient,
            t,
            x,
            x_delay: xd,
            v,
            v_delay: vd,
        }),
        None => Ok(rec),
    }
}

/// Coefficients that are identically zero, including `h`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCoefficients;

impl Coefficients for ZeroCoefficients {
    fn name(&self) -> &str {
        "zero"
    }
    fn drift(&self, _: &Point) -> Jet {
        Jet::ZERO
    }
    fn diffusion(&self, _: &Point) -> Jet {
        Jet::ZERO
    }
    fn running_cost(&self, _: &Point) -> Jet {
        Jet::ZERO
    }
    fn terminal_cost(&self, _: f64) -> TerminalJet {
        TerminalJet::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineQuadratic;

    #[test]
    fn zero_coefficients_give_zero_record() {
        let rec = theta_eval(&ZeroCoefficients, 0.3, 1.0, -2.0, 1.0, 1.0).unwrap();
        assert_eq!(rec.b, Jet::ZERO);
        assert_eq!(rec.sigma, Jet::ZERO);
        assert_eq!(rec.cost, Jet::ZERO);
    }

    #[test]
    fn linear_quadratic_forms_at_unit_point() {
        // b = A1 x + A2 xd + B v, sigma = C1 x + C2 xd + D v
        let c = AffineQuadratic {
            drift_x: 0.0,
            drift_xd: 0.0,
            drift_v: 1.0,
            diffusion_x: 0.0,
            diffusion_xd: 1.0,
            diffusion_v: 0.0,
            ..AffineQuadratic::default()
        };
        let rec = theta_eval(&c, 0.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(rec.b.value, 1.0);
        assert_eq!(rec.sigma.value, 0.0);
    }

    #[derive(Debug)]
    struct Blowup;
    impl Coefficients for Blowup {
        fn name(&self) -> &str {
            "blowup"
        }
        fn drift(&self, _: &Point) -> Jet {
            Jet::ZERO
        }
        fn diffusion(&self, at: &Point) -> Jet {
            Jet {
                value: 1.0 / at.x,
                ..Jet::ZERO
            }
        }
        fn running_cost(&self, _: &Point) -> Jet {
            Jet::ZERO
        }
        fn terminal_cost(&self, _: f64) -> TerminalJet {
            TerminalJet::default()
        }
    }

    #[test]
    fn non_finite_output_names_the_coefficient() {
        let err = theta_eval(&Blowup, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Evaluation { coefficient: "sigma", .. }), "{err}");
    }

    #[test]
    fn identical_controls_give_identical_records() {
        let c = AffineQuadratic::default();
        let p = Point::new(0.1, 0.4, -0.2, 1.5, -1.0);
        assert_eq!(ThetaRecord::eval(&c, p), ThetaRecord::eval(&c, p.with_controls(1.5, -1.0)));
    }
}
