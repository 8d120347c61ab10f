//! Built-in coefficient sets.

use serde::{Deserialize, Serialize};

use crate::model::{Coefficients, DeclaredBounds, Jet, Point, TerminalJet};

/// Affine dynamics with quadratic costs:
///
/// ```text
/// b     = b0 + b_x x + b_xd xd + b_v v + b_vd vd
/// sigma = s0 + s_x x + s_xd xd + s_v v + s_vd vd
/// L     = (r_x x^2 + r_xd xd^2 + r_v v^2) / 2 + l_x x
/// h     = h2 x^2 / 2 + h1 x
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineQuadratic {
    pub drift_const: f64,
    pub drift_x: f64,
    pub drift_xd: f64,
    pub drift_v: f64,
    pub drift_vd: f64,
    pub diffusion_const: f64,
    pub diffusion_x: f64,
    pub diffusion_xd: f64,
    pub diffusion_v: f64,
    pub diffusion_vd: f64,
    pub cost_x2: f64,
    pub cost_xd2: f64,
    pub cost_v2: f64,
    pub cost_x: f64,
    pub terminal_x2: f64,
    pub terminal_x: f64,
}

impl Coefficients for AffineQuadratic {
    fn name(&self) -> &str {
        "affine-quadratic"
    }

    #[inline]
    fn drift(&self, at: &Point) -> Jet {
        Jet {
            value: self.drift_value(at),
            dx: self.drift_x,
            dxd: self.drift_xd,
            ..Jet::ZERO
        }
    }

    #[inline]
    fn diffusion(&self, at: &Point) -> Jet {
        Jet {
            value: self.diffusion_value(at),
            dx: self.diffusion_x,
            dxd: self.diffusion_xd,
            ..Jet::ZERO
        }
    }

    #[inline]
    fn running_cost(&self, at: &Point) -> Jet {
        Jet {
            value: self.running_cost_value(at),
            dx: self.cost_x2 * at.x + self.cost_x,
            dxd: self.cost_xd2 * at.xd,
            dxx: self.cost_x2,
            dxxd: 0.0,
            dxdxd: self.cost_xd2,
        }
    }

    fn terminal_cost(&self, x: f64) -> TerminalJet {
        TerminalJet {
            value: 0.5 * self.terminal_x2 * x * x + self.terminal_x * x,
            dx: self.terminal_x2 * x + self.terminal_x,
            dxx: self.terminal_x2,
        }
    }

    #[inline]
    fn drift_value(&self, at: &Point) -> f64 {
        self.drift_const + self.drift_x * at.x + self.drift_xd * at.xd + self.drift_v * at.v + self.drift_vd * at.vd
    }

    #[inline]
    fn diffusion_value(&self, at: &Point) -> f64 {
        self.diffusion_const
            + self.diffusion_x * at.x
            + self.diffusion_xd * at.xd
            + self.diffusion_v * at.v
            + self.diffusion_vd * at.vd
    }

    #[inline]
    fn running_cost_value(&self, at: &Point) -> f64 {
        0.5 * (self.cost_x2 * at.x * at.x + self.cost_xd2 * at.xd * at.xd + self.cost_v2 * at.v * at.v)
            + self.cost_x * at.x
    }

    fn bounds(&self) -> DeclaredBounds {
        DeclaredBounds {
            // L_x and h_x grow linearly, so no uniform bound is declared.
            derivative: None,
            sigma_xd_lower: (self.diffusion_xd != 0.0).then_some(self.diffusion_xd.abs()),
        }
    }
}

/// The delayed LQ benchmark dynamics with bounded smooth nonlinearities, so
/// that every second derivative used by the expansion is active:
///
/// ```text
/// b     = 0.1 x + 0.05 xd + v + 0.3 sin x + 0.1 cos(x - xd)
/// sigma = 0.2 x + 0.3 xd + 0.1 sin xd + 0.3 v + 0.15 v tanh x
/// L     = x^2/2 + xd^2/4 + v^2/2 + 0.2 cos x
/// h     = x^2/2
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct NonlinearDelayBenchmark;

impl Coefficients for NonlinearDelayBenchmark {
    fn name(&self) -> &str {
        "nonlinear-delay"
    }

    fn drift(&self, at: &Point) -> Jet {
        let (sx, cx) = at.x.sin_cos();
        let (sd, cd) = (at.x - at.xd).sin_cos();
        Jet {
            value: 0.1 * at.x + 0.05 * at.xd + at.v + 0.3 * sx + 0.1 * cd,
            dx: 0.1 + 0.3 * cx - 0.1 * sd,
            dxd: 0.05 + 0.1 * sd,
            dxx: -0.3 * sx - 0.1 * cd,
            dxxd: 0.1 * cd,
            dxdxd: -0.1 * cd,
        }
    }

    fn diffusion(&self, at: &Point) -> Jet {
        let th = at.x.tanh();
        let sech2 = 1.0 - th * th;
        let (sxd, cxd) = at.xd.sin_cos();
        Jet {
            value: 0.2 * at.x + 0.3 * at.xd + 0.1 * sxd + 0.3 * at.v + 0.15 * at.v * th,
            dx: 0.2 + 0.15 * at.v * sech2,
            dxd: 0.3 + 0.1 * cxd,
            dxx: -0.3 * at.v * sech2 * th,
            dxxd: 0.0,
            dxdxd: -0.1 * sxd,
        }
    }

    fn running_cost(&self, at: &Point) -> Jet {
        let (sx, cx) = at.x.sin_cos();
        Jet {
            value: 0.5 * at.x * at.x + 0.25 * at.xd * at.xd + 0.5 * at.v * at.v + 0.2 * cx,
            dx: at.x - 0.2 * sx,
            dxd: 0.5 * at.xd,
            dxx: 1.0 - 0.2 * cx,
            dxxd: 0.0,
            dxdxd: 0.5,
        }
    }

    fn terminal_cost(&self, x: f64) -> TerminalJet {
        TerminalJet {
            value: 0.5 * x * x,
            dx: x,
            dxx: 1.0,
        }
    }

    fn drift_value(&self, at: &Point) -> f64 {
        0.1 * at.x + 0.05 * at.xd + at.v + 0.3 * at.x.sin() + 0.1 * (at.x - at.xd).cos()
    }

    fn diffusion_value(&self, at: &Point) -> f64 {
        0.2 * at.x + 0.3 * at.xd + 0.1 * at.xd.sin() + 0.3 * at.v + 0.15 * at.v * at.x.tanh()
    }

    fn bounds(&self) -> DeclaredBounds {
        DeclaredBounds {
            derivative: None,
            sigma_xd_lower: Some(0.2),
        }
    }
}
