use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Coefficients, Jet, Point};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance, measured as `|fd - declared| / max(1, |declared|)`.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Half-width of the sampling box for `x, xd, v, vd`.
pub const SAMPLE_RADIUS: f64 = 3.0;

/// Audit result for one declared derivative.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub coefficient: &'static str,
    pub derivative: &'static str,
    pub max_error: f64,
    pub max_magnitude: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub n_samples: usize,
    pub step: f64,
    pub tolerance: f64,
    pub checks: Vec<DerivativeCheck>,
    pub declared_bound: Option<f64>,
    /// Some sampled derivative magnitude exceeded `declared_bound`.
    pub bound_exceeded: bool,
    pub sigma_xd_min: f64,
    pub sigma_xd_lower: Option<f64>,
    /// Some sampled `|sigma_xd|` fell below `sigma_xd_lower`.
    pub sigma_xd_violated: bool,
}

impl DerivativeReport {
    pub fn flagged(&self) -> impl Iterator<Item = &DerivativeCheck> {
        self.checks.iter().filter(|c| c.flagged)
    }

    pub fn passed(&self) -> bool {
        self.flagged().next().is_none() && !self.bound_exceeded && !self.sigma_xd_violated
    }

    pub fn check(&self, coefficient: &str, derivative: &str) -> Option<&DerivativeCheck> {
        self.checks
            .iter()
            .find(|c| c.coefficient == coefficient && c.derivative == derivative)
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    err: f64,
    mag: f64,
}

impl Acc {
    fn push(&mut self, fd: f64, declared: f64) {
        let e = (fd - declared).abs() / declared.abs().max(1.0);
        self.err = if e.is_nan() { f64::INFINITY } else { self.err.max(e) };
        self.mag = self.mag.max(declared.abs());
    }
}

const NAMES: [&str; 5] = ["dx", "dxd", "dxx", "dxxd", "dxdxd"];

/// Compares declared derivatives against central differences at `n_samples`
/// random points: first derivatives against differences of the value, second
/// derivatives against differences of the declared first derivatives.
pub fn check_derivatives(coeffs: &dyn Coefficients, n_samples: usize, seed: u64) -> Result<DerivativeReport> {
    if n_samples == 0 {
        return Err(Error::config("n_samples", "at least one sample is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = FD_STEP;
    let mut acc = [[Acc::default(); 5]; 3];
    let mut term = [Acc::default(); 2];
    let mut sigma_xd_min = f64::INFINITY;

    type Eval<'a> = Box<dyn Fn(&Point) -> Jet + 'a>;
    let evals: [Eval; 3] = [
        Box::new(|p| coeffs.drift(p)),
        Box::new(|p| coeffs.diffusion(p)),
        Box::new(|p| coeffs.running_cost(p)),
    ];

    for _ in 0..n_samples {
        let r = SAMPLE_RADIUS;
        let p = Point::new(
            rng.random_range(0.0..2.0),
            rng.random_range(-r..r),
            rng.random_range(-r..r),
            rng.random_range(-r..r),
            rng.random_range(-r..r),
        );
        let sx = |d: f64| Point { x: p.x + d, ..p };
        let sxd = |d: f64| Point { xd: p.xd + d, ..p };
        for (a, f) in acc.iter_mut().zip(&evals) {
            let j = f(&p);
            let (xp, xm) = (f(&sx(h)), f(&sx(-h)));
            let (dp, dm) = (f(&sxd(h)), f(&sxd(-h)));
            a[0].push((xp.value - xm.value) / (2.0 * h), j.dx);
            a[1].push((dp.value - dm.value) / (2.0 * h), j.dxd);
            a[2].push((xp.dx - xm.dx) / (2.0 * h), j.dxx);
            a[3].push((dp.dx - dm.dx) / (2.0 * h), j.dxxd);
            a[4].push((dp.dxd - dm.dxd) / (2.0 * h), j.dxdxd);
        }
        sigma_xd_min = sigma_xd_min.min(coeffs.diffusion(&p).dxd.abs());
        let tj = coeffs.terminal_cost(p.x);
        let (tp, tm) = (coeffs.terminal_cost(p.x + h), coeffs.terminal_cost(p.x - h));
        term[0].push((tp.value - tm.value) / (2.0 * h), tj.dx);
        term[1].push((tp.dx - tm.dx) / (2.0 * h), tj.dxx);
    }

    let mut checks = Vec::with_capacity(17);
    for (name, a) in ["b", "sigma", "L"].into_iter().zip(&acc) {
        for (d, r) in NAMES.iter().zip(a) {
            checks.push(DerivativeCheck {
                coefficient: name,
                derivative: d,
                max_error: r.err,
                max_magnitude: r.mag,
                flagged: !(r.err <= FD_TOLERANCE),
            });
        }
    }
    for (d, r) in ["dx", "dxx"].into_iter().zip(&term) {
        checks.push(DerivativeCheck {
            coefficient: "h",
            derivative: d,
            max_error: r.err,
            max_magnitude: r.mag,
            flagged: !(r.err <= FD_TOLERANCE),
        });
    }
    let bounds = coeffs.bounds();
    let bound_exceeded = bounds
        .derivative
        .is_some_and(|b| checks.iter().any(|c| c.max_magnitude > b));
    let sigma_xd_violated = bounds.sigma_xd_lower.is_some_and(|lo| sigma_xd_min < lo);
    Ok(DerivativeReport {
        n_samples,
        step: h,
        tolerance: FD_TOLERANCE,
        checks,
        declared_bound: bounds.derivative,
        bound_exceeded,
        sigma_xd_min,
        sigma_xd_lower: bounds.sigma_xd_lower,
        sigma_xd_violated,
    })
}
