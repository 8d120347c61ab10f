//! Hamiltonian and the pointwise optimality gap.
//!
//! For a spike to `v` at `tau` the gap is
//!
//! ```text
//! E[ H(tau, x, xd, v, u(tau - delay), p, q) - H(tau, x, xd, u(tau), u(tau - delay), p, q)
//!    + P (sigma(.., v, ..) - sigma(.., u(tau), ..))^2 ]
//! ```
//!
//! which is nonnegative at an optimal control. The delayed control argument
//! stays at `u(tau - delay)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::{solve_adjoints, AdjointConfig, AdjointForm, AdjointSolution};
use crate::error::{Error, Result};
use crate::model::{Coefficients, ControlPath, Point, ProblemSpec, ThetaRecord};
use crate::noise::NoiseEnsemble;
use crate::stats::Estimate;

/// `H = L + p b + q sigma` at an evaluation record.
pub fn hamiltonian(rec: &ThetaRecord, p: f64, q: f64) -> f64 {
    rec.cost.value + p * rec.b.value + q * rec.sigma.value
}

/// `H` evaluated directly from the coefficients.
pub fn hamiltonian_at(coeffs: &dyn Coefficients, at: &Point, p: f64, q: f64) -> f64 {
    coeffs.running_cost_value(at) + p * coeffs.drift_value(at) + q * coeffs.diffusion_value(at)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRecord {
    pub tau: f64,
    pub v: f64,
    pub gap: f64,
    pub stderr: f64,
    /// The gap without the second-order term.
    pub first_order_gap: f64,
    pub first_order_stderr: f64,
}

/// Gap records sorted by gap, smallest first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpGapReport {
    pub records: Vec<GapRecord>,
}

impl MpGapReport {
    pub fn min(&self) -> Option<&GapRecord> {
        self.records.first()
    }

    /// Records whose gap lies below `-(3 stderr + allowance)`.
    pub fn violations(&self, allowance: f64) -> Vec<&GapRecord> {
        self.records
            .iter()
            .filter(|r| r.gap < -(3.0 * r.stderr + allowance))
            .collect()
    }

    pub fn passes(&self, allowance: f64) -> bool {
        self.violations(allowance).is_empty()
    }
}

fn check_solution(spec: &ProblemSpec, control: &ControlPath, sol: &AdjointSolution) -> Result<usize> {
    let n = sol.states.n_paths();
    if sol.states.grid() != &spec.grid || sol.first.grid() != &spec.grid || sol.second.grid() != &spec.grid {
        return Err(Error::config("adjoints", "adjoint solution is on a different grid"));
    }
    if sol.first.n_paths() != n || sol.second.n_paths() != n {
        return Err(Error::config("adjoints", "adjoint solution has inconsistent path counts"));
    }
    control.validate(&spec.grid, &spec.domain, n)?;
    Ok(n)
}

/// Monte Carlo gap at one `(tau, v)` cell.
pub fn mp_gap(spec: &ProblemSpec, control: &ControlPath, sol: &AdjointSolution, tau: f64, v: f64) -> Result<GapRecord> {
    let n = check_solution(spec, control, sol)?;
    let grid = spec.grid;
    let k = grid
        .step_of(tau)
        .filter(|&k| k < grid.steps())
        .ok_or_else(|| Error::config("tau", format!("tau = {tau} is not a grid node in [0, T)")))?;
    if !spec.domain.contains(v) {
        return Err(Error::Domain { value: v });
    }
    let m = grid.steps_per_delay();
    let t = k as f64 * grid.dt();
    let coeffs = spec.coeffs();
    let (full, first): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = control.row(i);
            let (uk, ud) = (u[m + k], u[k]);
            if uk == v {
                return (0.0, 0.0);
            }
            let at = Point::new(t, sol.states.at_step(i, k), sol.states.get(i, k), uk, ud);
            let spiked = at.with_controls(v, ud);
            let (p, q) = (sol.first.p(i, k), sol.first.q(i, k));
            let dh = hamiltonian_at(coeffs, &spiked, p, q) - hamiltonian_at(coeffs, &at, p, q);
            let ds = coeffs.diffusion_value(&spiked) - coeffs.diffusion_value(&at);
            (dh + sol.second.P(i, k) * ds * ds, dh)
        })
        .unzip();
    let (g, g1) = (Estimate::from_samples(&full), Estimate::from_samples(&first));
    Ok(GapRecord {
        tau: t,
        v,
        gap: g.mean,
        stderr: g.stderr,
        first_order_gap: g1.mean,
        first_order_stderr: g1.stderr,
    })
}

/// Gaps at the listed cells, sorted ascending.
pub fn mp_scan_cells(
    spec: &ProblemSpec,
    control: &ControlPath,
    sol: &AdjointSolution,
    cells: &[(f64, f64)],
) -> Result<MpGapReport> {
    if cells.is_empty() {
        return Err(Error::config("cells", "the scan has no cells"));
    }
    let mut records = cells
        .iter()
        .map(|&(tau, v)| mp_gap(spec, control, sol, tau, v))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.gap.total_cmp(&b.gap).then(a.tau.total_cmp(&b.tau)).then(a.v.total_cmp(&b.v)));
    Ok(MpGapReport { records })
}

/// Gaps over the product of `taus` and `values`.
pub fn mp_scan(
    spec: &ProblemSpec,
    control: &ControlPath,
    sol: &AdjointSolution,
    taus: &[f64],
    values: &[f64],
) -> Result<MpGapReport> {
    if taus.is_empty() || values.is_empty() {
        return Err(Error::config("scan", "tau and v sets must be nonempty"));
    }
    let cells: Vec<(f64, f64)> = taus.iter().flat_map(|&t| values.iter().map(move |&v| (t, v))).collect();
    mp_scan_cells(spec, control, sol, &cells)
}

/// Gap with adjoints of the reduced form for coefficients free of the delayed
/// state. Fails with [`Error::Structure`] when a delayed-state derivative is
/// nonzero along the simulated paths.
#[allow(clippy::too_many_arguments)]
pub fn mp_gap_case2(
    spec: &ProblemSpec,
    control: &ControlPath,
    noise: &NoiseEnsemble,
    cfg: &AdjointConfig,
    tau: f64,
    v: f64,
) -> Result<(GapRecord, AdjointSolution)> {
    let cfg = AdjointConfig {
        form: AdjointForm::NoStateDelay,
        ..*cfg
    };
    let sol = solve_adjoints(spec, control, noise, &cfg)?;
    Ok((mp_gap(spec, control, &sol, tau, v)?, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::model::{theta_eval, AffineQuadratic, ControlDomain, NonlinearDelayBenchmark, ZeroCoefficients};
    use crate::noise::sample_noise;
    use std::sync::Arc;

    #[test]
    fn hamiltonian_examples() {
        let rec = theta_eval(&ZeroCoefficients, 0.0, 1.0, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(hamiltonian(&rec, 0.0, 0.0), 0.0);
        let c = AffineQuadratic {
            drift_const: 1.0,
            diffusion_const: 2.0,
            ..Default::default()
        };
        let rec = theta_eval(&c, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(hamiltonian(&rec, 3.0, 4.0), 11.0);
        // R1 = 1, R2 = 0, L = 2, B = 1, C2 = 1 at x = 1, xd = 0, v = 1, p = 1
        let lq = AffineQuadratic {
            drift_v: 1.0,
            diffusion_xd: 1.0,
            cost_x2: 1.0,
            cost_v2: 2.0,
            ..Default::default()
        };
        let rec = theta_eval(&lq, 0.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(hamiltonian(&rec, 1.0, 0.0), 2.5);
    }

    fn nonlinear_solution(u: f64) -> (ProblemSpec, ControlPath, AdjointSolution) {
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        let spec = ProblemSpec::with_constant_history(Arc::new(NonlinearDelayBenchmark), ControlDomain::Real, g, 1.0, 0.0)
            .unwrap();
        let noise = sample_noise(g, 4, 500).unwrap();
        let ctrl = spec.constant_control(u);
        let sol = solve_adjoints(&spec, &ctrl, &noise, &AdjointConfig::default()).unwrap();
        (spec, ctrl, sol)
    }

    #[test]
    fn gap_vanishes_at_current_control() {
        let (spec, ctrl, sol) = nonlinear_solution(0.4);
        for tau in [0.0, 0.25, 0.75] {
            let r = mp_gap(&spec, &ctrl, &sol, tau, 0.4).unwrap();
            assert_eq!((r.gap, r.stderr, r.first_order_gap), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn scan_is_sorted_and_validates_cells() {
        let (spec, ctrl, sol) = nonlinear_solution(0.4);
        let rep = mp_scan(&spec, &ctrl, &sol, &[0.0, 0.5], &[-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(rep.records.len(), 6);
        assert!(rep.records.windows(2).all(|w| w[0].gap <= w[1].gap));
        assert_eq!(rep, mp_scan(&spec, &ctrl, &sol, &[0.0, 0.5], &[-1.0, 0.0, 2.0]).unwrap());
        assert!(mp_scan(&spec, &ctrl, &sol, &[], &[1.0]).unwrap_err().is_config());
        assert!(mp_gap(&spec, &ctrl, &sol, 1.0, 1.0).is_err());
        assert!(mp_gap(&spec, &ctrl, &sol, 0.1, 1.0).is_err());
    }

    #[test]
    fn control_free_diffusion_has_no_second_order_term() {
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        let c = AffineQuadratic {
            drift_x: 0.2,
            drift_v: 1.0,
            diffusion_x: 0.1,
            diffusion_xd: 0.3,
            cost_x2: 1.0,
            cost_v2: 1.0,
            terminal_x2: 1.0,
            ..Default::default()
        };
        let spec = ProblemSpec::with_constant_history(Arc::new(c), ControlDomain::Real, g, 1.0, 0.0).unwrap();
        let noise = sample_noise(g, 4, 300).unwrap();
        let ctrl = spec.constant_control(0.0);
        let sol = solve_adjoints(&spec, &ctrl, &noise, &AdjointConfig::default()).unwrap();
        for r in mp_scan(&spec, &ctrl, &sol, &[0.0, 0.5], &[-2.0, 1.0]).unwrap().records {
            assert_eq!(r.gap, r.first_order_gap);
        }
    }

    #[test]
    fn domain_is_enforced() {
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        let c = AffineQuadratic {
            diffusion_xd: 0.3,
            ..Default::default()
        };
        let spec = ProblemSpec::with_constant_history(Arc::new(c), ControlDomain::split_unit(), g, 1.0, 1.0).unwrap();
        let noise = sample_noise(g, 4, 10).unwrap();
        let ctrl = spec.constant_control(1.0);
        let sol = solve_adjoints(&spec, &ctrl, &noise, &AdjointConfig::default()).unwrap();
        assert!(matches!(mp_gap(&spec, &ctrl, &sol, 0.0, 0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn reduced_gap_on_zero_problem() {
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        let spec = ProblemSpec::with_constant_history(Arc::new(ZeroCoefficients), ControlDomain::Real, g, 1.0, 0.0).unwrap();
        let noise = sample_noise(g, 4, 10).unwrap();
        let (r, _) = mp_gap_case2(&spec, &spec.constant_control(0.0), &noise, &AdjointConfig::default(), 0.5, 3.0).unwrap();
        assert_eq!(r.gap, 0.0);
        let nl = ProblemSpec::with_constant_history(Arc::new(NonlinearDelayBenchmark), ControlDomain::Real, g, 1.0, 0.0)
            .unwrap();
        let err = mp_gap_case2(&nl, &nl.constant_control(0.0), &noise, &AdjointConfig::default(), 0.5, 3.0).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn classical_lq_gap_is_minimised_at_first_order_point() {
        // no delay, U = R: among scanned v the smallest first-order gap sits
        // at -(pB + qD)/L evaluated at the current control
        let g = TimeGrid::new(1.0, 0.25, 8).unwrap();
        let c = AffineQuadratic {
            drift_x: 0.1,
            drift_v: 1.0,
            diffusion_x: 0.2,
            diffusion_v: 0.3,
            cost_x2: 1.0,
            cost_v2: 1.0,
            terminal_x2: 1.0,
            ..Default::default()
        };
        let spec = ProblemSpec::with_constant_history(Arc::new(c), ControlDomain::Real, g, 1.0, 0.0).unwrap();
        let noise = sample_noise(g, 4, 4000).unwrap();
        let ctrl = spec.constant_control(0.0);
        let cfg = AdjointConfig::default();
        let (at_u, sol) = mp_gap_case2(&spec, &ctrl, &noise, &cfg, 0.5, 0.0).unwrap();
        assert_eq!(at_u.gap, 0.0);
        let k = g.step_of(0.5).unwrap();
        let p = sol.first.p_estimate(k).mean;
        let q = sol.first.q_estimate(k).mean;
        let star = -(p + 0.3 * q);
        let at_star = mp_gap(&spec, &ctrl, &sol, 0.5, star).unwrap();
        for dv in [-0.2, 0.2] {
            let other = mp_gap(&spec, &ctrl, &sol, 0.5, star + dv).unwrap();
            assert!(other.first_order_gap > at_star.first_order_gap);
        }
    }
}
