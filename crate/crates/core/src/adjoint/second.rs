use rayon::prelude::*;

use crate::adjoint::first::FirstAdjoint;
use crate::adjoint::sweep::{check_no_state_delay, first_nonfinite, Sweep};
use crate::adjoint::{AdjointConfig, AdjointForm, DriverScheme};
use crate::error::{Error, Result};
use crate::forward::StateEnsemble;
use crate::grid::TimeGrid;
use crate::model::{ControlPath, ProblemSpec};
use crate::noise::NoiseEnsemble;
use crate::paths::TimeEnsemble;
use crate::stats::Estimate;

/// Second-order adjoint pair `(P, Q)` on the nodes of `[0, horizon + delay]`,
/// zero after the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondAdjoint {
    pub(crate) grid: TimeGrid,
    pub(crate) p: TimeEnsemble,
    pub(crate) q: TimeEnsemble,
}

impl SecondAdjoint {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.p.n_paths()
    }

    #[allow(non_snake_case)]
    pub fn P(&self, path: usize, k: usize) -> f64 {
        self.p.get(path, k)
    }

    #[allow(non_snake_case)]
    pub fn Q(&self, path: usize, k: usize) -> f64 {
        self.q.get(path, k)
    }

    pub fn p_column(&self, k: usize) -> &[f64] {
        self.p.column(k)
    }

    pub fn q_column(&self, k: usize) -> &[f64] {
        self.q.column(k)
    }

    pub fn p_path(&self, path: usize) -> Vec<f64> {
        self.p.path(path)
    }

    pub fn p_estimate(&self, k: usize) -> Estimate {
        Estimate::from_samples(self.p.column(k))
    }

    /// Smallest value of `P` over all paths and nodes up to the horizon.
    pub fn min_value(&self) -> f64 {
        (0..=self.grid.steps())
            .flat_map(|k| self.p.column(k).iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solves the second adjoint backward from `P(T) = h_xx(x(T)) / 2`.
///
/// The general form divides by `sigma_xd` and fails with
/// [`Error::DelayedDiffusionGuard`] where `|sigma_xd| < cfg.guard`.
pub fn solve_second_adjoint(
    spec: &ProblemSpec,
    control: &ControlPath,
    states: &StateEnsemble,
    first: &FirstAdjoint,
    noise: &NoiseEnsemble,
    cfg: &AdjointConfig,
) -> Result<SecondAdjoint> {
    cfg.validate()?;
    let sw = Sweep::new(spec, control, states, noise)?;
    if first.grid != spec.grid || first.n_paths() != noise.n_paths() {
        return Err(Error::config("first", "first adjoint does not match the noise ensemble or grid"));
    }
    second_sweep(&sw, first, cfg)
}

pub(crate) fn second_sweep(sw: &Sweep, first: &FirstAdjoint, cfg: &AdjointConfig) -> Result<SecondAdjoint> {
    let grid = sw.grid;
    let (n, big_n, m, dt) = (sw.n, grid.steps(), grid.steps_per_delay(), grid.dt());
    let general = cfg.form == AdjointForm::General;
    let coeffs = sw.spec.coeffs();

    let mut pp = TimeEnsemble::zeros(n, grid.adjoint_len());
    let mut qq = TimeEnsemble::zeros(n, grid.adjoint_len());
    let mut cont = vec![0.0; n];
    let mut source = TimeEnsemble::zeros(if general { n } else { 0 }, big_n);

    let xt = sw.x(big_n);
    pp.column_mut(big_n)
        .par_iter_mut()
        .zip(xt.par_iter())
        .for_each(|(pi, &x)| *pi = 0.5 * coeffs.terminal_cost(x).dxx);

    let mut resid = vec![0.0; n];
    let mut ant = vec![0.0; n];
    let mut bad = vec![false; n];
    for k in (0..big_n).rev() {
        let rec = sw.records(k);
        if general {
            if let Some(i) = rec.iter().position(|r| !(r.sigma.dxd.abs() >= cfg.guard)) {
                return Err(Error::DelayedDiffusionGuard {
                    value: rec[i].sigma.dxd,
                    guard: cfg.guard,
                    path: i,
                    step: k,
                });
            }
        } else {
            check_no_state_delay(&rec, k)?;
        }
        let proj = sw.projector(&cfg.basis, k, general)?;
        let next = pp.column(k + 1).to_vec();
        proj.project_into(&next, &mut cont)?;
        let db = sw.db(k);
        resid
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, r)| *r = (next[i] - cont[i]) * db[i]);
        let qk = qq.column_mut(k);
        proj.project_into(&resid, qk)?;
        qk.iter_mut().for_each(|v| *v /= dt);
        if general && k + m < big_n {
            proj.project_into(source.column(k + m), &mut ant)?;
        } else {
            ant.fill(0.0);
        }

        let (p1, q1) = (first.p_column(k), first.q_column(k));
        let qk = qq.column(k);
        let c = &cont;
        pp.column_mut(k)
            .par_iter_mut()
            .zip(bad.par_iter_mut())
            .enumerate()
            .for_each(|(i, (pk, bad))| {
                let r = &rec[i];
                let (bx, sx) = (r.b.dx, r.sigma.dx);
                let hxx = r.cost.dxx + p1[i] * r.b.dxx + q1[i] * r.sigma.dxx;
                let (a, rest) = if general {
                    let sxd = r.sigma.dxd;
                    let beta = r.b.dxd / sxd;
                    let g = beta - sx;
                    let hxxd = r.cost.dxxd + p1[i] * r.b.dxxd + q1[i] * r.sigma.dxxd;
                    (
                        2.0 * bx + sx * sx + g * (2.0 * beta + 2.0 * sx),
                        2.0 * sx * qk[i] + 0.5 * hxx + ant[i] + g * (2.0 * qk[i] + hxxd / sxd),
                    )
                } else {
                    (2.0 * bx + sx * sx, 2.0 * sx * qk[i] + 0.5 * hxx)
                };
                *pk = match cfg.scheme {
                    DriverScheme::Explicit => c[i] + (a * c[i] + rest) * dt,
                    DriverScheme::Implicit => {
                        let den = 1.0 - a * dt;
                        *bad = den <= 0.0;
                        (c[i] + rest * dt) / den
                    }
                };
            });
        let pk = pp.column(k);
        if let Some(i) = bad
            .iter()
            .position(|&b| b)
            .or_else(|| first_nonfinite(pk))
            .or_else(|| first_nonfinite(qk))
        {
            return Err(Error::Simulation {
                path: i,
                step: k,
                quantity: "P",
            });
        }
        if general {
            source.column_mut(k).par_iter_mut().enumerate().for_each(|(i, s)| {
                let r = &rec[i];
                let hdd = r.cost.dxdxd + p1[i] * r.b.dxdxd + q1[i] * r.sigma.dxdxd;
                *s = r.sigma.dxd * r.sigma.dxd * c[i] + 0.5 * hdd;
            });
        }
    }
    Ok(SecondAdjoint { grid, p: pp, q: qq })
}
