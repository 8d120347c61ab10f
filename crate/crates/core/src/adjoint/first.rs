use rayon::prelude::*;

use crate::adjoint::sweep::{check_no_state_delay, first_nonfinite, Sweep};
use crate::adjoint::{AdjointConfig, AdjointForm, DriverScheme};
use crate::error::{Error, Result};
use crate::forward::StateEnsemble;
use crate::grid::TimeGrid;
use crate::model::{ControlPath, ProblemSpec};
use crate::noise::NoiseEnsemble;
use crate::paths::TimeEnsemble;
use crate::stats::Estimate;

/// First-order adjoint pair `(p, q)` on the nodes of `[0, horizon + delay]`.
///
/// Both vanish after the horizon and `q(T) = 0`. Node `k` is `t = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstAdjoint {
    pub(crate) grid: TimeGrid,
    pub(crate) p: TimeEnsemble,
    pub(crate) q: TimeEnsemble,
    pub(crate) continuation: TimeEnsemble,
}

impl FirstAdjoint {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.p.n_paths()
    }

    pub fn p(&self, path: usize, k: usize) -> f64 {
        self.p.get(path, k)
    }

    pub fn q(&self, path: usize, k: usize) -> f64 {
        self.q.get(path, k)
    }

    pub fn p_column(&self, k: usize) -> &[f64] {
        self.p.column(k)
    }

    pub fn q_column(&self, k: usize) -> &[f64] {
        self.q.column(k)
    }

    /// `E[p(t_{k+1}) | F_{t_k}]` as estimated by the regression, for `k < N`.
    pub fn continuation_column(&self, k: usize) -> &[f64] {
        self.continuation.column(k)
    }

    pub fn p_path(&self, path: usize) -> Vec<f64> {
        self.p.path(path)
    }

    pub fn q_path(&self, path: usize) -> Vec<f64> {
        self.q.path(path)
    }

    pub fn p_estimate(&self, k: usize) -> Estimate {
        Estimate::from_samples(self.p.column(k))
    }

    pub fn q_estimate(&self, k: usize) -> Estimate {
        Estimate::from_samples(self.q.column(k))
    }
}

/// Solves the first adjoint backward from `p(T) = h_x(x(T))`.
pub fn solve_first_adjoint(
    spec: &ProblemSpec,
    control: &ControlPath,
    states: &StateEnsemble,
    noise: &NoiseEnsemble,
    cfg: &AdjointConfig,
) -> Result<FirstAdjoint> {
    cfg.validate()?;
    let sw = Sweep::new(spec, control, states, noise)?;
    first_sweep(&sw, cfg)
}

pub(crate) fn first_sweep(sw: &Sweep, cfg: &AdjointConfig) -> Result<FirstAdjoint> {
    let grid = sw.grid;
    let (n, big_n, m, dt) = (sw.n, grid.steps(), grid.steps_per_delay(), grid.dt());
    let general = cfg.form == AdjointForm::General;
    let coeffs = sw.spec.coeffs();

    let mut p = TimeEnsemble::zeros(n, grid.adjoint_len());
    let mut q = TimeEnsemble::zeros(n, grid.adjoint_len());
    let mut cont = TimeEnsemble::zeros(n, big_n);
    let mut source = TimeEnsemble::zeros(if general { n } else { 0 }, big_n);

    let xt = sw.x(big_n);
    p.column_mut(big_n)
        .par_iter_mut()
        .zip(xt.par_iter())
        .for_each(|(pi, &x)| *pi = coeffs.terminal_cost(x).dx);
    if let Some(i) = first_nonfinite(p.column(big_n)) {
        return Err(Error::Simulation {
            path: i,
            step: big_n,
            quantity: "p",
        });
    }

    let mut resid = vec![0.0; n];
    let mut ant = vec![0.0; n];
    for k in (0..big_n).rev() {
        let rec = sw.records(k);
        if !general {
            check_no_state_delay(&rec, k)?;
        }
        let proj = sw.projector(&cfg.basis, k, general)?;
        let next = p.column(k + 1).to_vec();
        let c = cont.column_mut(k);
        proj.project_into(&next, c)?;
        let db = sw.db(k);
        resid
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, r)| *r = (next[i] - c[i]) * db[i]);
        let qk = q.column_mut(k);
        proj.project_into(&resid, qk)?;
        qk.iter_mut().for_each(|v| *v /= dt);
        if general && k + m < big_n {
            proj.project_into(source.column(k + m), &mut ant)?;
        } else {
            ant.fill(0.0);
        }

        let c = cont.column(k);
        let qk = q.column(k);
        p.column_mut(k).par_iter_mut().enumerate().for_each(|(i, pk)| {
            let r = &rec[i];
            let rest = (r.sigma.dx * qk[i] + r.cost.dx + ant[i]) * dt;
            *pk = match cfg.scheme {
                DriverScheme::Explicit => c[i] * (1.0 + r.b.dx * dt) + rest,
                DriverScheme::Implicit => (c[i] + rest) / (1.0 - r.b.dx * dt),
            };
        });
        if let Some(i) = first_nonfinite(p.column(k)).or_else(|| first_nonfinite(qk)) {
            return Err(Error::Simulation {
                path: i,
                step: k,
                quantity: "p",
            });
        }
        if general {
            source.column_mut(k).par_iter_mut().enumerate().for_each(|(i, s)| {
                let r = &rec[i];
                *s = r.b.dxd * c[i] + r.sigma.dxd * qk[i] + r.cost.dxd;
            });
        }
    }
    Ok(FirstAdjoint {
        grid,
        p,
        q,
        continuation: cont,
    })
}
