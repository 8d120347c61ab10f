use rayon::prelude::*;

use crate::adjoint::regression::{Projector, RegressionBasis};
use crate::error::{Error, Result};
use crate::forward::{check_inputs, StateEnsemble};
use crate::grid::TimeGrid;
use crate::model::{ControlPath, Point, ProblemSpec, ThetaRecord};
use crate::noise::NoiseEnsemble;
use crate::paths::{PathEnsemble, TimeEnsemble};

/// Time-major view of states and increments for backward sweeps.
pub(crate) struct Sweep<'a> {
    pub spec: &'a ProblemSpec,
    pub control: &'a ControlPath,
    pub grid: TimeGrid,
    pub n: usize,
    x: TimeEnsemble,
    db: TimeEnsemble,
}

impl<'a> Sweep<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        control: &'a ControlPath,
        states: &StateEnsemble,
        noise: &NoiseEnsemble,
    ) -> Result<Self> {
        check_inputs(spec, control, noise)?;
        if states.n_paths() != noise.n_paths() || states.grid() != &spec.grid {
            return Err(Error::config("states", "states do not match the noise ensemble or grid"));
        }
        let n = noise.n_paths();
        let inc = noise.materialize();
        let db = TimeEnsemble::from_paths(&PathEnsemble::from_rows(n, inc.steps(), inc.as_slice().to_vec()));
        Ok(Sweep {
            spec,
            control,
            grid: spec.grid,
            n,
            x: TimeEnsemble::from_paths(states.paths()),
            db,
        })
    }

    /// States at step `k`.
    pub fn x(&self, k: usize) -> &[f64] {
        self.x.column(self.grid.steps_per_delay() + k)
    }

    /// Delayed states `x(t_k - delay)`.
    pub fn xd(&self, k: usize) -> &[f64] {
        self.x.column(k)
    }

    pub fn db(&self, k: usize) -> &[f64] {
        self.db.column(k)
    }

    /// Coefficient records of every path at step `k`.
    pub fn records(&self, k: usize) -> Vec<ThetaRecord> {
        let m = self.grid.steps_per_delay();
        let t = k as f64 * self.grid.dt();
        let (x, xd) = (self.x(k), self.xd(k));
        let coeffs = self.spec.coeffs();
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let u = self.control.row(i);
                ThetaRecord::eval(coeffs, Point::new(t, x[i], xd[i], u[m + k], u[k]))
            })
            .collect()
    }

    pub fn projector(&self, basis: &RegressionBasis, k: usize, delayed: bool) -> Result<Projector> {
        basis.projector(self.x(k), delayed.then(|| self.xd(k)), k)
    }
}

/// Rejects records with any delayed-state derivative.
pub(crate) fn check_no_state_delay(rec: &[ThetaRecord], k: usize) -> Result<()> {
    for r in rec {
        for (name, j) in [("b", &r.b), ("sigma", &r.sigma), ("L", &r.cost)] {
            if j.dxd != 0.0 || j.dxxd != 0.0 || j.dxdxd != 0.0 {
                return Err(Error::Structure(format!(
                    "`{name}` depends on the delayed state at step {k} (t = {}, x = {}, x_delay = {})",
                    r.at.t, r.at.x, r.at.xd
                )));
            }
        }
    }
    Ok(())
}

/// Index of the first non-finite value.
pub(crate) fn first_nonfinite(v: &[f64]) -> Option<usize> {
    v.iter().position(|a| !a.is_finite())
}
