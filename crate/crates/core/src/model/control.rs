use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ControlDomain;
use crate::paths::PathEnsemble;

/// Control values on the nodes of `[-delay, horizon]`, piecewise constant on
/// `[t_k, t_{k+1})`. Either one deterministic sequence or one row per path.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlPath {
    Deterministic(Vec<f64>),
    Ensemble {
        paths: PathEnsemble,
        /// Value at step `k` depends only on increments with index `< k`.
        adapted: bool,
    },
}

impl ControlPath {
    pub fn constant(grid: &TimeGrid, value: f64) -> Self {
        ControlPath::Deterministic(vec![value; grid.path_len()])
    }

    /// Deterministic control `f(t)` sampled at the nodes.
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        ControlPath::Deterministic((0..grid.path_len()).map(|j| f(grid.time(j))).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            ControlPath::Deterministic(v) => v.len(),
            ControlPath::Ensemble { paths, .. } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of paths, or `None` for a deterministic control.
    pub fn n_paths(&self) -> Option<usize> {
        match self {
            ControlPath::Deterministic(_) => None,
            ControlPath::Ensemble { paths, .. } => Some(paths.n_paths()),
        }
    }

    pub fn is_adapted(&self) -> bool {
        match self {
            ControlPath::Deterministic(_) => true,
            ControlPath::Ensemble { adapted, .. } => *adapted,
        }
    }

    /// The control sequence seen by `path`.
    pub fn row(&self, path: usize) -> &[f64] {
        match self {
            ControlPath::Deterministic(v) => v,
            ControlPath::Ensemble { paths, .. } => paths.row(path),
        }
    }

    pub fn value(&self, path: usize, j: usize) -> f64 {
        self.row(path)[j]
    }

    /// Checks node count, path count and membership in `domain`.
    pub fn validate(&self, grid: &TimeGrid, domain: &ControlDomain, n_paths: usize) -> Result<()> {
        if self.len() != grid.path_len() {
            return Err(Error::config(
                "control",
                format!("control has {} nodes, grid needs {}", self.len(), grid.path_len()),
            ));
        }
        if let Some(n) = self.n_paths() {
            if n != n_paths {
                return Err(Error::config(
                    "control",
                    format!("control has {n} paths, noise ensemble has {n_paths}"),
                ));
            }
        }
        let values: &[f64] = match self {
            ControlPath::Deterministic(v) => v,
            ControlPath::Ensemble { paths, .. } => paths.as_slice(),
        };
        if let Some(&bad) = values.iter().find(|v| !domain.contains(**v)) {
            return Err(Error::Domain { value: bad });
        }
        Ok(())
    }
}
