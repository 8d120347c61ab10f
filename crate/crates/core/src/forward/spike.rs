use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{ControlDomain, ControlPath};

/// Spike variation: the control is replaced by `value` on `[tau, tau + epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSpec {
    pub tau: f64,
    pub epsilon: f64,
    pub value: f64,
}

/// Spike window in step indices: steps `start..start + width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpikeWindow {
    pub start: usize,
    pub width: usize,
}

impl SpikeWindow {
    pub fn contains(&self, k: usize) -> bool {
        k >= self.start && k < self.start + self.width
    }
}

impl SpikeSpec {
    pub fn new(tau: f64, epsilon: f64, value: f64) -> Self {
        SpikeSpec { tau, epsilon, value }
    }

    /// Resolves the spike to grid steps, checking that `tau` and
    /// `tau + epsilon` are nodes inside `[0, horizon]` and `value` is in `U`.
    pub fn window(&self, grid: &TimeGrid, domain: &ControlDomain) -> Result<SpikeWindow> {
        let start = grid
            .step_of(self.tau)
            .filter(|&k| k < grid.steps())
            .ok_or_else(|| Error::config("spike.tau", format!("tau = {} is not a grid node in [0, T)", self.tau)))?;
        let ratio = self.epsilon / grid.dt();
        let width = ratio.round();
        if !(width >= 1.0 && (ratio - width).abs() < 1e-6) {
            return Err(Error::config(
                "spike.epsilon",
                format!("epsilon = {} is not a positive multiple of dt = {}", self.epsilon, grid.dt()),
            ));
        }
        let width = width as usize;
        if start + width > grid.steps() {
            return Err(Error::config(
                "spike.epsilon",
                format!("[tau, tau + epsilon] = [{}, {}] leaves [0, T]", self.tau, self.tau + self.epsilon),
            ));
        }
        if !domain.contains(self.value) {
            return Err(Error::Domain { value: self.value });
        }
        Ok(SpikeWindow { start, width })
    }
}

pub(crate) fn spike_row(row: &mut [f64], grid: &TimeGrid, w: SpikeWindow, value: f64) {
    let m = grid.steps_per_delay();
    row[m + w.start..m + w.start + w.width].fill(value);
}

/// The spiked control `u^eps`: equal to `spike.value` on `[tau, tau + eps)`
/// and to `u` elsewhere.
pub fn apply_spike(u: &ControlPath, spike: &SpikeSpec, grid: &TimeGrid, domain: &ControlDomain) -> Result<ControlPath> {
    let w = spike.window(grid, domain)?;
    let mut out = u.clone();
    match &mut out {
        ControlPath::Deterministic(v) => spike_row(v, grid, w, spike.value),
        ControlPath::Ensemble { paths, .. } => {
            for i in 0..paths.n_paths() {
                spike_row(paths.row_mut(i), grid, w, spike.value);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TimeGrid, ControlPath) {
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        let u = ControlPath::from_fn(&g, |t| if t < 0.5 { 1.0 } else { 2.0 });
        (g, u)
    }

    #[test]
    fn minimal_spike_changes_one_node() {
        let (g, u) = setup();
        let s = SpikeSpec::new(0.25, g.dt(), -1.0);
        let ue = apply_spike(&u, &s, &g, &ControlDomain::split_unit()).unwrap();
        let changed: Vec<usize> = (0..u.len()).filter(|&j| u.value(0, j) != ue.value(0, j)).collect();
        assert_eq!(changed, vec![g.steps_per_delay() + 4]);
    }

    #[test]
    fn identity_spike() {
        let (g, u) = setup();
        let s = SpikeSpec::new(0.5, 2.0 * g.dt(), 2.0);
        assert_eq!(apply_spike(&u, &s, &g, &ControlDomain::split_unit()).unwrap(), u);
    }

    #[test]
    fn delayed_control_shifts_by_one_delay() {
        let (g, u) = setup();
        let m = g.steps_per_delay();
        let s = SpikeSpec::new(0.25, 2.0 * g.dt(), -1.0);
        let ue = apply_spike(&u, &s, &g, &ControlDomain::split_unit()).unwrap();
        let delayed: Vec<f64> = (m..u.len())
            .filter(|&j| u.value(0, j - m) != ue.value(0, j - m))
            .map(|j| g.time(j))
            .collect();
        assert_eq!(delayed.len(), 2);
        assert!((delayed[0] - 0.5).abs() < 1e-12 && (delayed[1] - 0.5 - g.dt()).abs() < 1e-12);
    }

    #[test]
    fn malformed_spikes_rejected() {
        let (g, _) = setup();
        let d = ControlDomain::split_unit();
        assert!(SpikeSpec::new(0.26, g.dt(), 1.0).window(&g, &d).is_err());
        assert!(SpikeSpec::new(0.25, 0.5 * g.dt(), 1.0).window(&g, &d).is_err());
        assert!(SpikeSpec::new(0.9, 0.25, 1.0).window(&g, &d).is_err());
        assert!(SpikeSpec::new(0.25, g.dt(), 0.5).window(&g, &d).is_err());
        assert!(SpikeSpec::new(1.0, g.dt(), 1.0).window(&g, &d).is_err());
    }
}
