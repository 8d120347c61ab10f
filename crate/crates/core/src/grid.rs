//! Uniform time grid on `[-delay, horizon + delay]`.
//!
//! The step is tied to the delay (`dt = delay / steps_per_delay`) so that every
//! `t - delay` lookup is an exact index shift. Nodes are addressed by a global
//! index `j`, with `j = 0` at `t = -delay`, `j = m` at `t = 0`, `j = m + N` at
//! the horizon and `j = 2m + N` at `horizon + delay`. Most of the crate instead
//! works with the *step index* `k = j - m`, so that `t_k = k * dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when deciding whether `horizon / dt` is an integer.
const DIVISIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    delay: f64,
    steps_per_delay: usize,
    steps: usize,
}

impl TimeGrid {
    /// Builds the grid, rejecting a step that does not divide the horizon.
    pub fn new(horizon: f64, delay: f64, steps_per_delay: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config("grid.horizon", format!("horizon must be positive, got {horizon}")));
        }
        if !(delay.is_finite() && delay > 0.0 && delay <= horizon) {
            return Err(Error::config(
                "grid.delay",
                format!("delay must satisfy 0 < delay <= horizon = {horizon}, got {delay}"),
            ));
        }
        if steps_per_delay == 0 {
            return Err(Error::config("grid.steps_per_delay", "steps_per_delay must be at least 1"));
        }
        let dt = delay / steps_per_delay as f64;
        let ratio = horizon / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > DIVISIBILITY_TOL * ratio.max(1.0) {
            return Err(Error::config(
                "grid.steps_per_delay",
                format!(
                    "step dt = delay/steps_per_delay = {delay}/{steps_per_delay} = {dt} does not divide horizon {horizon} (horizon/dt = {ratio})"
                ),
            ));
        }
        Ok(TimeGrid {
            horizon,
            delay,
            steps_per_delay,
            steps: steps as usize,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// `m`: number of steps spanning one delay.
    pub fn steps_per_delay(&self) -> usize {
        self.steps_per_delay
    }

    /// `N`: number of steps on `[0, horizon]`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.delay / self.steps_per_delay as f64
    }

    /// Number of nodes on `[-delay, horizon + delay]`.
    pub fn node_count(&self) -> usize {
        self.steps + 2 * self.steps_per_delay + 1
    }

    /// Number of nodes on `[-delay, horizon]`, the support of state and control paths.
    pub fn path_len(&self) -> usize {
        self.steps + self.steps_per_delay + 1
    }

    /// Number of nodes on `[0, horizon + delay]`, the support of adjoint paths.
    pub fn adjoint_len(&self) -> usize {
        self.steps + self.steps_per_delay + 1
    }

    /// Time of global node `j`.
    pub fn time(&self, j: usize) -> f64 {
        (j as f64 - self.steps_per_delay as f64) * self.dt()
    }

    /// Time of step index `k` (`t_k = k dt`, negative indices allowed).
    pub fn step_time(&self, k: isize) -> f64 {
        k as f64 * self.dt()
    }

    /// Global node index of time `t`, if `t` is (numerically) a node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = t / self.dt() + self.steps_per_delay as f64;
        let j = pos.round();
        if (pos - j).abs() > 1e-6 || j < 0.0 || j as usize >= self.node_count() {
            return None;
        }
        Some(j as usize)
    }

    /// Step index `k` of a time in `[0, horizon + delay]` lying on the grid.
    pub fn step_of(&self, t: f64) -> Option<usize> {
        self.index_of(t)
            .and_then(|j| j.checked_sub(self.steps_per_delay))
    }

    /// Global index of `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.steps_per_delay
    }

    /// Global index of the horizon.
    pub fn terminal_index(&self) -> usize {
        self.steps_per_delay + self.steps
    }

    /// Same horizon and delay with `factor` times as many steps per delay.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        TimeGrid::new(self.horizon, self.delay, self.steps_per_delay * factor.max(1))
    }

    /// Same horizon and delay with `factor` times fewer steps per delay.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps_per_delay.is_multiple_of(factor) {
            return Err(Error::config(
                "grid.steps_per_delay",
                format!("cannot coarsen {} steps per delay by a factor {factor}", self.steps_per_delay),
            ));
        }
        TimeGrid::new(self.horizon, self.delay, self.steps_per_delay / factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_delay_five_steps() {
        let g = TimeGrid::new(1.0, 0.25, 5).unwrap();
        assert!((g.dt() - 0.05).abs() < 1e-15);
        assert_eq!(g.steps(), 20);
        // (T + 2 delta)/dt + 1 nodes
        assert_eq!(g.node_count(), 31);
    }

    #[test]
    fn accepts_integral_ratio() {
        let g = TimeGrid::new(1.0, 0.3, 3).unwrap();
        assert!((g.dt() - 0.1).abs() < 1e-15);
        assert_eq!(g.steps(), 10);
    }

    #[test]
    fn rejects_step_not_dividing_horizon() {
        let err = TimeGrid::new(1.0, 0.3, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("steps_per_delay"), "{msg}");
        assert!(msg.contains("0.15"), "{msg}");
    }

    #[test]
    fn rejects_bad_delay() {
        assert!(TimeGrid::new(1.0, 0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 1.5, 4).is_err());
        assert!(TimeGrid::new(-1.0, 0.5, 4).is_err());
        assert!(TimeGrid::new(1.0, 0.5, 0).is_err());
    }

    #[test]
    fn delay_shift_is_exact_index_shift() {
        let g = TimeGrid::new(1.0, 0.25, 7).unwrap();
        let m = g.steps_per_delay();
        for j in g.zero_index()..g.node_count() {
            let t = g.time(j);
            assert_eq!(g.index_of(t - g.delay()), Some(j - m));
            if j + m < g.node_count() {
                assert_eq!(g.index_of(t + g.delay()), Some(j + m));
            }
        }
        assert_eq!(g.index_of(g.horizon()), Some(g.terminal_index()));
        assert_eq!(g.index_of(0.0), Some(g.zero_index()));
        assert_eq!(g.index_of(0.5 * g.dt()), None);
    }

    #[test]
    fn refine_and_coarsen_round_trip() {
        let g = TimeGrid::new(1.0, 0.25, 8).unwrap();
        let fine = g.refine(4).unwrap();
        assert_eq!(fine.steps(), 4 * g.steps());
        assert_eq!(fine.coarsen(4).unwrap(), g);
        assert!(g.coarsen(3).is_err());
    }
}
