use serde::Serialize;

use crate::error::{Error, Result};

/// Solution of the scalar stochastic LQ Riccati equation
///
/// ```text
/// k' = -(2 A + C^2) k - R + (B + C D)^2 k^2 / (L + D^2 k),   k(T) = H
/// ```
///
/// for `dx = (A x + B v) dt + (C x + D v) dB` and running cost `(R x^2 + L v^2) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub times: Vec<f64>,
    pub k: Vec<f64>,
    pub l: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl RiccatiSolution {
    /// Optimal cost `k(0) a^2 / 2` from the initial state `a`.
    pub fn cost(&self, a: f64) -> f64 {
        0.5 * self.k[0] * a * a
    }

    /// Feedback gain `g(t)` with `v = g(t) x`, at grid index `i`.
    pub fn gain(&self, i: usize) -> f64 {
        let k = self.k[i];
        -(self.b + self.c * self.d) * k / (self.l + self.d * self.d * k)
    }
}

/// Integrates the Riccati equation backward with classical RK4 on `steps` steps.
#[allow(clippy::too_many_arguments)]
pub fn riccati_reference(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    r: f64,
    l: f64,
    h: f64,
    horizon: f64,
    steps: usize,
) -> Result<RiccatiSolution> {
    if !(l > 0.0) || steps == 0 || !(horizon > 0.0) {
        return Err(Error::Oracle("Riccati reference needs L > 0, a positive horizon and steps".into()));
    }
    let f = |k: f64| -(2.0 * a + c * c) * k - r + (b + c * d).powi(2) * k * k / (l + d * d * k);
    let dt = horizon / steps as f64;
    let mut k = vec![0.0; steps + 1];
    k[steps] = h;
    for i in (0..steps).rev() {
        let y = k[i + 1];
        let k1 = f(y);
        let k2 = f(y - 0.5 * dt * k1);
        let k3 = f(y - 0.5 * dt * k2);
        let k4 = f(y - dt * k3);
        let next = y - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() || next.abs() > 1e12 || l + d * d * next <= 0.0 {
            return Err(Error::Oracle(format!(
                "Riccati solution blows up near t = {}",
                i as f64 * dt
            )));
        }
        k[i] = next;
    }
    Ok(RiccatiSolution {
        times: (0..=steps).map(|i| i as f64 * dt).collect(),
        k,
        l,
        b,
        c,
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_uncontrolled_case_is_exponential() {
        // B = C = D = 0: k' = -2 A k - R, k(T) = H
        let (a, r, h) = (0.3, 1.0, 2.0);
        let sol = riccati_reference(a, 0.0, 0.0, 0.0, r, 1.0, h, 1.0, 1000).unwrap();
        let exact = (h + r / (2.0 * a)) * (2.0 * a).exp() - r / (2.0 * a);
        assert!((sol.k[0] - exact).abs() < 1e-10);
    }

    #[test]
    fn scalar_lqr_steady_state() {
        // A = 0, B = 1, R = L = 1: k' = k^2 - 1, k(T) = 1 stays at 1
        let sol = riccati_reference(0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 200).unwrap();
        assert!(sol.k.iter().all(|k| (k - 1.0).abs() < 1e-12));
        assert!((sol.gain(0) + 1.0).abs() < 1e-12);
        assert!((sol.cost(2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_is_fourth_order() {
        let run = |n| riccati_reference(0.1, 1.0, 0.2, 0.3, 1.0, 1.0, 1.0, 1.0, n).unwrap().k[0];
        let (a, b, c) = (run(10), run(20), run(40));
        let ratio = (a - b) / (b - c);
        assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn blow_up_is_reported() {
        let err = riccati_reference(0.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 1.0, 100).unwrap_err();
        assert!(matches!(err, Error::Oracle(_)));
        let err = riccati_reference(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, -2.0, 1.0, 1000).unwrap_err();
        assert!(matches!(err, Error::Oracle(_)));
    }
}
