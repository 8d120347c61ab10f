//! Least-squares conditional expectations.
//!
//! `E[Y | F_t]` is approximated by projecting `Y` on polynomials in the
//! standardised pair `(x(t), x(t - delay))`. A variable with zero spread across
//! paths (the initial segment is deterministic) is dropped from the basis.

use nalgebra::{Cholesky, DMatrix, DVector, DVectorView, DVectorViewMut, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::stable_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionBasis {
    /// Maximal total degree of the polynomial basis.
    pub degree: usize,
    /// Ridge parameter added to the diagonal of the normalised Gram matrix,
    /// except for the constant.
    pub ridge: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis { degree: 2, ridge: 1e-8 }
    }
}

impl RegressionBasis {
    pub fn new(degree: usize, ridge: f64) -> Result<Self> {
        let b = RegressionBasis { degree, ridge };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::config("basis.ridge", format!("ridge must be finite and >= 0, got {}", self.ridge)));
        }
        if self.degree > 8 {
            return Err(Error::config("basis.degree", "degree above 8 is not supported"));
        }
        Ok(())
    }

    /// Number of basis functions for `vars` active variables.
    pub fn size(&self, vars: usize) -> usize {
        exponents(self.degree, vars).len()
    }

    /// Builds the projector for one time index. `xd` may be `None` when the
    /// basis should depend on `x` only.
    pub fn projector(&self, x: &[f64], xd: Option<&[f64]>, time_index: usize) -> Result<Projector> {
        let n = x.len();
        let mut vars: Vec<(&[f64], f64, f64)> = Vec::with_capacity(2);
        for v in std::iter::once(x).chain(xd) {
            assert_eq!(v.len(), n, "regression variables have different lengths");
            let mean = stable_sum(v) / n as f64;
            let ss: Vec<f64> = v.iter().map(|a| (a - mean) * (a - mean)).collect();
            let sd = (stable_sum(&ss) / n as f64).sqrt();
            if sd > 1e-12 * (1.0 + mean.abs()) {
                vars.push((v, mean, sd));
            }
        }
        let exps = exponents(self.degree, vars.len());
        let p = exps.len();
        let z: Vec<Vec<f64>> = vars
            .iter()
            .map(|(v, m, s)| v.iter().map(|a| (a - m) / s).collect())
            .collect();
        let mut design = DMatrix::<f64>::zeros(n, p);
        for (col, e) in exps.iter().enumerate() {
            // each monomial is a lower one times a single variable
            let lower = e.iter().position(|&k| k > 0).map(|v| {
                let mut f = e.clone();
                f[v] -= 1;
                (v, exps.iter().position(|g| *g == f).expect("exponents are closed downward"))
            });
            match lower {
                None => design.column_mut(col).fill(1.0),
                Some((v, from)) => {
                    let (src, mut dst) = design.columns_range_pair_mut(from, col);
                    for ((o, &a), &b) in dst.iter_mut().zip(src.iter()).zip(&z[v]) {
                        *o = a * b;
                    }
                }
            }
        }
        let mut m = design.tr_mul(&design) / n as f64;
        for a in 1..p {
            m[(a, a)] += self.ridge;
        }
        let chol = m.cholesky().ok_or(Error::Regression {
            time_index,
            basis_size: p,
        })?;
        Ok(Projector {
            design,
            n,
            p,
            chol,
            time_index,
        })
    }
}

/// Exponent tuples of all monomials of total degree `<= degree`, by degree.
fn exponents(degree: usize, vars: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        match vars {
            0 => {
                if total == 0 {
                    out.push(vec![]);
                }
            }
            1 => out.push(vec![total]),
            _ => {
                for a in (0..=total).rev() {
                    out.push(vec![a, total - a]);
                }
            }
        }
    }
    out
}

/// Least-squares projection onto the basis at one time index.
#[derive(Debug, Clone)]
pub struct Projector {
    design: DMatrix<f64>,
    n: usize,
    p: usize,
    chol: Cholesky<f64, Dyn>,
    time_index: usize,
}

impl Projector {
    pub fn basis_size(&self) -> usize {
        self.p
    }

    /// Regression coefficients of `y` on the basis.
    pub fn fit(&self, y: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(y.len(), self.n, "response has wrong length");
        let rhs = self.design.tr_mul(&DVectorView::from_slice(y, self.n)) / self.n as f64;
        let coef = self.chol.solve(&rhs);
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Regression {
                time_index: self.time_index,
                basis_size: self.p,
            });
        }
        Ok(coef.iter().copied().collect())
    }

    /// Fitted values of `y`, written into `out`.
    pub fn project_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let coef = DVector::from_vec(self.fit(y)?);
        let mut view = DVectorViewMut::from_slice(out, self.n);
        view.gemv(1.0, &self.design, &coef, 0.0);
        Ok(())
    }

    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.project_into(y, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 100.0 - 5.0).collect();
        let xd: Vec<f64> = (0..n).map(|i| ((i * 104729) % 997) as f64 / 50.0).collect();
        (x, xd)
    }

    #[test]
    fn basis_sizes() {
        let b = RegressionBasis::default();
        assert_eq!(b.size(2), 6);
        assert_eq!(b.size(1), 3);
        assert_eq!(b.size(0), 1);
        assert_eq!(RegressionBasis { degree: 3, ridge: 0.0 }.size(2), 10);
    }

    #[test]
    fn quadratic_is_reproduced() {
        let (x, xd) = sample(5000);
        let y: Vec<f64> = x.iter().zip(&xd).map(|(a, b)| 1.0 + 2.0 * a - b + 0.5 * a * b + 0.1 * b * b).collect();
        let proj = RegressionBasis { degree: 2, ridge: 0.0 }.projector(&x, Some(&xd), 3).unwrap();
        let fit = proj.project(&y).unwrap();
        for (f, t) in fit.iter().zip(&y) {
            assert!((f - t).abs() < 1e-9 * (1.0 + t.abs()));
        }
    }

    #[test]
    fn constant_variables_are_dropped() {
        let (x, _) = sample(1000);
        let c = vec![3.0; 1000];
        let proj = RegressionBasis::default().projector(&x, Some(&c), 0).unwrap();
        assert_eq!(proj.basis_size(), 3);
        let proj = RegressionBasis::default().projector(&c, Some(&c), 0).unwrap();
        assert_eq!(proj.basis_size(), 1);
        let y: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let fit = proj.project(&y).unwrap();
        assert!((fit[17] - 499.5).abs() < 1e-9);
    }

    #[test]
    fn singular_system_names_time_index() {
        // two distinct values only: the cubic basis in x is rank deficient
        let x: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let err = RegressionBasis { degree: 3, ridge: 0.0 }
            .projector(&x, None, 42)
            .and_then(|p| p.fit(&x))
            .unwrap_err();
        assert!(matches!(err, Error::Regression { time_index: 42, .. }), "{err}");
    }

    #[test]
    fn projection_is_worker_independent() {
        let (x, xd) = sample(9000);
        let y: Vec<f64> = x.iter().map(|a| a.sin()).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| RegressionBasis::default().projector(&x, Some(&xd), 1).unwrap().project(&y).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    proptest! {
        #[test]
        fn residual_is_orthogonal_to_basis(seed in 0u64..1000) {
            let n = 400;
            let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 250.0).collect();
            let xd: Vec<f64> = (0..n).map(|i| ((i as u64 * 40503 + seed * 7) % 997) as f64 / 300.0).collect();
            let y: Vec<f64> = x.iter().zip(&xd).map(|(a, b)| (a * b).cos() + a).collect();
            let proj = RegressionBasis { degree: 2, ridge: 0.0 }.projector(&x, Some(&xd), 0).unwrap();
            let fit = proj.project(&y).unwrap();
            let res: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
            let dot1: f64 = res.iter().sum();
            let dotx: f64 = res.iter().zip(&x).map(|(r, a)| r * a).sum();
            prop_assert!(dot1.abs() < 1e-8 * n as f64);
            prop_assert!(dotx.abs() < 1e-8 * n as f64);
        }
    }
}
