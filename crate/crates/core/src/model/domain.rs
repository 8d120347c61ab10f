use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval, possibly unbounded (`lo = -inf` or `hi = inf`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }
}

/// Control domain `U`, which need not be convex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlDomain {
    Real,
    Intervals { intervals: Vec<Interval> },
    Points { points: Vec<f64> },
}

impl Default for ControlDomain {
    fn default() -> Self {
        ControlDomain::split_unit()
    }
}

impl ControlDomain {
    /// `(-inf, -1] U [1, inf)`.
    pub fn split_unit() -> Self {
        ControlDomain::Intervals {
            intervals: vec![
                Interval {
                    lo: f64::NEG_INFINITY,
                    hi: -1.0,
                },
                Interval {
                    lo: 1.0,
                    hi: f64::INFINITY,
                },
            ],
        }
    }

    pub fn is_split_unit(&self) -> bool {
        *self == ControlDomain::split_unit()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlDomain::Real => Ok(()),
            ControlDomain::Intervals { intervals } => {
                if intervals.is_empty() {
                    return Err(Error::config("domain.intervals", "control domain is empty"));
                }
                for iv in intervals {
                    if iv.lo.is_nan() || iv.hi.is_nan() || iv.lo > iv.hi {
                        return Err(Error::config(
                            "domain.intervals",
                            format!("invalid interval [{}, {}]", iv.lo, iv.hi),
                        ));
                    }
                }
                Ok(())
            }
            ControlDomain::Points { points } => {
                if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
                    return Err(Error::config("domain.points", "point set must be nonempty and finite"));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        if x.is_nan() {
            return false;
        }
        match self {
            ControlDomain::Real => x.is_finite(),
            ControlDomain::Intervals { intervals } => intervals.iter().any(|iv| iv.lo <= x && x <= iv.hi),
            ControlDomain::Points { points } => points.contains(&x),
        }
    }

    /// Nearest point of `U`; equidistant candidates resolve to the larger one.
    pub fn project(&self, x: f64) -> f64 {
        let candidates: Box<dyn Iterator<Item = f64> + '_> = match self {
            ControlDomain::Real => return x,
            ControlDomain::Intervals { intervals } => Box::new(intervals.iter().map(move |iv| iv.clamp(x))),
            ControlDomain::Points { points } => Box::new(points.iter().copied()),
        };
        let mut best = f64::NAN;
        let mut best_dist = f64::INFINITY;
        for c in candidates {
            let d = (c - x).abs();
            if d < best_dist || (d == best_dist && c > best) {
                best = c;
                best_dist = d;
            }
        }
        best
    }

    /// Finite sample of `U` inside `[-window, window]`, for scans.
    pub fn window_sample(&self, window: f64, count: usize) -> Vec<f64> {
        let count = count.max(2);
        let mut out: Vec<f64> = (0..count)
            .map(|i| -window + 2.0 * window * i as f64 / (count - 1) as f64)
            .map(|x| self.project(x))
            .filter(|x| x.abs() <= window || matches!(self, ControlDomain::Points { .. }))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn member_is_fixed() {
        assert_eq!(ControlDomain::split_unit().project(2.0), 2.0);
    }

    #[test]
    fn unique_nearest_point() {
        assert_eq!(ControlDomain::split_unit().project(0.5), 1.0);
        assert_eq!(ControlDomain::split_unit().project(-0.5), -1.0);
    }

    #[test]
    fn tie_goes_to_larger_value() {
        assert_eq!(ControlDomain::split_unit().project(0.0), 1.0);
        let pts = ControlDomain::Points { points: vec![-1.0, 3.0] };
        assert_eq!(pts.project(1.0), 3.0);
    }

    #[test]
    fn empty_domains_rejected() {
        assert!(ControlDomain::Intervals { intervals: vec![] }.validate().is_err());
        assert!(ControlDomain::Points { points: vec![] }.validate().is_err());
        assert!(ControlDomain::split_unit().validate().is_ok());
    }

    fn domains() -> impl Strategy<Value = ControlDomain> {
        prop_oneof![
            Just(ControlDomain::Real),
            Just(ControlDomain::split_unit()),
            prop::collection::vec(-10.0..10.0f64, 1..6).prop_map(|points| ControlDomain::Points { points }),
            prop::collection::vec((-10.0..10.0f64, 0.0..3.0f64), 1..4).prop_map(|v| ControlDomain::Intervals {
                intervals: v.into_iter().map(|(lo, w)| Interval { lo, hi: lo + w }).collect()
            }),
        ]
    }

    proptest! {
        #[test]
        fn projection_is_member_and_idempotent(d in domains(), x in -50.0..50.0f64) {
            let p = d.project(x);
            prop_assert!(d.contains(p));
            prop_assert_eq!(d.project(p), p);
        }

        #[test]
        fn projection_is_nearest(d in domains(), x in -50.0..50.0f64, y in -50.0..50.0f64) {
            let y = d.project(y);
            prop_assert!((d.project(x) - x).abs() <= (y - x).abs() + 1e-12);
        }
    }
}
