use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::spike::{spike_row, SpikeSpec, SpikeWindow};
use crate::forward::state::{base_records, check_inputs, StateEnsemble};
use crate::grid::TimeGrid;
use crate::model::{Coefficients, ControlPath, ProblemSpec, ThetaRecord};
use crate::noise::NoiseEnsemble;
use crate::paths::PathEnsemble;
use crate::stats::{Estimate, CHUNK};

/// Records at `Theta^eps` on the steps where the spike changes a control
/// argument: the spike window and its copy one delay later. Elsewhere
/// `Theta^eps = Theta`.
#[derive(Debug, Default, Clone)]
pub(crate) struct SpikedRecords {
    ranges: [(usize, usize); 2],
    recs: Vec<ThetaRecord>,
}

impl SpikedRecords {
    pub(crate) fn build(
        &mut self,
        coeffs: &dyn Coefficients,
        grid: &TimeGrid,
        base: &[ThetaRecord],
        u: &[f64],
        u_eps: &[f64],
        w: SpikeWindow,
    ) {
        let n = grid.steps();
        let m = grid.steps_per_delay();
        let direct = (w.start, (w.start + w.width).min(n));
        let lo = (w.start + m).max(direct.1).min(n);
        let delayed = (lo, (w.start + w.width + m).clamp(lo, n));
        self.ranges = [direct, delayed];
        self.recs.clear();
        for (s, e) in self.ranges {
            for k in s..e {
                let j = m + k;
                let r = &base[k];
                self.recs.push(if u[j] == u_eps[j] && u[j - m] == u_eps[j - m] {
                    *r
                } else {
                    ThetaRecord::eval(coeffs, r.at.with_controls(u_eps[j], u_eps[j - m]))
                });
            }
        }
    }

    #[inline]
    pub(crate) fn get<'a>(&'a self, k: usize, base: &'a [ThetaRecord]) -> &'a ThetaRecord {
        let [(s0, e0), (s1, e1)] = self.ranges;
        if k >= s0 && k < e0 {
            &self.recs[k - s0]
        } else if k >= s1 && k < e1 {
            &self.recs[e0 - s0 + k - s1]
        } else {
            &base[k]
        }
    }

    /// First step whose records may differ.
    pub(crate) fn start(&self) -> usize {
        self.ranges[0].0
    }
}

/// Deterministic weight process for the cross-term identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CrossWeight {
    Constant(f64),
    /// One value per step on `[0, horizon)`.
    PerStep(Vec<f64>),
}

impl CrossWeight {
    /// The weight on each of `steps` steps.
    pub(crate) fn row(&self, steps: usize) -> Vec<f64> {
        match self {
            CrossWeight::Constant(c) => vec![*c; steps],
            CrossWeight::PerStep(v) => v.clone(),
        }
    }
}

/// Which variations the fused kernel integrates; the others are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Integrate {
    Both,
    Second,
    Neither,
}

/// Per-path sums produced alongside the variations.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PathSums {
    /// Left side of the variational inequality.
    pub vi: f64,
    /// `int sigma_xd Phi x1 x1d dt`.
    pub cross_lhs: f64,
    /// `int (b_xd / sigma_xd - sigma_x) Phi x1^2 dt`.
    pub cross_rhs: f64,
}

/// Fused Euler pass for the first and second variations, the variational
/// inequality integrand and the cross-term sums. Both variations vanish before
/// the spike, so the pass starts there. On overflow returns the step and the
/// offending quantity.
#[allow(clippy::too_many_arguments)]
pub(crate) fn expansion_kernel(
    coeffs: &dyn Coefficients,
    grid: &TimeGrid,
    x: &[f64],
    rec: &[ThetaRecord],
    sp: &SpikedRecords,
    db: &[f64],
    x1: &mut [f64],
    x2: &mut [f64],
    mode: Integrate,
    weight: Option<&[f64]>,
) -> std::result::Result<PathSums, (usize, &'static str)> {
    let m = grid.steps_per_delay();
    let dt = grid.dt();
    let start = sp.start();
    if mode == Integrate::Both {
        x1[..=m + start].fill(0.0);
    }
    if mode != Integrate::Neither {
        x2[..=m + start].fill(0.0);
    }
    let mut sums = PathSums::default();
    for k in start..grid.steps() {
        let j = m + k;
        let (a, ad) = (x1[j], x1[j - m]);
        let (y, yd) = (x2[j], x2[j - m]);
        let r = &rec[k];
        let e = sp.get(k, rec);
        if mode == Integrate::Both {
            let drift = r.b.dx * a + r.b.dxd * ad + (e.b.value - r.b.value);
            let diff = r.sigma.dx * a + r.sigma.dxd * ad + (e.sigma.value - r.sigma.value);
            let next = a + drift * dt + diff * db[k];
            if !next.is_finite() {
                return Err((k, "x1"));
            }
            x1[j + 1] = next;
        }
        if mode != Integrate::Neither {
            let drift = r.b.dx * y
                + r.b.dxd * yd
                + (e.b.dx - r.b.dx) * a
                + (e.b.dxd - r.b.dxd) * ad
                + 0.5 * r.b.dxx * a * a
                + r.b.dxxd * a * ad
                + 0.5 * r.b.dxdxd * ad * ad;
            let diff = r.sigma.dx * y
                + r.sigma.dxd * yd
                + (e.sigma.dx - r.sigma.dx) * a
                + (e.sigma.dxd - r.sigma.dxd) * ad
                + 0.5 * r.sigma.dxx * a * a
                + r.sigma.dxxd * a * ad
                + 0.5 * r.sigma.dxdxd * ad * ad;
            let next = y + drift * dt + diff * db[k];
            if !next.is_finite() {
                return Err((k, "x2"));
            }
            x2[j + 1] = next;
        }
        let l = &r.cost;
        sums.vi += l.dx * (a + y)
            + l.dxd * (ad + yd)
            + 0.5 * l.dxx * a * a
            + l.dxxd * a * ad
            + 0.5 * l.dxdxd * ad * ad
            + (e.cost.value - l.value);
        if let Some(w) = weight {
            let phi = w[k];
            let sxd = r.sigma.dxd;
            sums.cross_lhs += sxd * phi * a * ad;
            sums.cross_rhs += (r.b.dxd / sxd - r.sigma.dx) * phi * a * a;
        }
    }
    let n = grid.terminal_index();
    let h = coeffs.terminal_cost(x[n]);
    sums.vi = sums.vi * dt + h.dx * (x1[n] + x2[n]) + 0.5 * h.dxx * x1[n] * x1[n];
    sums.cross_lhs *= dt;
    sums.cross_rhs *= dt;
    Ok(sums)
}

/// Enforces `|sigma_xd| >= guard` along a path.
pub(crate) fn check_guard(rec: &[ThetaRecord], guard: f64, path: usize) -> Result<()> {
    match rec.iter().position(|r| !(r.sigma.dxd.abs() >= guard)) {
        None => Ok(()),
        Some(step) => Err(Error::DelayedDiffusionGuard {
            value: rec[step].sigma.dxd,
            guard,
            path,
            step,
        }),
    }
}

/// First and second variations on `[-delay, horizon]`, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationEnsemble {
    pub x1: PathEnsemble,
    pub x2: PathEnsemble,
}

impl VariationEnsemble {
    /// `x3 = x1 + x2` for path `i`.
    pub fn x3(&self, i: usize) -> Vec<f64> {
        self.x1.row(i).iter().zip(self.x2.row(i)).map(|(a, b)| a + b).collect()
    }
}

/// Runs the fused kernel on every path and returns the per-path sums in path
/// order. `x1` and `x2` must hold one row per path. A weight holds one row of
/// per-step values for each path, paired with the `|sigma_xd|` guard.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_expansion(
    spec: &ProblemSpec,
    u: &ControlPath,
    spike: &SpikeSpec,
    noise: &NoiseEnsemble,
    base: &StateEnsemble,
    x1: &mut PathEnsemble,
    x2: &mut PathEnsemble,
    mode: Integrate,
    weight: Option<(&PathEnsemble, f64)>,
) -> Result<Vec<PathSums>> {
    check_inputs(spec, u, noise)?;
    if base.n_paths() != noise.n_paths() || base.grid() != &spec.grid {
        return Err(Error::config("base", "base states do not match the noise ensemble or grid"));
    }
    let window = spike.window(&spec.grid, &spec.domain)?;
    let grid = spec.grid;
    let coeffs = spec.coeffs();
    let len = grid.path_len();
    let blocks: Vec<Result<Vec<PathSums>>> = x1
        .as_mut_slice()
        .par_chunks_mut(len * CHUNK)
        .zip(x2.as_mut_slice().par_chunks_mut(len * CHUNK))
        .enumerate()
        .map(|(c, (b1, b2))| {
            let mut db = vec![0.0; grid.steps()];
            let mut ue = vec![0.0; len];
            let mut rec = Vec::with_capacity(grid.steps());
            let mut sp = SpikedRecords::default();
            b1.chunks_mut(len)
                .zip(b2.chunks_mut(len))
                .enumerate()
                .map(|(r, (r1, r2))| {
                    let i = c * CHUNK + r;
                    noise.fill_path(i, &mut db);
                    let ui = u.row(i);
                    ue.copy_from_slice(ui);
                    spike_row(&mut ue, &grid, window, spike.value);
                    base_records(coeffs, &grid, base.path(i), ui, &mut rec);
                    sp.build(coeffs, &grid, &rec, ui, &ue, window);
                    if let Some((_, guard)) = weight {
                        check_guard(&rec, guard, i)?;
                    }
                    expansion_kernel(coeffs, &grid, base.path(i), &rec, &sp, &db, r1, r2, mode, weight.map(|w| w.0.row(i)))
                        .map_err(|(step, quantity)| Error::Simulation { path: i, step, quantity })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(noise.n_paths());
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

/// First variation `x1` driven by the spike forcing on `[tau, tau + eps)`
/// and, through the delayed control, on `[tau + delay, tau + delay + eps)`.
pub fn simulate_first_variation(
    spec: &ProblemSpec,
    u: &ControlPath,
    spike: &SpikeSpec,
    noise: &NoiseEnsemble,
    base: &StateEnsemble,
) -> Result<PathEnsemble> {
    Ok(simulate_variations(spec, u, spike, noise, base)?.x1)
}

/// Second variation `x2` given the first variation `x1`.
pub fn simulate_second_variation(
    spec: &ProblemSpec,
    u: &ControlPath,
    spike: &SpikeSpec,
    noise: &NoiseEnsemble,
    base: &StateEnsemble,
    x1: &PathEnsemble,
) -> Result<PathEnsemble> {
    let mut x1 = x1.clone();
    let mut x2 = PathEnsemble::zeros(noise.n_paths(), spec.grid.path_len());
    if x1.n_paths() != x2.n_paths() || x1.len() != x2.len() {
        return Err(Error::config("x1", "first variation does not match the noise ensemble or grid"));
    }
    run_expansion(spec, u, spike, noise, base, &mut x1, &mut x2, Integrate::Second, None)?;
    Ok(x2)
}

/// Both variations in one pass.
pub fn simulate_variations(
    spec: &ProblemSpec,
    u: &ControlPath,
    spike: &SpikeSpec,
    noise: &NoiseEnsemble,
    base: &StateEnsemble,
) -> Result<VariationEnsemble> {
    let mut x1 = PathEnsemble::zeros(noise.n_paths(), spec.grid.path_len());
    let mut x2 = PathEnsemble::zeros(noise.n_paths(), spec.grid.path_len());
    run_expansion(spec, u, spike, noise, base, &mut x1, &mut x2, Integrate::Both, None)?;
    Ok(VariationEnsemble { x1, x2 })
}

/// Monte Carlo estimate of the left side of the variational inequality.
pub fn variational_inequality_lhs(
    spec: &ProblemSpec,
    u: &ControlPath,
    spike: &SpikeSpec,
    noise: &NoiseEnsemble,
    base: &StateEnsemble,
    variations: &VariationEnsemble,
) -> Result<Estimate> {
    let mut v = variations.clone();
    if v.x1.n_paths() != noise.n_paths() || v.x1.len() != spec.grid.path_len() {
        return Err(Error::config("variations", "variations do not match the noise ensemble or grid"));
    }
    let sums = run_expansion(spec, u, spike, noise, base, &mut v.x1, &mut v.x2, Integrate::Neither, None)?;
    let values: Vec<f64> = sums.iter().map(|s| s.vi).collect();
    Ok(Estimate::from_samples(&values))
}
