//! Streaming spike-ladder study.
//!
//! For each path the base state, the spiked states and both variations are
//! computed for every rung of the epsilon ladder with the same increments, and
//! only per-node sums and per-path scalars are kept. Memory is independent of
//! the number of paths.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::spike::{spike_row, SpikeSpec, SpikeWindow};
use crate::forward::state::{base_records, check_inputs, state_kernel};
use crate::forward::variation::{check_guard, expansion_kernel, CrossWeight, Integrate, SpikedRecords};
use crate::grid::TimeGrid;
use crate::model::{ControlPath, Point, ProblemSpec, ThetaRecord};
use crate::noise::NoiseEnsemble;
use crate::stats::{loglog_slope, Estimate, CHUNK};

#[derive(Debug, Clone, PartialEq)]
pub struct LadderConfig {
    pub tau: f64,
    pub value: f64,
    pub epsilons: Vec<f64>,
    /// Weight for the cross-term sums; `None` skips them.
    pub cross_weight: Option<CrossWeight>,
    /// Lower bound on `|sigma_xd|` enforced where the cross term divides by it.
    pub guard: f64,
}

/// `sup_t` of a per-node Monte Carlo mean, with the standard error at the maximiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    pub stderr: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossTermEstimate {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Paired estimate of `lhs - rhs`.
    pub residual: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungReport {
    pub epsilon: f64,
    /// `sup_t E|x1(t)|^2`.
    pub x1_sq: SupEstimate,
    /// `sup_t E|x2(t)|^2`.
    pub x2_sq: SupEstimate,
    /// `sup_t E|x^eps - x - x1 - x2|^2`.
    pub residual_sq: SupEstimate,
    /// `sup_t E|x^eps - x - x1|^2`.
    pub first_order_residual_sq: SupEstimate,
    pub vi_lhs: Estimate,
    /// `J(u^eps) - J(u)` under common noise.
    pub cost_change: Estimate,
    pub cross: Option<CrossTermEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderReport {
    pub tau: f64,
    pub value: f64,
    pub n_paths: usize,
    pub rungs: Vec<RungReport>,
}

impl LadderReport {
    pub fn epsilons(&self) -> Vec<f64> {
        self.rungs.iter().map(|r| r.epsilon).collect()
    }

    fn slope(&self, f: impl Fn(&RungReport) -> f64) -> f64 {
        let ys: Vec<f64> = self.rungs.iter().map(f).collect();
        loglog_slope(&self.epsilons(), &ys)
    }

    pub fn x1_slope(&self) -> f64 {
        self.slope(|r| r.x1_sq.value)
    }

    pub fn x2_slope(&self) -> f64 {
        self.slope(|r| r.x2_sq.value)
    }

    pub fn residual_slope(&self) -> f64 {
        self.slope(|r| r.residual_sq.value)
    }

    /// `sup_t E|x^eps - x - x1 - x2|^2 / eps^2` per rung.
    pub fn residual_ratios(&self) -> Vec<f64> {
        self.rungs
            .iter()
            .map(|r| r.residual_sq.value / (r.epsilon * r.epsilon))
            .collect()
    }

    pub fn cross_lhs_slope(&self) -> f64 {
        self.slope(|r| r.cross.map_or(f64::NAN, |c| c.lhs.mean.abs()))
    }

    pub fn cross_residual_slope(&self) -> f64 {
        self.slope(|r| r.cross.map_or(f64::NAN, |c| c.residual.mean.abs()))
    }
}

/// Per-node sums of squares and fourth powers for one rung.
#[derive(Clone)]
struct NodeSums {
    sq: [Vec<f64>; 4],
    quad: [Vec<f64>; 4],
}

impl NodeSums {
    fn new(nodes: usize) -> Self {
        NodeSums {
            sq: std::array::from_fn(|_| vec![0.0; nodes]),
            quad: std::array::from_fn(|_| vec![0.0; nodes]),
        }
    }

    fn add(&mut self, other: &NodeSums) {
        for q in 0..4 {
            for (a, b) in self.sq[q].iter_mut().zip(&other.sq[q]) {
                *a += b;
            }
            for (a, b) in self.quad[q].iter_mut().zip(&other.quad[q]) {
                *a += b;
            }
        }
    }

    fn sup(&self, q: usize, n: usize, grid: &TimeGrid) -> SupEstimate {
        let nf = n as f64;
        let mut best = SupEstimate {
            value: f64::NEG_INFINITY,
            stderr: 0.0,
            time: 0.0,
        };
        for (k, (&s, &s4)) in self.sq[q].iter().zip(&self.quad[q]).enumerate() {
            let mean = s / nf;
            if mean > best.value {
                let var = if n > 1 { ((s4 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
                best = SupEstimate {
                    value: mean,
                    stderr: (var / nf).sqrt(),
                    time: k as f64 * grid.dt(),
                };
            }
        }
        best
    }
}

struct BlockOut {
    sums: Vec<NodeSums>,
    /// Per rung: vi, cost change, cross lhs, cross rhs; one entry per path.
    scalars: Vec<[Vec<f64>; 4]>,
}

struct Work {
    db: Vec<f64>,
    x: Vec<f64>,
    xe: Vec<f64>,
    x1: Vec<f64>,
    x2: Vec<f64>,
    ue: Vec<f64>,
    rec: Vec<ThetaRecord>,
    sp: SpikedRecords,
}

/// Runs the spike ladder with common noise across all rungs.
pub fn ladder_study(spec: &ProblemSpec, u: &ControlPath, cfg: &LadderConfig, noise: &NoiseEnsemble) -> Result<LadderReport> {
    check_inputs(spec, u, noise)?;
    if cfg.epsilons.is_empty() {
        return Err(Error::config("epsilons", "the epsilon ladder is empty"));
    }
    let grid = spec.grid;
    let windows: Vec<SpikeWindow> = cfg
        .epsilons
        .iter()
        .map(|&eps| SpikeSpec::new(cfg.tau, eps, cfg.value).window(&grid, &spec.domain))
        .collect::<Result<_>>()?;
    if let Some(CrossWeight::PerStep(w)) = &cfg.cross_weight {
        if w.len() != grid.steps() {
            return Err(Error::config("cross_weight", "weight needs one value per step"));
        }
    }
    let weight = cfg.cross_weight.as_ref().map(|w| w.row(grid.steps()));
    let n = noise.n_paths();
    let rungs = windows.len();
    let nodes = grid.steps() + 1;
    let m = grid.steps_per_delay();
    let coeffs = spec.coeffs();

    let blocks: Vec<Result<BlockOut>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = grid.path_len();
            let mut w = Work {
                db: vec![0.0; grid.steps()],
                x: vec![0.0; len],
                xe: vec![0.0; len],
                x1: vec![0.0; len],
                x2: vec![0.0; len],
                ue: vec![0.0; len],
                rec: Vec::with_capacity(grid.steps()),
                sp: SpikedRecords::default(),
            };
            let range = c * CHUNK..((c + 1) * CHUNK).min(n);
            let mut out = BlockOut {
                sums: vec![NodeSums::new(nodes); rungs],
                scalars: (0..rungs)
                    .map(|_| std::array::from_fn(|_| Vec::with_capacity(range.len())))
                    .collect(),
            };
            for i in range {
                noise.fill_path(i, &mut w.db);
                let ui = u.row(i);
                let sim_err = |quantity| move |step| Error::Simulation { path: i, step, quantity };
                state_kernel(coeffs, &grid, &spec.initial_state, ui, &w.db, &mut w.x, 0).map_err(sim_err("x"))?;
                base_records(coeffs, &grid, &w.x, ui, &mut w.rec);
                if cfg.cross_weight.is_some() {
                    check_guard(&w.rec, cfg.guard, i)?;
                }
                for (r, win) in windows.iter().enumerate() {
                    w.ue.copy_from_slice(ui);
                    spike_row(&mut w.ue, &grid, *win, cfg.value);
                    w.sp.build(coeffs, &grid, &w.rec, ui, &w.ue, *win);
                    w.xe.copy_from_slice(&w.x);
                    state_kernel(coeffs, &grid, &spec.initial_state, &w.ue, &w.db, &mut w.xe, win.start)
                        .map_err(sim_err("x_eps"))?;
                    let sums = expansion_kernel(
                        coeffs,
                        &grid,
                        &w.x,
                        &w.rec,
                        &w.sp,
                        &w.db,
                        &mut w.x1,
                        &mut w.x2,
                        Integrate::Both,
                        weight.as_deref(),
                    )
                    .map_err(|(step, quantity)| Error::Simulation { path: i, step, quantity })?;

                    let s = &mut out.sums[r];
                    for k in win.start..nodes {
                        let j = m + k;
                        let d1 = w.xe[j] - w.x[j] - w.x1[j];
                        let vals = [w.x1[j], w.x2[j], d1 - w.x2[j], d1];
                        for (q, v) in vals.iter().enumerate() {
                            let sq = v * v;
                            s.sq[q][k] += sq;
                            s.quad[q][k] += sq * sq;
                        }
                    }

                    let sc = &mut out.scalars[r];
                    sc[0].push(sums.vi);
                    sc[1].push(cost_change(spec, &w.x, &w.rec, ui, &w.xe, &w.ue, win.start));
                    sc[2].push(sums.cross_lhs);
                    sc[3].push(sums.cross_rhs);
                }
            }
            Ok(out)
        })
        .collect();

    let mut sums = vec![NodeSums::new(nodes); rungs];
    let mut scalars: Vec<[Vec<f64>; 4]> = (0..rungs).map(|_| Default::default()).collect();
    for b in blocks {
        let b = b?;
        for r in 0..rungs {
            sums[r].add(&b.sums[r]);
            for q in 0..4 {
                scalars[r][q].extend_from_slice(&b.scalars[r][q]);
            }
        }
    }

    let rungs = (0..rungs)
        .map(|r| {
            let sc = &scalars[r];
            RungReport {
                epsilon: cfg.epsilons[r],
                x1_sq: sums[r].sup(0, n, &grid),
                x2_sq: sums[r].sup(1, n, &grid),
                residual_sq: sums[r].sup(2, n, &grid),
                first_order_residual_sq: sums[r].sup(3, n, &grid),
                vi_lhs: Estimate::from_samples(&sc[0]),
                cost_change: Estimate::from_samples(&sc[1]),
                cross: cfg.cross_weight.as_ref().map(|_| CrossTermEstimate {
                    lhs: Estimate::from_samples(&sc[2]),
                    rhs: Estimate::from_samples(&sc[3]),
                    residual: Estimate::paired_difference(&sc[2], &sc[3]),
                }),
            }
        })
        .collect();
    Ok(LadderReport {
        tau: cfg.tau,
        value: cfg.value,
        n_paths: n,
        rungs,
    })
}

/// `J(u^eps) - J(u)` on one path. Steps before the spike contribute nothing,
/// and steps with identical arguments contribute an exact zero.
fn cost_change(spec: &ProblemSpec, x: &[f64], rec: &[ThetaRecord], u: &[f64], xe: &[f64], ue: &[f64], start: usize) -> f64 {
    let grid = &spec.grid;
    let coeffs = spec.coeffs();
    let m = grid.steps_per_delay();
    let dt = grid.dt();
    let mut running = 0.0;
    for k in start..grid.steps() {
        let j = m + k;
        if x[j] == xe[j] && x[j - m] == xe[j - m] && u[j] == ue[j] && u[j - m] == ue[j - m] {
            continue;
        }
        let t = k as f64 * dt;
        running += coeffs.running_cost_value(&Point::new(t, xe[j], xe[j - m], ue[j], ue[j - m])) - rec[k].cost.value;
    }
    let n = grid.terminal_index();
    let dh = if xe[n] == x[n] {
        0.0
    } else {
        coeffs.terminal_cost(xe[n]).value - coeffs.terminal_cost(x[n]).value
    };
    running * dt + dh
}

/// A convergence curve point: `(epsilon, value, stderr)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub value: f64,
    pub stderr: f64,
}

/// `sup_t E|x^eps - x - x1 - x2|^2` along the ladder.
pub fn expansion_residual(
    spec: &ProblemSpec,
    u: &ControlPath,
    tau: f64,
    value: f64,
    epsilons: &[f64],
    noise: &NoiseEnsemble,
) -> Result<Vec<CurvePoint>> {
    let cfg = LadderConfig {
        tau,
        value,
        epsilons: epsilons.to_vec(),
        cross_weight: None,
        guard: 0.0,
    };
    let report = ladder_study(spec, u, &cfg, noise)?;
    Ok(report
        .rungs
        .iter()
        .map(|r| CurvePoint {
            epsilon: r.epsilon,
            value: r.residual_sq.value,
            stderr: r.residual_sq.stderr,
        })
        .collect())
}

/// Dyadic ladder `delay / 2^first, ..., delay / 2^last`.
pub fn dyadic_ladder(delay: f64, first: u32, last: u32) -> Vec<f64> {
    (first..=last).map(|p| delay / 2f64.powi(p as i32)).collect()
}
