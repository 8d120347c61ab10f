use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::adjoint::{adapted_cross_term, hamiltonian_cross_weight, solve_adjoints, solve_first, AdjointSolution};
use crate::error::{Error, Result};
use crate::forward::{
    ladder_study, path_costs, simulate_state, simulate_variations, CrossWeight, LadderConfig, LadderReport, SpikeSpec,
};
use crate::grid::TimeGrid;
use crate::harness::config::{ControlChoice, ExperimentConfig, ProblemConfig, WeightChoice};
use crate::harness::emit::{Artifacts, Cell, Csv};
use crate::lq::{riccati_reference, solve_lq, verify_optimality, LqSolution};
use crate::model::{ControlPath, ProblemSpec};
use crate::mp::{mp_scan_cells, MpGapReport};
use crate::noise::{sample_noise, NoiseEnsemble};
use crate::stats::{loglog_slope, Estimate};
use crate::tolerances::Tolerances;

/// Result of one experiment before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub artifacts: Artifacts,
}

pub(crate) struct Setup {
    pub grid: TimeGrid,
    pub spec: ProblemSpec,
    pub noise: NoiseEnsemble,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = cfg.problem.grid(cfg.grid.steps_per_delay)?;
        let spec = cfg.problem.spec(grid)?;
        let noise = sample_noise(grid, cfg.seed, cfg.paths)?;
        Ok(Setup { grid, spec, noise })
    }
}

fn summary(artifacts: &mut Artifacts, passed: bool, body: serde_json::Value) {
    let mut v = json!({ "passed": passed });
    if let (Some(dst), serde_json::Value::Object(src)) = (v.as_object_mut(), body) {
        dst.extend(src);
    }
    artifacts.json("summary.json", &v);
}

/// Spec whose general adjoints are the adjoints of the configured problem.
fn adjoint_spec(cfg: &ExperimentConfig, spec: &ProblemSpec) -> Result<ProblemSpec> {
    match cfg.problem.lq() {
        Some(lq) => lq.spec_with(spec.grid, Arc::new(lq.adjoint_coefficients(cfg.r2_placement))),
        None => Ok(spec.clone()),
    }
}

/// Control along which the experiment runs, with the LQ solution if solved.
fn resolve_control(cfg: &ExperimentConfig, s: &Setup) -> Result<(ControlPath, Option<LqSolution>)> {
    match cfg.control {
        ControlChoice::Initial => {
            let eta = *s.spec.initial_control.last().expect("initial control is nonempty");
            Ok((s.spec.constant_control(eta), None))
        }
        ControlChoice::Constant { value } => {
            if !s.spec.domain.contains(value) {
                return Err(Error::config("control.value", format!("{value} lies outside the control domain")));
            }
            Ok((s.spec.constant_control(value), None))
        }
        ControlChoice::Solved => {
            let lq = cfg
                .problem
                .lq()
                .ok_or_else(|| Error::config("control", "a solved control needs an LQ problem"))?;
            let sol = solve_lq(&lq, s.grid, &s.noise, &cfg.lq_solve_config())?;
            Ok((sol.control.clone(), Some(sol)))
        }
    }
}

pub(crate) fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    use crate::harness::config::ExperimentKind::*;
    cfg.validate()?;
    let s = Setup::new(cfg)?;
    match cfg.kind {
        Simulate => simulate(cfg, &s),
        ConvergeExpansion => converge(cfg, &s),
        CrosstermCheck => crossterm(cfg, &s),
        MpScan => scan(cfg, &s),
        LqSolve => lq_solve(cfg, &s),
        LqVerify => lq_verify(cfg, &s),
        AdjointOracle => oracle(cfg, &s),
    }
}

fn simulate(cfg: &ExperimentConfig, s: &Setup) -> Result<Outcome> {
    let (u, _) = resolve_control(cfg, s)?;
    let states = simulate_state(&s.spec, &u, &s.noise)?;
    let costs = path_costs(&s.spec, &u, &states);
    let cost = Estimate::from_samples(&costs);
    let n = s.noise.n_paths();
    let g = s.grid;
    let mut art = Artifacts::default();

    let mut moments = Csv::new(&["t", "mean", "stderr"]);
    for j in 0..g.path_len() {
        let col: Vec<f64> = (0..n).map(|i| states.get(i, j)).collect();
        let e = Estimate::from_samples(&col);
        moments.floats(&[g.time(j), e.mean, e.stderr]);
    }
    art.csv("state_moments.csv", &moments);

    let spike = (cfg.spike.epsilon > 0.0).then(|| SpikeSpec::new(cfg.spike.tau, cfg.spike.epsilon, cfg.spike.value));
    let variations = spike
        .as_ref()
        .map(|sp| simulate_variations(&s.spec, &u, sp, &s.noise, &states))
        .transpose()?;
    if cfg.output.dump_paths > 0 {
        let mut dump = Csv::new(&["path", "t", "x", "x1", "x2", "u"]);
        for i in 0..cfg.output.dump_paths.min(n) {
            for j in 0..g.path_len() {
                let (x1, x2) = variations.as_ref().map_or((0.0, 0.0), |v| (v.x1.get(i, j), v.x2.get(i, j)));
                dump.row(&[
                    Cell::U(i),
                    Cell::F(g.time(j)),
                    Cell::F(states.get(i, j)),
                    Cell::F(x1),
                    Cell::F(x2),
                    Cell::F(u.value(i, j)),
                ]);
            }
        }
        art.csv("ensemble.csv", &dump);
    }
    let terminal: Vec<f64> = (0..n).map(|i| states.terminal(i)).collect();
    summary(
        &mut art,
        true,
        json!({
            "cost": cost,
            "terminal_state": Estimate::from_samples(&terminal),
            "spike": spike.map(|sp| json!({"tau": sp.tau, "epsilon": sp.epsilon, "value": sp.value})),
        }),
    );
    Ok(Outcome {
        passed: true,
        artifacts: art,
    })
}

fn ladder_slopes_csv(report: &LadderReport) -> Csv {
    let mut csv = Csv::new(&["epsilon", "metric", "value", "stderr", "slope"]);
    let eps = report.epsilons();
    type Metric = (&'static str, Box<dyn Fn(&crate::forward::RungReport) -> (f64, f64)>);
    let metrics: Vec<Metric> = vec![
        ("x1_sq", Box::new(|r| (r.x1_sq.value, r.x1_sq.stderr))),
        ("x2_sq", Box::new(|r| (r.x2_sq.value, r.x2_sq.stderr))),
        ("residual_sq", Box::new(|r| (r.residual_sq.value, r.residual_sq.stderr))),
        (
            "residual_ratio",
            Box::new(|r| {
                let e2 = r.epsilon * r.epsilon;
                (r.residual_sq.value / e2, r.residual_sq.stderr / e2)
            }),
        ),
        ("vi_lhs", Box::new(|r| (r.vi_lhs.mean, r.vi_lhs.stderr))),
        ("cost_change", Box::new(|r| (r.cost_change.mean, r.cost_change.stderr))),
    ];
    for (name, f) in &metrics {
        let vals: Vec<(f64, f64)> = report.rungs.iter().map(f).collect();
        let ys: Vec<f64> = vals.iter().map(|v| v.0.abs()).collect();
        let slope = loglog_slope(&eps, &ys);
        for (e, (v, se)) in eps.iter().zip(&vals) {
            csv.row(&[Cell::F(*e), Cell::S(name), Cell::F(*v), Cell::F(*se), Cell::F(slope)]);
        }
    }
    csv
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn converge(cfg: &ExperimentConfig, s: &Setup) -> Result<Outcome> {
    let (u, _) = resolve_control(cfg, s)?;
    let lcfg = LadderConfig {
        tau: cfg.spike.tau,
        value: cfg.spike.value,
        epsilons: cfg.epsilons(),
        cross_weight: None,
        guard: cfg.adjoint.guard,
    };
    let report = ladder_study(&s.spec, &u, &lcfg, &s.noise)?;
    let tol = &cfg.tolerances;
    let degenerate = report
        .rungs
        .iter()
        .all(|r| r.x1_sq.value == 0.0 && r.x2_sq.value == 0.0 && r.residual_sq.value == 0.0);
    let ratios = report.residual_ratios();
    let (x1, x2) = (report.x1_slope(), report.x2_slope());
    let checks = json!({
        "x1_slope": {"value": x1, "range": tol.x1_slope, "passed": Tolerances::in_range(tol.x1_slope, x1)},
        "x2_slope": {"value": x2, "range": tol.x2_slope, "passed": Tolerances::in_range(tol.x2_slope, x2)},
        "residual_ratios": {"values": ratios, "strictly_decreasing": strictly_decreasing(&ratios)},
    });
    let passed = degenerate
        || (Tolerances::in_range(tol.x1_slope, x1)
            && Tolerances::in_range(tol.x2_slope, x2)
            && strictly_decreasing(&ratios));
    let mut art = Artifacts::default();
    art.csv("slopes.csv", &ladder_slopes_csv(&report));
    summary(
        &mut art,
        passed,
        json!({
            "degenerate": degenerate,
            "checks": checks,
            "residual_slope": report.residual_slope(),
            "report": report,
        }),
    );
    Ok(Outcome { passed, artifacts: art })
}

#[derive(Debug, Clone, Copy, Serialize)]
struct CrossRow {
    epsilon: f64,
    lhs: Estimate,
    rhs: Estimate,
    residual: Estimate,
}

fn crossterm(cfg: &ExperimentConfig, s: &Setup) -> Result<Outcome> {
    let (u, _) = resolve_control(cfg, s)?;
    let eps = cfg.epsilons();
    let rows: Vec<CrossRow> = match cfg.cross.weight {
        WeightChoice::Constant { value } => {
            let lcfg = LadderConfig {
                tau: cfg.spike.tau,
                value: cfg.spike.value,
                epsilons: eps.clone(),
                cross_weight: Some(CrossWeight::Constant(value)),
                guard: cfg.adjoint.guard,
            };
            ladder_study(&s.spec, &u, &lcfg, &s.noise)?
                .rungs
                .iter()
                .map(|r| {
                    let c = r.cross.expect("cross sums were requested");
                    CrossRow {
                        epsilon: r.epsilon,
                        lhs: c.lhs,
                        rhs: c.rhs,
                        residual: c.residual,
                    }
                })
                .collect()
        }
        WeightChoice::Hamiltonian => {
            let adj = adjoint_spec(cfg, &s.spec)?;
            let (states, first) = solve_first(&adj, &u, &s.noise, &cfg.adjoint)?;
            let w = hamiltonian_cross_weight(&adj, &u, &states, &first, cfg.adjoint.guard)?;
            adapted_cross_term(
                &s.spec,
                &u,
                &states,
                &w,
                cfg.spike.tau,
                cfg.spike.value,
                &eps,
                &s.noise,
                cfg.adjoint.guard,
            )?
            .into_iter()
            .map(|r| CrossRow {
                epsilon: r.epsilon,
                lhs: r.lhs,
                rhs: r.rhs,
                residual: r.residual,
            })
            .collect()
        }
    };
    let mut csv = Csv::new(&["epsilon", "lhs", "rhs", "residual", "stderr"]);
    for r in &rows {
        csv.floats(&[r.epsilon, r.lhs.mean, r.rhs.mean, r.residual.mean, r.residual.stderr]);
    }
    let lhs: Vec<f64> = rows.iter().map(|r| r.lhs.mean.abs()).collect();
    let res: Vec<f64> = rows.iter().map(|r| r.residual.mean.abs()).collect();
    let (lhs_slope, res_slope) = (loglog_slope(&eps, &lhs), loglog_slope(&eps, &res));
    let tol = &cfg.tolerances;
    let degenerate = rows.iter().all(|r| r.lhs.mean == 0.0 && r.rhs.mean == 0.0);
    let passed = degenerate || (res_slope > tol.cross_residual_slope && Tolerances::in_range(tol.cross_lhs_slope, lhs_slope));
    let mut art = Artifacts::default();
    art.csv("crossterm.csv", &csv);
    summary(
        &mut art,
        passed,
        json!({
            "degenerate": degenerate,
            "lhs_slope": {"value": lhs_slope, "range": tol.cross_lhs_slope},
            "residual_slope": {"value": res_slope, "min": tol.cross_residual_slope},
            "rungs": rows,
        }),
    );
    Ok(Outcome { passed, artifacts: art })
}

/// Random `(tau, v)` cells with `tau` on the step nodes of `[0, horizon)`.
pub fn scan_cells(grid: &TimeGrid, values: &[f64], count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.random_range(0..grid.steps());
            let v = values[rng.random_range(0..values.len())];
            (k as f64 * grid.dt(), v)
        })
        .collect()
}

fn scan_csv(report: &MpGapReport) -> Csv {
    let mut csv = Csv::new(&["tau", "v", "gap", "stderr"]);
    for r in &report.records {
        csv.floats(&[r.tau, r.v, r.gap, r.stderr]);
    }
    csv
}

fn scan_summary(report: &MpGapReport, allowance: f64) -> serde_json::Value {
    let min = report.min();
    json!({
        "min_gap": min.map(|r| r.gap),
        "min_location": min.map(|r| json!({"tau": r.tau, "v": r.v, "stderr": r.stderr})),
        "threshold": min.map(|r| -(3.0 * r.stderr + allowance)),
        "allowance": allowance,
        "violations": report.violations(allowance).len(),
        "cells": report.records.len(),
    })
}

fn adjoints_along(cfg: &ExperimentConfig, s: &Setup, u: &ControlPath) -> Result<AdjointSolution> {
    let adj = adjoint_spec(cfg, &s.spec)?;
    solve_adjoints(&adj, u, &s.noise, &cfg.adjoint)
}

fn scan(cfg: &ExperimentConfig, s: &Setup) -> Result<Outcome> {
    let (u, solved) = resolve_control(cfg, s)?;
    let sol = match solved {
        Some(lq) => lq.adjoints,
        None => adjoints_along(cfg, s, &u)?,
    };
    let cells = scan_cells(&s.grid, &cfg.scan.values, cfg.scan.cells, cfg.scan.seed);
    let allowance = cfg.tolerances.allowance(s.grid.dt());
    let report = mp_scan_cells(&s.spec, &u, &sol, &cells)?;
    let mut passed = report.passes(allowance);
    let mut art = Artifacts::default();
    art.csv("mp_scan.csv", &scan_csv(&report));
    let mut body = json!({ "scan": scan_summary(&report, allowance) });
    if let Some(value) = cfg.scan.detect_with {
        if !s.spec.domain.contains(value) {
            return Err(Error::config("scan.detect_with", format!("{value} lies outside the control domain")));
        }
        let wrong = s.spec.constant_control(value);
        let wsol = adjoints_along(cfg, s, &wrong)?;
        let wrep = mp_scan_cells(&s.spec, &wrong, &wsol, &cells)?;
        let detected = !wrep.passes(allowance);
        passed &= detected;
        art.csv("mp_scan_detect.csv", &scan_csv(&wrep));
        body["detection"] = json!({ "control": value, "detected": detected, "scan": scan_summary(&wrep, allowance) });
    }
    summary(&mut art, passed, body);
    Ok(Outcome { passed, artifacts: art })
}

/// Pass flags and report of a solved LQ problem.
fn lq_checks(cfg: &ExperimentConfig, s: &Setup, sol: &LqSolution) -> Result<(bool, serde_json::Value)> {
    let tol = &cfg.tolerances;
    let allowance = tol.allowance(s.grid.dt());
    let in_domain = sol.control.validate(&s.grid, &s.spec.domain, s.noise.n_paths()).is_ok();
    let second = &sol.adjoints.second;
    let (mut worst_k, mut worst_margin) = (0, f64::INFINITY);
    for k in 0..=s.grid.steps() {
        let e = second.p_estimate(k);
        let margin = e.mean + 3.0 * e.stderr + allowance;
        if margin < worst_margin {
            (worst_k, worst_margin) = (k, margin);
        }
    }
    let p_ok = worst_margin >= 0.0;
    let contraction = sol.trace.worst_contraction();
    let lq = &sol.problem;
    let riccati = if lq.a2 == 0.0 && lq.r2 == 0.0 {
        let ric = riccati_reference(lq.a1, lq.b, lq.c1, lq.d, lq.r1, lq.l, lq.h, lq.horizon, 4000)?;
        let exact = ric.cost(lq.a);
        let rel = (sol.cost.mean / exact - 1.0).abs();
        Some(json!({"cost": exact, "relative_error": rel, "passed": rel < tol.oracle_relative}))
    } else {
        None
    };
    let ric_ok = riccati.as_ref().is_none_or(|r| r["passed"] == json!(true));
    let passed = sol.trace.converged && in_domain && p_ok && ric_ok;
    Ok((
        passed,
        json!({
            "cost": sol.cost,
            "iterations": sol.trace.iterations(),
            "converged": sol.trace.converged,
            "control_in_domain": in_domain,
            "second_adjoint": {
                "min_margin": worst_margin,
                "at_t": worst_k as f64 * s.grid.dt(),
                "allowance": allowance,
                "passed": p_ok,
            },
            "contraction": {
                "worst_ratio": contraction,
                "bound": tol.contraction,
                "within_bound": contraction <= tol.contraction,
            },
            "riccati": riccati,
        }),
    ))
}

fn lq_outputs(cfg: &ExperimentConfig, s: &Setup, sol: &LqSolution, art: &mut Artifacts) {
    let mut trace = Csv::new(&["iteration", "control_change", "candidate_change"]);
    for (j, (a, b)) in sol.trace.control_changes.iter().zip(&sol.trace.candidate_changes).enumerate() {
        trace.row(&[Cell::U(j + 1), Cell::F(*a), Cell::F(*b)]);
    }
    art.csv("picard.csv", &trace);
    let g = s.grid;
    let (adj, m) = (&sol.adjoints, g.steps_per_delay());
    let mut means = Csv::new(&["t", "p", "p_stderr", "P", "P_stderr"]);
    for k in 0..=g.steps() {
        let (p, pp) = (adj.first.p_estimate(k), adj.second.p_estimate(k));
        means.floats(&[k as f64 * g.dt(), p.mean, p.stderr, pp.mean, pp.stderr]);
    }
    art.csv("adjoint_means.csv", &means);
    if cfg.output.dump_paths > 0 {
        let mut dump = Csv::new(&["path", "t", "x", "u", "p", "q", "P", "Q"]);
        for i in 0..cfg.output.dump_paths.min(s.noise.n_paths()) {
            for k in 0..=g.steps() {
                dump.row(&[
                    Cell::U(i),
                    Cell::F(k as f64 * g.dt()),
                    Cell::F(adj.states.at_step(i, k)),
                    Cell::F(sol.control.value(i, m + k)),
                    Cell::F(adj.first.p(i, k)),
                    Cell::F(adj.first.q(i, k)),
                    Cell::F(adj.second.P(i, k)),
                    Cell::F(adj.second.Q(i, k)),
                ]);
            }
        }
        art.csv("trajectories.csv", &dump);
    }
}

fn lq_solve(cfg: &ExperimentConfig, s: &Setup) -> Result<Outcome> {
    let lq = cfg.problem.lq().expect("validated as LQ");
    let sol = solve_lq(&lq, s.grid, &s.noise, &cfg.lq_solve_config())?;
    let (passed, body) = lq_checks(cfg, s, &sol)?;
    let mut art = Artifacts::default();
    lq_outputs(cfg, s, &sol, &mut art);
    summary(&mut art, passed, body);
    Ok(Outcome { passed, artifacts: art })
}

fn lq_verify(cfg: &ExperimentConfig, s: &Setup) -> Result<Outcome> {
    let lq = cfg.problem.lq().expect("validated as LQ");
    let sol = solve_lq(&lq, s.grid, &s.noise, &cfg.lq_solve_config())?;
    let allowance = cfg.tolerances.allowance(s.grid.dt());
    let rep = verify_optimality(&sol, &s.noise, cfg.verify.challengers, cfg.verify.seed, allowance)?;
    let mut csv = Csv::new(&["index", "kind", "label", "difference", "stderr", "threshold", "passed"]);
    for (j, c) in rep.challengers.iter().enumerate() {
        let kind = serde_json::to_value(c.kind).expect("kinds serialise");
        csv.row(&[
            Cell::U(j),
            Cell::S(kind.as_str().unwrap_or_default()),
            Cell::S(&c.label),
            Cell::F(c.difference.mean),
            Cell::F(c.difference.stderr),
            Cell::F(-(3.0 * c.difference.stderr + allowance)),
            Cell::B(c.passed),
        ]);
    }
    let mut art = Artifacts::default();
    art.csv("challengers.csv", &csv);
    lq_outputs(cfg, s, &sol, &mut art);
    let worst = rep
        .challengers
        .iter()
        .min_by(|a, b| a.difference.mean.total_cmp(&b.difference.mean))
        .map(|c| json!({"label": c.label, "difference": c.difference}));
    summary(
        &mut art,
        rep.passed,
        json!({
            "cost": rep.cost,
            "allowance": allowance,
            "challengers": rep.challengers.len(),
            "failed": rep.challengers.iter().filter(|c| !c.passed).count(),
            "smallest_difference": worst,
            "iterations": sol.trace.iterations(),
            "converged": sol.trace.converged,
        }),
    );
    Ok(Outcome {
        passed: rep.passed,
        artifacts: art,
    })
}

fn oracle(cfg: &ExperimentConfig, s: &Setup) -> Result<Outcome> {
    let (u, _) = resolve_control(cfg, s)?;
    let g = s.grid;
    let n = s.noise.n_paths();
    let tol = cfg.tolerances.oracle_relative;
    let mut art = Artifacts::default();
    let (passed, body) = match &cfg.problem {
        ProblemConfig::GeometricOracle(o) => {
            let (states, first) = solve_first(&s.spec, &u, &s.noise, &cfg.adjoint)?;
            let rate = 2.0 * o.c + o.s * o.s;
            let mut csv = Csv::new(&["t", "p_mean", "exact_mean", "rms_error"]);
            let (mut err2, mut norm2) = (0.0, 0.0);
            for k in 0..=g.steps() {
                let t = k as f64 * g.dt();
                let f = (rate * (g.horizon() - t)).exp();
                let exact: Vec<f64> = (0..n).map(|i| f * states.at_step(i, k)).collect();
                let diff: Vec<f64> = (0..n).map(|i| (first.p(i, k) - exact[i]).powi(2)).collect();
                let sq: Vec<f64> = exact.iter().map(|v| v * v).collect();
                let (e2, n2) = (Estimate::from_samples(&diff).mean, Estimate::from_samples(&sq).mean);
                err2 += e2;
                norm2 += n2;
                csv.floats(&[
                    t,
                    first.p_estimate(k).mean,
                    Estimate::from_samples(&exact).mean,
                    e2.sqrt(),
                ]);
            }
            art.csv("oracle.csv", &csv);
            let rel = (err2 / norm2).sqrt();
            (
                rel < tol,
                json!({"oracle": "geometric", "relative_l2_error": rel, "bound": tol}),
            )
        }
        ProblemConfig::DeterministicOracle(o) => {
            let sol = solve_adjoints(&s.spec, &u, &s.noise, &cfg.adjoint)?;
            let mut csv = Csv::new(&["t", "P_mean", "exact", "relative_error"]);
            let mut worst: f64 = 0.0;
            for k in 0..=g.steps() {
                let t = k as f64 * g.dt();
                let exact = o.second_adjoint(t);
                let rel = (0..n)
                    .map(|i| (sol.second.P(i, k) / exact - 1.0).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(rel);
                csv.floats(&[t, sol.second.p_estimate(k).mean, exact, rel]);
            }
            art.csv("oracle.csv", &csv);
            (
                worst < tol,
                json!({"oracle": "deterministic-second", "max_relative_error": worst, "bound": tol}),
            )
        }
        _ => return Err(Error::config("problem.name", "adjoint-oracle needs an oracle problem")),
    };
    summary(&mut art, passed, body);
    Ok(Outcome { passed, artifacts: art })
}
