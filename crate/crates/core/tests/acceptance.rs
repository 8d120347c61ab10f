//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs at full size (1e5 to 2e5 paths) and takes several minutes on one core.
//! The process exits nonzero only on a harness error; failing criteria are
//! reported, not hidden.

use std::sync::Arc;
use std::time::{Duration, Instant};

use delay_smp::adjoint::{simulate_p0, solve_adjoints, solve_first, AdjointConfig};
use delay_smp::forward::{dyadic_ladder, ladder_study, CrossWeight, LadderConfig, LadderReport};
use delay_smp::harness::{
    run, scan_cells, DeterministicOracle, ExperimentConfig, ExperimentKind, GeometricOracle, History, ProblemConfig,
    WeightChoice,
};
use delay_smp::lq::{identity_challenger, riccati_reference, solve_lq, verify_optimality, LqProblem, LqSolveConfig};
use delay_smp::model::{ControlDomain, NonlinearDelayBenchmark, ProblemSpec};
use delay_smp::mp::{mp_gap, mp_scan_cells};
use delay_smp::tolerances::Tolerances;
use delay_smp::{sample_noise, Result, TimeGrid};

const LADDER_STEPS: usize = 256;
const LADDER_PATHS: usize = 100_000;
const CROSS_PATHS: usize = 200_000;
const ORACLE_PATHS: usize = 100_000;
const LQ_STEPS: usize = 16;
const LQ_PATHS: usize = 100_000;
const SCAN_CELLS: usize = 100;
const CHALLENGERS: usize = 20;
const LADDER_BUDGET: Duration = Duration::from_secs(120);
const PIPELINE_BUDGET: Duration = Duration::from_secs(300);
const SPIKE_TAU: f64 = 0.25;
const SPIKE_VALUE: f64 = -1.0;
const SEED: u64 = 20_240_601;

struct Line {
    id: usize,
    passed: bool,
    detail: String,
}

fn report(lines: &mut Vec<Line>, id: usize, result: Result<(bool, String)>) {
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("{verdict} {id:>2} {detail}");
    lines.push(Line { id, passed, detail });
}

fn ladder(spec: &ProblemSpec, paths: usize, weight: Option<CrossWeight>) -> Result<(LadderReport, Duration)> {
    let noise = sample_noise(spec.grid, SEED, paths)?;
    let cfg = LadderConfig {
        tau: SPIKE_TAU,
        value: SPIKE_VALUE,
        epsilons: dyadic_ladder(spec.grid.delay(), 2, 5),
        cross_weight: weight,
        guard: AdjointConfig::default().guard,
    };
    let start = Instant::now();
    let rep = ladder_study(spec, &spec.constant_control(1.0), &cfg, &noise)?;
    Ok((rep, start.elapsed()))
}

fn lq_spec(steps: usize) -> Result<ProblemSpec> {
    let prob = LqProblem::benchmark();
    prob.spec(prob.grid(steps)?)
}

fn nonlinear_spec(steps: usize) -> Result<ProblemSpec> {
    let grid = TimeGrid::new(1.0, 0.25, steps)?;
    ProblemSpec::with_constant_history(Arc::new(NonlinearDelayBenchmark), ControlDomain::split_unit(), grid, 1.0, 1.0)
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn successive_slopes(eps: &[f64], values: &[f64]) -> Vec<f64> {
    eps.windows(2)
        .zip(values.windows(2))
        .map(|(e, v)| (v[0] / v[1]).ln() / (e[0] / e[1]).ln())
        .collect()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn summary_field(out: &delay_smp::harness::Outcome, key: &str) -> f64 {
    let s: serde_json::Value = serde_json::from_slice(out.artifacts.get("summary.json").unwrap()).unwrap();
    s[key].as_f64().unwrap_or(f64::NAN)
}

fn main() {
    let tol = Tolerances::default();
    let mut lines = Vec::new();
    println!("acceptance: tolerances {tol:?}");

    // 1: first variation on the LQ benchmark
    report(
        &mut lines,
        1,
        (|| {
            let (rep, took) = ladder(&lq_spec(LADDER_STEPS)?, LADDER_PATHS, None)?;
            let s = rep.x1_slope();
            let ok = Tolerances::in_range(tol.x1_slope, s) && took <= LADDER_BUDGET;
            let values: Vec<f64> = rep.rungs.iter().map(|r| r.x1_sq.value).collect();
            Ok((
                ok,
                format!(
                    "LQ benchmark sup E|x1|^2 slope {s:.3} (range {:?}), values {}, successive slopes {}, {:.0} s (budget {} s)",
                    tol.x1_slope,
                    fmt(&values),
                    fmt(&successive_slopes(&rep.epsilons(), &values)),
                    took.as_secs_f64(),
                    LADDER_BUDGET.as_secs()
                ),
            ))
        })(),
    );

    // 2 and 3: on affine dynamics x2 vanishes identically, so the second-order
    // estimates run on the nonlinear benchmark
    let nonlinear = nonlinear_spec(LADDER_STEPS).and_then(|s| ladder(&s, LADDER_PATHS, None));
    let lq_x2 = ladder(&lq_spec(LADDER_STEPS / 4).unwrap(), 2_000, None)
        .map(|(r, _)| r.rungs.iter().map(|x| x.x2_sq.value).fold(0.0, f64::max))
        .unwrap_or(f64::NAN);
    match &nonlinear {
        Ok((rep, took)) => {
            let s = rep.x2_slope();
            report(
                &mut lines,
                2,
                Ok((
                    Tolerances::in_range(tol.x2_slope, s),
                    format!(
                        "nonlinear benchmark sup E|x2|^2 slope {s:.3} (range {:?}), x1 slope {:.3}, {:.0} s; LQ max sup E|x2|^2 = {lq_x2:e}",
                        tol.x2_slope,
                        rep.x1_slope(),
                        took.as_secs_f64()
                    ),
                )),
            );
            let ratios = rep.residual_ratios();
            report(
                &mut lines,
                3,
                Ok((
                    strictly_decreasing(&ratios),
                    format!("nonlinear benchmark residual / eps^2 {} strictly decreasing", fmt(&ratios)),
                )),
            );
        }
        Err(e) => {
            report(&mut lines, 2, Err(delay_smp::Error::Oracle(e.to_string())));
            report(&mut lines, 3, Err(delay_smp::Error::Oracle(e.to_string())));
        }
    }

    // 4: cross term with Phi = 1
    report(
        &mut lines,
        4,
        (|| {
            let (rep, took) = ladder(&lq_spec(LADDER_STEPS)?, CROSS_PATHS, Some(CrossWeight::Constant(1.0)))?;
            let (ls, rs) = (rep.cross_lhs_slope(), rep.cross_residual_slope());
            let res: Vec<f64> = rep.rungs.iter().map(|r| r.cross.unwrap().residual.mean).collect();
            Ok((
                rs > tol.cross_residual_slope && Tolerances::in_range(tol.cross_lhs_slope, ls),
                format!(
                    "LQ benchmark |lhs - rhs| slope {rs:.3} (> {}), |lhs| slope {ls:.3} (range {:?}), residuals {}, {:.0} s",
                    tol.cross_residual_slope,
                    tol.cross_lhs_slope,
                    fmt(&res),
                    took.as_secs_f64()
                ),
            ))
        })(),
    );

    // 5: first adjoint against the closed form
    report(
        &mut lines,
        5,
        (|| {
            let mut cfg = ExperimentConfig::new(
                ExperimentKind::AdjointOracle,
                ProblemConfig::GeometricOracle(GeometricOracle::default()),
                SEED,
                ORACLE_PATHS,
            );
            cfg.grid.steps_per_delay = 32;
            cfg.adjoint.basis.degree = 2;
            let out = run(&cfg)?;
            let rel = summary_field(&out, "relative_l2_error");
            Ok((
                out.passed,
                format!("relative L2 error of p {:.3}% (bound {}%), m = 32", 100.0 * rel, 100.0 * tol.oracle_relative),
            ))
        })(),
    );

    // 6: deterministic second adjoint
    report(
        &mut lines,
        6,
        (|| {
            let mut cfg = ExperimentConfig::new(
                ExperimentKind::AdjointOracle,
                ProblemConfig::DeterministicOracle(DeterministicOracle::default()),
                SEED,
                1_000,
            );
            cfg.grid.steps_per_delay = 64;
            let out = run(&cfg)?;
            let rel = summary_field(&out, "max_relative_error");
            Ok((
                out.passed,
                format!("max relative error of P {:.3}% (bound {}%), m = 64", 100.0 * rel, 100.0 * tol.oracle_relative),
            ))
        })(),
    );

    // 7: no-delay reduction against the Riccati reference
    report(
        &mut lines,
        7,
        (|| {
            let prob = LqProblem::no_delay_reduction();
            let grid = prob.grid(LQ_STEPS)?;
            let noise = sample_noise(grid, SEED, LQ_PATHS)?;
            let start = Instant::now();
            let sol = solve_lq(&prob, grid, &noise, &LqSolveConfig::default())?;
            let ric = riccati_reference(prob.a1, prob.b, prob.c1, prob.d, prob.r1, prob.l, prob.h, prob.horizon, 4000)?;
            let exact = ric.cost(prob.a);
            let rel = (sol.cost.mean / exact - 1.0).abs();
            Ok((
                rel < tol.oracle_relative,
                format!(
                    "cost {:.5} +- {:.1e} vs Riccati {exact:.5}, relative error {:.3}% (bound {}%), {} iterations, {:.0} s",
                    sol.cost.mean,
                    sol.cost.stderr,
                    100.0 * rel,
                    100.0 * tol.oracle_relative,
                    sol.trace.iterations(),
                    start.elapsed().as_secs_f64()
                ),
            ))
        })(),
    );

    // 8 and 9: the benchmark pipeline
    let pipeline = (|| -> Result<_> {
        let start = Instant::now();
        let prob = LqProblem::benchmark();
        let grid = prob.grid(LQ_STEPS)?;
        let noise = sample_noise(grid, SEED, LQ_PATHS)?;
        let cfg = LqSolveConfig::default();
        let sol = solve_lq(&prob, grid, &noise, &cfg)?;
        let allowance = tol.allowance(grid.dt());
        let values = [-3.0, -2.0, -1.5, -1.0, 1.0, 1.5, 2.0, 3.0];
        let cells = scan_cells(&grid, &values, SCAN_CELLS, SEED);
        let at_opt = mp_scan_cells(&sol.spec, &sol.control, &sol.adjoints, &cells)?;
        let wrong = sol.spec.constant_control(1.0);
        let adj_spec = {
            let c = prob.adjoint_coefficients(cfg.r2_placement);
            ProblemSpec::with_constant_history(Arc::new(c), prob.domain.clone(), grid, prob.a, prob.initial_control())?
        };
        let wrong_sol = solve_adjoints(&adj_spec, &wrong, &noise, &cfg.adjoint)?;
        let at_wrong = mp_scan_cells(&sol.spec, &wrong, &wrong_sol, &cells)?;
        let verify = verify_optimality(&sol, &noise, CHALLENGERS, SEED, allowance)?;
        Ok((sol, at_opt, at_wrong, verify, allowance, start.elapsed()))
    })();
    match pipeline {
        Ok((sol, at_opt, at_wrong, verify, allowance, took)) => {
            let min = at_opt.min().unwrap();
            let wmin = at_wrong.min().unwrap();
            let detected = at_wrong.violations(allowance).len();
            report(
                &mut lines,
                8,
                Ok((
                    at_opt.passes(allowance) && detected >= 1,
                    format!(
                        "at the optimum min gap {:.3e} +- {:.1e} at (tau {:.4}, v {}), allowance C dt = {allowance:.2e}; \
                         v = 1 has {detected} violating cells, min gap {:.3e}",
                        min.gap, min.stderr, min.tau, min.v, wmin.gap
                    ),
                )),
            );
            let smallest = verify
                .challengers
                .iter()
                .map(|c| c.difference.mean)
                .fold(f64::INFINITY, f64::min);
            let failed = verify.challengers.iter().filter(|c| !c.passed).count();
            report(
                &mut lines,
                9,
                Ok((
                    verify.passed && took <= PIPELINE_BUDGET,
                    format!(
                        "{} challengers, {failed} below threshold, smallest J(v) - J(v*) {smallest:.3e}; cost {:.5}; \
                         {} Picard iterations (converged {}, worst candidate ratio {:.3}); pipeline {:.0} s (budget {} s)",
                        verify.challengers.len(),
                        sol.cost.mean,
                        sol.trace.iterations(),
                        sol.trace.converged,
                        sol.trace.worst_contraction(),
                        took.as_secs_f64(),
                        PIPELINE_BUDGET.as_secs()
                    ),
                )),
            );
        }
        Err(e) => {
            let msg = e.to_string();
            report(&mut lines, 8, Err(delay_smp::Error::Oracle(msg.clone())));
            report(&mut lines, 9, Err(delay_smp::Error::Oracle(msg)));
        }
    }

    // 10: byte-identical outputs for every experiment kind and worker count
    report(&mut lines, 10, determinism());

    // 11: exact invariants
    report(&mut lines, 11, exactness());

    let passed = lines.iter().filter(|l| l.passed).count();
    println!("acceptance: {passed}/{} criteria pass", lines.len());
    for l in lines.iter().filter(|l| !l.passed) {
        println!("acceptance: criterion {} failed: {}", l.id, l.detail);
    }
}

fn determinism() -> Result<(bool, String)> {
    let small = |kind, problem| {
        let mut c = ExperimentConfig::new(kind, problem, 9, 3_000);
        c.grid.steps_per_delay = 8;
        c
    };
    let mut configs = vec![
        small(ExperimentKind::Simulate, ProblemConfig::NonlinearDelay(History::default())),
        small(ExperimentKind::LqSolve, ProblemConfig::LqBenchmark),
        small(ExperimentKind::AdjointOracle, ProblemConfig::GeometricOracle(GeometricOracle::default())),
    ];
    let mut conv = small(ExperimentKind::ConvergeExpansion, ProblemConfig::NonlinearDelay(History::default()));
    conv.grid.steps_per_delay = 64;
    conv.spike.epsilons = dyadic_ladder(0.25, 2, 3);
    configs.push(conv);
    let mut cross = small(ExperimentKind::CrosstermCheck, ProblemConfig::LqBenchmark);
    cross.grid.steps_per_delay = 64;
    cross.spike.epsilons = dyadic_ladder(0.25, 2, 3);
    cross.cross.weight = WeightChoice::Hamiltonian;
    configs.push(cross);
    let mut scan = small(ExperimentKind::MpScan, ProblemConfig::LqBenchmark);
    scan.scan.cells = 20;
    scan.scan.detect_with = Some(1.0);
    configs.push(scan);
    let mut verify = small(ExperimentKind::LqVerify, ProblemConfig::LqBenchmark);
    verify.verify.challengers = 5;
    configs.push(verify);
    configs[0].output.dump_paths = 3;
    configs[0].spike.epsilon = 0.125;

    let mut files = 0;
    for cfg in &configs {
        let outs: Vec<_> = [1, 3, 1]
            .into_iter()
            .map(|t| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().expect("thread pool");
                pool.install(|| run(cfg))
            })
            .collect::<Result<_>>()?;
        for o in &outs[1..] {
            if o.artifacts != outs[0].artifacts {
                return Ok((false, format!("{} outputs differ between runs", cfg.kind.name())));
            }
        }
        files += outs[0].artifacts.files().len();
    }
    Ok((
        true,
        format!("{} experiment kinds, {files} files identical over runs with 1, 3 and 1 workers", configs.len()),
    ))
}

fn exactness() -> Result<(bool, String)> {
    let mut failures = Vec::new();

    // identity spike on the nonlinear benchmark
    let spec = nonlinear_spec(32)?;
    let noise = sample_noise(spec.grid, SEED, 2_000)?;
    let u = spec.constant_control(1.0);
    let cfg = LadderConfig {
        tau: SPIKE_TAU,
        value: 1.0,
        epsilons: dyadic_ladder(0.25, 2, 4),
        cross_weight: Some(CrossWeight::Constant(1.0)),
        guard: AdjointConfig::default().guard,
    };
    let rep = ladder_study(&spec, &u, &cfg, &noise)?;
    for r in &rep.rungs {
        let c = r.cross.unwrap();
        let zeros = [
            r.x1_sq.value,
            r.x2_sq.value,
            r.residual_sq.value,
            r.vi_lhs.mean,
            r.cost_change.mean,
            c.lhs.mean,
            c.rhs.mean,
            c.residual.mean,
        ];
        if zeros.iter().any(|&z| z != 0.0) {
            failures.push(format!("identity spike at eps {} is not exactly zero", r.epsilon));
        }
    }

    // gap at v = u(tau), extension region, P0(0)
    let sol = solve_adjoints(&spec, &u, &noise, &AdjointConfig::default())?;
    let g = spec.grid;
    for k in [0, g.steps() / 2, g.steps() - 1] {
        let gap = mp_gap(&spec, &u, &sol, k as f64 * g.dt(), 1.0)?;
        if gap.gap != 0.0 || gap.stderr != 0.0 {
            failures.push(format!("gap at the current control is {} at step {k}", gap.gap));
        }
    }
    for k in g.steps() + 1..g.adjoint_len() {
        let nonzero = (0..2_000).any(|i| {
            sol.first.p(i, k) != 0.0 || sol.first.q(i, k) != 0.0 || sol.second.P(i, k) != 0.0 || sol.second.Q(i, k) != 0.0
        });
        if nonzero {
            failures.push(format!("adjoint extension is nonzero at step {k}"));
        }
    }
    let (states, _) = solve_first(&spec, &u, &noise, &AdjointConfig::default())?;
    let p0 = simulate_p0(&spec, &u, &states, &noise, AdjointConfig::default().guard)?;
    if (0..2_000).any(|i| p0.get(i, 0) != 1.0) {
        failures.push("P0(0) differs from 1".into());
    }

    // the solved LQ control as its own challenger
    let prob = LqProblem::benchmark();
    let grid = prob.grid(4)?;
    let lq_noise = sample_noise(grid, SEED, 1_000)?;
    let lq = solve_lq(&prob, grid, &lq_noise, &LqSolveConfig::default())?;
    let id = identity_challenger(&lq, &lq_noise)?;
    if id.difference.mean != 0.0 || id.difference.stderr != 0.0 {
        failures.push(format!("identity challenger difference {}", id.difference.mean));
    }

    let ok = failures.is_empty();
    let detail = if ok {
        "identity spike gives x1, x2, residuals, cost change and cross sums of exactly 0; gap 0 at v = u(tau); \
         adjoints 0 on (T, T + delay]; P0(0) = 1; identity challenger 0"
            .to_string()
    } else {
        failures.join("; ")
    };
    Ok((ok, detail))
}
