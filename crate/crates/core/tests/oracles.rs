//! Simulation results against values computed independently in the test.

use std::sync::Arc;

use delay_smp::adjoint::{duality_check, solve_adjoints, solve_first, AdjointConfig};
use delay_smp::forward::{simulate_state, SpikeSpec};
use delay_smp::harness::DeterministicOracle;
use delay_smp::lq::{riccati_reference, LqProblem};
use delay_smp::model::{AffineQuadratic, ControlDomain, ProblemSpec};
use delay_smp::stats::Estimate;
use delay_smp::{sample_noise, TimeGrid};

fn column_estimate(values: impl Iterator<Item = f64>) -> Estimate {
    let v: Vec<f64> = values.collect();
    Estimate::from_samples(&v)
}

#[test]
fn euler_mean_follows_the_delay_recursion() {
    let prob = LqProblem::benchmark();
    let grid = prob.grid(8).unwrap();
    let spec = prob.spec(grid).unwrap();
    let noise = sample_noise(grid, 11, 20_000).unwrap();
    let v = -1.5;
    let states = simulate_state(&spec, &spec.constant_control(v), &noise).unwrap();

    // E[x] solves the Euler recursion of the mean exactly
    let (m, dt) = (grid.steps_per_delay(), grid.dt());
    let mut mean = vec![prob.a; grid.path_len()];
    for k in 0..grid.steps() {
        let j = m + k;
        mean[j + 1] = mean[j] + (prob.a1 * mean[j] + prob.a2 * mean[j - m] + prob.b * v) * dt;
    }
    for j in [m + 1, m + grid.steps() / 2, grid.path_len() - 1] {
        let est = column_estimate((0..noise.n_paths()).map(|i| states.get(i, j)));
        assert!(
            (est.mean - mean[j]).abs() < 4.0 * est.stderr,
            "node {j}: {} vs {} (se {})",
            est.mean,
            mean[j],
            est.stderr
        );
    }
}

#[test]
fn riccati_matches_closed_forms() {
    // B = D = 0: linear equation k' = -(2A + C^2) k - R
    let (a, c, r, h) = (0.3, 0.4, 1.5, 2.0);
    let sol = riccati_reference(a, 0.0, c, 0.0, r, 1.0, h, 1.0, 400).unwrap();
    let g = 2.0 * a + c * c;
    let exact = (h + r / g) * g.exp() - r / g;
    assert!((sol.k[0] - exact).abs() < 1e-9 * exact, "{} vs {exact}", sol.k[0]);

    // R = C = D = 0: 1/k solves w' = 2A w - B^2 / L
    let (a, b, l, h) = (0.2, 1.0, 0.5, 1.0);
    let sol = riccati_reference(a, b, 0.0, 0.0, 0.0, l, h, 1.0, 400).unwrap();
    let beta = b * b / l;
    let w0 = beta / (2.0 * a) + (1.0 / h - beta / (2.0 * a)) * (-2.0 * a).exp();
    assert!((sol.k[0] - 1.0 / w0).abs() < 1e-9, "{} vs {}", sol.k[0], 1.0 / w0);
    assert!((sol.gain(0) + b * sol.k[0] / l).abs() < 1e-12);
}

fn controlled_gbm(grid: TimeGrid) -> ProblemSpec {
    let coeffs = AffineQuadratic {
        drift_x: 0.3,
        drift_v: 1.0,
        diffusion_x: 0.4,
        diffusion_v: 0.1,
        terminal_x2: 1.0,
        ..Default::default()
    };
    ProblemSpec::with_constant_history(Arc::new(coeffs), ControlDomain::Real, grid, 1.0, 0.0).unwrap()
}

#[test]
fn duality_holds_when_the_regression_is_exact() {
    // without a delayed state p is affine in x, so a linear basis gives the
    // conditional expectations exactly and only Monte Carlo error remains
    let grid = TimeGrid::new(1.0, 1.0, 16).unwrap();
    let spec = controlled_gbm(grid);
    let noise = sample_noise(grid, 4, 5_000).unwrap();
    let u = spec.constant_control(0.5);
    let mut cfg = AdjointConfig::default();
    cfg.basis.degree = 1;
    cfg.basis.ridge = 0.0;
    let (states, first) = solve_first(&spec, &u, &noise, &cfg).unwrap();
    let rep = duality_check(&spec, &u, &states, &first, &SpikeSpec::new(0.25, 0.125, -1.0), &noise).unwrap();
    assert!(rep.lhs.mean.abs() > 1e-3);
    assert!(rep.residual.mean.abs() < 3.0 * rep.residual.stderr, "{:?}", rep);
    assert!(rep.residual.mean.abs() < 0.01 * rep.lhs.mean.abs(), "{:?}", rep);
}

#[test]
fn first_adjoint_of_geometric_motion() {
    // p(t) = x(t) exp((2c + s^2)(T - t)) for b = c x, sigma = s x, h = x^2 / 2
    let (c, s) = (0.3, 0.4);
    let grid = TimeGrid::new(1.0, 1.0, 16).unwrap();
    let coeffs = AffineQuadratic {
        drift_x: c,
        diffusion_x: s,
        terminal_x2: 1.0,
        ..Default::default()
    };
    let spec = ProblemSpec::with_constant_history(Arc::new(coeffs), ControlDomain::Real, grid, 1.0, 0.0).unwrap();
    let noise = sample_noise(grid, 8, 20_000).unwrap();
    let (states, first) = solve_first(&spec, &spec.constant_control(0.0), &noise, &AdjointConfig::default()).unwrap();
    let k = grid.steps() / 2;
    let t = k as f64 * grid.dt();
    let factor = ((2.0 * c + s * s) * (1.0 - t)).exp();
    let (mut err, mut norm) = (0.0, 0.0);
    for i in 0..noise.n_paths() {
        let exact = states.at_step(i, k) * factor;
        err += (first.p(i, k) - exact).powi(2);
        norm += exact * exact;
    }
    let rel = (err / norm).sqrt();
    assert!(rel < 0.03, "relative L2 error {rel}");
}

#[test]
fn deterministic_second_adjoint() {
    let oracle = DeterministicOracle::default();
    let grid = TimeGrid::new(1.0, 1.0, 32).unwrap();
    let spec =
        ProblemSpec::with_constant_history(Arc::new(oracle.coefficients()), ControlDomain::Real, grid, 1.0, 0.0).unwrap();
    let noise = sample_noise(grid, 2, 500).unwrap();
    let sol = solve_adjoints(&spec, &spec.constant_control(0.0), &noise, &AdjointConfig::default()).unwrap();
    for k in [0, grid.steps() / 2, grid.steps() - 1] {
        let exact = oracle.second_adjoint(k as f64 * grid.dt());
        let got = sol.second.P(0, k);
        assert!((got / exact - 1.0).abs() < 0.04, "step {k}: {got} vs {exact}");
    }
}

#[test]
fn variational_inequality_at_the_solved_optimum() {
    use delay_smp::forward::{simulate_variations, variational_inequality_lhs};
    use delay_smp::lq::{solve_lq, LqSolveConfig};
    use delay_smp::tolerances::Tolerances;
    use rand::{Rng, SeedableRng};

    let prob = LqProblem::benchmark();
    let grid = prob.grid(4).unwrap();
    let noise = sample_noise(grid, 21, 4_000).unwrap();
    let sol = solve_lq(&prob, grid, &noise, &LqSolveConfig::default()).unwrap();
    let allowance = Tolerances::default().allowance(grid.dt());
    let values = [-3.0, -2.0, -1.5, -1.0, 1.0, 1.5, 2.0, 3.0];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let k = rng.random_range(0..grid.steps());
        let v = values[rng.random_range(0..values.len())];
        let spike = SpikeSpec::new(k as f64 * grid.dt(), grid.dt(), v);
        let var = simulate_variations(&sol.spec, &sol.control, &spike, &noise, &sol.adjoints.states).unwrap();
        let lhs = variational_inequality_lhs(&sol.spec, &sol.control, &spike, &noise, &sol.adjoints.states, &var).unwrap();
        assert!(
            lhs.mean >= -(3.0 * lhs.stderr + allowance),
            "spike at step {k} to {v}: {} +- {}",
            lhs.mean,
            lhs.stderr
        );
    }
}
