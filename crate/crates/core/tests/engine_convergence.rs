//! Optimizer behavior on problems with independently known answers.

use cmpslab_core::coupled::CoupledModelParams;
use cmpslab_core::engine::{
    self, gradient_fd, minimize, objective, CoupledProblem, OptimizerConfig, PenaltyState,
    Problem, SingleProblem,
};
use cmpslab_core::single::ModelParams;
use rand::SeedableRng;

fn lean(restarts: usize, seed: u64) -> OptimizerConfig {
    OptimizerConfig { restarts, seed, ..OptimizerConfig::default_single() }
}

#[test]
fn d1_single_reaches_closed_form() {
    let params = ModelParams::new(0.5, 1.5, 1.0).unwrap();
    let problem = SingleProblem::new(params, 1);
    let r = minimize(&problem, None, &lean(4, 11)).unwrap();
    assert!(r.converged);
    let expect = params.c * params.rho0 * params.rho0;
    assert!(
        (r.energy - expect).abs() / expect < 1e-6,
        "e = {}, closed form = {expect}",
        r.energy
    );
    assert!(r.constraint_residuals[0] < 1e-6);
}

#[test]
fn d1_coupled_reaches_closed_form() {
    let params = CoupledModelParams::new(0.5, 1.5, 0.9, 0.63, 0.81).unwrap();
    let problem = CoupledProblem::new(params, 1, 2);
    let r = minimize(&problem, None, &lean(4, 13)).unwrap();
    assert!(r.converged);
    let expect = params.c * (params.rho01.powi(2) + params.rho02.powi(2))
        + params.g * params.rho01 * params.rho02;
    assert!(
        (r.energy - expect).abs() / expect < 1e-6,
        "e = {}, closed form = {expect}",
        r.energy
    );
}

#[test]
fn free_gas_has_zero_energy() {
    let params = ModelParams::new(0.5, 0.0, 0.8).unwrap();
    let problem = SingleProblem::new(params, 2);
    let r = minimize(&problem, None, &lean(4, 17)).unwrap();
    assert!(r.converged);
    assert!(r.energy.abs() < 1e-6, "free gas energy {}", r.energy);
}

#[test]
fn gradient_matches_richardson_estimate() {
    // four-point stencil as the higher-order oracle
    let params = ModelParams::new(0.5, 2.0, 1.0).unwrap();
    let problem = SingleProblem::new(params, 2);
    let r = minimize(&problem, None, &lean(2, 19)).unwrap();
    let v = &r.point.values;
    let penalty = PenaltyState { mu: vec![-1.3], sigma: 25.0 };
    let h = 1e-4;
    let g2 = gradient_fd(&problem, v, &penalty, h).unwrap();
    for i in 0..v.len() {
        let probe = |delta: f64| {
            let mut p = v.clone();
            p[i] += delta;
            objective(&problem, &p, &penalty).unwrap()
        };
        let g4 = (probe(-2.0 * h) - 8.0 * probe(-h) + 8.0 * probe(h) - probe(2.0 * h)) / (12.0 * h);
        let scale = g4.abs().max(1.0);
        assert!(
            (g2[i] - g4).abs() / scale < 1e-5,
            "component {i}: central {} vs richardson {}",
            g2[i],
            g4
        );
    }
}

#[test]
fn gradient_vanishes_at_d1_optimum() {
    // constrained optimum of e = c n² at n = ρ₀ has multiplier μ* = −2cρ₀
    let params = ModelParams::new(0.5, 1.5, 1.0).unwrap();
    let problem = SingleProblem::new(params, 1);
    let r = minimize(&problem, None, &lean(4, 23)).unwrap();
    let penalty = PenaltyState { mu: vec![-2.0 * params.c * params.rho0], sigma: 0.0 };
    let g = gradient_fd(&problem, &r.point.values, &penalty, 1e-5).unwrap();
    let norm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(norm < 1e-4, "gradient norm {norm}");
}

#[test]
fn warm_start_embeds_decoupled_solution() {
    let params = ModelParams::new(0.5, 1.5, 0.63).unwrap();
    let problem = SingleProblem::new(params, 2);
    let single = minimize(&problem, None, &lean(4, 29)).unwrap();
    assert!(single.converged);

    let pairs = 2;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let warm = engine::warm_start_coupled(&single, &single, pairs, 0.0, &mut rng).unwrap();
    assert_eq!(warm.values.len(), (6 + 2 * pairs) * 4);

    // with Z = 0 and g = 0 the embedded point reproduces e₁ + e₂
    let coupled_params = CoupledModelParams::new(0.5, 1.5, 0.0, 0.63, 0.63).unwrap();
    let coupled_problem = CoupledProblem::new(coupled_params, 2, pairs);
    let eval = coupled_problem.eval_values(&warm.values).unwrap();
    let expect = 2.0 * single.energy;
    assert!(
        (eval.energy - expect).abs() <= 1e-9 * expect.abs().max(1.0),
        "embedded energy {} vs {}",
        eval.energy,
        expect
    );
}

#[test]
fn warm_start_accelerates_small_coupling() {
    // median iteration count over 5 seeds, warm vs cold, g = 0.1
    let single_params = ModelParams::new(0.5, 1.5, 0.63).unwrap();
    let coupled_params = CoupledModelParams::new(0.5, 1.5, 0.1, 0.63, 0.63).unwrap();
    let pairs = 1;
    let mut warm_iters = Vec::new();
    let mut cold_iters = Vec::new();
    for seed in 0..5u64 {
        let sp = SingleProblem::new(single_params, 2);
        let single = minimize(&sp, None, &lean(2, 100 + seed)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let warm = engine::warm_start_coupled(&single, &single, pairs, 1e-2, &mut rng).unwrap();
        let cp = CoupledProblem::new(coupled_params, 2, pairs);
        let warm_run = minimize(&cp, Some(&warm), &lean(1, 200 + seed)).unwrap();
        let cold_run = minimize(&cp, None, &lean(1, 300 + seed)).unwrap();
        warm_iters.push(warm_run.iterations);
        cold_iters.push(cold_run.iterations);
    }
    warm_iters.sort_unstable();
    cold_iters.sort_unstable();
    assert!(
        warm_iters[2] < cold_iters[2],
        "median warm {warm_iters:?} vs cold {cold_iters:?}"
    );
}

#[test]
fn identical_seed_reproduces_bitwise() {
    let params = ModelParams::new(0.5, 2.0, 1.0).unwrap();
    let problem = SingleProblem::new(params, 2);
    let config = lean(3, 41);
    let a = minimize(&problem, None, &config).unwrap();
    let b = minimize(&problem, None, &config).unwrap();
    assert_eq!(a.energy.to_bits(), b.energy.to_bits());
    assert_eq!(a.iterations, b.iterations);
    assert!(a
        .point
        .values
        .iter()
        .zip(&b.point.values)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn inflate_seeds_a_better_larger_class() {
    let params = ModelParams::new(0.5, 2.0, 1.0).unwrap();
    let small = minimize(&SingleProblem::new(params, 2), None, &lean(4, 43)).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let start = engine::inflate_single(&small, 3, 1e-2, &mut rng).unwrap();
    let big_problem = SingleProblem::new(params, 3);
    // the enlarged point must be a feasible-to-evaluate configuration
    let at_start = big_problem.eval_values(&start.values).unwrap();
    assert!(at_start.gap > 1e-8 && at_start.energy.is_finite());
    // the richer class, warm-started from the embedding, does at least as
    // well as the smaller optimum
    let big = minimize(&big_problem, Some(&start), &lean(2, 47)).unwrap();
    assert!(big.converged);
    assert!(big.energy <= small.energy + 1e-8, "D=3 {} vs D=2 {}", big.energy, small.energy);
}
