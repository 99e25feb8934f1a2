use cmpslab_core::engine::{self, OptimizerConfig, SingleProblem};
use cmpslab_core::single::ModelParams;
use std::time::Instant;

#[test]
fn calibrate() {
    // D=1 closed form
    let t0 = Instant::now();
    let params = ModelParams::new(0.5, 1.5, 1.0).unwrap();
    let problem = SingleProblem::new(params, 1);
    let config = OptimizerConfig { restarts: 4, ..OptimizerConfig::default_single() };
    let r = engine::minimize(&problem, None, &config).unwrap();
    println!("D=1: e={:.9} (expect 1.5) n={:.9} conv={} iters={} in {:?}", r.energy, r.densities[0], r.converged, r.iterations, t0.elapsed());

    // D=2 free gas
    let t0 = Instant::now();
    let params = ModelParams::new(0.5, 0.0, 1.0).unwrap();
    let problem = SingleProblem::new(params, 2);
    let r = engine::minimize(&problem, None, &config).unwrap();
    println!("D=2 free: e={:.3e} conv={} iters={} gap={:.3e} in {:?}", r.energy, r.converged, r.iterations, r.gap, t0.elapsed());

    // D=2, gamma=2 vs Bethe
    let t0 = Instant::now();
    let params = ModelParams::new(0.5, 2.0, 1.0).unwrap();
    let problem = SingleProblem::new(params, 2);
    let r = engine::minimize(&problem, None, &config).unwrap();
    let exact = cmpslab_core::bethe::energy_density_exact(1.0, &params, 256).unwrap();
    println!("D=2 g2: e={:.9} exact={:.9} rel={:.3e} conv={} iters={} in {:?}", r.energy, exact, (r.energy-exact)/exact, r.converged, r.iterations, t0.elapsed());

    // D=4, gamma=2 vs Bethe
    let t0 = Instant::now();
    let problem = SingleProblem::new(params, 4);
    let config4 = OptimizerConfig { restarts: 4, ..OptimizerConfig::default_single() };
    let r = engine::minimize(&problem, None, &config4).unwrap();
    println!("D=4 g2: e={:.9} exact={:.9} rel={:.3e} conv={} iters={} in {:?}", r.energy, exact, (r.energy-exact)/exact, r.converged, r.iterations, t0.elapsed());
}
