use cmpslab_core::bethe;
use cmpslab_core::engine::{self, OptimizerConfig, SingleProblem};
use cmpslab_core::single::ModelParams;
use std::time::Instant;

#[test]
fn calibrate_d6() {
    // D=6 gamma=2 cold with 8 restarts, then warm-chain to a neighbor density
    let params = ModelParams::new(0.5, 2.0, 1.0).unwrap();
    let exact = bethe::energy_density_exact(1.0, &params, 256).unwrap();
    let t0 = Instant::now();
    let problem = SingleProblem::new(params, 6);
    let config = OptimizerConfig { restarts: 8, ..OptimizerConfig::default_single() };
    let r = engine::minimize(&problem, None, &config).unwrap();
    println!("D=6 g2 cold: e={:.9} exact={:.9} rel={:.3e} conv={} iters={} n={:.9} in {:?}",
        r.energy, exact, (r.energy-exact)/exact, r.converged, r.iterations, r.densities[0], t0.elapsed());

    // warm chain to rho=1.03
    let t0 = Instant::now();
    let params2 = ModelParams::new(0.5, 2.0, 1.03).unwrap();
    let exact2 = bethe::energy_density_exact(1.03, &params2, 256).unwrap();
    let problem2 = SingleProblem::new(params2, 6);
    let config2 = OptimizerConfig { restarts: 1, ..OptimizerConfig::default_single() };
    let r2 = engine::minimize(&problem2, Some(&r.point), &config2).unwrap();
    println!("D=6 warm rho=1.03: e={:.9} exact={:.9} rel={:.3e} conv={} iters={} in {:?}",
        r2.energy, exact2, (r2.energy-exact2)/exact2, r2.converged, r2.iterations, t0.elapsed());

    // D=4 gamma=4 (hardest of criterion 2) cold 8 restarts
    let t0 = Instant::now();
    let params4 = ModelParams::new(0.5, 4.0, 1.0).unwrap();
    let exact4 = bethe::energy_density_exact(1.0, &params4, 256).unwrap();
    let problem4 = SingleProblem::new(params4, 4);
    let r4 = engine::minimize(&problem4, None, &config).unwrap();
    println!("D=4 g4 cold: e={:.9} exact={:.9} rel={:.3e} conv={} iters={} in {:?}",
        r4.energy, exact4, (r4.energy-exact4)/exact4, r4.converged, r4.iterations, t0.elapsed());
}
