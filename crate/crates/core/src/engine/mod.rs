//! Density-constrained minimization of the cMPS energy functionals.
//!
//! The particle density (one per species) is a conserved quantity of the
//! models, so it enters as an equality constraint: an augmented-Lagrangian
//! outer loop drives the density residuals to tolerance while a BFGS inner
//! loop with central finite-difference gradients and a backtracking line
//! search minimizes
//!
//! ```text
//! L(v; μ, σ) = e(v) + Σ_α [ μ_α (n_α(v) − ρ₀α) + σ (n_α(v) − ρ₀α)² ]
//! ```
//!
//! Ansatz points where the transfer operator loses its unique steady state
//! are treated as infeasible: the line search rejects the step rather than
//! smoothing over a configuration whose observables are undefined.
//!
//! Restarts and gradient components are evaluated through [`crate::exec`],
//! so they fan out over rayon when the `parallel` feature is on; results
//! are reduced in a fixed order either way, which keeps every run bitwise
//! reproducible for a given seed.

pub mod params;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coupled::{self, CoupledModelParams};
use crate::exec;
use crate::single::{self, ModelParams, StateError};

pub use params::{pack, unpack, AnyAnsatz, Layout, ParamVector};

/// Steady states with a spectral gap below this are rejected as degenerate
/// during optimization.
pub const GAP_REJECT: f64 = 1e-8;
/// Converged results must report a gap above this.
pub const GAP_CONVERGED: f64 = 1e-6;
const MAX_OUTER_STAGES: usize = 20;
const MAX_INIT_DRAWS: usize = 25;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 45;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("infeasible point: {0}")]
    InfeasiblePoint(String),
    #[error("all {0} restarts were infeasible")]
    AllRestartsInfeasible(usize),
    #[error("parameter vector length mismatch: expected {expected}, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("invalid optimizer configuration: {0}")]
    BadConfig(String),
}

impl From<StateError> for EngineError {
    fn from(e: StateError) -> Self {
        EngineError::InfeasiblePoint(e.to_string())
    }
}

/// Knobs of the constrained minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Inner quasi-Newton iteration cap per outer (multiplier) stage.
    pub max_iters: usize,
    /// Central finite-difference step on the parameter scale.
    pub grad_step: f64,
    /// Relative objective-decrease threshold treated as inner convergence.
    pub energy_tol: f64,
    /// Maximum |⟨n⟩ − ρ₀| accepted at convergence.
    pub constraint_tol: f64,
    /// Initial quadratic penalty weight σ.
    pub penalty_init: f64,
    /// Multiplicative σ growth when a stage makes poor constraint progress.
    pub penalty_growth: f64,
    /// Independent restarts; the best feasible result wins.
    pub restarts: usize,
    /// Seed for initialization; every restart derives its own substream.
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn default_single() -> Self {
        Self {
            max_iters: 500,
            grad_step: 1e-5,
            energy_tol: 1e-11,
            constraint_tol: 1e-8,
            penalty_init: 10.0,
            penalty_growth: 5.0,
            restarts: 8,
            seed: 7,
        }
    }

    pub fn default_coupled() -> Self {
        Self { restarts: 4, ..Self::default_single() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let positive = self.max_iters > 0
            && self.grad_step > 0.0
            && self.energy_tol > 0.0
            && self.constraint_tol > 0.0
            && self.penalty_init > 0.0
            && self.restarts > 0;
        if !positive {
            return Err(EngineError::BadConfig("all sizes and tolerances must be positive".into()));
        }
        if self.penalty_growth <= 1.0 {
            return Err(EngineError::BadConfig("penalty_growth must exceed 1".into()));
        }
        Ok(())
    }

    fn grad_tol(&self) -> f64 {
        0.5 * self.energy_tol.sqrt()
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::default_single()
    }
}

/// Multiplier/penalty state of the augmented Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub mu: Vec<f64>,
    pub sigma: f64,
}

impl PenaltyState {
    pub fn fresh(n_constraints: usize, sigma: f64) -> Self {
        Self { mu: vec![0.0; n_constraints], sigma }
    }
}

/// Energy, densities and steady-state gap at one parameter point.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub energy: f64,
    pub densities: Vec<f64>,
    pub gap: f64,
}

/// A concrete minimization target: evaluation plus constraint targets.
pub trait Problem: Sync {
    fn layout(&self) -> Layout;
    fn density_targets(&self) -> Vec<f64>;
    fn eval_values(&self, values: &[f64]) -> Result<PointEval, EngineError>;
}

/// Single-field ground-state search at fixed model parameters.
#[derive(Debug, Clone, Copy)]
pub struct SingleProblem {
    pub params: ModelParams,
    pub bond_dim: usize,
    pub null_tol: f64,
}

impl SingleProblem {
    pub fn new(params: ModelParams, bond_dim: usize) -> Self {
        Self { params, bond_dim, null_tol: crate::kernel::DEFAULT_NULL_TOL }
    }
}

impl Problem for SingleProblem {
    fn layout(&self) -> Layout {
        Layout::Single { d: self.bond_dim }
    }

    fn density_targets(&self) -> Vec<f64> {
        vec![self.params.rho0]
    }

    fn eval_values(&self, values: &[f64]) -> Result<PointEval, EngineError> {
        let v = ParamVector::new(values.to_vec(), self.layout())?;
        let AnyAnsatz::Single(ansatz) = unpack(&v)? else { unreachable!() };
        let eval = single::evaluate(&ansatz, &self.params, self.null_tol)?;
        reject_tiny_gap(eval.gap)?;
        Ok(PointEval { energy: eval.energy, densities: vec![eval.density], gap: eval.gap })
    }
}

/// Coupled two-species ground-state search at fixed model parameters.
#[derive(Debug, Clone, Copy)]
pub struct CoupledProblem {
    pub params: CoupledModelParams,
    pub bond_dim: usize,
    pub pairs: usize,
    pub null_tol: f64,
}

impl CoupledProblem {
    pub fn new(params: CoupledModelParams, bond_dim: usize, pairs: usize) -> Self {
        Self { params, bond_dim, pairs, null_tol: crate::kernel::DEFAULT_NULL_TOL }
    }
}

impl Problem for CoupledProblem {
    fn layout(&self) -> Layout {
        Layout::Coupled { d: self.bond_dim, pairs: self.pairs }
    }

    fn density_targets(&self) -> Vec<f64> {
        vec![self.params.rho01, self.params.rho02]
    }

    fn eval_values(&self, values: &[f64]) -> Result<PointEval, EngineError> {
        let v = ParamVector::new(values.to_vec(), self.layout())?;
        let AnyAnsatz::Coupled(ansatz) = unpack(&v)? else { unreachable!() };
        let eval = coupled::evaluate(&ansatz, &self.params, self.null_tol)?;
        reject_tiny_gap(eval.gap)?;
        Ok(PointEval {
            energy: eval.energy,
            densities: vec![eval.obs.n1, eval.obs.n2],
            gap: eval.gap,
        })
    }
}

fn reject_tiny_gap(gap: f64) -> Result<(), EngineError> {
    if gap < GAP_REJECT {
        return Err(EngineError::InfeasiblePoint(format!(
            "steady-state gap {gap:.3e} below {GAP_REJECT:.0e}"
        )));
    }
    Ok(())
}

/// Augmented-Lagrangian value at a parameter point.
pub fn objective<P: Problem>(
    problem: &P,
    values: &[f64],
    penalty: &PenaltyState,
) -> Result<f64, EngineError> {
    let eval = problem.eval_values(values)?;
    let targets = problem.density_targets();
    let mut total = eval.energy;
    for (i, (&n, &t)) in eval.densities.iter().zip(&targets).enumerate() {
        let c = n - t;
        total += penalty.mu[i] * c + penalty.sigma * c * c;
    }
    if !total.is_finite() {
        return Err(EngineError::InfeasiblePoint("non-finite objective".into()));
    }
    Ok(total)
}

/// Central finite-difference gradient of the augmented Lagrangian,
/// component i = (f(v+h·eᵢ) − f(v−h·eᵢ))/(2h). Components are evaluated
/// independently (in parallel when enabled); any failing probe makes the
/// whole gradient an `InfeasiblePoint` error.
pub fn gradient_fd<P: Problem>(
    problem: &P,
    values: &[f64],
    penalty: &PenaltyState,
    h: f64,
) -> Result<Vec<f64>, EngineError> {
    let comps = exec::par_map_indices(values.len(), |i| {
        let mut probe = values.to_vec();
        probe[i] = values[i] + h;
        let fp = objective(problem, &probe, penalty)?;
        probe[i] = values[i] - h;
        let fm = objective(problem, &probe, penalty)?;
        Ok::<f64, EngineError>((fp - fm) / (2.0 * h))
    });
    comps.into_iter().collect()
}

/// Best point found by one minimization run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    /// Optimized parameters.
    pub point: ParamVector,
    /// Energy density at the returned point.
    pub energy: f64,
    /// Densities ⟨n_α⟩ at the returned point.
    pub densities: Vec<f64>,
    /// |⟨n_α⟩ − ρ₀α| at the returned point.
    pub constraint_residuals: Vec<f64>,
    /// Accumulated inner iterations.
    pub iterations: usize,
    /// Constraints met, inner loop converged, gap healthy.
    pub converged: bool,
    /// Steady-state spectral gap at the returned point.
    pub gap: f64,
}

impl OptimResult {
    pub fn ansatz(&self) -> AnyAnsatz {
        unpack(&self.point).expect("stored point matches its layout")
    }
}

struct InnerOutcome {
    values: Vec<f64>,
    iterations: usize,
    converged: bool,
    h_inv: Array2<f64>,
}

/// BFGS with backtracking Armijo line search on a fixed penalty state.
/// Accepted steps never increase the objective. A gradient failure or a
/// stalled line search ends the loop at the best point reached.
fn quasi_newton<P: Problem>(
    problem: &P,
    start: Vec<f64>,
    penalty: &PenaltyState,
    config: &OptimizerConfig,
    tol_relax: f64,
    h_init: Option<Array2<f64>>,
) -> Result<InnerOutcome, EngineError> {
    let n = start.len();
    let mut v = Array1::from_vec(start);
    let mut f = objective(problem, v.as_slice().unwrap(), penalty)?;
    let mut h_inv: Array2<f64> = h_init.unwrap_or_else(|| Array2::eye(n));
    let mut g = match gradient_fd(problem, v.as_slice().unwrap(), penalty, config.grad_step) {
        Ok(g) => Array1::from_vec(g),
        Err(_) => {
            return Ok(InnerOutcome { values: v.to_vec(), iterations: 0, converged: false, h_inv })
        }
    };
    let grad_tol = config.grad_tol() * tol_relax;
    let mut flat_steps = 0usize;

    for iter in 0..config.max_iters {
        let g_norm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if g_norm <= grad_tol {
            return Ok(InnerOutcome { values: v.to_vec(), iterations: iter, converged: true, h_inv });
        }

        let mut direction = -h_inv.dot(&g);
        let mut slope: f64 = direction.dot(&g);
        if !(slope < 0.0) {
            // curvature information went bad; restart from steepest descent
            h_inv = Array2::eye(n);
            direction = -g.clone();
            slope = direction.dot(&g);
        }

        // backtracking line search
        let mut step = 1.0f64;
        let mut accepted: Option<(Array1<f64>, f64)> = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = &v + &direction.mapv(|x| x * step);
            match objective(problem, candidate.as_slice().unwrap(), penalty) {
                Ok(fc) if fc <= f + ARMIJO_C1 * step * slope => {
                    accepted = Some((candidate, fc));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((v_new, f_new)) = accepted else {
            // no acceptable step along this direction
            return Ok(InnerOutcome { values: v.to_vec(), iterations: iter, converged: false, h_inv });
        };

        let g_new = match gradient_fd(problem, v_new.as_slice().unwrap(), penalty, config.grad_step)
        {
            Ok(g) => Array1::from_vec(g),
            Err(_) => {
                return Ok(InnerOutcome {
                    values: v_new.to_vec(),
                    iterations: iter + 1,
                    converged: false,
                    h_inv,
                })
            }
        };

        // BFGS inverse-Hessian update
        let s = &v_new - &v;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.dot(&s).sqrt() * y.dot(&y).sqrt() {
            let rho = 1.0 / sy;
            let hy = h_inv.dot(&y);
            let yhy = y.dot(&hy);
            // H ← H − ρ(s yᵀH + Hy sᵀ) + ρ²(yᵀHy)s sᵀ + ρ s sᵀ
            let s_col = s.view().insert_axis(ndarray::Axis(1));
            let hy_col = hy.view().insert_axis(ndarray::Axis(1));
            let term1 = s_col.dot(&hy_col.t()).mapv(|x| x * rho);
            let term2 = hy_col.dot(&s_col.t()).mapv(|x| x * rho);
            let term3 = s_col.dot(&s_col.t()).mapv(|x| x * (rho * rho * yhy + rho));
            h_inv = h_inv - term1 - term2 + term3;
        }

        let df = (f - f_new).abs();
        if df <= tol_relax * config.energy_tol * (1.0 + f_new.abs()) {
            flat_steps += 1;
            if flat_steps >= 2 {
                return Ok(InnerOutcome {
                    values: v_new.to_vec(),
                    iterations: iter + 1,
                    converged: true,
                    h_inv,
                });
            }
        } else {
            flat_steps = 0;
        }

        v = v_new;
        f = f_new;
        g = g_new;
    }
    Ok(InnerOutcome { values: v.to_vec(), iterations: config.max_iters, converged: false, h_inv })
}

struct SolveOutcome {
    values: Vec<f64>,
    eval: PointEval,
    iterations: usize,
    converged: bool,
}

/// Full augmented-Lagrangian solve from one starting point.
fn solve_one<P: Problem>(
    problem: &P,
    start: Vec<f64>,
    config: &OptimizerConfig,
) -> Result<SolveOutcome, EngineError> {
    let targets = problem.density_targets();
    let mut penalty = PenaltyState::fresh(targets.len(), config.penalty_init);
    let mut values = start;
    let mut iterations = 0usize;
    let mut prev_violation = f64::INFINITY;
    let mut converged = false;
    let mut h_carry: Option<Array2<f64>> = None;

    for stage in 0..MAX_OUTER_STAGES {
        // early multiplier stages only need a rough minimizer
        let tol_relax = match stage {
            0 => 100.0,
            1 => 10.0,
            _ => 1.0,
        };
        let inner = quasi_newton(problem, values.clone(), &penalty, config, tol_relax, h_carry.take())?;
        values = inner.values;
        iterations += inner.iterations;
        h_carry = Some(inner.h_inv);
        let eval = problem.eval_values(&values)?;
        let violation = eval
            .densities
            .iter()
            .zip(&targets)
            .map(|(n, t)| (n - t).abs())
            .fold(0.0f64, f64::max);
        if violation <= config.constraint_tol && inner.converged && tol_relax == 1.0 {
            converged = true;
            break;
        }
        for (mu, (n, t)) in penalty.mu.iter_mut().zip(eval.densities.iter().zip(&targets)) {
            *mu += 2.0 * penalty.sigma * (n - t);
        }
        if violation > 0.25 * prev_violation {
            penalty.sigma *= config.penalty_growth;
            // the quadratic-penalty curvature just changed; drop stale curvature
            h_carry = None;
        }
        prev_violation = violation;
        if penalty.sigma > 1e14 || (!inner.converged && inner.iterations == 0) {
            break;
        }
    }

    let eval = problem.eval_values(&values)?;
    if eval.gap <= GAP_CONVERGED {
        converged = false;
    }
    Ok(SolveOutcome { values, eval, iterations, converged })
}

/// Draw a random starting point: Hermitian-block and R entries uniform in
/// [−0.5, 0.5], then the R blocks rescaled until the initial densities land
/// within 20% of their targets.
fn random_start<P: Problem>(problem: &P, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, EngineError> {
    let layout = problem.layout();
    let targets = problem.density_targets();
    'draws: for _ in 0..MAX_INIT_DRAWS {
        let mut values: Vec<f64> =
            (0..layout.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
        for _ in 0..12 {
            let eval = match problem.eval_values(&values) {
                Ok(e) => e,
                Err(_) => continue 'draws,
            };
            let mut worst = 0.0f64;
            for (r_range, (&n, &t)) in
                layout.r_block_ranges().into_iter().zip(eval.densities.iter().zip(&targets))
            {
                if !(n > 1e-12) {
                    continue 'draws;
                }
                let rel = (n - t).abs() / t;
                worst = worst.max(rel);
                if rel > 0.2 {
                    let scale = (t / n).sqrt();
                    for x in &mut values[r_range] {
                        *x *= scale;
                    }
                }
            }
            if worst <= 0.2 {
                return Ok(values);
            }
        }
    }
    Err(EngineError::InfeasiblePoint("no feasible random start found".into()))
}

/// Derive an independent, reproducible seed for a numbered substream
/// (restart, sweep point, run unit) from a base seed.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Minimize the constrained energy, best result over `config.restarts`
/// independent starts (run in parallel when enabled). When `initial` is
/// given it seeds the first restart verbatim; the rest draw random starts.
///
/// Identical config and seed give a bitwise-identical result.
pub fn minimize<P: Problem>(
    problem: &P,
    initial: Option<&ParamVector>,
    config: &OptimizerConfig,
) -> Result<OptimResult, EngineError> {
    config.validate()?;
    let layout = problem.layout();
    if let Some(v) = initial {
        if v.layout != layout || v.values.len() != layout.param_count() {
            return Err(EngineError::LayoutMismatch {
                expected: layout.param_count(),
                got: v.values.len(),
            });
        }
    }

    let attempts = exec::par_map_indices(config.restarts, |r| {
        let start = if r == 0 {
            if let Some(v) = initial {
                Ok(v.values.clone())
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, r as u64));
                random_start(problem, &mut rng)
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, r as u64));
            random_start(problem, &mut rng)
        };
        start.and_then(|s| solve_one(problem, s, config))
    });

    let mut best: Option<(usize, SolveOutcome)> = None;
    for (idx, attempt) in attempts.into_iter().enumerate() {
        let Ok(outcome) = attempt else { continue };
        let better = match &best {
            None => true,
            Some((_, cur)) => {
                (outcome.converged, -outcome.eval.energy) > (cur.converged, -cur.eval.energy)
            }
        };
        if better {
            best = Some((idx, outcome));
        }
    }
    let Some((_, outcome)) = best else {
        return Err(EngineError::AllRestartsInfeasible(config.restarts));
    };

    let targets = problem.density_targets();
    let residuals: Vec<f64> = outcome
        .eval
        .densities
        .iter()
        .zip(&targets)
        .map(|(n, t)| (n - t).abs())
        .collect();
    Ok(OptimResult {
        point: ParamVector::new(outcome.values, layout)?,
        energy: outcome.eval.energy,
        densities: outcome.eval.densities,
        constraint_residuals: residuals,
        iterations: outcome.iterations,
        converged: outcome.converged,
        gap: outcome.eval.gap,
    })
}

/// Assemble a coupled starting vector from two optimized single-field
/// results of equal bond dimension: the K and R blocks are copied verbatim
/// and the Z blocks are seeded with zero-mean entries of the given
/// magnitude (`noise = 0` embeds the decoupled product state exactly).
pub fn warm_start_coupled(
    first: &OptimResult,
    second: &OptimResult,
    pairs: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ParamVector, EngineError> {
    let (Layout::Single { d: d1 }, Layout::Single { d: d2 }) =
        (first.point.layout, second.point.layout)
    else {
        return Err(EngineError::BadConfig("warm start needs two single-field results".into()));
    };
    if d1 != d2 {
        return Err(EngineError::BadConfig(format!(
            "warm start needs equal bond dimensions, got {d1} and {d2}"
        )));
    }
    let d = d1;
    let dd = d * d;
    let layout = Layout::Coupled { d, pairs };
    let mut values = Vec::with_capacity(layout.param_count());
    values.extend_from_slice(&first.point.values[..dd]); // K1
    values.extend_from_slice(&second.point.values[..dd]); // K2
    values.extend_from_slice(&first.point.values[dd..]); // R1
    values.extend_from_slice(&second.point.values[dd..]); // R2
    for _ in 0..2 * pairs * dd {
        values.push(if noise == 0.0 { 0.0 } else { rng.random_range(-noise..noise) });
    }
    ParamVector::new(values, layout)
}

/// Enlarge a single-field result to a bigger bond dimension, as a
/// structured warm start for the optimizer.
///
/// The old matrices occupy the leading block; the new ancilla levels get
/// drain-only couplings (noise in the new columns of R, none in the new
/// rows) so the transfer operator keeps a unique steady state. The
/// enlarged point is not the same physical state — a reducible embedding
/// cannot have a unique fixed point, and any irreducible border mixes in
/// the new levels at order one — but it retains the optimized block, which
/// in practice puts the search in the right basin.
pub fn inflate_single(
    result: &OptimResult,
    d_new: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ParamVector, EngineError> {
    let Layout::Single { d } = result.point.layout else {
        return Err(EngineError::BadConfig("inflate needs a single-field result".into()));
    };
    if d_new < d {
        return Err(EngineError::BadConfig(format!(
            "target bond dimension {d_new} below current {d}"
        )));
    }
    let AnyAnsatz::Single(old) = unpack(&result.point)? else { unreachable!() };
    fn draw(rng: &mut ChaCha8Rng, scale: f64) -> num_complex::Complex64 {
        num_complex::Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
    }
    // K: old block kept, new diagonal block random Hermitian, cross blocks zero
    let mut k: crate::kernel::CMat = Array2::zeros((d_new, d_new));
    for i in 0..d {
        for j in 0..d {
            k[[i, j]] = old.k()[[i, j]];
        }
    }
    for i in d..d_new {
        for j in d..i + 1 {
            let z = if i == j {
                num_complex::Complex64::new(rng.random_range(-noise..noise), 0.0)
            } else {
                draw(rng, noise)
            };
            k[[i, j]] = z;
            k[[j, i]] = z.conj();
        }
    }
    // R: old block kept, new columns noisy, new rows zero below the old block
    let mut r: crate::kernel::CMat = Array2::zeros((d_new, d_new));
    for i in 0..d {
        for j in 0..d {
            r[[i, j]] = old.r()[[i, j]];
        }
    }
    for i in 0..d_new {
        for j in d..d_new {
            if i < d || i >= j {
                r[[i, j]] = draw(rng, noise);
            }
        }
    }
    let ansatz = crate::single::CmpsAnsatz::new(k, r)?;
    Ok(pack(&AnyAnsatz::Single(ansatz)))
}
