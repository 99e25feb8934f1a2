//! Energy-density surfaces from optimization sweeps, and the extraction of
//! Luttinger-liquid parameters from their second derivatives.
//!
//! For a single gas the sound velocity and dimensionless parameter follow
//! from the curvature of the ground-state energy density at the target
//! density,
//!
//! ```text
//! v² = (ρ₀/M)·e₀''(ρ₀)        K² = (π²ρ₀/M)/e₀''(ρ₀)
//! ```
//!
//! so v·K = πρ₀/M identically. For two coupled species at equal filling the
//! same relations apply per normal mode, with the curvature taken along the
//! (1,±1)/√2 directions of (ρ₁, ρ₂) space and an extra factor of two:
//! v±² = (2ρ_ref/M)·∂²e₀/∂ρ±² and K±² = (π²ρ_ref/2M)/(∂²e₀/∂ρ±²), giving
//! v±·K± = πρ_ref/M. The reference density ρ_ref entering the normal-mode
//! relations is ambiguous at equal filling; it is selected by an explicit
//! [`RhoRefPolicy`] and reported alongside every result.

use thiserror::Error;

use crate::coupled::CoupledModelParams;
use crate::engine::{
    self, minimize, EngineError, OptimResult, OptimizerConfig, SingleProblem,
};
use crate::single::ModelParams;
use crate::spline::{BicubicSpline, CubicSpline, SplineError};

/// Minimum samples per axis for a trusted surface.
pub const MIN_SAMPLES: usize = 9;
/// Required half-width of the sampled window, as a fraction of the target.
pub const MIN_SPAN_FRACTION: f64 = 0.15;

#[derive(Debug, Error)]
pub enum LuttingerError {
    #[error("sweep failed at densities {failed:?}")]
    SweepPointFailed { failed: Vec<f64> },
    #[error("surface needs at least {needed} samples per axis, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples span [{lo}, {hi}] but ±15% around {target} is required")]
    SpanTooNarrow { lo: f64, hi: f64, target: f64 },
    #[error("surface contains unconverged samples")]
    UnconvergedSamples,
    #[error("densities must be sorted, positive and distinct")]
    BadGrid,
    #[error("second derivative {0:.6e} is not positive; no stable Luttinger description")]
    NegativeCompressibility(f64),
    #[error("coupled extraction requires equal filling, got {rho01} and {rho02}")]
    UnequalFilling { rho01: f64, rho02: f64 },
    #[error("direction {0:?} not available on a {1}-dimensional surface")]
    BadDirection(Direction, usize),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One optimized sweep sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    /// Density coordinates (one entry per species).
    pub densities: Vec<f64>,
    pub energy: f64,
    pub converged: bool,
    pub gap: f64,
}

/// Differentiation direction for [`EnergySurface::second_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// d²e/dρ² of a one-dimensional surface.
    Density,
    /// ∂²e/∂ρ₁² of a two-dimensional surface.
    Rho1,
    /// ∂²e/∂ρ₂².
    Rho2,
    /// Along (1, 1)/√2: the symmetric (charge) normal mode.
    NormalPlus,
    /// Along (1, −1)/√2: the antisymmetric (spin) normal mode.
    NormalMinus,
}

/// Sampled and splined e₀(ρ) or e₀(ρ₁, ρ₂).
#[derive(Debug, Clone)]
pub enum EnergySurface {
    One {
        points: Vec<SurfacePoint>,
        spline: CubicSpline,
    },
    Two {
        rho1_nodes: Vec<f64>,
        rho2_nodes: Vec<f64>,
        /// Row-major over (rho1, rho2) nodes.
        points: Vec<SurfacePoint>,
        spline: BicubicSpline,
    },
}

fn check_axis(nodes: &[f64], target: f64) -> Result<(), LuttingerError> {
    if nodes.len() < MIN_SAMPLES {
        return Err(LuttingerError::TooFewSamples { needed: MIN_SAMPLES, got: nodes.len() });
    }
    if nodes.windows(2).any(|w| w[1] <= w[0]) || nodes[0] <= 0.0 {
        return Err(LuttingerError::BadGrid);
    }
    let (lo, hi) = (nodes[0], *nodes.last().unwrap());
    let slack = 1e-9 * target;
    if lo > target * (1.0 - MIN_SPAN_FRACTION) + slack || hi < target * (1.0 + MIN_SPAN_FRACTION) - slack {
        return Err(LuttingerError::SpanTooNarrow { lo, hi, target });
    }
    Ok(())
}

impl EnergySurface {
    /// Build a 1D surface around target density `rho_ref`. Samples must be
    /// sorted, converged, at least [`MIN_SAMPLES`] of them, and span at
    /// least ±15% of the target.
    pub fn from_points_1d(points: Vec<SurfacePoint>, rho_ref: f64) -> Result<Self, LuttingerError> {
        let nodes: Vec<f64> = points.iter().map(|p| p.densities[0]).collect();
        check_axis(&nodes, rho_ref)?;
        if points.iter().any(|p| !p.converged) {
            return Err(LuttingerError::UnconvergedSamples);
        }
        let energies: Vec<f64> = points.iter().map(|p| p.energy).collect();
        let spline = CubicSpline::new(&nodes, &energies)?;
        Ok(EnergySurface::One { points, spline })
    }

    /// Build a 2D surface on the tensor grid rho1 × rho2 from row-major
    /// samples, validated per axis against the respective target.
    pub fn from_points_2d(
        rho1_nodes: Vec<f64>,
        rho2_nodes: Vec<f64>,
        points: Vec<SurfacePoint>,
        targets: (f64, f64),
    ) -> Result<Self, LuttingerError> {
        check_axis(&rho1_nodes, targets.0)?;
        check_axis(&rho2_nodes, targets.1)?;
        if points.len() != rho1_nodes.len() * rho2_nodes.len() {
            return Err(LuttingerError::BadGrid);
        }
        if points.iter().any(|p| !p.converged) {
            return Err(LuttingerError::UnconvergedSamples);
        }
        let mut values = ndarray::Array2::<f64>::zeros((rho1_nodes.len(), rho2_nodes.len()));
        for (idx, p) in points.iter().enumerate() {
            let (i, j) = (idx / rho2_nodes.len(), idx % rho2_nodes.len());
            values[[i, j]] = p.energy;
        }
        let spline = BicubicSpline::new(&rho1_nodes, &rho2_nodes, &values)?;
        Ok(EnergySurface::Two { rho1_nodes, rho2_nodes, points, spline })
    }

    pub fn dims(&self) -> usize {
        match self {
            EnergySurface::One { .. } => 1,
            EnergySurface::Two { .. } => 2,
        }
    }

    pub fn points(&self) -> &[SurfacePoint] {
        match self {
            EnergySurface::One { points, .. } => points,
            EnergySurface::Two { points, .. } => points,
        }
    }

    /// Interpolated energy at a density point.
    pub fn value(&self, at: &[f64]) -> Result<f64, LuttingerError> {
        match self {
            EnergySurface::One { spline, .. } => Ok(spline.value(at[0])?),
            EnergySurface::Two { spline, .. } => Ok(spline.evaluate(at[0], at[1])?.value),
        }
    }

    /// Analytic second derivative of the interpolant along `direction`.
    pub fn second_derivative(&self, at: &[f64], direction: Direction) -> Result<f64, LuttingerError> {
        match (self, direction) {
            (EnergySurface::One { spline, .. }, Direction::Density) => Ok(spline.deriv2(at[0])?),
            (EnergySurface::One { .. }, d) => Err(LuttingerError::BadDirection(d, 1)),
            (EnergySurface::Two { .. }, Direction::Density) => {
                Err(LuttingerError::BadDirection(Direction::Density, 2))
            }
            (EnergySurface::Two { spline, .. }, d) => {
                let parts = spline.evaluate(at[0], at[1])?;
                Ok(match d {
                    Direction::Rho1 => parts.dxx,
                    Direction::Rho2 => parts.dyy,
                    Direction::NormalPlus => 0.5 * (parts.dxx + parts.dyy) + parts.dxy,
                    Direction::NormalMinus => 0.5 * (parts.dxx + parts.dyy) - parts.dxy,
                    Direction::Density => unreachable!(),
                })
            }
        }
    }

    /// Same surface rebuilt on every other node (endpoints kept), used to
    /// estimate the interpolation uncertainty of derived quantities.
    fn decimated(&self) -> Option<EnergySurface> {
        fn thin(n: usize) -> Vec<usize> {
            let mut keep: Vec<usize> = (0..n).step_by(2).collect();
            if keep.last() != Some(&(n - 1)) {
                keep.push(n - 1);
            }
            keep
        }
        match self {
            EnergySurface::One { points, .. } => {
                let keep = thin(points.len());
                if keep.len() < 4 {
                    return None;
                }
                let nodes: Vec<f64> = keep.iter().map(|&i| points[i].densities[0]).collect();
                let energies: Vec<f64> = keep.iter().map(|&i| points[i].energy).collect();
                let spline = CubicSpline::new(&nodes, &energies).ok()?;
                let points = keep.iter().map(|&i| points[i].clone()).collect();
                Some(EnergySurface::One { points, spline })
            }
            EnergySurface::Two { rho1_nodes, rho2_nodes, points, .. } => {
                let (keep1, keep2) = (thin(rho1_nodes.len()), thin(rho2_nodes.len()));
                if keep1.len() < 4 || keep2.len() < 4 {
                    return None;
                }
                let n1: Vec<f64> = keep1.iter().map(|&i| rho1_nodes[i]).collect();
                let n2: Vec<f64> = keep2.iter().map(|&j| rho2_nodes[j]).collect();
                let mut values = ndarray::Array2::<f64>::zeros((keep1.len(), keep2.len()));
                let mut kept = Vec::with_capacity(keep1.len() * keep2.len());
                for (a, &i) in keep1.iter().enumerate() {
                    for (b, &j) in keep2.iter().enumerate() {
                        let p = &points[i * rho2_nodes.len() + j];
                        values[[a, b]] = p.energy;
                        kept.push(p.clone());
                    }
                }
                let spline = BicubicSpline::new(&n1, &n2, &values).ok()?;
                Some(EnergySurface::Two {
                    rho1_nodes: n1,
                    rho2_nodes: n2,
                    points: kept,
                    spline,
                })
            }
        }
    }
}

/// Which normal mode (or the single-gas channel) a result describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Single,
    Plus,
    Minus,
}

/// Choice of the reference density in the normal-mode relations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoRefPolicy {
    /// ρ_ref = ρ₀₁ + ρ₀₂ (total density), the default.
    Total,
    /// ρ_ref = ρ₀₁ (= ρ₀₂ at equal filling).
    PerSpecies,
    /// Explicit override.
    Fixed(f64),
}

impl Default for RhoRefPolicy {
    fn default() -> Self {
        RhoRefPolicy::Total
    }
}

impl RhoRefPolicy {
    pub fn resolve(&self, rho01: f64, rho02: f64) -> f64 {
        match *self {
            RhoRefPolicy::Total => rho01 + rho02,
            RhoRefPolicy::PerSpecies => rho01,
            RhoRefPolicy::Fixed(r) => r,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            RhoRefPolicy::Total => "total".into(),
            RhoRefPolicy::PerSpecies => "per-species".into(),
            RhoRefPolicy::Fixed(r) => format!("fixed({r})"),
        }
    }
}

/// Extracted Luttinger parameters for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuttingerResult {
    pub v: f64,
    pub k: f64,
    pub channel: Channel,
    /// The curvature that produced v and K.
    pub second_derivative: f64,
    /// Reference density used in the relations.
    pub rho_ref: f64,
    /// |Δe''| between the full and node-decimated surfaces, when available.
    pub spread: Option<f64>,
}

/// v and K of a single gas from the 1D surface curvature at `rho0`.
pub fn luttinger_single(
    surface: &EnergySurface,
    rho0: f64,
    mass: f64,
) -> Result<LuttingerResult, LuttingerError> {
    let d2 = surface.second_derivative(&[rho0], Direction::Density)?;
    if d2 <= 0.0 {
        return Err(LuttingerError::NegativeCompressibility(d2));
    }
    let spread = surface
        .decimated()
        .and_then(|s| s.second_derivative(&[rho0], Direction::Density).ok())
        .map(|alt| (alt - d2).abs());
    let v = (rho0 / mass * d2).sqrt();
    let k = (std::f64::consts::PI.powi(2) * rho0 / mass / d2).sqrt();
    Ok(LuttingerResult { v, k, channel: Channel::Single, second_derivative: d2, rho_ref: rho0, spread })
}

/// v± and K± of the coupled system from the normal-mode curvature of the
/// 2D surface at equal filling.
pub fn luttinger_coupled(
    surface: &EnergySurface,
    rho01: f64,
    rho02: f64,
    mass: f64,
    channel: Channel,
    policy: RhoRefPolicy,
) -> Result<LuttingerResult, LuttingerError> {
    if (rho01 - rho02).abs() > 1e-9 * (rho01 + rho02) {
        return Err(LuttingerError::UnequalFilling { rho01, rho02 });
    }
    let direction = match channel {
        Channel::Plus => Direction::NormalPlus,
        Channel::Minus => Direction::NormalMinus,
        Channel::Single => return Err(LuttingerError::BadDirection(Direction::Density, 2)),
    };
    let at = [rho01, rho02];
    let d2 = surface.second_derivative(&at, direction)?;
    if d2 <= 0.0 {
        return Err(LuttingerError::NegativeCompressibility(d2));
    }
    let spread = surface
        .decimated()
        .and_then(|s| s.second_derivative(&at, direction).ok())
        .map(|alt| (alt - d2).abs());
    let rho_ref = policy.resolve(rho01, rho02);
    let v = (2.0 * rho_ref / mass * d2).sqrt();
    let k = (std::f64::consts::PI.powi(2) * rho_ref / (2.0 * mass) / d2).sqrt();
    Ok(LuttingerResult { v, k, channel, second_derivative: d2, rho_ref, spread })
}

/// Uniform density grid spanning ±`span_frac` around `center`; with an odd
/// count the middle node is exactly `center`.
pub fn density_grid(center: f64, span_frac: f64, count: usize) -> Vec<f64> {
    let n = count.max(2);
    (0..n)
        .map(|i| center * (1.0 + span_frac * (2.0 * i as f64 / (n - 1) as f64 - 1.0)))
        .collect()
}

fn point_config(config: &OptimizerConfig, index: usize, restarts: usize) -> OptimizerConfig {
    OptimizerConfig {
        restarts,
        seed: engine::substream_seed(config.seed, index as u64),
        ..*config
    }
}

/// Optimize the single-field ground state across a density grid. The first
/// point starts cold with the configured restarts (or from `seed_point`
/// when given); each later point warm-starts from its neighbor to stay on
/// one smooth branch, falling back to cold restarts if the warm solve fails
/// to converge.
pub fn sweep_single(
    params: &ModelParams,
    bond_dim: usize,
    densities: &[f64],
    config: &OptimizerConfig,
    seed_point: Option<&engine::ParamVector>,
) -> Result<(EnergySurface, Vec<OptimResult>), LuttingerError> {
    if densities.is_empty() || densities.windows(2).any(|w| w[1] <= w[0]) || densities[0] <= 0.0 {
        return Err(LuttingerError::BadGrid);
    }
    let mut results: Vec<OptimResult> = Vec::with_capacity(densities.len());
    let mut failed = Vec::new();
    for (i, &rho) in densities.iter().enumerate() {
        let point_params = ModelParams { rho0: rho, ..*params };
        let problem = SingleProblem::new(point_params, bond_dim);
        let warm = results
            .last()
            .map(|r: &OptimResult| r.point.clone())
            .or_else(|| seed_point.cloned());
        let outcome = match warm {
            Some(start) => {
                let warm_config = point_config(config, i, 1);
                match minimize(&problem, Some(&start), &warm_config) {
                    Ok(r) if r.converged => Ok(r),
                    _ => minimize(&problem, None, &point_config(config, i, config.restarts)),
                }
            }
            None => minimize(&problem, None, &point_config(config, i, config.restarts)),
        };
        match outcome {
            Ok(r) => {
                if !r.converged {
                    failed.push(rho);
                }
                results.push(r);
            }
            Err(_) => failed.push(rho),
        }
    }
    if !failed.is_empty() || results.len() != densities.len() {
        return Err(LuttingerError::SweepPointFailed { failed });
    }
    let points: Vec<SurfacePoint> = densities
        .iter()
        .zip(&results)
        .map(|(&rho, r)| SurfacePoint {
            densities: vec![rho],
            energy: r.energy,
            converged: r.converged,
            gap: r.gap,
        })
        .collect();
    let surface = EnergySurface::from_points_1d(points, params.rho0)?;
    Ok((surface, results))
}

/// Optimize the coupled ground state on a (ρ₁, ρ₂) tensor grid, serpentine
/// warm-start order, for normal-mode extraction at equal filling.
#[allow(clippy::too_many_arguments)]
pub fn sweep_coupled(
    params: &CoupledModelParams,
    bond_dim: usize,
    pairs: usize,
    rho1_nodes: &[f64],
    rho2_nodes: &[f64],
    config: &OptimizerConfig,
) -> Result<(EnergySurface, Vec<OptimResult>), LuttingerError> {
    for nodes in [rho1_nodes, rho2_nodes] {
        if nodes.is_empty() || nodes.windows(2).any(|w| w[1] <= w[0]) || nodes[0] <= 0.0 {
            return Err(LuttingerError::BadGrid);
        }
    }
    let (n1, n2) = (rho1_nodes.len(), rho2_nodes.len());
    let mut slots: Vec<Option<OptimResult>> = vec![None; n1 * n2];
    let mut failed = Vec::new();
    for i in 0..n1 {
        // serpentine: even rows left-to-right, odd rows right-to-left
        let cols: Vec<usize> = if i % 2 == 0 { (0..n2).collect() } else { (0..n2).rev().collect() };
        for (step, &j) in cols.iter().enumerate() {
            let idx = i * n2 + j;
            let point_params = CoupledModelParams {
                rho01: rho1_nodes[i],
                rho02: rho2_nodes[j],
                ..*params
            };
            let problem = engine::CoupledProblem::new(point_params, bond_dim, pairs);
            // warm start: previous point in this row, else the point above
            let warm_idx = if step > 0 {
                Some(i * n2 + cols[step - 1])
            } else if i > 0 {
                Some((i - 1) * n2 + j)
            } else {
                None
            };
            let warm = warm_idx.and_then(|w| slots[w].as_ref()).map(|r| r.point.clone());
            let outcome = match warm {
                Some(start) => {
                    let warm_config = point_config(config, idx, 1);
                    match minimize(&problem, Some(&start), &warm_config) {
                        Ok(r) if r.converged => Ok(r),
                        _ => minimize(&problem, None, &point_config(config, idx, config.restarts)),
                    }
                }
                None => minimize(&problem, None, &point_config(config, idx, config.restarts)),
            };
            match outcome {
                Ok(r) => {
                    if !r.converged {
                        failed.push(rho1_nodes[i].min(rho2_nodes[j]));
                    }
                    slots[idx] = Some(r);
                }
                Err(_) => failed.push(rho1_nodes[i].min(rho2_nodes[j])),
            }
        }
    }
    if !failed.is_empty() || slots.iter().any(Option::is_none) {
        return Err(LuttingerError::SweepPointFailed { failed });
    }
    let results: Vec<OptimResult> = slots.into_iter().map(Option::unwrap).collect();
    let points: Vec<SurfacePoint> = results
        .iter()
        .enumerate()
        .map(|(idx, r)| SurfacePoint {
            densities: vec![rho1_nodes[idx / n2], rho2_nodes[idx % n2]],
            energy: r.energy,
            converged: r.converged,
            gap: r.gap,
        })
        .collect();
    let surface =
        EnergySurface::from_points_2d(rho1_nodes.to_vec(), rho2_nodes.to_vec(), points, (params.rho01, params.rho02))?;
    Ok((surface, results))
}
