//! Run execution: per-mode point plans, chained optimization, resumable
//! artifacts and the run record.
//!
//! A run is a fixed, config-determined list of point files. Executing a run
//! computes every missing point in index order (warm-start chains read
//! their predecessor's stored parameters, so recomputing any single point
//! reproduces exactly what a fresh run would have produced), then rebuilds
//! the derived CSV tables and the record. Resuming is the same procedure
//! with the existing files kept; a complete run resumes as a no-op.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use cmpslab_core::bethe;
use cmpslab_core::coupled::{self, CoupledModelParams};
use cmpslab_core::engine::{
    self, minimize, substream_seed, CoupledProblem, Layout, OptimResult, OptimizerConfig,
    ParamVector, SingleProblem,
};
use cmpslab_core::luttinger::{
    self, luttinger_coupled, luttinger_single, Channel, EnergySurface, LuttingerResult,
    SurfacePoint,
};
use cmpslab_core::single::ModelParams;

use crate::config::{
    BetheConfig, CoupledConfig, LuttingerCoupledConfig, LuttingerSingleConfig, RunConfig,
    SingleConfig, SweepConfig,
};
use crate::io::{self, write_csv, write_json, Cell};

pub const CONFIG_FILE: &str = "config.json";
pub const RECORD_FILE: &str = "record.json";
pub const TIMING_FILE: &str = "timing.json";
pub const POINTS_DIR: &str = "points";

#[derive(Debug, Clone)]
pub struct PointSpec {
    pub file: String,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PointRecord {
    pub file: String,
    pub label: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

#[derive(Debug, Serialize)]
struct Record<'a> {
    version: &'a str,
    mode: &'a str,
    config_hash: &'a str,
    config: &'a serde_json::Value,
    points: Vec<PointRecord>,
    outputs: Vec<String>,
}

/// One solved-gamma payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct BethePoint {
    pub index: usize,
    pub gamma: f64,
    pub energy: f64,
    pub residual: f64,
    pub nodes: usize,
}

/// One optimization payload (single-field point or sweep node).
#[derive(Debug, Serialize, Deserialize)]
pub struct OptimPoint {
    pub index: usize,
    pub rho: f64,
    pub energy: f64,
    pub densities: Vec<f64>,
    pub constraint_residuals: Vec<f64>,
    pub iterations: u64,
    pub converged: bool,
    pub gap: Option<f64>,
    pub params: Vec<f64>,
}

/// One coupled-point payload (fixed g).
#[derive(Debug, Serialize, Deserialize)]
pub struct CoupledPoint {
    pub index: usize,
    pub g: f64,
    pub rho01: f64,
    pub rho02: f64,
    pub energy: f64,
    pub n1: f64,
    pub n2: f64,
    pub cross: f64,
    pub correlation: f64,
    pub iterations: u64,
    pub converged: bool,
    pub gap: Option<f64>,
    pub params: Vec<f64>,
}

/// Oracle samples for one gamma of a luttinger-single run.
#[derive(Debug, Serialize, Deserialize)]
pub struct OraclePoint {
    pub index: usize,
    pub gamma: f64,
    pub densities: Vec<f64>,
    pub energies: Vec<f64>,
    pub nodes: usize,
}

fn finite_gap(gap: f64) -> Option<f64> {
    gap.is_finite().then_some(gap)
}

fn optim_payload(index: usize, rho: f64, result: &OptimResult) -> OptimPoint {
    OptimPoint {
        index,
        rho,
        energy: result.energy,
        densities: result.densities.clone(),
        constraint_residuals: result.constraint_residuals.clone(),
        iterations: result.iterations as u64,
        converged: result.converged,
        gap: finite_gap(result.gap),
        params: result.point.values.clone(),
    }
}

/// Warm-start-or-cold solve shared by every chained mode.
fn chained_minimize<P: engine::Problem>(
    problem: &P,
    warm: Option<ParamVector>,
    config: &OptimizerConfig,
) -> Result<OptimResult> {
    let outcome = match warm {
        Some(start) => {
            let warm_config = OptimizerConfig { restarts: 1, ..*config };
            match minimize(problem, Some(&start), &warm_config) {
                Ok(r) if r.converged => Ok(r),
                _ => minimize(problem, None, config),
            }
        }
        None => minimize(problem, None, config),
    };
    outcome.map_err(|e| anyhow!("optimization failed: {e}"))
}

fn warm_from_params(values: &[f64], layout: Layout) -> Option<ParamVector> {
    ParamVector::new(values.to_vec(), layout).ok()
}

/// A mode knows its point plan, how to compute one point given its
/// predecessors, and how to rebuild the derived outputs.
pub trait ModeRunner {
    fn point_specs(&self) -> Vec<PointSpec>;
    fn compute_point(
        &self,
        idx: usize,
        prior: &dyn Fn(usize) -> Option<serde_json::Value>,
    ) -> Result<serde_json::Value>;
    fn emit_outputs(&self, dir: &Path, payloads: &[serde_json::Value]) -> Result<Vec<String>>;
}

// ---------------------------------------------------------------- bethe

pub struct BetheRunner<'a>(pub &'a BetheConfig);

impl ModeRunner for BetheRunner<'_> {
    fn point_specs(&self) -> Vec<PointSpec> {
        self.0
            .gammas
            .iter()
            .enumerate()
            .map(|(i, g)| PointSpec {
                file: format!("point_{i:04}.json"),
                label: format!("gamma={g}"),
            })
            .collect()
    }

    fn compute_point(
        &self,
        idx: usize,
        _prior: &dyn Fn(usize) -> Option<serde_json::Value>,
    ) -> Result<serde_json::Value> {
        let gamma = self.0.gammas[idx];
        let sol = bethe::solve_bethe(gamma, self.0.nodes)?;
        Ok(serde_json::to_value(BethePoint {
            index: idx,
            gamma,
            energy: sol.energy,
            residual: sol.residual,
            nodes: sol.quad_nodes,
        })?)
    }

    fn emit_outputs(&self, dir: &Path, payloads: &[serde_json::Value]) -> Result<Vec<String>> {
        let rows: Vec<Vec<Cell>> = payloads
            .iter()
            .map(|p| {
                let pt: BethePoint = serde_json::from_value(p.clone())?;
                Ok(vec![
                    Cell::Float(pt.gamma),
                    Cell::Float(pt.energy),
                    Cell::Float(pt.residual),
                    Cell::Int(pt.nodes as i64),
                ])
            })
            .collect::<Result<_>>()?;
        write_csv(&dir.join("bethe.csv"), &["gamma", "energy", "residual", "nodes"], &rows)?;
        Ok(vec!["bethe.csv".into()])
    }
}

// --------------------------------------------------------------- single

pub struct SingleRunner<'a>(pub &'a SingleConfig);

impl ModeRunner for SingleRunner<'_> {
    fn point_specs(&self) -> Vec<PointSpec> {
        vec![PointSpec { file: "point_0000.json".into(), label: "ground state".into() }]
    }

    fn compute_point(
        &self,
        idx: usize,
        _prior: &dyn Fn(usize) -> Option<serde_json::Value>,
    ) -> Result<serde_json::Value> {
        let c = self.0;
        let params = ModelParams::new(c.model.mass, c.model.c, c.model.rho0)?;
        let problem = SingleProblem::new(params, c.bond_dim);
        let config = c.optimizer.to_core(false, substream_seed(c.seed, idx as u64))?;
        let result = minimize(&problem, None, &config)?;
        Ok(serde_json::to_value(optim_payload(idx, c.model.rho0, &result))?)
    }

    fn emit_outputs(&self, dir: &Path, payloads: &[serde_json::Value]) -> Result<Vec<String>> {
        let pt: OptimPoint = serde_json::from_value(payloads[0].clone())?;
        let rows = vec![vec![
            Cell::Int(self.0.bond_dim as i64),
            Cell::Float(pt.energy),
            Cell::Float(pt.densities[0]),
            Cell::Float(pt.gap.unwrap_or(f64::MAX)),
            Cell::Text(pt.converged.to_string()),
            Cell::Int(pt.iterations as i64),
        ]];
        write_csv(
            &dir.join("single.csv"),
            &["bond_dim", "energy", "density", "gap", "converged", "iterations"],
            &rows,
        )?;
        Ok(vec!["single.csv".into()])
    }
}

// -------------------------------------------------------------- coupled

pub struct CoupledRunner<'a>(pub &'a CoupledConfig);

impl CoupledRunner<'_> {
    fn model_at(&self, g: f64) -> Result<CoupledModelParams> {
        let m = &self.0.model;
        Ok(CoupledModelParams::new(m.mass, m.c, g, m.rho01, m.rho02)?)
    }
}

impl ModeRunner for CoupledRunner<'_> {
    fn point_specs(&self) -> Vec<PointSpec> {
        self.0
            .g_grid
            .iter()
            .enumerate()
            .map(|(i, g)| PointSpec { file: format!("point_{i:04}.json"), label: format!("g={g}") })
            .collect()
    }

    fn compute_point(
        &self,
        idx: usize,
        prior: &dyn Fn(usize) -> Option<serde_json::Value>,
    ) -> Result<serde_json::Value> {
        let c = self.0;
        let g = c.g_grid[idx];
        let params = self.model_at(g)?;
        let problem = CoupledProblem::new(params, c.bond_dim, c.pairs);
        let layout = Layout::Coupled { d: c.bond_dim, pairs: c.pairs };
        let warm = idx
            .checked_sub(1)
            .and_then(|p| prior(p))
            .and_then(|v| serde_json::from_value::<CoupledPoint>(v).ok())
            .and_then(|pt| warm_from_params(&pt.params, layout));
        let config = c.optimizer.to_core(true, substream_seed(c.seed, idx as u64))?;
        let result = chained_minimize(&problem, warm, &config)?;

        // correlator data at the optimum
        let engine::AnyAnsatz::Coupled(ansatz) = result.ansatz() else { unreachable!() };
        let eval = coupled::evaluate(&ansatz, &params, cmpslab_core::kernel::DEFAULT_NULL_TOL)?;
        Ok(serde_json::to_value(CoupledPoint {
            index: idx,
            g,
            rho01: params.rho01,
            rho02: params.rho02,
            energy: result.energy,
            n1: eval.obs.n1,
            n2: eval.obs.n2,
            cross: eval.obs.cross,
            correlation: (eval.obs.cross - eval.obs.n1 * eval.obs.n2).abs(),
            iterations: result.iterations as u64,
            converged: result.converged,
            gap: finite_gap(result.gap),
            params: result.point.values.clone(),
        })?)
    }

    fn emit_outputs(&self, dir: &Path, payloads: &[serde_json::Value]) -> Result<Vec<String>> {
        let rows: Vec<Vec<Cell>> = payloads
            .iter()
            .map(|p| {
                let pt: CoupledPoint = serde_json::from_value(p.clone())?;
                Ok(vec![
                    Cell::Float(pt.g),
                    Cell::Float(pt.energy),
                    Cell::Float(pt.n1),
                    Cell::Float(pt.n2),
                    Cell::Float(pt.cross),
                    Cell::Float(pt.correlation),
                    Cell::Float(pt.gap.unwrap_or(f64::MAX)),
                    Cell::Text(pt.converged.to_string()),
                ])
            })
            .collect::<Result<_>>()?;
        write_csv(
            &dir.join("coupled.csv"),
            &["g", "energy", "n1", "n2", "cross", "correlation", "gap", "converged"],
            &rows,
        )?;
        Ok(vec!["coupled.csv".into()])
    }
}

// -------------------------------------------------------- sweep-density

pub struct SweepRunner<'a> {
    pub config: &'a SweepConfig,
    pub nodes: Vec<f64>,
}

impl<'a> SweepRunner<'a> {
    pub fn new(config: &'a SweepConfig) -> Self {
        let nodes = config.densities.nodes(config.model.rho0);
        Self { config, nodes }
    }
}

impl ModeRunner for SweepRunner<'_> {
    fn point_specs(&self) -> Vec<PointSpec> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, rho)| PointSpec {
                file: format!("point_{i:04}.json"),
                label: format!("rho={rho}"),
            })
            .collect()
    }

    fn compute_point(
        &self,
        idx: usize,
        prior: &dyn Fn(usize) -> Option<serde_json::Value>,
    ) -> Result<serde_json::Value> {
        let c = self.config;
        let rho = self.nodes[idx];
        let params = ModelParams::new(c.model.mass, c.model.c, rho)?;
        let problem = SingleProblem::new(params, c.bond_dim);
        let layout = Layout::Single { d: c.bond_dim };
        let warm = idx
            .checked_sub(1)
            .and_then(|p| prior(p))
            .and_then(|v| serde_json::from_value::<OptimPoint>(v).ok())
            .and_then(|pt| warm_from_params(&pt.params, layout));
        let config = c.optimizer.to_core(false, substream_seed(c.seed, idx as u64))?;
        let result = chained_minimize(&problem, warm, &config)?;
        Ok(serde_json::to_value(optim_payload(idx, rho, &result))?)
    }

    fn emit_outputs(&self, dir: &Path, payloads: &[serde_json::Value]) -> Result<Vec<String>> {
        let rows: Vec<Vec<Cell>> = payloads
            .iter()
            .map(|p| {
                let pt: OptimPoint = serde_json::from_value(p.clone())?;
                Ok(vec![
                    Cell::Float(pt.rho),
                    Cell::Float(pt.energy),
                    Cell::Float(pt.gap.unwrap_or(f64::MAX)),
                    Cell::Text(pt.converged.to_string()),
                ])
            })
            .collect::<Result<_>>()?;
        write_csv(&dir.join("surface.csv"), &["rho", "energy", "gap", "converged"], &rows)?;
        Ok(vec!["surface.csv".into()])
    }
}

// ---------------------------------------------------- luttinger (single)

pub struct LuttingerSingleRunner<'a> {
    pub config: &'a LuttingerSingleConfig,
    pub nodes: Vec<f64>,
}

impl<'a> LuttingerSingleRunner<'a> {
    pub fn new(config: &'a LuttingerSingleConfig) -> Self {
        let nodes =
            luttinger::density_grid(config.rho0, config.density_span, config.density_count);
        Self { config, nodes }
    }

    /// c reproducing the requested dimensionless coupling at ρ₀.
    fn c_for_gamma(&self, gamma: f64) -> f64 {
        gamma * self.config.rho0 / (2.0 * self.config.mass)
    }

    fn unit_count(&self) -> usize {
        self.config.gammas.len() * self.config.bond_dims.len()
    }

    /// point index layout: all oracle points, then sweep units in order
    fn sweep_base(&self) -> usize {
        self.config.gammas.len()
    }

    pub(crate) fn surface_for_unit(
        &self,
        payloads: &[serde_json::Value],
        unit: usize,
    ) -> Result<(EnergySurface, Vec<OptimPoint>)> {
        let n = self.nodes.len();
        let base = self.sweep_base() + unit * n;
        let mut pts = Vec::with_capacity(n);
        for k in 0..n {
            let pt: OptimPoint = serde_json::from_value(payloads[base + k].clone())?;
            pts.push(pt);
        }
        let surface_points: Vec<SurfacePoint> = pts
            .iter()
            .map(|p| SurfacePoint {
                densities: vec![p.rho],
                energy: p.energy,
                converged: p.converged,
                gap: p.gap.unwrap_or(f64::INFINITY),
            })
            .collect();
        let surface = EnergySurface::from_points_1d(surface_points, self.config.rho0)
            .map_err(|e| anyhow!("unit {unit}: {e}"))?;
        Ok((surface, pts))
    }

    pub(crate) fn oracle_surface(
        &self,
        payloads: &[serde_json::Value],
        gamma_idx: usize,
    ) -> Result<EnergySurface> {
        let pt: OraclePoint = serde_json::from_value(payloads[gamma_idx].clone())?;
        let points: Vec<SurfacePoint> = pt
            .densities
            .iter()
            .zip(&pt.energies)
            .map(|(&rho, &e)| SurfacePoint {
                densities: vec![rho],
                energy: e,
                converged: true,
                gap: f64::INFINITY,
            })
            .collect();
        EnergySurface::from_points_1d(points, self.config.rho0)
            .map_err(|e| anyhow!("oracle gamma #{gamma_idx}: {e}"))
    }
}

impl ModeRunner for LuttingerSingleRunner<'_> {
    fn point_specs(&self) -> Vec<PointSpec> {
        let mut specs = Vec::new();
        for (i, g) in self.config.gammas.iter().enumerate() {
            specs.push(PointSpec {
                file: format!("point_oracle_g{i:02}.json"),
                label: format!("oracle gamma={g}"),
            });
        }
        for (i, g) in self.config.gammas.iter().enumerate() {
            for (j, d) in self.config.bond_dims.iter().enumerate() {
                for (k, rho) in self.nodes.iter().enumerate() {
                    specs.push(PointSpec {
                        file: format!("point_g{i:02}_d{j:02}_n{k:02}.json"),
                        label: format!("gamma={g} D={d} rho={rho}"),
                    });
                }
            }
        }
        specs
    }

    fn compute_point(
        &self,
        idx: usize,
        prior: &dyn Fn(usize) -> Option<serde_json::Value>,
    ) -> Result<serde_json::Value> {
        let c = self.config;
        if idx < self.sweep_base() {
            // oracle samples for one gamma
            let gamma = c.gammas[idx];
            let params = ModelParams::new(c.mass, self.c_for_gamma(gamma), c.rho0)?;
            let energies = self
                .nodes
                .iter()
                .map(|&rho| bethe::energy_density_exact(rho, &params, c.oracle_nodes))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(serde_json::to_value(OraclePoint {
                index: idx,
                gamma,
                densities: self.nodes.clone(),
                energies,
                nodes: c.oracle_nodes,
            })?);
        }
        let rel = idx - self.sweep_base();
        let n = self.nodes.len();
        let (unit, k) = (rel / n, rel % n);
        let (gi, dj) = (unit / c.bond_dims.len(), unit % c.bond_dims.len());
        let rho = self.nodes[k];
        let params = ModelParams::new(c.mass, self.c_for_gamma(c.gammas[gi]), rho)?;
        let bond_dim = c.bond_dims[dj];
        let problem = SingleProblem::new(params, bond_dim);
        let layout = Layout::Single { d: bond_dim };
        let warm = k
            .checked_sub(1)
            .map(|kk| self.sweep_base() + unit * n + kk)
            .and_then(|p| prior(p))
            .and_then(|v| serde_json::from_value::<OptimPoint>(v).ok())
            .and_then(|pt| warm_from_params(&pt.params, layout));
        let config = c.optimizer.to_core(false, substream_seed(c.seed, idx as u64))?;
        let result = chained_minimize(&problem, warm, &config)?;
        Ok(serde_json::to_value(optim_payload(idx, rho, &result))?)
    }

    fn emit_outputs(&self, dir: &Path, payloads: &[serde_json::Value]) -> Result<Vec<String>> {
        let c = self.config;
        let mut rows: Vec<Vec<Cell>> = Vec::new();
        for unit in 0..self.unit_count() {
            let (gi, dj) = (unit / c.bond_dims.len(), unit % c.bond_dims.len());
            let (surface, _) = self.surface_for_unit(payloads, unit)?;
            let lr = luttinger_single(&surface, c.rho0, c.mass)
                .map_err(|e| anyhow!("extraction gamma={} D={}: {e}", c.gammas[gi], c.bond_dims[dj]))?;
            rows.push(vec![
                Cell::Float(c.gammas[gi]),
                Cell::Int(c.bond_dims[dj] as i64),
                Cell::Float(lr.v),
                Cell::Float(lr.k),
                Cell::Float(surface.value(&[c.rho0])?),
                Cell::Float(lr.second_derivative),
                Cell::Float(lr.spread.unwrap_or(0.0)),
            ])
        }
        write_csv(
            &dir.join("luttinger.csv"),
            &["gamma", "bond_dim", "v", "k", "e0", "second_derivative", "spread"],
            &rows,
        )?;

        let mut oracle_rows: Vec<Vec<Cell>> = Vec::new();
        for (gi, &gamma) in c.gammas.iter().enumerate() {
            let surface = self.oracle_surface(payloads, gi)?;
            let lr = luttinger_single(&surface, c.rho0, c.mass)
                .map_err(|e| anyhow!("oracle extraction gamma={gamma}: {e}"))?;
            oracle_rows.push(vec![
                Cell::Float(gamma),
                Cell::Float(lr.v),
                Cell::Float(lr.k),
                Cell::Float(surface.value(&[c.rho0])?),
            ]);
        }
        write_csv(&dir.join("luttinger_oracle.csv"), &["gamma", "v", "k", "e0"], &oracle_rows)?;
        Ok(vec!["luttinger.csv".into(), "luttinger_oracle.csv".into()])
    }
}

// --------------------------------------------------- luttinger (coupled)

pub struct LuttingerCoupledRunner<'a> {
    pub config: &'a LuttingerCoupledConfig,
    pub nodes: Vec<f64>,
}

impl<'a> LuttingerCoupledRunner<'a> {
    pub fn new(config: &'a LuttingerCoupledConfig) -> Self {
        let nodes = luttinger::density_grid(config.rho0, config.grid_span, config.grid_count);
        Self { config, nodes }
    }

    fn grid_len(&self) -> usize {
        self.nodes.len() * self.nodes.len()
    }

    /// serpentine predecessor of a row-major grid index
    fn warm_index(&self, node: usize) -> Option<usize> {
        let n = self.nodes.len();
        let (i, j) = (node / n, node % n);
        let leftward = i % 2 == 1;
        let row_start = if leftward { j == n - 1 } else { j == 0 };
        if row_start {
            i.checked_sub(1).map(|above| above * n + j)
        } else if leftward {
            Some(i * n + j + 1)
        } else {
            Some(i * n + j - 1)
        }
    }

    /// within-unit serpentine computation order of grid nodes
    fn unit_order(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut order = Vec::with_capacity(n * n);
        for i in 0..n {
            if i % 2 == 0 {
                order.extend((0..n).map(|j| i * n + j));
            } else {
                order.extend((0..n).rev().map(|j| i * n + j));
            }
        }
        order
    }

    pub(crate) fn surface_for_unit(
        &self,
        payloads: &[serde_json::Value],
        unit: usize,
    ) -> Result<EnergySurface> {
        let base = unit * self.grid_len();
        let n = self.nodes.len();
        let mut points = Vec::with_capacity(self.grid_len());
        for node in 0..self.grid_len() {
            let pt: OptimPoint = serde_json::from_value(payloads[base + node].clone())?;
            points.push(SurfacePoint {
                densities: vec![self.nodes[node / n], self.nodes[node % n]],
                energy: pt.energy,
                converged: pt.converged,
                gap: pt.gap.unwrap_or(f64::INFINITY),
            });
        }
        EnergySurface::from_points_2d(
            self.nodes.clone(),
            self.nodes.clone(),
            points,
            (self.config.rho0, self.config.rho0),
        )
        .map_err(|e| anyhow!("unit {unit}: {e}"))
    }

    pub(crate) fn extract(
        &self,
        surface: &EnergySurface,
    ) -> Result<(LuttingerResult, LuttingerResult)> {
        let c = self.config;
        let policy = c.rho_ref_policy.to_core();
        let plus = luttinger_coupled(surface, c.rho0, c.rho0, c.mass, Channel::Plus, policy)?;
        let minus = luttinger_coupled(surface, c.rho0, c.rho0, c.mass, Channel::Minus, policy)?;
        Ok((plus, minus))
    }
}

impl ModeRunner for LuttingerCoupledRunner<'_> {
    fn point_specs(&self) -> Vec<PointSpec> {
        let n = self.nodes.len();
        let mut specs = Vec::new();
        for (u, g) in self.config.g_grid.iter().enumerate() {
            for node in 0..self.grid_len() {
                let (i, j) = (node / n, node % n);
                specs.push(PointSpec {
                    file: format!("point_g{u:02}_n{node:03}.json"),
                    label: format!("g={g} rho=({}, {})", self.nodes[i], self.nodes[j]),
                });
            }
        }
        specs
    }

    fn compute_point(
        &self,
        idx: usize,
        prior: &dyn Fn(usize) -> Option<serde_json::Value>,
    ) -> Result<serde_json::Value> {
        let c = self.config;
        let n = self.nodes.len();
        let (unit, node) = (idx / self.grid_len(), idx % self.grid_len());
        let (i, j) = (node / n, node % n);
        let params =
            CoupledModelParams::new(c.mass, c.c, c.g_grid[unit], self.nodes[i], self.nodes[j])?;
        let problem = CoupledProblem::new(params, c.bond_dim, c.pairs);
        let layout = Layout::Coupled { d: c.bond_dim, pairs: c.pairs };
        // warm start: serpentine predecessor in this unit, else the same
        // node of the previous unit (previous g)
        let warm_idx = self
            .warm_index(node)
            .map(|w| unit * self.grid_len() + w)
            .or_else(|| unit.checked_sub(1).map(|u| u * self.grid_len() + node));
        let warm = warm_idx
            .and_then(prior)
            .and_then(|v| serde_json::from_value::<OptimPoint>(v).ok())
            .and_then(|pt| warm_from_params(&pt.params, layout));
        let config = c.optimizer.to_core(true, substream_seed(c.seed, idx as u64))?;
        let result = chained_minimize(&problem, warm, &config)?;
        Ok(serde_json::to_value(optim_payload(idx, self.nodes[i], &result))?)
    }

    fn emit_outputs(&self, dir: &Path, payloads: &[serde_json::Value]) -> Result<Vec<String>> {
        let c = self.config;
        let mut rows: Vec<Vec<Cell>> = Vec::new();
        for (u, &g) in c.g_grid.iter().enumerate() {
            let surface = self.surface_for_unit(payloads, u)?;
            let (plus, minus) = self.extract(&surface)?;
            for lr in [plus, minus] {
                rows.push(vec![
                    Cell::Float(g),
                    Cell::Text(if lr.channel == Channel::Plus { "plus".into() } else { "minus".into() }),
                    Cell::Float(lr.v),
                    Cell::Float(lr.k),
                    Cell::Float(lr.rho_ref),
                    Cell::Text(c.rho_ref_policy.to_core().label()),
                    Cell::Float(lr.second_derivative),
                    Cell::Float(lr.spread.unwrap_or(0.0)),
                ]);
            }
        }
        write_csv(
            &dir.join("luttinger_coupled.csv"),
            &["g", "channel", "v", "k", "rho_ref", "rho_ref_policy", "second_derivative", "spread"],
            &rows,
        )?;
        Ok(vec!["luttinger_coupled.csv".into()])
    }
}

// ----------------------------------------------------------- execution

pub fn runner_for(config: &RunConfig) -> Box<dyn ModeRunner + '_> {
    match config {
        RunConfig::Bethe(c) => Box::new(BetheRunner(c)),
        RunConfig::Single(c) => Box::new(SingleRunner(c)),
        RunConfig::Coupled(c) => Box::new(CoupledRunner(c)),
        RunConfig::SweepDensity(c) => Box::new(SweepRunner::new(c)),
        RunConfig::LuttingerSingle(c) => Box::new(LuttingerSingleRunner::new(c)),
        RunConfig::LuttingerCoupled(c) => Box::new(LuttingerCoupledRunner::new(c)),
    }
}

/// Computation order of point indices. Serpentine grids are computed in
/// their chain order so every warm predecessor is ready when needed; all
/// other modes run in plain index order.
fn compute_order(config: &RunConfig, total: usize) -> Vec<usize> {
    if let RunConfig::LuttingerCoupled(c) = config {
        let runner = LuttingerCoupledRunner::new(c);
        let per_unit = runner.unit_order();
        let mut order = Vec::with_capacity(total);
        for u in 0..c.g_grid.len() {
            order.extend(per_unit.iter().map(|&n| u * runner.grid_len() + n));
        }
        order
    } else {
        (0..total).collect()
    }
}

pub struct ExecSummary {
    pub computed: usize,
    pub skipped: usize,
    pub failed: Vec<String>,
    pub no_op: bool,
}

/// Execute (or resume) a run in `dir`. Assumes the config snapshot is
/// already in place and hash-checked by the caller.
pub fn execute(dir: &Path, config: &RunConfig) -> Result<ExecSummary> {
    let runner = runner_for(config);
    let specs = runner.point_specs();
    let points_dir = dir.join(POINTS_DIR);
    std::fs::create_dir_all(&points_dir)?;

    let mut payloads: Vec<Option<serde_json::Value>> = specs
        .iter()
        .map(|s| io::read_json(&points_dir.join(&s.file)).ok())
        .collect();
    let already = payloads.iter().filter(|p| p.is_some()).count();

    let canonical = config.canonical_value();
    let hash = config.content_hash();
    let outputs_present = |names: &[String]| names.iter().all(|n| dir.join(n).exists());

    // a complete run resumes as a strict no-op
    if already == specs.len() && dir.join(RECORD_FILE).exists() {
        if let Ok(record) = io::read_json(&dir.join(RECORD_FILE)) {
            let outs: Vec<String> = record
                .get("outputs")
                .and_then(|o| serde_json::from_value(o.clone()).ok())
                .unwrap_or_default();
            if !outs.is_empty() && outputs_present(&outs) {
                log::info!("run is complete; nothing to do");
                return Ok(ExecSummary { computed: 0, skipped: already, failed: vec![], no_op: true });
            }
        }
    }

    let mut failed: Vec<String> = Vec::new();
    let mut computed = 0usize;
    let mut timings: Vec<(String, f64)> = Vec::new();
    let t_run = Instant::now();

    for idx in compute_order(config, specs.len()) {
        if payloads[idx].is_some() {
            continue;
        }
        let spec = &specs[idx];
        let t0 = Instant::now();
        log::info!("computing {} ({})", spec.file, spec.label);
        let prior = |p: usize| payloads.get(p).and_then(|v| v.clone());
        match runner.compute_point(idx, &prior) {
            Ok(payload) => {
                write_json(&points_dir.join(&spec.file), &payload)?;
                let ok = payload.get("converged").and_then(|c| c.as_bool()).unwrap_or(true);
                if !ok {
                    failed.push(format!("{} ({}): did not converge", spec.file, spec.label));
                }
                payloads[idx] = Some(payload);
                computed += 1;
            }
            Err(e) => {
                log::error!("{} failed: {e:#}", spec.label);
                failed.push(format!("{} ({}): {e:#}", spec.file, spec.label));
            }
        }
        timings.push((spec.file.clone(), t0.elapsed().as_secs_f64()));
    }

    // unconverged points that were loaded from disk still count as failures
    for (spec, payload) in specs.iter().zip(&payloads) {
        if let Some(p) = payload {
            if p.get("converged").and_then(|c| c.as_bool()) == Some(false)
                && !failed.iter().any(|f| f.starts_with(&spec.file))
            {
                failed.push(format!("{} ({}): did not converge", spec.file, spec.label));
            }
        }
    }

    let complete = payloads.iter().all(Option::is_some);
    let mut outputs = Vec::new();
    if complete && failed.is_empty() {
        let owned: Vec<serde_json::Value> = payloads.iter().map(|p| p.clone().unwrap()).collect();
        outputs = runner.emit_outputs(dir, &owned)?;
    }

    let point_records: Vec<PointRecord> = specs
        .iter()
        .zip(&payloads)
        .map(|(spec, payload)| PointRecord {
            file: spec.file.clone(),
            label: spec.label.clone(),
            ok: payload.is_some()
                && payload
                    .as_ref()
                    .and_then(|p| p.get("converged"))
                    .and_then(|c| c.as_bool())
                    .unwrap_or(true),
            energy: payload.as_ref().and_then(|p| p.get("energy")).and_then(|e| e.as_f64()),
            converged: payload
                .as_ref()
                .and_then(|p| p.get("converged"))
                .and_then(|c| c.as_bool()),
        })
        .collect();
    let record = Record {
        version: env!("CARGO_PKG_VERSION"),
        mode: config.mode_name(),
        config_hash: &hash,
        config: &canonical,
        points: point_records,
        outputs: outputs.clone(),
    };
    write_json(&dir.join(RECORD_FILE), &serde_json::to_value(&record)?)?;

    // wall-clock diagnostics live outside the deterministic artifact set
    let timing = serde_json::json!({
        "total_seconds": t_run.elapsed().as_secs_f64(),
        "points": timings.iter().map(|(f, s)| serde_json::json!({"file": f, "seconds": s})).collect::<Vec<_>>(),
    });
    write_json(&dir.join(TIMING_FILE), &timing)?;

    Ok(ExecSummary { computed, skipped: already, failed, no_op: false })
}

/// Fresh-run entry: snapshot the config into `dir` (refusing to clobber a
/// different experiment) and execute.
pub fn run(dir: &Path, config: &RunConfig) -> Result<ExecSummary> {
    std::fs::create_dir_all(dir)?;
    let snapshot_path = dir.join(CONFIG_FILE);
    let canonical = config.canonical_text();
    if snapshot_path.exists() {
        let existing = std::fs::read_to_string(&snapshot_path)?;
        if existing != canonical {
            bail!(
                "{} already contains a different run (config mismatch); use a fresh directory",
                dir.display()
            );
        }
        if dir.join(RECORD_FILE).exists() {
            bail!("{} already holds a completed run; use `cmpslab resume`", dir.display());
        }
        bail!("{} holds a partial run; use `cmpslab resume`", dir.display());
    }
    io::write_atomic(&snapshot_path, canonical.as_bytes())?;
    execute(dir, config)
}

/// Resume entry: load the snapshot, verify the recorded hash, and execute
/// whatever is missing.
pub fn resume(dir: &Path) -> Result<ExecSummary> {
    let snapshot_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&snapshot_path)
        .with_context(|| format!("no run found in {} (missing {CONFIG_FILE})", dir.display()))?;
    let config = RunConfig::from_json(&text)?;
    if dir.join(RECORD_FILE).exists() {
        let record = io::read_json(&dir.join(RECORD_FILE))?;
        let recorded = record
            .get("config_hash")
            .and_then(|h| h.as_str())
            .context("record.json has no config_hash")?;
        if recorded != config.content_hash() {
            bail!(
                "config hash mismatch in {}: record has {recorded}, snapshot hashes to {}",
                dir.display(),
                config.content_hash()
            );
        }
    }
    execute(dir, &config)
}
