//! Run configuration: JSON schema, validation, canonical form and hashing.
//!
//! Configs are strict — unknown keys are rejected — and every physical
//! parameter is range-checked up front so a bad run fails before any
//! computation starts. The canonical form (sorted keys, output directory
//! stripped) is what gets snapshotted into the run directory and hashed,
//! so the same experiment always carries the same content hash no matter
//! where its artifacts land.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cmpslab_core::engine::OptimizerConfig;
use cmpslab_core::luttinger::RhoRefPolicy;

/// Optimizer knobs as they appear in config files; unset fields fall back
/// to the library defaults for the mode at hand.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty_growth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
}

impl OptimizerSettings {
    pub fn to_core(&self, coupled: bool, seed: u64) -> Result<OptimizerConfig> {
        let base = if coupled {
            OptimizerConfig::default_coupled()
        } else {
            OptimizerConfig::default_single()
        };
        let config = OptimizerConfig {
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            grad_step: self.grad_step.unwrap_or(base.grad_step),
            energy_tol: self.energy_tol.unwrap_or(base.energy_tol),
            constraint_tol: self.constraint_tol.unwrap_or(base.constraint_tol),
            penalty_init: self.penalty_init.unwrap_or(base.penalty_init),
            penalty_growth: self.penalty_growth.unwrap_or(base.penalty_growth),
            restarts: self.restarts.unwrap_or(base.restarts),
            seed,
        };
        config.validate().map_err(|e| anyhow::anyhow!("optimizer: {e}"))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mass: f64,
    pub c: f64,
    pub rho0: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CoupledModelSection {
    pub mass: f64,
    pub c: f64,
    pub rho01: f64,
    pub rho02: f64,
}

/// Density grid, either explicit nodes or a symmetric window.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DensitySpec {
    List(Vec<f64>),
    Window {
        #[serde(default = "default_span")]
        span: f64,
        #[serde(default = "default_count")]
        count: usize,
    },
}

fn default_span() -> f64 {
    0.15
}
fn default_count() -> usize {
    11
}
fn default_nodes() -> usize {
    256
}
fn default_pairs() -> usize {
    2
}
fn default_grid_count() -> usize {
    9
}
fn default_seed() -> u64 {
    1
}

impl DensitySpec {
    pub fn nodes(&self, center: f64) -> Vec<f64> {
        match self {
            DensitySpec::List(v) => v.clone(),
            DensitySpec::Window { span, count } => {
                cmpslab_core::luttinger::density_grid(center, *span, *count)
            }
        }
    }
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Window { span: default_span(), count: default_count() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BetheConfig {
    mode: String,
    pub gammas: Vec<f64>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SingleConfig {
    mode: String,
    pub model: ModelSection,
    pub bond_dim: usize,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CoupledConfig {
    mode: String,
    pub model: CoupledModelSection,
    pub g_grid: Vec<f64>,
    pub bond_dim: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    mode: String,
    pub model: ModelSection,
    pub bond_dim: usize,
    #[serde(default)]
    pub densities: DensitySpec,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LuttingerSingleConfig {
    mode: String,
    system: String,
    pub mass: f64,
    pub rho0: f64,
    pub gammas: Vec<f64>,
    pub bond_dims: Vec<usize>,
    #[serde(default = "default_span")]
    pub density_span: f64,
    #[serde(default = "default_count")]
    pub density_count: usize,
    #[serde(default = "default_nodes")]
    pub oracle_nodes: usize,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Reference-density policy as spelled in config files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySpec {
    Total,
    PerSpecies,
    Fixed(f64),
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::Total
    }
}

impl PolicySpec {
    pub fn to_core(&self) -> RhoRefPolicy {
        match *self {
            PolicySpec::Total => RhoRefPolicy::Total,
            PolicySpec::PerSpecies => RhoRefPolicy::PerSpecies,
            PolicySpec::Fixed(x) => RhoRefPolicy::Fixed(x),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LuttingerCoupledConfig {
    mode: String,
    system: String,
    pub mass: f64,
    pub c: f64,
    /// Equal-filling target density per species.
    pub rho0: f64,
    pub g_grid: Vec<f64>,
    pub bond_dim: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_span")]
    pub grid_span: f64,
    #[serde(default = "default_grid_count")]
    pub grid_count: usize,
    #[serde(default)]
    pub rho_ref_policy: PolicySpec,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// A validated run configuration of any mode.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Bethe(BetheConfig),
    Single(SingleConfig),
    Coupled(CoupledConfig),
    SweepDensity(SweepConfig),
    LuttingerSingle(LuttingerSingleConfig),
    LuttingerCoupled(LuttingerCoupledConfig),
}

fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        bail!("{name} must be positive and finite, got {x}");
    }
    Ok(())
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        bail!("{name} must be nonnegative and finite, got {x}");
    }
    Ok(())
}

fn sorted_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        bail!("{name} must not be empty");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        bail!("{name} must be strictly increasing");
    }
    Ok(())
}

impl RunConfig {
    /// Parse and validate a config from its JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).context("config is not valid JSON")?;
        let mode = value
            .get("mode")
            .and_then(|m| m.as_str())
            .context("config needs a string `mode` key")?
            .to_string();
        let config = match mode.as_str() {
            "bethe" => RunConfig::Bethe(
                serde_json::from_value(value).context("invalid bethe config")?,
            ),
            "single" => RunConfig::Single(
                serde_json::from_value(value).context("invalid single config")?,
            ),
            "coupled" => RunConfig::Coupled(
                serde_json::from_value(value).context("invalid coupled config")?,
            ),
            "sweep-density" => RunConfig::SweepDensity(
                serde_json::from_value(value).context("invalid sweep-density config")?,
            ),
            "luttinger" => {
                let system = value
                    .get("system")
                    .and_then(|s| s.as_str())
                    .context("luttinger config needs a `system` key (single|coupled)")?;
                match system {
                    "single" => RunConfig::LuttingerSingle(
                        serde_json::from_value(value)
                            .context("invalid luttinger (single) config")?,
                    ),
                    "coupled" => RunConfig::LuttingerCoupled(
                        serde_json::from_value(value)
                            .context("invalid luttinger (coupled) config")?,
                    ),
                    other => bail!("unknown luttinger system {other:?}"),
                }
            }
            other => bail!(
                "unknown mode {other:?}; expected one of bethe, single, coupled, sweep-density, luttinger"
            ),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RunConfig::Bethe(c) => {
                sorted_grid("gammas", &c.gammas)?;
                for &g in &c.gammas {
                    positive("gamma", g)?;
                }
                if c.nodes < 64 {
                    bail!("nodes must be at least 64, got {}", c.nodes);
                }
            }
            RunConfig::Single(c) => {
                positive("model.mass", c.model.mass)?;
                nonnegative("model.c", c.model.c)?;
                positive("model.rho0", c.model.rho0)?;
                if c.bond_dim == 0 {
                    bail!("bond_dim must be positive");
                }
            }
            RunConfig::Coupled(c) => {
                positive("model.mass", c.model.mass)?;
                nonnegative("model.c", c.model.c)?;
                positive("model.rho01", c.model.rho01)?;
                positive("model.rho02", c.model.rho02)?;
                sorted_grid("g_grid", &c.g_grid)?;
                if c.bond_dim == 0 {
                    bail!("bond_dim must be positive");
                }
            }
            RunConfig::SweepDensity(c) => {
                positive("model.mass", c.model.mass)?;
                nonnegative("model.c", c.model.c)?;
                positive("model.rho0", c.model.rho0)?;
                if c.bond_dim == 0 {
                    bail!("bond_dim must be positive");
                }
                let nodes = c.densities.nodes(c.model.rho0);
                sorted_grid("densities", &nodes)?;
                for &rho in &nodes {
                    positive("density", rho)?;
                }
            }
            RunConfig::LuttingerSingle(c) => {
                positive("mass", c.mass)?;
                positive("rho0", c.rho0)?;
                sorted_grid("gammas", &c.gammas)?;
                for &g in &c.gammas {
                    positive("gamma", g)?;
                }
                if c.bond_dims.is_empty() || c.bond_dims.iter().any(|&d| d == 0) {
                    bail!("bond_dims must be a nonempty list of positive integers");
                }
                if !(c.density_span > 0.0 && c.density_span < 1.0) {
                    bail!("density_span must be in (0, 1)");
                }
                if c.density_count < 4 {
                    bail!("density_count must be at least 4");
                }
            }
            RunConfig::LuttingerCoupled(c) => {
                positive("mass", c.mass)?;
                nonnegative("c", c.c)?;
                positive("rho0", c.rho0)?;
                sorted_grid("g_grid", &c.g_grid)?;
                if c.bond_dim == 0 {
                    bail!("bond_dim must be positive");
                }
                if !(c.grid_span > 0.0 && c.grid_span < 1.0) {
                    bail!("grid_span must be in (0, 1)");
                }
                if c.grid_count < 4 {
                    bail!("grid_count must be at least 4");
                }
                if let PolicySpec::Fixed(x) = c.rho_ref_policy {
                    positive("rho_ref_policy.fixed", x)?;
                }
            }
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            RunConfig::Bethe(c) => c.seed = seed,
            RunConfig::Single(c) => c.seed = seed,
            RunConfig::Coupled(c) => c.seed = seed,
            RunConfig::SweepDensity(c) => c.seed = seed,
            RunConfig::LuttingerSingle(c) => c.seed = seed,
            RunConfig::LuttingerCoupled(c) => c.seed = seed,
        }
    }

    pub fn output_dir(&self) -> Option<&PathBuf> {
        match self {
            RunConfig::Bethe(c) => c.output_dir.as_ref(),
            RunConfig::Single(c) => c.output_dir.as_ref(),
            RunConfig::Coupled(c) => c.output_dir.as_ref(),
            RunConfig::SweepDensity(c) => c.output_dir.as_ref(),
            RunConfig::LuttingerSingle(c) => c.output_dir.as_ref(),
            RunConfig::LuttingerCoupled(c) => c.output_dir.as_ref(),
        }
    }

    /// Canonical JSON: sorted keys, no output directory. This is what gets
    /// snapshotted and hashed, so relocating a run does not change its
    /// identity.
    pub fn canonical_value(&self) -> serde_json::Value {
        let mut value = match self {
            RunConfig::Bethe(c) => serde_json::to_value(c),
            RunConfig::Single(c) => serde_json::to_value(c),
            RunConfig::Coupled(c) => serde_json::to_value(c),
            RunConfig::SweepDensity(c) => serde_json::to_value(c),
            RunConfig::LuttingerSingle(c) => serde_json::to_value(c),
            RunConfig::LuttingerCoupled(c) => serde_json::to_value(c),
        }
        .expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        value
    }

    pub fn canonical_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.canonical_value())
            .expect("canonical config serializes");
        text.push('\n');
        text
    }

    /// Content hash of the canonical form.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_text().as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            RunConfig::Bethe(_) => "bethe",
            RunConfig::Single(_) => "single",
            RunConfig::Coupled(_) => "coupled",
            RunConfig::SweepDensity(_) => "sweep-density",
            RunConfig::LuttingerSingle(_) | RunConfig::LuttingerCoupled(_) => "luttinger",
        }
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Build a bethe-mode config directly (for the `bethe` subcommand).
pub fn bethe_config(gammas: Vec<f64>, nodes: usize, output_dir: Option<PathBuf>) -> Result<RunConfig> {
    let config = RunConfig::Bethe(BetheConfig {
        mode: "bethe".into(),
        gammas,
        nodes,
        output_dir,
        seed: default_seed(),
    });
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates_bethe() {
        let config = RunConfig::from_json(
            r#"{"mode":"bethe","gammas":[0.5,1.0,2.0],"nodes":128,"seed":3}"#,
        )
        .unwrap();
        assert_eq!(config.mode_name(), "bethe");
        assert_eq!(config.canonical_value()["seed"], 3);
    }

    #[test]
    fn rejects_unknown_keys_with_path() {
        let err = RunConfig::from_json(
            r#"{"mode":"single","model":{"mass":0.5,"c":1.0,"rho0":1.0,"oops":2},"bond_dim":2}"#,
        )
        .unwrap_err();
        let text = format!("{err:#}");
        assert!(text.contains("oops"), "error should name the bad key: {text}");
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(RunConfig::from_json(r#"{"mode":"bethe","gammas":[-1.0]}"#).is_err());
        assert!(RunConfig::from_json(
            r#"{"mode":"single","model":{"mass":-0.5,"c":1.0,"rho0":1.0},"bond_dim":2}"#
        )
        .is_err());
        assert!(RunConfig::from_json(
            r#"{"mode":"coupled","model":{"mass":0.5,"c":1.0,"rho01":0.6,"rho02":0.6},"g_grid":[1.0,0.5],"bond_dim":2}"#
        )
        .is_err());
    }

    #[test]
    fn hash_ignores_output_dir_and_key_order() {
        let a = RunConfig::from_json(
            r#"{"mode":"bethe","gammas":[1.0,2.0],"output_dir":"/tmp/a","seed":1}"#,
        )
        .unwrap();
        let b = RunConfig::from_json(
            r#"{"seed":1,"gammas":[1.0,2.0],"output_dir":"/somewhere/else","mode":"bethe"}"#,
        )
        .unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let c = RunConfig::from_json(r#"{"mode":"bethe","gammas":[1.0,2.0],"seed":2}"#).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn luttinger_dispatches_on_system() {
        let single = RunConfig::from_json(
            r#"{"mode":"luttinger","system":"single","mass":0.5,"rho0":1.0,"gammas":[1.0,2.0],"bond_dims":[2,4]}"#,
        )
        .unwrap();
        assert!(matches!(single, RunConfig::LuttingerSingle(_)));
        let coupled = RunConfig::from_json(
            r#"{"mode":"luttinger","system":"coupled","mass":0.5,"c":1.5,"rho0":0.63,"g_grid":[0.0,0.5],"bond_dim":2}"#,
        )
        .unwrap();
        assert!(matches!(coupled, RunConfig::LuttingerCoupled(_)));
    }
}
