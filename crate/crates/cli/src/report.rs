//! Tidy plot-data emission from completed runs.
//!
//! Every series file is a three-column `x,y,series` table, one row per
//! point, validated against the series schema before the command reports
//! success. These are the data behind the standard figures: energy and
//! Luttinger parameters against the dimensionless coupling (with the exact
//! solver overlaid), and correlation, energy and normal-mode parameters
//! against the inter-species coupling.

use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::config::RunConfig;
use crate::io::{read_json, validate_series_csv, write_csv, Cell};
use crate::modes::{
    self, BethePoint, CoupledPoint, LuttingerCoupledRunner, LuttingerSingleRunner, OptimPoint,
    PointRecord,
};

fn series_row(x: f64, y: f64, label: &str) -> Vec<Cell> {
    vec![Cell::Float(x), Cell::Float(y), Cell::Text(label.to_string())]
}

/// Load the run, rebuild its series tables, validate and return them.
pub fn report(dir: &Path) -> Result<Vec<String>> {
    let record = read_json(&dir.join(modes::RECORD_FILE))
        .with_context(|| format!("{} has no completed run record", dir.display()))?;
    let config_value = record.get("config").context("record has no config")?;
    let config = RunConfig::from_json(&serde_json::to_string(config_value)?)?;

    let point_records: Vec<PointRecord> =
        serde_json::from_value(record.get("points").context("record has no points")?.clone())?;
    let points_dir = dir.join(modes::POINTS_DIR);
    let mut missing = Vec::new();
    let mut payloads = Vec::with_capacity(point_records.len());
    for pr in &point_records {
        match read_json(&points_dir.join(&pr.file)) {
            Ok(v) => payloads.push(v),
            Err(_) => missing.push(pr.file.clone()),
        }
    }
    if !missing.is_empty() {
        bail!("missing inputs: {}", missing.join(", "));
    }

    let mut written = Vec::new();
    match &config {
        RunConfig::Bethe(_) => {
            let mut rows = Vec::new();
            for p in &payloads {
                let pt: BethePoint = serde_json::from_value(p.clone())?;
                rows.push(series_row(pt.gamma, pt.energy, "bethe"));
            }
            let f = "series_energy_vs_gamma.csv";
            write_csv(&dir.join(f), &["x", "y", "series"], &rows)?;
            written.push(f.to_string());
        }
        RunConfig::Single(c) => {
            let pt: OptimPoint = serde_json::from_value(payloads[0].clone())?;
            let rows = vec![series_row(pt.rho, pt.energy, &format!("cmps-D{}", c.bond_dim))];
            let f = "series_energy_vs_density.csv";
            write_csv(&dir.join(f), &["x", "y", "series"], &rows)?;
            written.push(f.to_string());
        }
        RunConfig::SweepDensity(c) => {
            let mut rows = Vec::new();
            for p in &payloads {
                let pt: OptimPoint = serde_json::from_value(p.clone())?;
                rows.push(series_row(pt.rho, pt.energy, &format!("cmps-D{}", c.bond_dim)));
            }
            let f = "series_energy_vs_density.csv";
            write_csv(&dir.join(f), &["x", "y", "series"], &rows)?;
            written.push(f.to_string());
        }
        RunConfig::Coupled(c) => {
            let label = format!("P{}-D{}", c.pairs, c.bond_dim);
            let mut energy_rows = Vec::new();
            let mut corr_rows = Vec::new();
            for p in &payloads {
                let pt: CoupledPoint = serde_json::from_value(p.clone())?;
                energy_rows.push(series_row(pt.g, pt.energy, &label));
                corr_rows.push(series_row(pt.g, pt.correlation, &label));
            }
            let fe = "series_energy_vs_g.csv";
            write_csv(&dir.join(fe), &["x", "y", "series"], &energy_rows)?;
            written.push(fe.to_string());
            let fc = "series_correlation_vs_g.csv";
            write_csv(&dir.join(fc), &["x", "y", "series"], &corr_rows)?;
            written.push(fc.to_string());
        }
        RunConfig::LuttingerSingle(c) => {
            let runner = LuttingerSingleRunner::new(c);
            let mut energy_rows = Vec::new();
            let mut luttinger_rows = Vec::new();
            for (gi, &gamma) in c.gammas.iter().enumerate() {
                for (dj, &d) in c.bond_dims.iter().enumerate() {
                    let unit = gi * c.bond_dims.len() + dj;
                    let (surface, _) = runner.surface_for_unit(&payloads, unit)?;
                    let lr = cmpslab_core::luttinger::luttinger_single(&surface, c.rho0, c.mass)?;
                    energy_rows.push(series_row(
                        gamma,
                        surface.value(&[c.rho0])?,
                        &format!("cmps-D{d}"),
                    ));
                    luttinger_rows.push(series_row(gamma, lr.v, &format!("v-D{d}")));
                    luttinger_rows.push(series_row(gamma, lr.k, &format!("K-D{d}")));
                }
                let oracle = runner.oracle_surface(&payloads, gi)?;
                let lr = cmpslab_core::luttinger::luttinger_single(&oracle, c.rho0, c.mass)?;
                energy_rows.push(series_row(gamma, oracle.value(&[c.rho0])?, "bethe"));
                luttinger_rows.push(series_row(gamma, lr.v, "v-bethe"));
                luttinger_rows.push(series_row(gamma, lr.k, "K-bethe"));
            }
            let fe = "series_energy_vs_gamma.csv";
            write_csv(&dir.join(fe), &["x", "y", "series"], &energy_rows)?;
            written.push(fe.to_string());
            let fl = "series_luttinger_vs_gamma.csv";
            write_csv(&dir.join(fl), &["x", "y", "series"], &luttinger_rows)?;
            written.push(fl.to_string());
        }
        RunConfig::LuttingerCoupled(c) => {
            let runner = LuttingerCoupledRunner::new(c);
            let tag = format!("P{}-D{}", c.pairs, c.bond_dim);
            let mut rows = Vec::new();
            for (u, &g) in c.g_grid.iter().enumerate() {
                let surface = runner.surface_for_unit(&payloads, u)?;
                let (plus, minus) = runner.extract(&surface)?;
                rows.push(series_row(g, plus.v, &format!("v_plus-{tag}")));
                rows.push(series_row(g, minus.v, &format!("v_minus-{tag}")));
                rows.push(series_row(g, plus.k, &format!("K_plus-{tag}")));
                rows.push(series_row(g, minus.k, &format!("K_minus-{tag}")));
            }
            let f = "series_luttinger_vs_g.csv";
            write_csv(&dir.join(f), &["x", "y", "series"], &rows)?;
            written.push(f.to_string());
        }
    }

    for name in &written {
        validate_series_csv(&dir.join(name))
            .with_context(|| format!("emitted series {name} failed validation"))?;
    }
    Ok(written)
}
