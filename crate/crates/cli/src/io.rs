//! Artifact I/O: atomic file writes, fixed-precision CSV emission, and the
//! tidy-series validator.
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! readers never observe a half-written artifact and interrupted runs can
//! be resumed from whole files only. Floating-point columns use 17
//! significant digits, which round-trips f64 exactly.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Write bytes atomically (temp file + rename within the directory).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().context("artifact path has no parent")?;
    std::fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(path);
    let mut name = tmp.file_name().context("artifact path has no name")?.to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// 17-significant-digit representation, lossless for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV cell: floats at full precision, everything else as given.
#[derive(Debug, Clone)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }
}

/// RFC-4180 table: header row, CRLF line endings, UTF-8.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push_str("\r\n");
    for row in rows {
        if row.len() != header.len() {
            bail!("row width {} does not match header width {}", row.len(), header.len());
        }
        let rendered: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&rendered.join(","));
        out.push_str("\r\n");
    }
    write_atomic(path, out.as_bytes())
}

/// Check that a file is a UTF-8, RFC-4180 `x,y,series` table with float x
/// and y columns. Used on every report artifact before it is published.
pub fn validate_series_csv(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).context("series CSV must be UTF-8")?;
    let mut lines = text.split("\r\n");
    let header = lines.next().context("series CSV is empty")?;
    if header != "x,y,series" {
        bail!("series CSV header must be exactly `x,y,series`, got {header:?}");
    }
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue; // trailing terminator
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("row {} has {} fields, expected 3", i + 2, fields.len());
        }
        fields[0]
            .parse::<f64>()
            .with_context(|| format!("row {}: x is not a float", i + 2))?;
        fields[1]
            .parse::<f64>()
            .with_context(|| format!("row {}: y is not a float", i + 2))?;
        if fields[2].is_empty() {
            bail!("row {}: empty series label", i + 2);
        }
    }
    Ok(())
}

/// Read and parse a JSON artifact.
pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Serialize a JSON artifact with stable key order and trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -1.6e-19, 0.63 * 0.63] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn csv_and_validator_agree() {
        let dir = std::env::temp_dir().join(format!("cmpslab-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("series.csv");
        write_csv(
            &path,
            &["x", "y", "series"],
            &[
                vec![Cell::Float(1.0), Cell::Float(2.0), Cell::Text("a".into())],
                vec![Cell::Float(2.0), Cell::Float(4.0), Cell::Text("a".into())],
            ],
        )
        .unwrap();
        validate_series_csv(&path).unwrap();
        std::fs::write(&path, "x,y\r\n1,2\r\n").unwrap();
        assert!(validate_series_csv(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
