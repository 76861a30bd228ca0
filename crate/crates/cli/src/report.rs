use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Provenance written into, or next to, every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub source: Source,
    pub config: Value,
    pub rng_seeds: Vec<u64>,
    pub threads: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Builtin(String),
    SpecFile(PathBuf),
}

pub struct ManifestBuilder {
    started: Instant,
    source: Source,
}

impl ManifestBuilder {
    pub fn start(source: Source) -> Self {
        Self {
            started: Instant::now(),
            source,
        }
    }

    pub fn finish(&self, config: impl Serialize, rng_seeds: Vec<u64>) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            source: self.source.clone(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            rng_seeds,
            threads: rayon::current_num_threads(),
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
        }
    }
}

/// Rates are shown with 9 significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-4..9).contains(&magnitude) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Writes `text` to `path` or stdout.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Structured document `{ "manifest": ..., <key>: body }`.
pub fn structured(manifest: &RunManifest, key: &str, body: impl Serialize) -> Result<String> {
    let mut doc = serde_json::Map::new();
    doc.insert("manifest".into(), serde_json::to_value(manifest)?);
    doc.insert(key.into(), serde_json::to_value(body)?);
    Ok(serde_json::to_string_pretty(&Value::Object(doc))? + "\n")
}

/// CSV outputs carry their manifest in `<path>.manifest.json`.
pub fn emit_csv(path: Option<&Path>, text: &str, manifest: &RunManifest) -> Result<()> {
    emit(path, text)?;
    if let Some(p) = path {
        let mut side = p.as_os_str().to_owned();
        side.push(".manifest.json");
        let side = PathBuf::from(side);
        fs::write(&side, serde_json::to_string_pretty(manifest)? + "\n")
            .with_context(|| format!("writing {}", side.display()))?;
    }
    Ok(())
}

pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.095437395), "0.0954373950");
        assert_eq!(sig9(0.540852083), "0.540852083");
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.5e-7), "1.50000000e-7");
        for v in [0.123456789123, 3.3e-3, 12.345678912] {
            let back: f64 = sig9(v).parse().unwrap();
            assert!((back - v).abs() <= v.abs() * 1e-8);
        }
    }
}
