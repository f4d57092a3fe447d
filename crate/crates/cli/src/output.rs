//! Manifests, tables and error reporting.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use substab::io::write_json;
use substab::DesignMatrix;
use substab::FeatureSet;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Versions {
    pub substab: String,
    pub substab_cli: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// Command options, without the output directory.
    pub config: serde_json::Value,
    /// SHA-256 of the command name and the compact JSON of `config`.
    pub config_hash: String,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub versions: Versions,
    pub created_at: String,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = file.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_manifest<T: Serialize>(
    out: &Path,
    command: &str,
    seed: u64,
    args: &T,
    inputs: &[&Path],
    outputs: &[String],
) -> Result<()> {
    let mut config = serde_json::to_value(args)?;
    if let Some(map) = config.as_object_mut() {
        map.remove("out");
    }
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(&config)?);
    let manifest = Manifest {
        command: command.to_owned(),
        seed,
        config,
        config_hash: hex::encode(hasher.finalize()),
        inputs: inputs
            .iter()
            .map(|p| {
                Ok(InputFile {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?,
        outputs: outputs.to_vec(),
        versions: Versions {
            substab: substab::VERSION.to_owned(),
            substab_cli: env!("CARGO_PKG_VERSION").to_owned(),
        },
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn names_of(x: &DesignMatrix, s: &FeatureSet) -> Vec<String> {
    s.iter().map(|j| x.name(j)).collect()
}

/// Plain-text table with left-aligned columns.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        format!("{}\n", padded.join("  ").trim_end())
    };
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let mut out = line(header.to_vec());
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Structured error on stderr.
pub fn report_error(e: &anyhow::Error) {
    let kind = match e.chain().find_map(|c| c.downcast_ref::<substab::Error>()) {
        Some(substab::Error::InvalidArgument(_)) => "invalid_argument",
        Some(substab::Error::DimensionMismatch { .. }) => "dimension_mismatch",
        Some(substab::Error::FeatureOutOfRange { .. }) => "feature_out_of_range",
        Some(substab::Error::RankDeficient(_)) => "rank_deficient",
        Some(substab::Error::BaseProcedure { .. }) => "base_procedure",
        Some(substab::Error::SearchBudgetExceeded { .. }) => "search_budget_exceeded",
        Some(substab::Error::Parse { .. }) => "parse",
        Some(substab::Error::Io { .. }) => "io",
        Some(substab::Error::Csv(_)) => "csv",
        Some(substab::Error::Json(_)) => "json",
        None => "error",
    };
    let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
    let body = serde_json::json!({
        "error": { "kind": kind, "message": e.to_string(), "causes": &chain[1..] }
    });
    eprintln!("{body}");
}
