//! Writes an outcome into the output directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde_json::json;

use crate::ops::{config_hash, Artifact, Outcome};
use crate::scenario::Scenario;

/// Reproducibility stamp; the only artifact with a timestamp.
pub fn stamp(sc: &Scenario) -> Artifact {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let v = json!({
        "config_hash": config_hash(sc),
        "seed": sc.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix": now,
    });
    let mut bytes = serde_json::to_vec_pretty(&v).expect("stamp serializes");
    bytes.push(b'\n');
    Artifact {
        name: "stamp.json".into(),
        bytes,
    }
}

pub fn report_bytes(out: &Outcome) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(&out.report).expect("report serializes");
    b.push(b'\n');
    b
}

pub fn write_artifacts(dir: &Path, files: &[Artifact]) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for a in files {
        let p = dir.join(&a.name);
        std::fs::write(&p, &a.bytes).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    Ok(written)
}

/// `report.json`, `stamp.json` and the operation's traces.
pub fn write_outcome(sc: &Scenario, out: &Outcome) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = vec![
        Artifact {
            name: "report.json".into(),
            bytes: report_bytes(out),
        },
        stamp(sc),
    ];
    files.extend(out.artifacts.iter().cloned());
    write_artifacts(&sc.output_dir, &files)
}
