use std::collections::BTreeMap;
use std::path::Path;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::harness::{RunResult, Scenario};

pub const MANIFEST_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Companion record of a run: what was simulated and where outputs went.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: Scenario,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
    /// Wall-clock start and end, seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(scenario: &Scenario, started: f64) -> Self {
        Self {
            version: MANIFEST_VERSION.to_string(),
            seed: scenario.cfg.rng_seed,
            config: scenario.clone(),
            metrics: BTreeMap::new(),
            files: Vec::new(),
            started,
            finished: started,
        }
    }

    pub fn now() -> f64 {
        unix_now()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Summary numbers recorded in the manifest. Keys are stable.
pub fn run_metrics(r: &RunResult) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for trace in &r.kinds {
        let tag = trace.kind.tag();
        if let Some(v) = r.steady_max_error(trace.kind) {
            m.insert(format!("steady_max_error_{tag}"), v);
        }
        if let Some(v) = r.steady_mean_error(trace.kind) {
            m.insert(format!("steady_mean_error_{tag}"), v);
        }
        m.insert(format!("mae_{tag}"), trace.mae);
    }
    if let Some(v) = r.improvement() {
        m.insert("improvement_ratio".into(), v);
    }
    m.insert("min_clamp_current".into(), r.min_clamp_current);
    m.insert("samples".into(), r.len() as f64);
    m
}

/// Writes the manifest as pretty JSON, atomically.
pub fn write_manifest(manifest: &RunManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(manifest)?;
    write_atomic(path, |w| {
        w.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_keys_and_round_trip() {
        let s = Scenario::imbalanced(0.02);
        let mut m = RunManifest::new(&s, 1.0);
        m.metrics.insert("improvement_ratio".into(), 0.4);
        m.files.push("run.csv".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        write_manifest(&m, &p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        for key in ["version", "seed", "config", "metrics", "files"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["seed"], 1);
        assert_eq!(RunManifest::read(&p).unwrap(), m);
        // No temporary files left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
