//! Run manifests: resolved config, artifact checksums, pass/fail
//! checks, timings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

/// Everything one stage produced.
#[derive(Debug, Default)]
pub struct StageOutput {
    pub results: serde_json::Map<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl StageOutput {
    pub fn insert(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable result"),
        );
    }

    pub fn merge_under(&mut self, key: &str, other: StageOutput) {
        self.results
            .insert(key.to_string(), serde_json::Value::Object(other.results));
        self.checks.extend(other.checks);
        self.artifacts.extend(other.artifacts);
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config_text: String,
    pub results: serde_json::Map<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Wall-clock per stage; informational only and excluded from
    /// reproducibility comparisons.
    pub timings_ms: BTreeMap<String, u128>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_text: String) -> Self {
        Self {
            tool: format!("ldlab {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            config_text,
            results: serde_json::Map::new(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn absorb(&mut self, stage: &str, out: StageOutput, elapsed_ms: u128) {
        self.results
            .insert(stage.to_string(), serde_json::Value::Object(out.results));
        self.checks.extend(out.checks);
        self.artifacts.extend(out.artifacts);
        self.timings_ms.insert(stage.to_string(), elapsed_ms);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn save(&self, run_dir: &Path) -> Result<PathBuf> {
        let path = run_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Canonical serialization of everything that must be bit-identical
    /// across re-runs with the same config (excludes timings).
    pub fn reproducibility_key(&self) -> String {
        serde_json::to_string(&serde_json::json!({
            "config": self.config_sha256,
            "results": self.results,
            "checks": self.checks,
            "artifacts": self.artifacts,
        }))
        .expect("serializable manifest")
    }

    /// Verify that every referenced artifact exists with a matching
    /// checksum.
    pub fn verify_artifacts(&self, run_dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let path = run_dir.join(&a.path);
            let bytes =
                fs::read(&path).with_context(|| format!("missing artifact {}", path.display()))?;
            let sum = sha256_hex(&bytes);
            if sum != a.sha256 {
                anyhow::bail!("artifact {} checksum mismatch", a.path);
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write a file under the run dir and return its artifact record.
pub fn write_artifact(run_dir: &Path, name: &str, contents: &[u8]) -> Result<Artifact> {
    let path = run_dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(Artifact {
        path: name.to_string(),
        sha256: sha256_hex(contents),
    })
}

/// Resolve the run directory: an explicit `--out` is used as-is;
/// otherwise a timestamped, config-hashed directory under `runs/`.
pub fn resolve_run_dir(out: Option<&Path>, config_hash: &str) -> PathBuf {
    match out {
        Some(dir) => dir.to_path_buf(),
        None => {
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from("runs").join(format!("{stamp}-{}", &config_hash[..8]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_roundtrip_and_verification() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("decay", 7, "[run]\nseed = 7\n".into());
        let art = write_artifact(dir.path(), "curve.csv", b"n,a_n\n1,0.5\n").unwrap();
        m.artifacts.push(art);
        m.save(dir.path()).unwrap();
        let loaded = Manifest::load(&dir.path().join("manifest.json")).unwrap();
        loaded.verify_artifacts(dir.path()).unwrap();
        assert_eq!(loaded.reproducibility_key(), m.reproducibility_key());

        std::fs::write(dir.path().join("curve.csv"), b"tampered").unwrap();
        assert!(loaded.verify_artifacts(dir.path()).is_err());
    }

    #[test]
    fn timings_do_not_affect_reproducibility_key() {
        let mut a = Manifest::new("ld", 1, String::new());
        let mut b = Manifest::new("ld", 1, String::new());
        a.timings_ms.insert("ld".into(), 123);
        b.timings_ms.insert("ld".into(), 456);
        assert_eq!(a.reproducibility_key(), b.reproducibility_key());
    }
}
