//! Run manifest: records what each stage produced, with content hashes so a
//! later stage can refuse to run on silently edited inputs.

use crate::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    pub timing_s: f64,
    pub files: Vec<FileEntry>,
    /// Small scalar stats, e.g. row counts and acceptance rates.
    pub stats: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub config_sha256: String,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(config_text: &str) -> Self {
        RunManifest {
            version: MANIFEST_VERSION,
            config_sha256: sha256_hex(config_text.as_bytes()),
            stages: BTreeMap::new(),
        }
    }

    pub fn path(out_dir: &Path) -> PathBuf {
        out_dir.join(MANIFEST_FILE)
    }

    /// Loads the manifest if present, otherwise starts a fresh one. A
    /// config hash mismatch means the run directory belongs to a different
    /// configuration and is refused.
    pub fn load_or_new(out_dir: &Path, config_text: &str) -> Result<Self, CliError> {
        let path = Self::path(out_dir);
        if !path.exists() {
            return Ok(Self::new(config_text));
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("malformed manifest {}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(CliError::Data(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        let want = sha256_hex(config_text.as_bytes());
        if m.config_sha256 != want {
            return Err(CliError::Data(
                "manifest was produced by a different config; use a fresh output directory".into(),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(Self::path(out_dir), text)
            .map_err(|e| CliError::Data(format!("cannot write manifest: {e}")))?;
        Ok(())
    }

    pub fn record_stage(
        &mut self,
        name: &str,
        seed: u64,
        timing_s: f64,
        out_dir: &Path,
        files: &[&str],
        stats: BTreeMap<String, f64>,
    ) -> Result<(), CliError> {
        let mut entries = Vec::with_capacity(files.len());
        for f in files {
            entries.push(FileEntry { path: (*f).into(), sha256: sha256_file(&out_dir.join(f))? });
        }
        self.stages.insert(
            name.into(),
            StageRecord { seed, timing_s, files: entries, stats },
        );
        Ok(())
    }

    /// Confirms a prior stage ran and its outputs still match their hashes.
    /// Returns the record for callers that need its stats.
    pub fn require_stage(&self, name: &str, out_dir: &Path) -> Result<&StageRecord, CliError> {
        let rec = self.stages.get(name).ok_or_else(|| {
            CliError::Data(format!("stage '{name}' has not been run in this output directory"))
        })?;
        for f in &rec.files {
            let path = out_dir.join(&f.path);
            if !path.exists() {
                return Err(CliError::Data(format!(
                    "stage '{name}' output {} is missing",
                    f.path
                )));
            }
            let got = sha256_file(&path)?;
            if got != f.sha256 {
                return Err(CliError::Data(format!(
                    "stage '{name}' output {} does not match its recorded hash; rerun the stage",
                    f.path
                )));
            }
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_known_vector() {
        // sha256 of the empty string and of "abc" are fixed points of the standard.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn stage_verification_detects_edits() {
        let dir = tempdir();
        std::fs::write(dir.join("a.csv"), b"x,y\n1,2\n").unwrap();
        let mut m = RunManifest::new("cfg");
        m.record_stage("generate", 1, 0.5, &dir, &["a.csv"], BTreeMap::new()).unwrap();
        m.require_stage("generate", &dir).unwrap();

        std::fs::write(dir.join("a.csv"), b"x,y\n1,3\n").unwrap();
        let err = m.require_stage("generate", &dir).unwrap_err();
        assert!(err.to_string().contains("a.csv"));

        let err = m.require_stage("label", &dir).unwrap_err();
        assert!(err.to_string().contains("label"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn reload_refuses_foreign_config() {
        let dir = tempdir();
        let m = RunManifest::new("cfg-a");
        m.save(&dir).unwrap();
        RunManifest::load_or_new(&dir, "cfg-a").unwrap();
        let err = RunManifest::load_or_new(&dir, "cfg-b").unwrap_err();
        assert!(err.to_string().contains("different config"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn tempdir() -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "mechsyn-manifest-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
