use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Stage};
use crate::RunError;

const MANIFEST: &str = "manifest.json";

/// Twelve significant digits in scientific notation; `-0` prints as `0`.
pub fn format_number(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the effective config (after command-line overrides) as JSON.
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub versions: Versions,
    /// Every file under the output directory except the manifest itself.
    pub files: Vec<ManifestFile>,
    pub timings: Vec<StageTiming>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Versions {
    pub qstein: String,
    pub qstein_cli: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub(crate) struct OutDir {
    root: PathBuf,
}

impl OutDir {
    /// Creates `root` and removes the artifacts of a previous run recorded in
    /// its manifest, so that the new manifest describes the directory.
    pub fn prepare(root: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(root).map_err(|e| RunError::io(root, e))?;
        let old = root.join(MANIFEST);
        if let Ok(text) = fs::read_to_string(&old) {
            if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                for f in m.files {
                    let p = root.join(&f.path);
                    if p.is_file() {
                        fs::remove_file(&p).map_err(|e| RunError::io(&p, e))?;
                    }
                }
            }
        }
        Ok(Self { root: root.to_path_buf() })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let p = self.root.join(name);
        fs::write(&p, bytes).map_err(|e| RunError::io(&p, e))
    }

    pub fn csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<(), RunError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let p = self.root.join(name);
        let csv_err = |e: csv::Error| RunError::io(&p, std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::io(&p, std::io::Error::other(e.to_string())))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), RunError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serializes");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn walk(&self, dir: &Path, out: &mut Vec<ManifestFile>) -> Result<(), RunError> {
        let entries = fs::read_dir(dir).map_err(|e| RunError::io(dir, e))?;
        for entry in entries {
            let p = entry.map_err(|e| RunError::io(dir, e))?.path();
            if p.is_dir() {
                self.walk(&p, out)?;
                continue;
            }
            let rel = p.strip_prefix(&self.root).expect("under root");
            let rel = rel.iter().map(|c| c.to_string_lossy()).collect::<Vec<_>>().join("/");
            if rel == MANIFEST {
                continue;
            }
            let bytes = fs::read(&p).map_err(|e| RunError::io(&p, e))?;
            out.push(ManifestFile { path: rel, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        }
        Ok(())
    }

    pub fn finish(
        self,
        cfg: &ExperimentConfig,
        stages: &[Stage],
        timings: Vec<StageTiming>,
    ) -> Result<RunManifest, RunError> {
        let mut files = Vec::new();
        self.walk(&self.root, &mut files)?;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            config_sha256: sha256_hex(&serde_json::to_vec(cfg).expect("config serializes")),
            seed: cfg.seed,
            stages: stages.iter().map(|s| s.name().to_string()).collect(),
            versions: Versions { qstein: qstein::VERSION.into(), qstein_cli: env!("CARGO_PKG_VERSION").into() },
            files,
            timings,
        };
        self.json(MANIFEST, &manifest)?;
        Ok(manifest)
    }
}
