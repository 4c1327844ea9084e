use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Record of one CLI invocation and the files it wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects written files and emits `manifest.json` next to them.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(self, subcommand: &str, config_path: Option<&Path>, seed: Option<u64>) -> Result<RunManifest> {
        let artifacts = self
            .files
            .iter()
            .map(|f| {
                Ok(Artifact {
                    path: f.clone(),
                    sha256: sha256_file(&self.dir.join(f))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            output_dir: self.dir.clone(),
            artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

/// Rehashes every listed artifact; returns the paths whose hash differs.
pub fn verify(manifest: &RunManifest) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        if sha256_file(&manifest.output_dir.join(&a.path))? != a.sha256 {
            bad.push(a.path.clone());
        }
    }
    Ok(bad)
}
