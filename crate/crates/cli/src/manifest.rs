use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;

pub const CODE_VERSION: &str = concat!("l2e ", env!("CARGO_PKG_VERSION"));

pub fn code_version() -> String {
    match option_env!("L2E_GIT_REV") {
        Some(rev) => format!("{CODE_VERSION}+{rev}"),
        None => CODE_VERSION.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactClass {
    /// Reproducible from (config, seed, version), byte for byte.
    Primary,
    /// Wall-clock data or other run-dependent output.
    Secondary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub class: ArtifactClass,
}

/// Written last by every command as `manifest.json` in the output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
    pub diverged: bool,
    pub artifacts: Vec<Artifact>,
    /// Command-specific resolved settings (e.g. epoch-to-step conversions).
    pub resolved: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<PathBuf>,
}

fn now() -> String {
    let t: DateTime<Utc> = Utc::now();
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, config: Option<&LoadedConfig>) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path: config.map(|c| c.path.clone()),
            config_sha256: config.map(|c| c.sha256.clone()),
            seed: config.map(|c| c.seed),
            code_version: code_version(),
            started_at: now(),
            finished_at: None,
            status: "running".into(),
            diverged: false,
            artifacts: Vec::new(),
            resolved: BTreeMap::new(),
            inputs: Vec::new(),
        }
    }

    pub fn primary(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(Artifact {
            path: path.into(),
            class: ArtifactClass::Primary,
        });
    }

    pub fn secondary(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(Artifact {
            path: path.into(),
            class: ArtifactClass::Secondary,
        });
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.resolved
            .insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn finish(mut self, out: &Path, status: &str) -> Result<()> {
        self.finished_at = Some(now());
        self.status = status.to_string();
        let bytes = serde_json::to_vec_pretty(&self)?;
        l2e::persist::write_atomic(&out.join("manifest.json"), &bytes)?;
        Ok(())
    }
}
