use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use l2e::persist::load_sample_set;
use l2e::sampler::SampleSet;

use crate::config::{self, LoadedConfig};
use crate::Common;

mod diagnose;
mod evaluate;
mod export;
mod meta_train;
mod probe;
mod sample;

pub use diagnose::diagnose;
pub use evaluate::evaluate;
pub use export::export;
pub use meta_train::meta_train;
pub use probe::probe;
pub use sample::sample;

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    l2e::Error::Config(msg.into()).into()
}

fn load_config(common: &Common) -> Result<LoadedConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| config_error("--config is required for this command"))?;
    config::load(path, common.seed)
}

fn load_optional_config(common: &Common) -> Result<Option<LoadedConfig>> {
    common
        .config
        .as_deref()
        .map(|p| config::load(p, common.seed))
        .transpose()
}

fn out_dir(common: &Common, cfg: Option<&LoadedConfig>) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.config.paths.out.clone()))
        .ok_or_else(|| config_error("no output directory: pass --out or set [paths] out"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn load_samples(paths: &[PathBuf]) -> Result<Vec<SampleSet>> {
    paths
        .iter()
        .map(|p| load_sample_set(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

/// All snapshots of `sets` in argument order, as one set.
fn pool(sets: &[SampleSet]) -> Result<SampleSet> {
    let first = sets
        .first()
        .ok_or_else(|| l2e::Error::Contract("no sample sets given".into()))?;
    let mut pooled = first.without_timing();
    for s in &sets[1..] {
        if s.layout != first.layout {
            return Err(l2e::Error::Contract("sample sets have different layouts".into()).into());
        }
        pooled.snapshots.extend(s.snapshots.iter().cloned());
    }
    pooled.update_log.clear();
    Ok(pooled)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    l2e::persist::write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// CSV text built in memory, written atomically.
struct Csv(Vec<u8>);

impl Csv {
    fn new(header: &str) -> Self {
        let mut v = Vec::new();
        writeln!(v, "{header}").unwrap();
        Csv(v)
    }

    fn row(&mut self, cells: &[String]) {
        writeln!(self.0, "{}", cells.join(",")).unwrap();
    }

    fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.0)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Base name of an input, so primary artifacts do not depend on where inputs live.
fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
