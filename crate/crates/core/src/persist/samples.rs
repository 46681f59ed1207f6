use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{put_f64s, Reader};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::model::Layout;
use crate::sampler::{DivergenceInfo, SampleSet, Snapshot, UpdateRecord};

pub const SAMPLE_MAGIC: &[u8; 8] = b"L2ESMPL\0";
pub const SAMPLE_VERSION: u32 = 1;

const HAS_BETA: u8 = 1;
const HAS_ENERGY: u8 = 2;

/// JSON header of a sample set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleHeader {
    pub sampler: String,
    pub total_steps: u64,
    pub burnin: u64,
    pub thin: u64,
    pub seed: u64,
    pub layout: Layout,
    pub dim: usize,
    pub steps: Vec<u64>,
    pub divergence: Option<DivergenceInfo>,
    pub update_records: usize,
}

/// Serialises everything except wall-clock timing.
pub fn sample_set_to_bytes(set: &SampleSet) -> Result<Vec<u8>> {
    let dim = set.dim();
    if set.snapshots.iter().any(|s| s.values.len() != dim) {
        return Err(Error::contract("snapshot length differs from layout"));
    }
    let header = SampleHeader {
        sampler: set.sampler.clone(),
        total_steps: set.total_steps,
        burnin: set.burnin,
        thin: set.thin,
        seed: set.seed,
        layout: set.layout.clone(),
        dim,
        steps: set.steps(),
        divergence: set.divergence.clone(),
        update_records: set.update_log.len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out =
        Vec::with_capacity(20 + json.len() + 8 * dim * set.len() + 41 * set.update_log.len());
    out.extend_from_slice(SAMPLE_MAGIC);
    out.extend_from_slice(&SAMPLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for s in &set.snapshots {
        put_f64s(&mut out, &s.values);
    }
    for u in &set.update_log {
        out.extend_from_slice(&u.step.to_le_bytes());
        out.extend_from_slice(&u.step_size.to_le_bytes());
        out.extend_from_slice(&u.delta_sq.to_le_bytes());
        let flags = if u.beta_sq.is_some() { HAS_BETA } else { 0 }
            | if u.energy.is_some() { HAS_ENERGY } else { 0 };
        out.push(flags);
        out.extend_from_slice(&u.beta_sq.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&u.energy.unwrap_or(0.0).to_le_bytes());
    }
    Ok(out)
}

/// Parses a sample set; the result carries no timing.
pub fn sample_set_from_bytes(bytes: &[u8]) -> Result<SampleSet> {
    let mut r = Reader::new(bytes);
    r.magic(SAMPLE_MAGIC)?;
    let version = r.u32("version")?;
    if version != SAMPLE_VERSION {
        return Err(Error::Version {
            what: "sample set",
            found: version,
            supported: SAMPLE_VERSION,
        });
    }
    let hlen = r.u64("header length")?;
    let at = r.offset();
    let hlen = usize::try_from(hlen).map_err(|_| Error::format(at, "header length overflows"))?;
    let raw = r.take(hlen, "header")?;
    let header: SampleHeader = serde_json::from_slice(raw)
        .map_err(|e| Error::format(at, format!("invalid header: {e}")))?;
    if header.dim != header.layout.len() {
        return Err(Error::format(at, "header dimension disagrees with layout"));
    }
    let mut snapshots = Vec::with_capacity(header.steps.len());
    for &step in &header.steps {
        snapshots.push(Snapshot {
            step,
            values: r.f64s(header.dim, "snapshot")?,
        });
    }
    let mut update_log = Vec::with_capacity(header.update_records);
    for _ in 0..header.update_records {
        let step = r.u64("update step")?;
        let step_size = r.f64("update step size")?;
        let delta_sq = r.f64("update norm")?;
        let at = r.offset();
        let flags = r.u8("update flags")?;
        if flags & !(HAS_BETA | HAS_ENERGY) != 0 {
            return Err(Error::format(at, "unknown update flags"));
        }
        let beta = r.f64("update beta norm")?;
        let energy = r.f64("update energy")?;
        update_log.push(UpdateRecord {
            step,
            step_size,
            delta_sq,
            beta_sq: (flags & HAS_BETA != 0).then_some(beta),
            energy: (flags & HAS_ENERGY != 0).then_some(energy),
        });
    }
    r.finish()?;
    Ok(SampleSet {
        layout: header.layout,
        snapshots,
        sampler: header.sampler,
        total_steps: header.total_steps,
        burnin: header.burnin,
        thin: header.thin,
        seed: header.seed,
        interval_seconds: None,
        divergence: header.divergence,
        update_log,
    })
}

/// `<path>.timing.json`.
pub fn timing_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".timing.json");
    PathBuf::from(p)
}

#[derive(Serialize, Deserialize)]
struct Timing {
    interval_seconds: Vec<f64>,
}

/// Writes the sample file and, when the set carries timing, its sidecar.
pub fn save_sample_set(path: &Path, set: &SampleSet) -> Result<()> {
    write_atomic(path, &sample_set_to_bytes(set)?)?;
    let tp = timing_path(path);
    match &set.interval_seconds {
        Some(t) => write_atomic(
            &tp,
            &serde_json::to_vec(&Timing {
                interval_seconds: t.clone(),
            })?,
        ),
        None => {
            if tp.exists() {
                std::fs::remove_file(&tp)?;
            }
            Ok(())
        }
    }
}

/// Reads a sample file and its timing sidecar if one exists.
pub fn load_sample_set(path: &Path) -> Result<SampleSet> {
    let mut set = sample_set_from_bytes(&std::fs::read(path)?)?;
    let tp = timing_path(path);
    if tp.exists() {
        let t: Timing = serde_json::from_slice(&std::fs::read(&tp)?)
            .map_err(|e| Error::format(0, format!("invalid timing sidecar: {e}")))?;
        set.interval_seconds = Some(t.interval_seconds);
    }
    Ok(set)
}
