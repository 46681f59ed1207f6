use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{put_f64s, Reader};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::meta::{
    FeatureNorm, MetaParams, ALPHA_B, ALPHA_W, BETA_B, BETA_W, EMA_DECAYS, FEATURE_NAMES, HIDDEN,
    META_PARAM_COUNT, NUM_FEATURES, TRUNK_B, TRUNK_W,
};

pub const META_MAGIC: &[u8; 8] = b"L2EMETA\0";
pub const META_VERSION: u32 = 1;

pub fn meta_to_bytes(meta: &MetaParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + 8 * meta.values.len());
    out.extend_from_slice(META_MAGIC);
    out.extend_from_slice(&META_VERSION.to_le_bytes());
    out.push(meta.norm.code());
    out.extend_from_slice(&(meta.values.len() as u32).to_le_bytes());
    put_f64s(&mut out, &meta.values);
    out
}

pub fn meta_from_bytes(bytes: &[u8]) -> Result<MetaParams> {
    let mut r = Reader::new(bytes);
    r.magic(META_MAGIC)?;
    let version = r.u32("version")?;
    if version != META_VERSION {
        return Err(Error::Version {
            what: "meta-parameter",
            found: version,
            supported: META_VERSION,
        });
    }
    let at = r.offset();
    let norm = FeatureNorm::from_code(r.u8("normalisation code")?)
        .ok_or_else(|| Error::format(at, "unknown feature normalisation code"))?;
    let at = r.offset();
    let count = r.u32("count")? as usize;
    if count != META_PARAM_COUNT {
        return Err(Error::format(
            at,
            format!("expected {META_PARAM_COUNT} meta-parameters, header says {count}"),
        ));
    }
    let values = r.f64s(count, "meta-parameter values")?;
    r.finish()?;
    MetaParams::from_values(values, norm)
}

/// Human-readable description written next to a meta-parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSidecar {
    pub format_version: u32,
    pub feature_columns: Vec<String>,
    pub ema_decays: Vec<f64>,
    pub normalisation: FeatureNorm,
    pub hidden_units: usize,
    /// `(name, offset, shape)` of each block in storage order.
    pub blocks: Vec<(String, usize, Vec<usize>)>,
}

pub fn meta_sidecar(meta: &MetaParams) -> MetaSidecar {
    MetaSidecar {
        format_version: META_VERSION,
        feature_columns: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        ema_decays: EMA_DECAYS.to_vec(),
        normalisation: meta.norm,
        hidden_units: HIDDEN,
        blocks: vec![
            ("trunk.weight".into(), TRUNK_W, vec![HIDDEN, NUM_FEATURES]),
            ("trunk.bias".into(), TRUNK_B, vec![HIDDEN]),
            ("alpha.weight".into(), ALPHA_W, vec![HIDDEN]),
            ("alpha.bias".into(), ALPHA_B, vec![1]),
            ("beta.weight".into(), BETA_W, vec![HIDDEN]),
            ("beta.bias".into(), BETA_B, vec![1]),
        ],
    }
}

/// Writes `path` and a `<path>.json` sidecar.
pub fn save_meta(path: &Path, meta: &MetaParams) -> Result<()> {
    write_atomic(path, &meta_to_bytes(meta))?;
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    let json = serde_json::to_vec_pretty(&meta_sidecar(meta))?;
    write_atomic(Path::new(&side), &json)
}

pub fn load_meta(path: &Path) -> Result<MetaParams> {
    meta_from_bytes(&std::fs::read(path)?)
}
