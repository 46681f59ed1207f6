use std::path::Path;

use serde::Deserialize;

use super::format::{put_f64s, Reader};
use super::write_atomic;
use crate::diagnostics::Predictive;
use crate::error::{Error, Result};

pub const PRED_MAGIC: &[u8; 8] = b"L2EPRED\0";

/// Rows of a reference must sum to one within this tolerance.
const ROW_TOL: f64 = 1e-6;

/// magic, u64 rows, u64 classes, then `rows × classes` values row-major.
pub fn predictive_to_bytes(p: &Predictive) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * p.probs.len());
    out.extend_from_slice(PRED_MAGIC);
    out.extend_from_slice(&(p.rows as u64).to_le_bytes());
    out.extend_from_slice(&(p.classes as u64).to_le_bytes());
    put_f64s(&mut out, &p.probs);
    out
}

pub fn predictive_from_bytes(bytes: &[u8]) -> Result<Predictive> {
    let mut r = Reader::new(bytes);
    r.magic(PRED_MAGIC)?;
    let at = r.offset();
    let rows = r.u64("rows")? as usize;
    let classes = r.u64("classes")? as usize;
    let n = rows
        .checked_mul(classes)
        .ok_or_else(|| Error::format(at, "shape overflows"))?;
    let probs = r.f64s(n, "probabilities")?;
    r.finish()?;
    let p = Predictive::new(rows, classes, probs).map_err(|e| Error::format(at, e.to_string()))?;
    p.validate(ROW_TOL)
        .map_err(|e| Error::format(at, e.to_string()))?;
    Ok(p)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonPredictive {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Loads a reference predictive: the binary form above, or JSON
/// `{"rows": N, "cols": C, "data": [...]}` with row-major data.
pub fn load_reference(path: &Path) -> Result<Predictive> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(PRED_MAGIC) {
        return predictive_from_bytes(&bytes);
    }
    let j: JsonPredictive = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(e.column() as u64, format!("invalid reference JSON: {e}")))?;
    let p = Predictive::new(j.rows, j.cols, j.data).map_err(|e| Error::format(0, e.to_string()))?;
    p.validate(ROW_TOL)
        .map_err(|e| Error::format(0, e.to_string()))?;
    Ok(p)
}

pub fn save_reference(path: &Path, p: &Predictive) -> Result<()> {
    write_atomic(path, &predictive_to_bytes(p))
}
