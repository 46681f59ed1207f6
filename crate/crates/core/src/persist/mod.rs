//! Binary persistence of sample sets, meta-parameters and reference
//! predictives. All floats are little-endian IEEE-754 binary64.
//!
//! Sample set file (`.l2es`):
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `L2ESMPL\0` |
//! | 4 | u32 format version |
//! | 8 | u64 header length `h` |
//! | h | UTF-8 JSON header (`SampleHeader`) |
//! | 8·K·d | snapshot values, snapshot-major |
//! | 41·U | update records: u64 step, f64 step size, f64 ‖Δθ‖², u8 flags, f64 ‖β‖², f64 energy |
//!
//! Wall-clock timing lives in a JSON sidecar (`<file>.timing.json`) so the
//! main file is byte-identical across reruns.
//!
//! Meta-parameter file (`.l2em`): magic `L2EMETA\0`, u32 version, u8
//! normalisation code, u32 count, then `count` values in storage order.

mod format;
mod meta;
mod predictive;
mod samples;

pub use meta::{
    load_meta, meta_from_bytes, meta_sidecar, meta_to_bytes, save_meta, MetaSidecar, META_MAGIC,
    META_VERSION,
};
pub use predictive::{
    load_reference, predictive_from_bytes, predictive_to_bytes, save_reference, PRED_MAGIC,
};
pub use samples::{
    load_sample_set, sample_set_from_bytes, sample_set_to_bytes, save_sample_set, timing_path,
    SampleHeader, SAMPLE_MAGIC, SAMPLE_VERSION,
};

use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a temporary sibling and renames it into place, so a
/// reader never observes a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
