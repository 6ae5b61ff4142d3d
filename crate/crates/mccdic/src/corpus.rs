//! Training corpora on disk.
//!
//! A corpus directory holds `<stem>_ref.mct` and `<stem>_target.mct` per
//! pair, plus an optional `<stem>_gt.mct` clean target. Pairs are loaded
//! in sorted stem order.

use std::path::Path;

use mccdic_core::learn::TrainingPair;

use crate::error::{Error, Result};
use crate::io::{read_image, write_mct};

const REF_SUFFIX: &str = "_ref.mct";

pub fn load_corpus(dir: &Path) -> Result<Vec<TrainingPair>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(REF_SUFFIX) {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    if stems.is_empty() {
        return Err(Error::format(dir, "no *_ref.mct files in corpus"));
    }
    stems
        .iter()
        .map(|stem| {
            let reference = read_image(&dir.join(format!("{stem}{REF_SUFFIX}")))?;
            let target = read_image(&dir.join(format!("{stem}_target.mct")))?;
            let gt_path = dir.join(format!("{stem}_gt.mct"));
            Ok(if gt_path.exists() {
                TrainingPair::with_ground_truth(reference, target, read_image(&gt_path)?)
            } else {
                TrainingPair::new(reference, target)
            })
        })
        .collect()
}

/// Writes `pairs` as `pair_000_*.mct`, ... into `dir`.
pub fn save_corpus(dir: &Path, pairs: &[TrainingPair]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in pairs.iter().enumerate() {
        let stem = format!("pair_{i:03}");
        write_mct(&dir.join(format!("{stem}{REF_SUFFIX}")), &p.reference)?;
        write_mct(&dir.join(format!("{stem}_target.mct")), &p.target)?;
        write_mct(&dir.join(format!("{stem}_gt.mct")), &p.ground_truth)?;
    }
    Ok(())
}
