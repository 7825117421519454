use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{evaluate_dataset, EvalReport};
use crate::tensor_store::{load_tensor, DatasetScan, OodMask, ScoreMap, OOD_MASKS_DIR};

/// `<id>.npy` files of a directory, keyed by id.
pub fn load_score_dir(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("npy") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Evaluates in-memory score maps against the anomaly masks of a dataset.
/// Samples without a mask are left out.
pub fn evaluate_scores(scored: &[(String, ScoreMap)], dataset: &DatasetScan) -> Result<EvalReport> {
    let mut masks = Vec::with_capacity(scored.len());
    let mut unmatched = Vec::new();
    for (id, map) in scored {
        match dataset
            .get(id)
            .map(|s| s.load_ood_mask())
            .transpose()?
            .flatten()
        {
            Some(mask) => masks.push((id.as_str(), map, mask)),
            None => unmatched.push(id.clone()),
        }
    }
    if masks.is_empty() {
        return Err(Error::Validation(format!(
            "none of the scored images has a mask under {}",
            dataset.root.join(OOD_MASKS_DIR).display()
        )));
    }
    let pairs: Vec<(&str, &ScoreMap, &OodMask)> =
        masks.iter().map(|(i, s, m)| (*i, *s, m)).collect();
    let mut report = evaluate_dataset(&pairs)?;
    report.unmatched_ids = unmatched;
    Ok(report)
}

/// Pairs `<id>.npy` score maps with `<id>.npy` masks by id and evaluates the
/// intersection. `masks_dir` may also be a dataset root holding `ood_masks/`.
pub fn cmd_eval(scores_dir: &Path, masks_dir: &Path) -> Result<EvalReport> {
    let nested = masks_dir.join(OOD_MASKS_DIR);
    let masks_dir = if nested.is_dir() {
        nested.as_path()
    } else {
        masks_dir
    };
    let scores = load_score_dir(scores_dir)?;
    let masks = load_score_dir(masks_dir)?;

    let unmatched: Vec<String> = scores
        .keys()
        .filter(|id| !masks.contains_key(*id))
        .chain(masks.keys().filter(|id| !scores.contains_key(*id)))
        .cloned()
        .collect();
    for id in &unmatched {
        log::warn!("{id}: no counterpart, not evaluated");
    }
    let ids: Vec<&String> = scores.keys().filter(|id| masks.contains_key(*id)).collect();
    if ids.is_empty() {
        return Err(Error::Validation(format!(
            "no image id is shared by {} and {}",
            scores_dir.display(),
            masks_dir.display()
        )));
    }

    let loaded: Vec<(ScoreMap, OodMask)> = ids
        .par_iter()
        .map(|id| Ok((load_tensor(&scores[*id])?, load_tensor(&masks[*id])?)))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&str, &ScoreMap, &OodMask)> = ids
        .iter()
        .zip(&loaded)
        .map(|(id, (s, m))| (id.as_str(), s, m))
        .collect();
    let mut report = evaluate_dataset(&pairs)?;
    report.unmatched_ids = unmatched;
    Ok(report)
}
