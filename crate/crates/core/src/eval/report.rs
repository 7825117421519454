use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ScoreCounts;
use crate::error::{Error, Result};
use crate::tensor_store::{OodLabel, OodMask, ScoreMap};

pub const FPR_TPR_TARGET: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub id: String,
    pub ap: f64,
    pub fpr95: f64,
    pub auroc: f64,
    pub num_anomaly_pixels: u64,
    pub num_inlier_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub fpr95: f64,
    pub auroc: f64,
    pub num_anomaly_pixels: u64,
    pub num_inlier_pixels: u64,
    pub num_void_pixels: u64,
    pub num_images: usize,
    /// Images holding both classes; single-class images still count toward
    /// the pooled metrics.
    pub per_image: Vec<ImageReport>,
    pub skipped_images: Vec<String>,
    /// Ids present on only one side of a score/mask pairing.
    #[serde(default)]
    pub unmatched_ids: Vec<String>,
}

impl EvalReport {
    pub fn from_counts(counts: &ScoreCounts) -> Result<Self> {
        Ok(EvalReport {
            ap: counts.average_precision()?,
            fpr95: counts.fpr_at_tpr(FPR_TPR_TARGET)?,
            auroc: counts.auroc()?,
            num_anomaly_pixels: counts.positives(),
            num_inlier_pixels: counts.negatives(),
            num_void_pixels: 0,
            num_images: 0,
            per_image: Vec::new(),
            skipped_images: Vec::new(),
            unmatched_ids: Vec::new(),
        })
    }

    /// Fixed-order plain-text table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 7] = [
            ("AP", format!("{:.4}", self.ap)),
            ("FPR95", format!("{:.4}", self.fpr95)),
            ("AUROC", format!("{:.4}", self.auroc)),
            ("anomaly px", self.num_anomaly_pixels.to_string()),
            ("inlier px", self.num_inlier_pixels.to_string()),
            ("void px", self.num_void_pixels.to_string()),
            ("images", self.num_images.to_string()),
        ];
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<12}{value:>14}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn image_counts(id: &str, scores: &ScoreMap, mask: &OodMask) -> Result<(ScoreCounts, u64)> {
    if (scores.height(), scores.width()) != (mask.height(), mask.width()) {
        return Err(Error::Shape(format!(
            "{id}: scores are {}x{} but the mask is {}x{}",
            scores.height(),
            scores.width(),
            mask.height(),
            mask.width()
        )));
    }
    let mut values = Vec::with_capacity(scores.as_slice().len());
    let mut labels = Vec::with_capacity(values.capacity());
    let mut void = 0u64;
    for (&s, &l) in scores.as_slice().iter().zip(mask.as_slice()) {
        match l {
            OodLabel::Void => void += 1,
            _ => {
                values.push(s);
                labels.push(l == OodLabel::Anomaly);
            }
        }
    }
    Ok((ScoreCounts::from_pairs(&values, &labels)?, void))
}

/// Pooled pixel-level metrics over a dataset. Void pixels are excluded;
/// all remaining pixels of all images enter one ranking.
pub fn evaluate_dataset(pairs: &[(&str, &ScoreMap, &OodMask)]) -> Result<EvalReport> {
    let per_image: Vec<(ScoreCounts, u64)> = pairs
        .par_iter()
        .map(|(id, scores, mask)| image_counts(id, scores, mask))
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for ((id, _, _), (counts, _)) in pairs.iter().zip(&per_image) {
        if counts.positives() == 0 || counts.negatives() == 0 {
            log::info!("{id}: single-class image, left out of the per-image report");
            skipped.push(id.to_string());
            continue;
        }
        reports.push(ImageReport {
            id: id.to_string(),
            ap: counts.average_precision()?,
            fpr95: counts.fpr_at_tpr(FPR_TPR_TARGET)?,
            auroc: counts.auroc()?,
            num_anomaly_pixels: counts.positives(),
            num_inlier_pixels: counts.negatives(),
        });
    }

    let void: u64 = per_image.iter().map(|(_, v)| v).sum();
    let pooled = ScoreCounts::merge_all(per_image.into_iter().map(|(c, _)| c).collect());
    if pooled.positives() + pooled.negatives() == 0 {
        return Err(Error::UndefinedMetric("no valid (non-void) pixels".into()));
    }
    let mut report = EvalReport::from_counts(&pooled)?;
    report.num_void_pixels = void;
    report.num_images = pairs.len();
    report.per_image = reports;
    report.skipped_images = skipped;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{auroc, average_precision, fpr_at_tpr};

    fn mask(codes: &[i32], w: usize) -> OodMask {
        OodMask::new(
            codes.len() / w,
            w,
            codes.iter().map(|&c| OodLabel::from_code(c)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn one_image_matches_direct_metrics() {
        let scores = ScoreMap::new(2, 3, vec![0.1, 0.8, 0.4, 0.3, 0.9, 0.2]).unwrap();
        let m = mask(&[0, 1, 255, 0, 1, 0], 3);
        let report = evaluate_dataset(&[("a", &scores, &m)]).unwrap();
        let s = [0.1f32, 0.8, 0.3, 0.9, 0.2];
        let l = [false, true, false, true, false];
        assert_eq!(report.ap, average_precision(&s, &l).unwrap());
        assert_eq!(report.fpr95, fpr_at_tpr(&s, &l, 0.95).unwrap());
        assert_eq!(report.auroc, auroc(&s, &l).unwrap());
        assert_eq!(report.num_void_pixels, 1);
        assert_eq!(report.per_image.len(), 1);
    }

    #[test]
    fn inlier_only_image_is_pooled_but_not_reported() {
        let s1 = ScoreMap::new(1, 2, vec![0.9, 0.1]).unwrap();
        let m1 = mask(&[1, 0], 2);
        let s2 = ScoreMap::new(1, 2, vec![0.5, 0.95]).unwrap();
        let m2 = mask(&[0, 0], 2);
        let report = evaluate_dataset(&[("a", &s1, &m1), ("b", &s2, &m2)]).unwrap();
        assert_eq!(report.skipped_images, vec!["b".to_string()]);
        assert_eq!(report.num_inlier_pixels, 3);
        // 0.95 inlier outranks the anomaly
        assert!(report.ap < 1.0);
    }

    #[test]
    fn shape_mismatch_names_image() {
        let s = ScoreMap::new(1, 2, vec![0.9, 0.1]).unwrap();
        let m = mask(&[1, 0, 0], 3);
        let err = evaluate_dataset(&[("img7", &s, &m)]).unwrap_err();
        assert!(err.to_string().contains("img7"));
    }

    #[test]
    fn all_void_is_an_error() {
        let s = ScoreMap::new(1, 2, vec![0.9, 0.1]).unwrap();
        let m = mask(&[255, 255], 2);
        assert!(evaluate_dataset(&[("a", &s, &m)]).is_err());
    }

    #[test]
    fn table_order_is_fixed() {
        let s = ScoreMap::new(1, 2, vec![0.9, 0.1]).unwrap();
        let m = mask(&[1, 0], 2);
        let table = evaluate_dataset(&[("a", &s, &m)]).unwrap().table();
        let names: Vec<_> = table
            .lines()
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        assert_eq!(
            names,
            ["AP", "FPR95", "AUROC", "anomaly", "inlier", "void", "images"]
        );
    }
}
