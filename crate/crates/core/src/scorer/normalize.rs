use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ParametricKind;
use crate::error::{Error, Result};
use crate::tensor_store::ScoreMap;

/// Training-set extrema used to bring kNN and parametric scores to a
/// common range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub knn_max: f32,
    pub param_min: f32,
    pub param_max: f32,
}

impl NormalizationStats {
    pub fn new(knn_max: f32, param_min: f32, param_max: f32) -> Result<Self> {
        let all_finite = knn_max.is_finite() && param_min.is_finite() && param_max.is_finite();
        if !all_finite {
            return Err(Error::DegenerateFit("non-finite extrema".into()));
        }
        if knn_max <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "kNN maximum {knn_max} is not positive"
            )));
        }
        if param_max <= param_min {
            return Err(Error::DegenerateFit(format!(
                "parametric range [{param_min}, {param_max}] is empty"
            )));
        }
        Ok(NormalizationStats {
            knn_max,
            param_min,
            param_max,
        })
    }
}

/// Streaming extrema; chunks may be pushed in any grouping and accumulators
/// merged in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExtremaAccumulator {
    knn_max: Option<f32>,
    param: Option<(f32, f32)>,
}

impl ExtremaAccumulator {
    pub fn push_knn(&mut self, scores: &[f32]) {
        if let Some(m) = scores.iter().copied().reduce(f32::max) {
            self.knn_max = Some(self.knn_max.map_or(m, |cur| cur.max(m)));
        }
    }

    pub fn push_param(&mut self, scores: &[f32]) {
        for &v in scores {
            self.param = Some(match self.param {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
    }

    pub fn merge(&mut self, other: &ExtremaAccumulator) {
        if let Some(m) = other.knn_max {
            self.push_knn(&[m]);
        }
        if let Some((lo, hi)) = other.param {
            self.push_param(&[lo, hi]);
        }
    }

    pub fn finish(&self) -> Result<NormalizationStats> {
        let knn_max = self
            .knn_max
            .ok_or_else(|| Error::Validation("no kNN training scores were seen".into()))?;
        let (lo, hi) = self
            .param
            .ok_or_else(|| Error::Validation("no parametric training scores were seen".into()))?;
        NormalizationStats::new(knn_max, lo, hi)
    }
}

/// Fits normalization extrema over two score streams.
pub fn fit_normalization<'a, K, P>(knn: K, param: P) -> Result<NormalizationStats>
where
    K: IntoIterator<Item = &'a [f32]>,
    P: IntoIterator<Item = &'a [f32]>,
{
    let mut acc = ExtremaAccumulator::default();
    knn.into_iter().for_each(|chunk| acc.push_knn(chunk));
    param.into_iter().for_each(|chunk| acc.push_param(chunk));
    acc.finish()
}

/// Sum of the max-scaled kNN score and the min-max-scaled parametric score.
///
/// The kNN channel is divided by its training maximum only; no minimum is
/// subtracted. Test values outside the training range are kept as they are.
pub fn combine_scores(
    knn: &ScoreMap,
    param: &ScoreMap,
    stats: &NormalizationStats,
) -> Result<ScoreMap> {
    if (knn.height(), knn.width()) != (param.height(), param.width()) {
        return Err(Error::Shape(format!(
            "kNN map is {}x{} but parametric map is {}x{}",
            knn.height(),
            knn.width(),
            param.height(),
            param.width()
        )));
    }
    let knn_max = stats.knn_max as f64;
    let lo = stats.param_min as f64;
    let range = stats.param_max as f64 - lo;
    let data = knn
        .as_slice()
        .iter()
        .zip(param.as_slice())
        .map(|(&n, &p)| (n as f64 / knn_max + (p as f64 - lo) / range) as f32)
        .collect();
    ScoreMap::new(knn.height(), knn.width(), data)
}

/// On-disk normalization statistics, bound to the reference set they were
/// fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub knn_max: f32,
    pub param_min: f32,
    pub param_max: f32,
    pub parametric_kind: ParametricKind,
    pub ref_manifest_hash: String,
}

impl StatsFile {
    pub fn new(stats: NormalizationStats, kind: ParametricKind, ref_manifest_hash: String) -> Self {
        StatsFile {
            knn_max: stats.knn_max,
            param_min: stats.param_min,
            param_max: stats.param_max,
            parametric_kind: kind,
            ref_manifest_hash,
        }
    }

    pub fn stats(&self) -> Result<NormalizationStats> {
        NormalizationStats::new(self.knn_max, self.param_min, self.param_max)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
