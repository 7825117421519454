use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{Mode, PipelineConfig};
use crate::error::{Error, Result};
use crate::knn::{score_with_index, KnnConfig, KnnIndex};
use crate::scorer::{
    combine_scores, parametric_score, render_scoremap_png, upsample_bilinear, NormalizationStats,
    ParametricKind, StatsFile,
};
use crate::tensor_store::{
    save_tensor, scan_dataset, DatasetManifest, ReferenceSet, Sample, ScoreMap,
};

/// Per-run scoring state shared by all images.
pub struct ScoreContext<'a> {
    mode: Mode,
    kind: ParametricKind,
    knn: KnnConfig,
    index: Option<KnnIndex<'a>>,
    stats: Option<NormalizationStats>,
}

impl<'a> ScoreContext<'a> {
    pub fn new(
        mode: Mode,
        kind: ParametricKind,
        knn: KnnConfig,
        refs: Option<&'a ReferenceSet>,
        stats: Option<NormalizationStats>,
    ) -> Result<Self> {
        let index = match (mode.needs_reference(), refs) {
            (true, Some(refs)) => Some(KnnIndex::new(refs, knn.metric)?),
            (true, None) => {
                return Err(Error::Config(format!("mode {mode} needs a reference set")))
            }
            (false, _) => None,
        };
        if mode == Mode::Cdnp && stats.is_none() {
            return Err(Error::Config("mode cdnp needs normalization stats".into()));
        }
        Ok(ScoreContext {
            mode,
            kind,
            knn,
            index,
            stats,
        })
    }

    /// Score map of one sample at image resolution.
    pub fn score(&self, sample: &Sample, manifest: &DatasetManifest) -> Result<ScoreMap> {
        let logits = sample.load_logits(manifest)?;
        let (h, w) = (logits.height(), logits.width());
        let knn = || -> Result<ScoreMap> {
            let index = self.index.as_ref().expect("checked in new");
            let features = sample.load_features()?;
            upsample_bilinear(&score_with_index(index, &features, &self.knn)?, h, w)
        };
        match self.mode {
            Mode::Dnp => knn(),
            Mode::Parametric => parametric_score(&logits, self.kind),
            Mode::Cdnp => {
                let stats = self.stats.as_ref().expect("checked in new");
                combine_scores(&knn()?, &parametric_score(&logits, self.kind)?, stats)
            }
        }
    }
}

/// Per-sample outcomes of a batch: score maps and failures, keyed by id.
pub type ScoredBatch = (Vec<(String, ScoreMap)>, Vec<(String, Error)>);

/// Scores samples in parallel. Results keep the input order; failures are
/// collected per sample.
pub fn score_samples(
    samples: &[Sample],
    manifest: &DatasetManifest,
    ctx: &ScoreContext<'_>,
) -> ScoredBatch {
    let results: Vec<_> = samples
        .par_iter()
        .map(|s| (s.id.clone(), ctx.score(s, manifest)))
        .collect();
    let mut maps = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(map) => maps.push((id, map)),
            Err(e) => failures.push((id, e)),
        }
    }
    (maps, failures)
}

#[derive(Debug, Default)]
pub struct ScoreSummary {
    pub written: Vec<String>,
    pub failures: Vec<(String, Error)>,
}

fn load_stats(
    path: &Path,
    refs: &ReferenceSet,
    kind: ParametricKind,
) -> Result<NormalizationStats> {
    let file = StatsFile::load(path)?;
    if file.ref_manifest_hash != refs.manifest().hash() {
        log::warn!(
            "{} was fitted against a different reference set (manifest hash mismatch)",
            path.display()
        );
    }
    if file.parametric_kind != kind {
        return Err(Error::Config(format!(
            "{} holds {} extrema but the parametric score is {kind}",
            path.display(),
            file.parametric_kind
        )));
    }
    file.stats()
}

/// Scores the selected images (all when `ids` is empty) and writes one
/// `<id>.npy` score map per image to `out_dir`, plus `<id>.png` when `png`
/// is set.
pub fn cmd_score(
    cfg: &PipelineConfig,
    ids: &[String],
    out_dir: &Path,
    png: bool,
) -> Result<ScoreSummary> {
    cfg.validate()?;
    let dataset = scan_dataset(&cfg.dataset_root)?;
    let samples: Vec<Sample> = if ids.is_empty() {
        dataset.samples.clone()
    } else {
        ids.iter()
            .map(|id| {
                dataset
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("unknown image id {id:?}")))
            })
            .collect::<Result<_>>()?
    };

    let refs = cfg
        .reference_path
        .as_deref()
        .map(ReferenceSet::load)
        .transpose()?;
    if let Some(refs) = &refs {
        if refs.manifest().metric != cfg.knn.metric.name() {
            log::warn!(
                "reference set was built for {} but is queried with {}",
                refs.manifest().metric,
                cfg.knn.metric
            );
        }
    }
    let stats = match (&cfg.stats_path, &refs) {
        (Some(path), Some(refs)) if cfg.mode == Mode::Cdnp => {
            Some(load_stats(path, refs, cfg.parametric_kind)?)
        }
        _ => None,
    };
    let ctx = ScoreContext::new(cfg.mode, cfg.parametric_kind, cfg.knn, refs.as_ref(), stats)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<(String, Result<()>)> = samples
        .par_iter()
        .map(|sample| {
            let written = ctx.score(sample, &dataset.manifest).and_then(|map| {
                save_tensor(&map, &out_dir.join(format!("{}.npy", sample.id)))?;
                if png {
                    render_scoremap_png(&map, &out_dir.join(format!("{}.png", sample.id)))?;
                }
                Ok(())
            });
            (sample.id.clone(), written)
        })
        .collect();

    let mut summary = ScoreSummary::default();
    for (id, r) in results {
        match r {
            Ok(()) => summary.written.push(id),
            Err(e) => {
                log::error!("{id}: {e}");
                summary.failures.push((id, e));
            }
        }
    }
    Ok(summary)
}
