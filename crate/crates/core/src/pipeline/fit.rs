use std::path::Path;

use rayon::prelude::*;

use super::{Mode, ScoreContext};
use crate::error::Result;
use crate::knn::KnnConfig;
use crate::scorer::{
    parametric_score, ExtremaAccumulator, NormalizationStats, ParametricKind, StatsFile,
};
use crate::tensor_store::{scan_dataset, DatasetScan, ReferenceSet};

/// Extrema of the training-set kNN (upsampled to image resolution, as at
/// test time) and parametric scores.
pub fn fit_stats(
    train: &DatasetScan,
    refs: &ReferenceSet,
    knn: &KnnConfig,
    kind: ParametricKind,
) -> Result<NormalizationStats> {
    let ctx = ScoreContext::new(Mode::Dnp, kind, *knn, Some(refs), None)?;
    let partials: Vec<ExtremaAccumulator> = train
        .samples
        .par_iter()
        .map(|sample| {
            let mut acc = ExtremaAccumulator::default();
            acc.push_knn(ctx.score(sample, &train.manifest)?.as_slice());
            let logits = sample.load_logits(&train.manifest)?;
            acc.push_param(parametric_score(&logits, kind)?.as_slice());
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = ExtremaAccumulator::default();
    for part in &partials {
        total.merge(part);
    }
    total.finish()
}

/// Fits normalization stats on a training set and writes them to `out`,
/// bound to the reference manifest.
pub fn cmd_fit_norm(
    train_root: &Path,
    ref_prefix: &Path,
    knn: &KnnConfig,
    kind: ParametricKind,
    out: &Path,
) -> Result<StatsFile> {
    let train = scan_dataset(train_root)?;
    let refs = ReferenceSet::load(ref_prefix)?;
    let stats = fit_stats(&train, &refs, knn, kind)?;
    let file = StatsFile::new(stats, kind, refs.manifest().hash());
    file.save(out)?;
    log::info!(
        "kNN max {}, {kind} range [{}, {}]",
        stats.knn_max,
        stats.param_min,
        stats.param_max
    );
    Ok(file)
}
